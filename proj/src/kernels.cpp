#include "seqattr/kernels.hpp"

#include <algorithm>
#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace seqattr::kernels {

int thread_count() {
  static const int cached = [] {
#ifdef _OPENMP
    int n = omp_get_max_threads();
#else
    int n = 1;
#endif
    if (const char* env = std::getenv("SEQATTR_THREADS")) {
      int cap = std::atoi(env);
      if (cap >= 1) n = std::min(n, cap);
    }
    return n;
  }();
  return cached;
}

// noinline keeps one copy of the floating-point evaluation order for both
// the serial and the OpenMP callers.
__attribute__((noinline)) double dot(const double* a, const double* b, int n) {
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    acc[0] += a[i] * b[i];
    acc[1] += a[i + 1] * b[i + 1];
    acc[2] += a[i + 2] * b[i + 2];
    acc[3] += a[i + 3] * b[i + 3];
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + tail;
}

__attribute__((noinline)) void axpy(double alpha, const double* x, double* y,
                                    int n) {
  for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void matvec(const double* m, int rows, int cols, const double* x,
            double* out) {
#pragma omp parallel for schedule(static) num_threads(thread_count())
  for (int r = 0; r < rows; ++r) out[r] = dot(m + static_cast<std::size_t>(r) * cols, x, cols);
}

void matvec_t(const double* m, int rows, int cols, const double* g,
              double* out) {
  constexpr int kBlock = 512;
  const int blocks = (cols + kBlock - 1) / kBlock;
#pragma omp parallel for schedule(static) num_threads(thread_count())
  for (int blk = 0; blk < blocks; ++blk) {
    const int c0 = blk * kBlock;
    const int width = std::min(kBlock, cols - c0);
    std::fill(out + c0, out + c0 + width, 0.0);
    for (int r = 0; r < rows; ++r)
      axpy(g[r], m + static_cast<std::size_t>(r) * cols + c0, out + c0, width);
  }
}

void gemm_nt(const double* a, const double* b, int m, int n, int ak,
             double* c) {
  const long total = static_cast<long>(m) * n;
#pragma omp parallel for schedule(static) num_threads(thread_count())
  for (long idx = 0; idx < total; ++idx) {
    const long i = idx / n, j = idx % n;
    c[idx] = dot(a + i * ak, b + j * ak, ak);
  }
}

void gemm_tn(const double* g, const double* x, int b, int n, int k,
             double* out) {
#pragma omp parallel for schedule(static) num_threads(thread_count())
  for (int i = 0; i < n; ++i) {
    double* row = out + static_cast<std::size_t>(i) * k;
    std::fill(row, row + k, 0.0);
    for (int s = 0; s < b; ++s)
      axpy(g[static_cast<std::size_t>(s) * n + i],
           x + static_cast<std::size_t>(s) * k, row, k);
  }
}

namespace serial {

void matvec(const double* m, int rows, int cols, const double* x,
            double* out) {
  for (int r = 0; r < rows; ++r)
    out[r] = kernels::dot(m + static_cast<std::size_t>(r) * cols, x, cols);
}

void matvec_t(const double* m, int rows, int cols, const double* g,
              double* out) {
  constexpr int kBlock = 512;
  for (int c0 = 0; c0 < cols; c0 += kBlock) {
    const int width = std::min(kBlock, cols - c0);
    std::fill(out + c0, out + c0 + width, 0.0);
    for (int r = 0; r < rows; ++r)
      kernels::axpy(g[r], m + static_cast<std::size_t>(r) * cols + c0,
                    out + c0, width);
  }
}

void gemm_nt(const double* a, const double* b, int m, int n, int ak,
             double* c) {
  for (long idx = 0; idx < static_cast<long>(m) * n; ++idx) {
    const long i = idx / n, j = idx % n;
    c[idx] = kernels::dot(a + i * ak, b + j * ak, ak);
  }
}

void gemm_tn(const double* g, const double* x, int b, int n, int k,
             double* out) {
  for (int i = 0; i < n; ++i) {
    double* row = out + static_cast<std::size_t>(i) * k;
    std::fill(row, row + k, 0.0);
    for (int s = 0; s < b; ++s)
      kernels::axpy(g[static_cast<std::size_t>(s) * n + i],
                    x + static_cast<std::size_t>(s) * k, row, k);
  }
}

}  // namespace serial
}  // namespace seqattr::kernels
