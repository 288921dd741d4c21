#pragma once

#include <cstddef>

// Dense kernels used by the recognizer and the attribution methods.
//
// Every kernel comes in two variants: the OpenMP one in seqattr::kernels and
// a serial reference in seqattr::kernels::serial. Both variants call the same
// non-inlined inner routines, so for any input the parallel result is
// bit-identical to the serial one regardless of thread count. That property
// is load-bearing: reports produced by parallel runs must match serial runs
// byte for byte. tests/test_kernels.cpp asserts it, bench/kernels_bench.cpp
// compares throughput.

namespace seqattr::kernels {

// Number of worker threads: OpenMP's default, capped by the SEQATTR_THREADS
// environment variable when set. Read once per process.
int thread_count();

// out[r] = sum_c m[r*cols+c] * x[c]
void matvec(const double* m, int rows, int cols, const double* x, double* out);

// out[c] = sum_r g[r] * m[r*cols+c]   (accumulation order over r is fixed)
void matvec_t(const double* m, int rows, int cols, const double* g,
              double* out);

// c[i*n+j] = sum_k a[i*ak+k] * b[j*ak+k]  for i<m, j<n  (row-times-row)
void gemm_nt(const double* a, const double* b, int m, int n, int ak,
             double* c);

// out[i*k+j] = sum_b g[b*n+i] * x[b*k+j]  for i<n, j<k  (per-sample outer
// products accumulated in batch order)
void gemm_tn(const double* g, const double* x, int b, int n, int k,
             double* out);

namespace serial {
void matvec(const double* m, int rows, int cols, const double* x, double* out);
void matvec_t(const double* m, int rows, int cols, const double* g,
              double* out);
void gemm_nt(const double* a, const double* b, int m, int n, int ak,
             double* c);
void gemm_tn(const double* g, const double* x, int b, int n, int k,
             double* out);
}  // namespace serial

// Shared inner routines (fixed evaluation order; see note above).
double dot(const double* a, const double* b, int n);
void axpy(double alpha, const double* x, double* y, int n);

}  // namespace seqattr::kernels
