// Throughput comparison of the serial reference kernels against the OpenMP
// variants, at the shapes the recognizer actually uses.

#include <chrono>
#include <cstdio>
#include <vector>

#include "seqattr/kernels.hpp"
#include "seqattr/rng.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<double> random_vec(std::size_t n, seqattr::Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform() - 0.5;
  return v;
}

template <typename F>
double time_best_of(int reps, F&& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    f();
    best = std::min(best, seconds_since(t0));
  }
  return best;
}

}  // namespace

int main() {
  using namespace seqattr;
  Rng rng(42);

  std::printf("threads: %d\n", kernels::thread_count());
  std::printf("%-28s %12s %12s %8s\n", "kernel", "serial [ms]", "openmp [ms]", "speedup");

  {
    const int rows = 256, cols = 4096;
    const auto m = random_vec(static_cast<std::size_t>(rows) * cols, rng);
    const auto x = random_vec(cols, rng);
    std::vector<double> out(rows);
    const int iters = 200;
    const double ts = time_best_of(5, [&] {
      for (int i = 0; i < iters; ++i)
        kernels::serial::matvec(m.data(), rows, cols, x.data(), out.data());
    });
    const double tp = time_best_of(5, [&] {
      for (int i = 0; i < iters; ++i)
        kernels::matvec(m.data(), rows, cols, x.data(), out.data());
    });
    std::printf("%-28s %12.3f %12.3f %8.2f\n", "matvec 256x4096", ts * 1e3, tp * 1e3, ts / tp);
  }

  {
    const int rows = 256, cols = 4096;
    const auto m = random_vec(static_cast<std::size_t>(rows) * cols, rng);
    const auto g = random_vec(rows, rng);
    std::vector<double> out(cols);
    const int iters = 200;
    const double ts = time_best_of(5, [&] {
      for (int i = 0; i < iters; ++i)
        kernels::serial::matvec_t(m.data(), rows, cols, g.data(), out.data());
    });
    const double tp = time_best_of(5, [&] {
      for (int i = 0; i < iters; ++i)
        kernels::matvec_t(m.data(), rows, cols, g.data(), out.data());
    });
    std::printf("%-28s %12.3f %12.3f %8.2f\n", "matvec_t 256x4096", ts * 1e3, tp * 1e3, ts / tp);
  }

  {
    const int b = 32, n = 256, k = 4096;
    const auto x = random_vec(static_cast<std::size_t>(b) * k, rng);
    const auto w = random_vec(static_cast<std::size_t>(n) * k, rng);
    std::vector<double> out(static_cast<std::size_t>(b) * n);
    const int iters = 20;
    const double ts = time_best_of(3, [&] {
      for (int i = 0; i < iters; ++i)
        kernels::serial::gemm_nt(x.data(), w.data(), b, n, k, out.data());
    });
    const double tp = time_best_of(3, [&] {
      for (int i = 0; i < iters; ++i)
        kernels::gemm_nt(x.data(), w.data(), b, n, k, out.data());
    });
    std::printf("%-28s %12.3f %12.3f %8.2f\n", "gemm_nt 32x256x4096", ts * 1e3, tp * 1e3, ts / tp);
  }

  {
    const int b = 32, n = 256, k = 4096;
    const auto g = random_vec(static_cast<std::size_t>(b) * n, rng);
    const auto x = random_vec(static_cast<std::size_t>(b) * k, rng);
    std::vector<double> out(static_cast<std::size_t>(n) * k);
    const int iters = 20;
    const double ts = time_best_of(3, [&] {
      for (int i = 0; i < iters; ++i)
        kernels::serial::gemm_tn(g.data(), x.data(), b, n, k, out.data());
    });
    const double tp = time_best_of(3, [&] {
      for (int i = 0; i < iters; ++i)
        kernels::gemm_tn(g.data(), x.data(), b, n, k, out.data());
    });
    std::printf("%-28s %12.3f %12.3f %8.2f\n", "gemm_tn 32x256x4096", ts * 1e3, tp * 1e3, ts / tp);
  }

  return 0;
}
