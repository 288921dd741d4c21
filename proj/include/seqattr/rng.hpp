#pragma once

#include <cstdint>
#include <cmath>
#include <numbers>
#include <vector>

namespace seqattr {

// SplitMix64 (Steele, Lea, Flood; the java.util.SplittableRandom mixer).
// Chosen because the whole generator fits in a dozen lines and produces
// identical streams on every platform, which the reproducibility contract
// of this project depends on. All randomness in the library flows through
// this type; std::random distributions are never used because their output
// is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform double in [0,1), 53 mantissa bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, bound). Rejection-free multiply-shift would bias
  // for huge bounds; bounds here are tiny, so use rejection sampling on the
  // top bits to stay exact and portable.
  std::uint64_t uniform_below(std::uint64_t bound) {
    const std::uint64_t limit = bound * (UINT64_MAX / bound);
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % bound;
  }

  // Standard normal via Box-Muller. Draws two uniforms per call and discards
  // the second variate; wasteful but stateless, which keeps derived streams
  // easy to reason about.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

// Deterministic sub-seed for parallel streams: mixing the parent seed with
// the stream index through the SplitMix64 finalizer decorrelates streams
// regardless of how indices cluster.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace seqattr
