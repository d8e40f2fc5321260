#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "osdn/tensor.hpp"

namespace osdn {

/// Seeded generator with explicit output transforms, so streams are
/// reproducible across standard-library implementations (std distributions
/// are not pinned by the standard).
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  /// Uniform in [0,1) with 53-bit resolution.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double std) { return mean + std * normal(); }

  /// Uniform integer in [0, n), unbiased.
  int below(int n) {
    const uint64_t bound = static_cast<uint64_t>(n);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    uint64_t x = eng_();
    while (x >= limit) x = eng_();
    return static_cast<int>(x % bound);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i)
      std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(below(i + 1))]);
  }

  Tensor uniform_tensor(Shape s, double lo, double hi) {
    Tensor t(std::move(s));
    for (double& e : t.v) e = uniform(lo, hi);
    return t;
  }

  Tensor normal_tensor(Shape s, double mean, double std) {
    Tensor t(std::move(s));
    for (double& e : t.v) e = normal(mean, std);
    return t;
  }

  /// Derive an independent stream (e.g. one per epoch or per split).
  Rng fork(uint64_t stream) {
    return Rng(eng_() ^ (0x9e3779b97f4a7c15ull * (stream + 1)));
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace osdn
