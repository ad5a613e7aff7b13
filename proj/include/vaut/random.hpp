#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "vaut/tensor.hpp"

namespace vaut {

/// Seeded generator. Distributions are computed here rather than with the
/// <random> distribution classes so streams are identical across standard
/// libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi].
  std::int64_t integer(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(engine_() % span);
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    spare_ = radius * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return mean + stddev * radius * std::cos(2.0 * std::numbers::pi * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

  template <typename V>
  void shuffle(std::vector<V>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(engine_() % i);
      std::swap(items[i - 1], items[j]);
    }
  }

  /// Independent child stream, e.g. one per fold or per video.
  Rng fork() { return Rng(engine_() ^ 0x9E3779B97F4A7C15ULL); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

template <FloatElement T>
Tensor<T> uniform_tensor(Shape shape, double lo, double hi, Rng& rng) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.mutable_values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <FloatElement T>
Tensor<T> normal_tensor(Shape shape, double mean, double stddev, Rng& rng) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.mutable_values()) v = static_cast<T>(rng.normal(mean, stddev));
  return t;
}

}  // namespace vaut
