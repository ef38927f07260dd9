#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "bssad/common.hpp"

namespace bssad {

/// Deterministic random source. The mt19937_64 stream is fully specified by
/// the standard and all transforms here are hand-rolled, so identical seeds
/// give identical draws on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() {
    return double(next() >> 11) * (1.0 / 9007199254740992.0);
  }

  /// Uniform integer in [0, n), unbiased via rejection.
  std::uint64_t bounded(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r = next();
    while (r >= limit) r = next();
    return r % n;
  }

  /// Standard normal via Box-Muller; pairs are cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  /// Matrix of i.i.d. standard normals, filled column-major.
  Matrix normal_matrix(Index rows, Index cols) {
    Matrix out(rows, cols);
    for (Index c = 0; c < cols; ++c) {
      for (Index r = 0; r < rows; ++r) out(r, c) = normal();
    }
    return out;
  }

  Vector normal_vector(Index n) {
    Vector out(n);
    for (Index i = 0; i < n; ++i) out(i) = normal();
    return out;
  }

  /// Fisher-Yates shuffle; well-defined draw order regardless of stdlib.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[bounded(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Draws from N(mean, cov) through the symmetric PSD square root of cov.
/// A zero covariance therefore produces exactly the mean.
class GaussianSampler {
 public:
  GaussianSampler(Vector mean, const Matrix& cov)
      : mean_(std::move(mean)), root_(psd_sqrt(cov)) {}

  Vector sample(Rng& rng) const {
    return mean_ + root_ * rng.normal_vector(mean_.size());
  }

  /// One draw per column.
  Matrix sample_many(Rng& rng, Index count) const {
    Matrix draws = root_ * rng.normal_matrix(mean_.size(), count);
    draws.colwise() += mean_;
    return draws;
  }

 private:
  Vector mean_;
  Matrix root_;
};

}  // namespace bssad
