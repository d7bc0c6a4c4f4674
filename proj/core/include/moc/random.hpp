#pragma once

#include <cstdint>
#include <random>

#include "moc/matrix.hpp"

namespace moc {

/// Seedable generator used throughout: std::mt19937_64 feeding
/// std::normal_distribution. Streams are reproducible for a given standard
/// library build.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi) {
    return std::uniform_int_distribution<std::uint64_t>(lo, hi)(engine_);
  }
  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
};

inline Matrix random_normal(std::size_t rows, std::size_t cols, Rng& rng, double stddev = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal(0.0, stddev);
  return m;
}

}  // namespace moc
