#pragma once

#include <cstdint>
#include <random>

#include "lcr/tensor.hpp"

namespace lcr {

// Seeded generator used for all initialization, masking and data synthesis.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  std::uint64_t next() { return engine_(); }
  std::mt19937_64& engine() { return engine_; }

  Tensor uniform_tensor(Shape shape, double lo, double hi, bool requires_grad = false) {
    Tensor t(std::move(shape), requires_grad);
    for (double& v : t.mutable_data()) v = uniform(lo, hi);
    return t;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace lcr
