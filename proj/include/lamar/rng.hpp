#pragma once

#include <cstdint>
#include <random>

#include "lamar/tensor.hpp"

namespace lamar {

// Independent random streams derived from the single run seed.
enum class RngDomain : std::uint32_t {
  kInit = 1,
  kShuffle = 2,
  kDropout = 3,
  kMask = 4,
  kPerturb = 5,
  kFixture = 6,
  kValidationPerturb = 7,
  kMock = 8,
};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, RngDomain domain);

  Real normal(Real mean = 0.0, Real stddev = 1.0) {
    return std::normal_distribution<Real>(mean, stddev)(engine_);
  }
  Real uniform(Real lo = 0.0, Real hi = 1.0) {
    return std::uniform_real_distribution<Real>(lo, hi)(engine_);
  }
  bool bernoulli(Real p) { return uniform() < p; }
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi) {
    return std::uniform_int_distribution<std::uint64_t>(lo, hi)(engine_);
  }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t derive_seed(std::uint64_t seed, RngDomain domain);

}  // namespace lamar
