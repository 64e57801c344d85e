#include "lamar/rng.hpp"

namespace lamar {

std::uint64_t derive_seed(std::uint64_t seed, RngDomain domain) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(domain)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

Rng::Rng(std::uint64_t seed, RngDomain domain) : engine_(derive_seed(seed, domain)) {}

}  // namespace lamar
