#pragma once

#include <cmath>
#include <cstdint>

#include "msad/common.hpp"

namespace msad {

// Counter-based RNG (Philox4x32-10). Every draw is a pure function of
// (seed, purpose, species, particle, step, slot), so trajectories are
// reproducible under any parallel schedule and the coupled simulation can
// share Brownian increments between the two particle systems.
namespace philox {

struct Block {
  std::uint32_t v[4];
};

inline Block round10(Block ctr, std::uint32_t k0, std::uint32_t k1) {
  constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
  constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
  for (int r = 0; r < 10; ++r) {
    std::uint64_t p0 = static_cast<std::uint64_t>(M0) * ctr.v[0];
    std::uint64_t p1 = static_cast<std::uint64_t>(M1) * ctr.v[2];
    Block out;
    out.v[0] = static_cast<std::uint32_t>(p1 >> 32) ^ ctr.v[1] ^ k0;
    out.v[1] = static_cast<std::uint32_t>(p1);
    out.v[2] = static_cast<std::uint32_t>(p0 >> 32) ^ ctr.v[3] ^ k1;
    out.v[3] = static_cast<std::uint32_t>(p0);
    ctr = out;
    k0 += W0;
    k1 += W1;
  }
  return ctr;
}

}  // namespace philox

enum class RngPurpose : std::uint32_t { kInitial = 1, kBrownian = 2, kGeneric = 3 };

// One logical stream per (seed, purpose, species, particle); the 128-bit
// counter is (step, slot). Each generate() yields two standard normals.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, RngPurpose purpose, std::uint32_t species,
               std::uint32_t particle)
      : k0_(static_cast<std::uint32_t>(seed)),
        k1_(static_cast<std::uint32_t>(seed >> 32)),
        hi_((static_cast<std::uint32_t>(purpose) << 24) ^ species),
        particle_(particle) {}

  // Two independent N(0,1) draws for counter (step, slot), via Box-Muller.
  void normal_pair(std::uint32_t step, std::uint32_t slot, double& n0, double& n1) const {
    philox::Block c{{step, slot, particle_, hi_}};
    philox::Block r = philox::round10(c, k0_, k1_);
    double u1 = to_unit(r.v[0], r.v[1]);  // in (0,1)
    double u2 = to_unit(r.v[2], r.v[3]);
    double m = std::sqrt(-2.0 * std::log(u1));
    n0 = m * std::cos(2.0 * kPi * u2);
    n1 = m * std::sin(2.0 * kPi * u2);
  }

  // Uniform in (0,1).
  double uniform(std::uint32_t step, std::uint32_t slot) const {
    philox::Block c{{step, slot, particle_, hi_ ^ 0x80000000u}};
    philox::Block r = philox::round10(c, k0_, k1_);
    return to_unit(r.v[0], r.v[1]);
  }

 private:
  static double to_unit(std::uint32_t a, std::uint32_t b) {
    std::uint64_t x = (static_cast<std::uint64_t>(a) << 32) | b;
    return (static_cast<double>(x >> 11) + 0.5) * 0x1p-53;
  }

  std::uint32_t k0_, k1_, hi_, particle_;
};

// Derives independent sub-seeds for replication loops.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (tag + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace msad
