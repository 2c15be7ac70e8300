#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace lqmkv {

// Philox4x32-10 counter-based generator (Salmon et al., SC 2011).  Streams
// are keyed by (seed, stream); counters encode (world, particle, step,
// block), so parallel scheduling cannot change the draws.
struct Philox {
  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;

  static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                            std::array<std::uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
      std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
      std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
      std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
      std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
      std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
      std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
      key[0] += kW0;
      key[1] += kW1;
    }
    return ctr;
  }
};

// Two standard normals from one Philox block via Box-Muller.
inline void gauss_pair(std::uint64_t seed, std::uint32_t stream,
                       std::uint32_t world, std::uint32_t particle,
                       std::uint32_t step, std::uint32_t blk, double* z0,
                       double* z1) {
  std::array<std::uint32_t, 2> key = {
      static_cast<std::uint32_t>(seed),
      static_cast<std::uint32_t>(seed >> 32) ^ (0x85EBCA6Bu * stream)};
  auto r = Philox::block({world, particle, step, blk}, key);
  constexpr double kInv32 = 1.0 / 4294967296.0;
  double u1 = (static_cast<double>(r[0]) + 1.0) * kInv32;  // in (0, 1]
  double u2 = (static_cast<double>(r[1]) + 0.5) * kInv32;
  double rad = std::sqrt(-2.0 * std::log(u1));
  double ang = 6.283185307179586476925286766559 * u2;
  *z0 = rad * std::cos(ang);
  *z1 = rad * std::sin(ang);
}

}  // namespace lqmkv
