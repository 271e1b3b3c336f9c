#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace fbsde {

// Philox4x32-10 (Salmon et al. 2011). Stateless: the output is a pure
// function of (counter, key).
using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

inline PhiloxCounter philox4x32(PhiloxCounter ctr, PhiloxKey key) {
  constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

// Uniform in the open interval (0, 1) from 64 random bits. 52 bits plus the
// half-step offset keep both ends exactly representable.
inline double open_unit(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32) | lo;
  return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

// Standard normals addressed by (stream, path, step, pair index). Each
// Philox block yields two normals through Box-Muller.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint32_t stream)
      : key_{static_cast<std::uint32_t>(seed),
             static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream) {}

  std::array<double, 2> pair(std::uint32_t path, std::uint32_t step,
                             std::uint32_t block) const {
    const PhiloxCounter r = philox4x32({path, step, block, stream_}, key_);
    const double u1 = open_unit(r[0], r[1]);
    const double u2 = open_unit(r[2], r[3]);
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * std::numbers::pi * u2;
    return {rad * std::cos(ang), rad * std::sin(ang)};
  }

  // Fills out[0..n) with normals for (path, step).
  void fill(std::uint32_t path, std::uint32_t step, double* out,
            std::size_t n) const {
    for (std::size_t k = 0; k < n; k += 2) {
      const auto z = pair(path, step, static_cast<std::uint32_t>(k / 2));
      out[k] = z[0];
      if (k + 1 < n) out[k + 1] = z[1];
    }
  }

 private:
  PhiloxKey key_;
  std::uint32_t stream_;
};

inline constexpr std::uint32_t kForwardStream = 0;
inline constexpr std::uint32_t kGirsanovStream = 1;

}  // namespace fbsde
