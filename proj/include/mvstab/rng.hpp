#pragma once

// Counter-based randomness. Every draw is a pure function of (seed, counter),
// so results never depend on how work is split between threads.

#include <array>
#include <cmath>
#include <cstdint>
#include <utility>

namespace mvstab {

/// Philox4x32-10 (Salmon et al., SC'11).
class Philox4x32 {
 public:
  using Block = std::array<std::uint32_t, 4>;

  explicit Philox4x32(std::uint64_t key) noexcept
      : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)} {}

  Block operator()(Block ctr) const noexcept {
    std::uint32_t k0 = key_[0], k1 = key_[1];
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ k0, static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ k1, static_cast<std::uint32_t>(p0)};
      k0 += kW0;
      k1 += kW1;
    }
    return ctr;
  }

  /// Block for the counter pair (a, b), each 64 bits wide.
  Block operator()(std::uint64_t a, std::uint64_t b) const noexcept {
    return (*this)(Block{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                         static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)});
  }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
  std::array<std::uint32_t, 2> key_;
};

/// SplitMix64 finalizer, used to derive independent keys from one user seed.
constexpr std::uint64_t mix_seed(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Key for a named purpose (sampling, noise, bootstrap) under a user seed.
constexpr std::uint64_t stream_key(std::uint64_t seed, std::uint64_t purpose) noexcept {
  return mix_seed(seed ^ mix_seed(purpose));
}

/// Uniform on the open interval (0, 1) from two 32-bit words (53 bits).
inline double open_uniform(std::uint32_t hi, std::uint32_t lo) noexcept {
  const std::uint64_t bits = ((std::uint64_t{hi} << 32) | lo) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

/// Two uniforms in (0, 1) from one Philox block.
inline std::pair<double, double> uniform_pair(const Philox4x32::Block& b) noexcept {
  return {open_uniform(b[0], b[1]), open_uniform(b[2], b[3])};
}

/// Standard normal quantile, Wichura's AS 241 (PPND16), relative error ~1e-16.
inline double normal_quantile(double p) noexcept {
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    const double num =
        ((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r +
            45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
         133.14166789178437745) * r + 3.387132872796366608;
    const double den =
        ((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r +
            21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
         42.313330701600911252) * r + 1.0;
    return q * num / den;
  }
  double r = std::sqrt(-std::log(q < 0.0 ? p : 1.0 - p));
  double v;
  if (r <= 5.0) {
    r -= 1.6;
    v = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
             1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
          4.6303378461565452959) * r + 1.42343711074968357734) /
        (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
             0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r +
          2.05319162663775882187) * r + 1.0);
  } else {
    r -= 5.0;
    v = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
             0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r +
          5.4637849111641143699) * r + 6.6579046435011037772) /
        (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
             7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r +
          0.59983220655588793769) * r + 1.0);
  }
  return q < 0.0 ? -v : v;
}

/// Two independent standard normals from one Philox block, by inversion.
/// Cheaper than Box-Muller here since 85% of draws avoid log and sqrt.
inline std::pair<double, double> normal_pair(const Philox4x32::Block& b) noexcept {
  const auto [u1, u2] = uniform_pair(b);
  return {normal_quantile(u1), normal_quantile(u2)};
}

}  // namespace mvstab
