#pragma once

#include <cstdint>

namespace gmoa {

/// Deterministic, portable random generator used by every seeded operation.
///
/// Core generator: xoshiro256++ (Blackman & Vigna), state expanded from the
/// 64-bit seed with splitmix64. Substreams are derived from the *seed*, not
/// from consumed state, so `Rng(s).split(i)` is a pure function of (s, i):
///
///   substream seed = splitmix64_mix(s XOR (i + 1) * 0x9e3779b97f4a7c15)
///
/// Uniform doubles take the top 53 bits of a 64-bit draw; normals come from
/// the basic (trigonometric) Box-Muller transform, producing pairs and
/// caching the second value. Any implementation of these three primitives,
/// in any language, reproduces the exact draw sequence up to libm rounding
/// of log/sin/cos.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  /// Uniform in [0, 1).
  double uniform();

  /// Uniform integer in [0, n). Rejection-free modulo is avoided: uses
  /// 53-bit uniform scaled by n, which is exact for n < 2^53.
  std::uint64_t uniform_int(std::uint64_t n);

  /// Standard normal via Box-Muller; second member of each pair is cached.
  double normal();

  /// Independent substream indexed by `stream`, derived from this
  /// generator's original seed (never from its current state).
  Rng split(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t state_[4];
  bool has_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

}  // namespace gmoa
