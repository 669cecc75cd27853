#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace stylecond {

/// Seeded random source used everywhere randomness enters the pipeline.
///
/// Wraps std::mt19937_64 (whose output sequence is fixed by the standard) and
/// derives uniforms/normals itself, so streams are identical across standard
/// library implementations. The full engine state round-trips through
/// `state()` / `set_state()`.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] (inclusive), unbiased.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller. Consumes exactly two uniforms per call.
  double normal();

  std::string state() const;
  void set_state(const std::string& state);

  /// Derives an independent stream for (seed, index) using splitmix64 mixing.
  static Rng derive(std::uint64_t seed, std::uint64_t index);

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace stylecond
