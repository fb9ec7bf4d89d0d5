#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace lerg {

std::uint64_t splitmix64(std::uint64_t x);

// Stable 64-bit hash of a string (FNV-1a), used to derive per-example streams.
std::uint64_t stable_hash(std::string_view text);

// Deterministic random stream. The engine output is fixed by the standard and
// the distributions below are implemented here, so draws are identical across
// standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  // Independent child stream for worker `index`.
  static Rng split(std::uint64_t seed, std::uint64_t index);

  std::uint64_t next_u64() { return engine_(); }

  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t uniform_below(std::uint64_t bound);

  // Uniform integer in [lo, hi].
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi) {
    return lo + uniform_below(hi - lo + 1);
  }

  // Uniform real in [0, 1) with 53 random bits.
  double uniform_real() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace lerg
