#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace intnet {

// Deterministic splittable generator built on splitmix64. The state advances
// by a fixed odd increment and every output is a bijective mix of the state,
// so a seed fully determines the stream on any platform. split() derives an
// independent child stream from a label without advancing the parent, which
// keeps initialization, dropout and shuffling decoupled from each other.
class RngState {
 public:
  explicit RngState(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Box-Muller. Always consumes exactly two uniforms; no cached spare, so the
  // stream position stays a pure function of the number of calls.
  double normal() {
    double u1 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    const double u2 = next_double();
    const double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  // Unbiased integer in [0, n); rejection sampling on the top of the range.
  std::uint64_t next_below(std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  // Child stream derived from the current state and a label. Does not
  // advance the parent.
  RngState split(std::string_view label) const {
    std::uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a over the label bytes
    for (char c : label) {
      h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
      h *= 0x100000001B3ull;
    }
    std::uint64_t z = state_ ^ h;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return RngState(z ^ (z >> 31));
  }

 private:
  std::uint64_t state_;
};

}  // namespace intnet
