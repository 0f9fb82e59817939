#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

#include "stcd/error.hpp"

namespace stcd {

// FNV-1a 64-bit. Used for sub-seed derivation, config hashing and file checksums.
inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

// Deterministic seeded random stream. Core generator is splitmix64; floating
// point draws are built from the raw 64-bit output so the sequence is
// bit-identical on every platform (no std::distribution involved).
class RngStream {
 public:
  static constexpr const char* kAlgorithm = "splitmix64/boxmuller-v1";

  explicit RngStream(std::uint64_t seed) : state_(seed) {}

  std::uint64_t seed_state() const { return state_; }

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0,1), 53 usable bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  int uniform_int(int n) {
    require(n > 0, errc::invalid_argument, "uniform_int: n must be positive");
    return static_cast<int>(uniform() * n);
  }

  // Standard normal via Box-Muller; two raw draws per call, no cached state.
  double normal() {
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0,1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Independent child stream for a named purpose. Identical (seed, purpose)
  // always derives the identical child.
  RngStream derive(std::string_view purpose) const {
    RngStream child(state_ ^ fnv1a64(purpose));
    child.next_u64();  // decorrelate from the raw xor
    return child;
  }

 private:
  std::uint64_t state_;
};

}  // namespace stcd
