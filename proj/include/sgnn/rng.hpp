#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace sgnn {

using Rng = std::mt19937_64;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a(std::string_view text) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

// Stable seed for a named stage or stream; independent of call order.
inline constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view tag) noexcept {
  return splitmix64(master ^ splitmix64(fnv1a(tag)));
}

inline constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
  return splitmix64(master ^ splitmix64(index + 0x632BE59BD9B4E019ull));
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace sgnn
