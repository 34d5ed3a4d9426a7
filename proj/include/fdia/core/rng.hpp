#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fdia {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Stable sub-seed for (root, purpose, index). Every random stream in the
/// pipeline is derived through this so that results do not depend on the
/// order in which streams are consumed.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view purpose,
                                    std::uint64_t index = 0) noexcept {
  return splitmix64(splitmix64(root ^ fnv1a(purpose)) + splitmix64(index));
}

inline Rng make_rng(std::uint64_t root, std::string_view purpose, std::uint64_t index = 0) {
  return Rng{derive_seed(root, purpose, index)};
}

}  // namespace fdia
