#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

namespace secl {

constexpr std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stable per-(seed, key, purpose) seed, independent of call order.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view key, std::string_view purpose) {
  std::uint64_t h = fnv1a64(key, splitmix64(seed));
  h = fnv1a64("/", h);
  h = fnv1a64(purpose, h);
  return splitmix64(h);
}

std::string hex64(std::uint64_t value);

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

} // namespace secl
