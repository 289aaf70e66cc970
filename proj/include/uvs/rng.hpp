#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace uvs {

// 64-bit FNV-1a over raw bytes. Used for stable content hashing (feature
// perturbations, derived seeds for named streams).
inline std::uint64_t fnv1a(std::string_view bytes,
                           std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a_u64(std::uint64_t v, std::uint64_t h) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xff;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Deterministic random stream. Distribution mappings (uniform, normal) are
// implemented here rather than with std::*_distribution so the produced
// sequence depends only on the seed, not on the standard library build.
//
// Child streams are derived by hashing (seed, tag...) so a derived stream is
// independent of how much the parent stream was consumed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1]; safe as a log() argument.
  double uniform_pos() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller (stateless across calls).
  double normal() {
    double u1 = uniform_pos();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Uniform integer in [0, n), n >= 1.
  int uniform_int(int n) {
    return static_cast<int>(
        (static_cast<unsigned __int128>(next_u64()) *
         static_cast<unsigned __int128>(static_cast<std::uint64_t>(n))) >>
        64);
  }

  static std::uint64_t derive(std::uint64_t seed, std::uint64_t tag) {
    return splitmix64(seed ^ splitmix64(tag + 0x6a09e667f3bcc909ull));
  }
  static std::uint64_t derive(std::uint64_t seed, std::string_view name) {
    return splitmix64(seed ^ fnv1a(name));
  }
  static std::uint64_t derive(std::uint64_t seed, std::string_view name,
                              std::uint64_t a) {
    return derive(derive(seed, name), a);
  }
  static std::uint64_t derive(std::uint64_t seed, std::string_view name,
                              std::uint64_t a, std::uint64_t b) {
    return derive(derive(seed, name, a), b);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace uvs
