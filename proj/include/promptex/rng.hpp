#pragma once

// Deterministic randomness. Every stochastic step in the pipeline draws from
// an Rng seeded by derive_seed(root_seed, component_name, ...), so runs are
// byte-identical across invocations and platforms. Distributions are coded
// here rather than taken from <random>, whose distribution algorithms are
// implementation-defined.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace promptex {

// FNV-1a, 64-bit.
constexpr std::uint64_t fnv1a(std::string_view text,
                              std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix(std::uint64_t a, std::uint64_t b) noexcept {
  return splitmix64(a ^ splitmix64(b));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view component) noexcept {
  return mix(seed, fnv1a(component));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view component,
                                 std::uint64_t index) noexcept {
  return mix(derive_seed(seed, component), index);
}

// xoshiro256** seeded through splitmix64.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept;

  std::uint64_t next_u64() noexcept;
  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() noexcept;
  // Uniform integer in [0, bound); bound must be > 0.
  std::uint64_t below(std::uint64_t bound) noexcept;
  // Standard normal via Box-Muller.
  double normal() noexcept;
  bool bernoulli(double p) noexcept { return uniform() < p; }

  template <typename T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  template <typename T>
  void shuffle(std::vector<T>& items) noexcept {
    shuffle(std::span<T>(items));
  }

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::string hex64(std::uint64_t value);

}  // namespace promptex
