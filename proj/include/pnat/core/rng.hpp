#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

// Counter-based randomness. Every draw is a pure function of a key and a
// counter, so results do not depend on evaluation order or thread layout.

namespace pnat::rng {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t key(std::initializer_list<std::uint64_t> parts) noexcept {
  std::uint64_t h = 0x243F6A8885A308D3ULL;
  for (auto p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

/// Uniform in [0, 1) with 53 bits of resolution.
inline double uniform(std::uint64_t k, std::uint64_t counter) noexcept {
  return static_cast<double>(splitmix64(k ^ splitmix64(counter)) >> 11) * 0x1.0p-53;
}

inline double normal(std::uint64_t k, std::uint64_t counter) noexcept {
  const double u1 = 1.0 - uniform(k, 2 * counter);  // (0, 1]
  const double u2 = uniform(k, 2 * counter + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline std::uint64_t below(std::uint64_t k, std::uint64_t counter, std::uint64_t n) noexcept {
  return static_cast<std::uint64_t>(uniform(k, counter) * static_cast<double>(n));
}

/// Sequential stream over a fixed key; convenient for data generation.
class Stream {
 public:
  explicit Stream(std::uint64_t k) noexcept : key_(k) {}
  double uniform() noexcept { return rng::uniform(key_, counter_++); }
  double normal() noexcept { return rng::normal(key_, counter_++); }
  std::uint64_t below(std::uint64_t n) noexcept { return rng::below(key_, counter_++, n); }
  [[nodiscard]] std::uint64_t counter() const noexcept { return counter_; }

  template <class It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      std::swap(first[i - 1], first[below(i)]);
    }
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace pnat::rng
