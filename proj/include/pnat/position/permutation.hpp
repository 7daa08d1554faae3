#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "pnat/core/errors.hpp"

namespace pnat {

/// Bijection over {0..M-1}: slot i is written to output position z[i].
class Permutation {
 public:
  Permutation() = default;

  explicit Permutation(std::vector<int> z) : z_(std::move(z)) {
    if (!is_valid(z_)) throw ShapeError("permutation: not a bijection on {0.." + std::to_string(z_.size()) + "-1}");
  }

  static Permutation identity(std::size_t m) {
    std::vector<int> z(m);
    std::iota(z.begin(), z.end(), 0);
    return Permutation(std::move(z));
  }

  static bool is_valid(const std::vector<int>& z) {
    std::vector<char> seen(z.size(), 0);
    for (int v : z) {
      if (v < 0 || static_cast<std::size_t>(v) >= z.size() || seen[static_cast<std::size_t>(v)]) return false;
      seen[static_cast<std::size_t>(v)] = 1;
    }
    return true;
  }

  [[nodiscard]] std::size_t size() const noexcept { return z_.size(); }
  [[nodiscard]] int operator[](std::size_t i) const noexcept { return z_[i]; }
  [[nodiscard]] const std::vector<int>& values() const noexcept { return z_; }

  /// inverse()[position] = slot.
  [[nodiscard]] Permutation inverse() const {
    std::vector<int> inv(z_.size());
    for (std::size_t i = 0; i < z_.size(); ++i) inv[static_cast<std::size_t>(z_[i])] = static_cast<int>(i);
    return Permutation(std::move(inv));
  }

  /// Writes slot i's item to position z[i].
  template <class U>
  [[nodiscard]] std::vector<U> scatter(const std::vector<U>& slot_items) const {
    if (slot_items.size() != z_.size()) throw ShapeError("permutation: scatter size mismatch");
    std::vector<U> out(slot_items.size());
    for (std::size_t i = 0; i < z_.size(); ++i) out[static_cast<std::size_t>(z_[i])] = slot_items[i];
    return out;
  }

  /// Reads position z[i] into slot i.
  template <class U>
  [[nodiscard]] std::vector<U> gather(const std::vector<U>& positional) const {
    if (positional.size() != z_.size()) throw ShapeError("permutation: gather size mismatch");
    std::vector<U> out(z_.size());
    for (std::size_t i = 0; i < z_.size(); ++i) out[i] = positional[static_cast<std::size_t>(z_[i])];
    return out;
  }

  [[nodiscard]] std::string to_string() const {
    std::string s;
    for (std::size_t i = 0; i < z_.size(); ++i) {
      if (i) s += ", ";
      s += std::to_string(z_[i]);
    }
    return s;
  }

  friend bool operator==(const Permutation&, const Permutation&) = default;

 private:
  std::vector<int> z_;
};

/// clamp(z[j] - z[i], -clip, clip).
inline int relative_bucket(std::size_t i, std::size_t j, const Permutation& z, int clip) {
  return std::clamp(z[j] - z[i], -clip, clip);
}

/// Bucket indices in [0, 2*clip] for every slot pair, row-major [M x M].
struct RelativeBuckets {
  std::size_t size = 0;
  int clip = 0;
  std::vector<int> index;

  static RelativeBuckets from(const Permutation& z, int clip) {
    RelativeBuckets b{z.size(), clip, std::vector<int>(z.size() * z.size())};
    for (std::size_t i = 0; i < z.size(); ++i) {
      for (std::size_t j = 0; j < z.size(); ++j) {
        b.index[i * z.size() + j] = relative_bucket(i, j, z, clip) + clip;
      }
    }
    return b;
  }

  [[nodiscard]] int at(std::size_t i, std::size_t j) const noexcept { return index[i * size + j]; }
};

}  // namespace pnat
