#pragma once

#include <algorithm>
#include <cstdlib>

#include "pnat/position/permutation.hpp"

namespace pnat {

/// Counts behind a position-accuracy figure, so corpus values can be pooled.
struct AccuracyCount {
  std::size_t correct = 0;
  std::size_t total = 0;

  [[nodiscard]] double value(double empty_value = 1.0) const {
    return total == 0 ? empty_value : static_cast<double>(correct) / static_cast<double>(total);
  }
  AccuracyCount& operator+=(const AccuracyCount& o) {
    correct += o.correct;
    total += o.total;
    return *this;
  }
};

/// Slots whose predicted position equals the reference position.
inline AccuracyCount permutation_accuracy_count(const Permutation& pred, const Permutation& ref) {
  if (pred.size() != ref.size()) throw ShapeError("permutation_accuracy: length mismatch");
  AccuracyCount c{0, ref.size()};
  for (std::size_t i = 0; i < ref.size(); ++i) c.correct += pred[i] == ref[i];
  return c;
}

inline double permutation_accuracy(const Permutation& pred, const Permutation& ref) {
  return permutation_accuracy_count(pred, ref).value();
}

/// Ordered slot pairs (i, j), i != j, whose reference offset is within r;
/// a pair is correct when the clipped predicted offset equals the clipped
/// reference offset.
inline AccuracyCount relative_accuracy_count(const Permutation& pred, const Permutation& ref, int r = 4) {
  if (pred.size() != ref.size()) throw ShapeError("relative_accuracy: length mismatch");
  if (r < 1) throw ShapeError("relative_accuracy: r must be >= 1");
  AccuracyCount c;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (i == j) continue;
      const int ref_off = ref[j] - ref[i];
      if (std::abs(ref_off) > r) continue;
      ++c.total;
      c.correct += std::clamp(pred[j] - pred[i], -r, r) == ref_off;
    }
  }
  return c;
}

/// Defined as 1.0 when there are no eligible pairs (M < 2).
inline double relative_accuracy(const Permutation& pred, const Permutation& ref, int r = 4) {
  return relative_accuracy_count(pred, ref, r).value();
}

}  // namespace pnat
