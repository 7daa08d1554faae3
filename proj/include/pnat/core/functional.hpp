#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "pnat/core/errors.hpp"

// Plain (non-differentiable) numeric kernels on spans.

namespace pnat {

/// a.b / (|a||b|). A zero-norm operand yields 0 and sets `*degenerate`.
template <class T>
T cosine_similarity(std::span<const T> a, std::span<const T> b, bool* degenerate = nullptr) {
  if (a.size() != b.size() || a.empty()) throw ShapeError("cosine_similarity: length mismatch");
  T dot{0}, na{0}, nb{0};
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (degenerate) *degenerate = false;
  if (na == T{0} || nb == T{0}) {
    if (degenerate) *degenerate = true;
    return T{0};
  }
  const T c = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, T{-1}, T{1});
}

template <class T>
T cosine_similarity(const std::vector<T>& a, const std::vector<T>& b, bool* degenerate = nullptr) {
  return cosine_similarity(std::span<const T>(a), std::span<const T>(b), degenerate);
}

/// Max-subtracted softmax of v / temperature.
template <class T>
std::vector<T> softmax(std::span<const T> v, T temperature = T{1}) {
  if (!(temperature > T{0})) throw ShapeError("softmax: temperature must be positive");
  std::vector<T> out(v.size());
  if (v.empty()) return out;
  const T mx = *std::max_element(v.begin(), v.end());
  T z{0};
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp((v[i] - mx) / temperature);
    z += out[i];
  }
  for (auto& x : out) x /= z;
  return out;
}

template <class T>
std::vector<T> softmax(const std::vector<T>& v, T temperature = T{1}) {
  return softmax(std::span<const T>(v), temperature);
}

/// log-sum-exp over the entries whose mask is set (all when mask is empty).
template <class T>
T log_sum_exp(std::span<const T> v, std::span<const std::uint8_t> mask = {}) {
  T mx = -std::numeric_limits<T>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (mask.empty() || mask[i]) mx = std::max(mx, v[i]);
  }
  T z{0};
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (mask.empty() || mask[i]) z += std::exp(v[i] - mx);
  }
  return mx + std::log(z);
}

/// -log softmax(logits)[target].
template <class T>
T cross_entropy(std::span<const T> logits, int target) {
  if (target < 0 || static_cast<std::size_t>(target) >= logits.size()) {
    throw DataError("cross_entropy: target " + std::to_string(target) + " out of range (corrupt batch)");
  }
  return log_sum_exp(logits) - logits[static_cast<std::size_t>(target)];
}

template <class T>
T cross_entropy(const std::vector<T>& logits, int target) {
  return cross_entropy(std::span<const T>(logits), target);
}

template <class T>
std::size_t argmax(std::span<const T> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace pnat
