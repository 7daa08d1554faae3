#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pnat/core/errors.hpp"

namespace pnat {

inline std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

/// Dense row-major array. Rank-2 is the working shape of the autodiff graph;
/// vectors are stored as 1xN.
template <std::floating_point T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape, T fill = T{0})
      : shape_(std::move(shape)), data_(element_count(shape_), fill) {
    cache_dims();
  }

  Tensor(std::vector<std::size_t> shape, std::vector<T> values)
      : shape_(std::move(shape)), data_(std::move(values)) {
    if (element_count(shape_) != data_.size()) {
      throw ShapeError("tensor: shape " + shape_string(shape_) + " does not match " +
                       std::to_string(data_.size()) + " values");
    }
    cache_dims();
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, T fill = T{0}) {
    return Tensor({rows, cols}, fill);
  }

  static Tensor row_vector(std::vector<T> values) {
    const std::size_t n = values.size();
    return Tensor({1, n}, std::move(values));
  }

  static Tensor from_rows(std::initializer_list<std::initializer_list<T>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<T> values;
    values.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("tensor: ragged rows");
      values.insert(values.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(values));
  }

  [[nodiscard]] const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  [[nodiscard]] std::size_t rank() const noexcept { return shape_.size(); }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }
  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }

  [[nodiscard]] T* data() noexcept { return data_.data(); }
  [[nodiscard]] const T* data() const noexcept { return data_.data(); }
  [[nodiscard]] std::span<T> values() noexcept { return data_; }
  [[nodiscard]] std::span<const T> values() const noexcept { return data_; }
  [[nodiscard]] const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }
  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  [[nodiscard]] std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  [[nodiscard]] std::span<const T> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  [[nodiscard]] bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  [[nodiscard]] bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

  template <std::floating_point U>
  [[nodiscard]] Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  static std::size_t element_count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }

  void cache_dims() {
    if (shape_.empty()) {
      rows_ = cols_ = 1;
    } else if (shape_.size() == 1) {
      rows_ = 1;
      cols_ = shape_[0];
    } else {
      cols_ = shape_.back();
      rows_ = cols_ ? data_.size() / cols_ : 0;
    }
  }

  std::vector<std::size_t> shape_;
  std::vector<T> data_;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
};

}  // namespace pnat
