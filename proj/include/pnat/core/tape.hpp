#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pnat/core/tensor.hpp"

namespace pnat {

/// A named trainable tensor with its accumulated gradient.
template <std::floating_point T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool frozen = false;
};

/// Owns parameters with stable addresses; iteration order is creation order.
template <std::floating_point T>
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  Parameter<T>& create(std::string name, std::vector<std::size_t> shape) {
    if (index_.contains(name)) throw ShapeError("duplicate parameter: " + name);
    index_.emplace(name, params_.size());
    Tensor<T> value(shape);
    Tensor<T> grad(std::move(shape));
    params_.push_back(Parameter<T>{std::move(name), std::move(value), std::move(grad), false});
    return params_.back();
  }

  [[nodiscard]] Parameter<T>* find(std::string_view name) {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? nullptr : &params_[it->second];
  }
  [[nodiscard]] const Parameter<T>* find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? nullptr : &params_[it->second];
  }

  Parameter<T>& at(std::string_view name) {
    if (auto* p = find(name)) return *p;
    throw ShapeError("unknown parameter: " + std::string(name));
  }

  [[nodiscard]] std::size_t size() const noexcept { return params_.size(); }
  [[nodiscard]] std::size_t element_count() const noexcept {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  auto begin() noexcept { return params_.begin(); }
  auto end() noexcept { return params_.end(); }
  auto begin() const noexcept { return params_.begin(); }
  auto end() const noexcept { return params_.end(); }
  Parameter<T>& operator[](std::size_t i) noexcept { return params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const noexcept { return params_[i]; }

  void zero_grad() {
    for (auto& p : params_) p.grad.fill(T{0});
  }

  /// Freeze every parameter for which `keep_trainable(name)` is false.
  template <class Pred>
  void freeze_except(Pred keep_trainable) {
    for (auto& p : params_) p.frozen = !keep_trainable(p.name);
  }
  void unfreeze_all() {
    for (auto& p : params_) p.frozen = false;
  }

 private:
  std::deque<Parameter<T>> params_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

template <std::floating_point T>
class Tape;

/// Handle to a node recorded on a Tape.
template <std::floating_point T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  [[nodiscard]] bool valid() const noexcept { return tape_ != nullptr; }
  [[nodiscard]] Tape<T>& tape() const noexcept { return *tape_; }
  [[nodiscard]] std::uint32_t id() const noexcept { return id_; }
  [[nodiscard]] const Tensor<T>& value() const;
  [[nodiscard]] std::size_t rows() const { return value().rows(); }
  [[nodiscard]] std::size_t cols() const { return value().cols(); }
  [[nodiscard]] T item() const { return value()[0]; }

 private:
  Tape<T>* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Reverse-mode autodiff tape. Nodes are appended in evaluation order and
/// gradients are propagated in reverse. With gradients disabled no backward
/// closures are kept and the tape acts as a plain evaluator.
template <std::floating_point T>
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  [[nodiscard]] bool grad_enabled() const noexcept { return grad_enabled_; }

  Var<T> constant(Tensor<T> value) {
    nodes_.push_back(Node{std::move(value), {}, nullptr, {}, false, nullptr});
    return last();
  }

  /// Leaf referencing a parameter's storage (no copy). Repeated calls for the
  /// same parameter return the same node. The parameter must outlive the tape
  /// and stay unmodified until backward() has run.
  Var<T> parameter(Parameter<T>& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var<T>(this, it->second);
    const bool needs = grad_enabled_ && !p.frozen;
    nodes_.push_back(Node{{}, {}, needs ? &p : nullptr, {}, needs, &p.value});
    param_nodes_.emplace(&p, static_cast<std::uint32_t>(nodes_.size() - 1));
    return last();
  }

  /// Append a computed node. `backward(tape, self_id)` runs only when some
  /// input requires a gradient.
  template <class F>
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, F&& backward) {
    bool needs = false;
    if (grad_enabled_) {
      for (const auto& in : inputs) needs = needs || nodes_[in.id()].needs_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, nullptr, {}, needs, nullptr});
    if (needs) nodes_.back().backward = std::forward<F>(backward);
    return last();
  }

  Var<T> record(Tensor<T> value, const std::vector<Var<T>>& inputs,
                std::function<void(Tape&, std::uint32_t)> backward) {
    bool needs = false;
    if (grad_enabled_) {
      for (const auto& in : inputs) needs = needs || nodes_[in.id()].needs_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, nullptr, {}, needs, nullptr});
    if (needs) nodes_.back().backward = std::move(backward);
    return last();
  }

  [[nodiscard]] const Tensor<T>& value(std::uint32_t id) const { return nodes_[id].get(); }
  [[nodiscard]] bool needs_grad(std::uint32_t id) const { return nodes_[id].needs_grad; }
  [[nodiscard]] bool needs_grad(const Var<T>& v) const { return nodes_[v.id()].needs_grad; }

  /// Gradient buffer of a node, allocated on first access.
  Tensor<T>& grad(std::uint32_t id) {
    auto& n = nodes_[id];
    if (n.grad.size() != n.get().size()) n.grad = Tensor<T>(n.get().shape());
    return n.grad;
  }
  Tensor<T>& grad(const Var<T>& v) { return grad(v.id()); }

  /// Seed d(root)/d(root) = 1 and propagate. Parameter gradients accumulate.
  void backward(const Var<T>& root) {
    if (root.value().size() != 1) throw ShapeError("backward: root must be a scalar");
    if (!nodes_[root.id()].needs_grad) return;
    grad(root.id())[0] = T{1};
    for (std::int64_t i = root.id(); i >= 0; --i) {
      auto& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.needs_grad || n.grad.size() == 0) continue;
      if (n.backward) n.backward(*this, static_cast<std::uint32_t>(i));
      if (n.param != nullptr) {
        auto& pg = n.param->grad;
        for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
      }
    }
  }

  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }
  void clear() {
    nodes_.clear();
    param_nodes_.clear();
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    Parameter<T>* param;
    std::function<void(Tape&, std::uint32_t)> backward;
    bool needs_grad;
    const Tensor<T>* external;

    [[nodiscard]] const Tensor<T>& get() const { return external ? *external : value; }
  };

  Var<T> last() { return Var<T>(this, static_cast<std::uint32_t>(nodes_.size() - 1)); }

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T>*, std::uint32_t> param_nodes_;
  bool grad_enabled_;
};

template <std::floating_point T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

}  // namespace pnat
