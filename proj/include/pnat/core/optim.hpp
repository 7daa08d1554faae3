#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "pnat/core/tape.hpp"

namespace pnat {

/// Moment estimates for Adam. `m[i]`/`v[i]` mirror the i-th parameter.
template <std::floating_point T>
struct AdamState {
  std::uint64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-9;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
};

/// One bias-corrected Adam update on a single tensor. Grads must be finite;
/// callers check before mutating anything.
template <std::floating_point T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v,
                 std::uint64_t step, double lr, double beta1, double beta2, double eps) {
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double mi = beta1 * m[i] + (1.0 - beta1) * g;
    const double vi = beta2 * v[i] + (1.0 - beta2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double mhat = mi / c1;
    const double vhat = vi / c2;
    param[i] = static_cast<T>(param[i] - lr * mhat / (std::sqrt(vhat) + eps));
  }
}

/// Adam over a parameter store. Frozen parameters are skipped entirely, so
/// their values and moments stay bit-identical.
template <std::floating_point T>
class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.98, double eps = 1e-9) {
    state_.beta1 = beta1;
    state_.beta2 = beta2;
    state_.epsilon = eps;
  }

  /// Throws NumericalError (leaving everything untouched) when any trainable
  /// gradient is non-finite.
  void step(ParameterStore<T>& params, double lr) {
    if (!(lr > 0.0)) throw NumericalError("adam: learning rate must be positive");
    ensure_slots(params);
    for (const auto& p : params) {
      if (!p.frozen && !p.grad.all_finite()) {
        throw NumericalError("adam: non-finite gradient in " + p.name + "; step aborted");
      }
    }
    ++state_.step_count;
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      if (p.frozen) continue;
      adam_update<T>(p.value.values(), p.grad.values(), state_.m[i].values(), state_.v[i].values(),
                     state_.step_count, lr, state_.beta1, state_.beta2, state_.epsilon);
    }
  }

  [[nodiscard]] AdamState<T>& state() noexcept { return state_; }
  [[nodiscard]] const AdamState<T>& state() const noexcept { return state_; }

  void ensure_slots(const ParameterStore<T>& params) {
    if (state_.m.size() == params.size()) return;
    state_.m.clear();
    state_.v.clear();
    for (const auto& p : params) {
      state_.m.emplace_back(p.value.shape());
      state_.v.emplace_back(p.value.shape());
    }
  }

 private:
  AdamState<T> state_;
};

enum class ScheduleKind { inverse_sqrt, linear_anneal };

inline std::string to_string(ScheduleKind k) {
  return k == ScheduleKind::inverse_sqrt ? "inverse_sqrt" : "linear_anneal";
}

/// Learning rate as a function of the (1-based) update number.
struct LrSchedule {
  ScheduleKind kind = ScheduleKind::linear_anneal;
  std::uint64_t warmup_steps = 0;
  double start_lr = 3e-4;
  double end_lr = 1e-5;
  std::uint64_t total_steps = 10000;

  /// inverse_sqrt: linear warmup to start_lr, then start_lr * sqrt(warmup / step).
  /// linear_anneal: start_lr -> end_lr over total_steps, flat afterwards.
  [[nodiscard]] double at(std::uint64_t step) const {
    const double s = static_cast<double>(std::max<std::uint64_t>(step, 1));
    if (kind == ScheduleKind::inverse_sqrt) {
      const double w = static_cast<double>(std::max<std::uint64_t>(warmup_steps, 1));
      return s < w ? start_lr * s / w : start_lr * std::sqrt(w / s);
    }
    if (total_steps == 0 || step >= total_steps) return end_lr;
    const double frac = s / static_cast<double>(total_steps);
    return start_lr + (end_lr - start_lr) * frac;
  }
};

}  // namespace pnat
