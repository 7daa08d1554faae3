#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "pnat/core/tape.hpp"

namespace pnat {

/// Central-difference gradient check in 64-bit mode.
/// `f(tape, x)` must return a scalar Var. Returns the max over coordinates of
/// |analytic - numeric| / max(1, |analytic|).
template <class F>
double grad_check(F&& f, const Tensor<double>& x, double eps = 1e-5) {
  Tensor<double> analytic(x.shape());
  {
    Parameter<double> p{"x", x, Tensor<double>(x.shape()), false};
    Tape<double> tape;
    auto out = f(tape, tape.parameter(p));
    tape.backward(out);
    analytic = p.grad;
  }
  auto eval = [&](const Tensor<double>& at) {
    Tape<double> tape(false);
    Parameter<double> p{"x", at, Tensor<double>(at.shape()), true};
    return f(tape, tape.parameter(p)).item();
  };
  double worst = 0.0;
  Tensor<double> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double up = eval(probe);
    probe[i] = orig - eps;
    const double down = eval(probe);
    probe[i] = orig;
    const double numeric = (up - down) / (2.0 * eps);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i])));
  }
  return worst;
}

struct GradCheckReport {
  double max_error = 0.0;
  std::string worst_parameter;
  std::size_t coordinates = 0;
};

/// Same check against every coordinate of a parameter store. `loss(tape)`
/// builds the scalar loss from the store's parameters. `stride` > 1 checks a
/// deterministic subset of coordinates per parameter.
template <class F>
GradCheckReport grad_check_parameters(F&& loss, ParameterStore<double>& params, double eps = 1e-5,
                                      std::size_t stride = 1) {
  params.zero_grad();
  {
    Tape<double> tape;
    auto out = loss(tape);
    tape.backward(out);
  }
  auto eval = [&] {
    Tape<double> tape(false);
    return loss(tape).item();
  };
  GradCheckReport report;
  for (auto& p : params) {
    if (p.frozen) continue;
    for (std::size_t i = 0; i < p.value.size(); i += std::max<std::size_t>(stride, 1)) {
      const double orig = p.value[i];
      p.value[i] = orig + eps;
      const double up = eval();
      p.value[i] = orig - eps;
      const double down = eval();
      p.value[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = std::abs(p.grad[i] - numeric) / std::max(1.0, std::abs(p.grad[i]));
      ++report.coordinates;
      if (err > report.max_error) {
        report.max_error = err;
        report.worst_parameter = p.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

}  // namespace pnat
