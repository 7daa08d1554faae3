#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "pnat/core/rng.hpp"
#include "pnat/core/tape.hpp"

// Differentiable operations over rank-2 values. Each op computes its forward
// value eagerly and records a closure that accumulates input gradients.

namespace pnat::ops {

namespace detail {

template <class T>
using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
auto map(Tensor<T>& t) {
  return Eigen::Map<RowMajor<T>>(t.data(), static_cast<Eigen::Index>(t.rows()),
                                 static_cast<Eigen::Index>(t.cols()));
}
template <class T>
auto map(const Tensor<T>& t) {
  return Eigen::Map<const RowMajor<T>>(t.data(), static_cast<Eigen::Index>(t.rows()),
                                       static_cast<Eigen::Index>(t.cols()));
}

template <class T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

}  // namespace detail

/// [n x k] * [k x m]
template <std::floating_point T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
  }
  auto out = Tensor<T>::matrix(av.rows(), bv.cols());
  detail::map(out).noalias() = detail::map(av) * detail::map(bv);
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape<T>& t, std::uint32_t self) {
    const auto g = detail::map(t.grad(self));
    if (t.needs_grad(a)) detail::map(t.grad(a)).noalias() += g * detail::map(b.value()).transpose();
    if (t.needs_grad(b)) detail::map(t.grad(b)).noalias() += detail::map(a.value()).transpose() * g;
  });
}

/// [n x k] * [m x k]^T
template <std::floating_point T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.cols() != bv.cols()) {
    throw ShapeError("matmul_nt: " + shape_string(av.shape()) + " x " + shape_string(bv.shape()) + "^T");
  }
  auto out = Tensor<T>::matrix(av.rows(), bv.rows());
  detail::map(out).noalias() = detail::map(av) * detail::map(bv).transpose();
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape<T>& t, std::uint32_t self) {
    const auto g = detail::map(t.grad(self));
    if (t.needs_grad(a)) detail::map(t.grad(a)).noalias() += g * detail::map(b.value());
    if (t.needs_grad(b)) detail::map(t.grad(b)).noalias() += g.transpose() * detail::map(a.value());
  });
}

template <std::floating_point T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::require_same(a.value(), b.value(), "add");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    for (auto v : {a, b}) {
      if (!t.needs_grad(v)) continue;
      auto& gv = t.grad(v);
      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
    }
  });
}

template <std::floating_point T>
Var<T> sub(Var<T> a, Var<T> b) {
  detail::require_same(a.value(), b.value(), "sub");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    if (t.needs_grad(a)) {
      auto& ga = t.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.needs_grad(b)) {
      auto& gb = t.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

/// Elementwise product.
template <std::floating_point T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::require_same(a.value(), b.value(), "mul");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    if (t.needs_grad(a)) {
      auto& ga = t.grad(a);
      const auto& bv = b.value();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.needs_grad(b)) {
      auto& gb = t.grad(b);
      const auto& av = a.value();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <std::floating_point T>
Var<T> scale(Var<T> a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v *= s;
  return a.tape().record(std::move(out), {a}, [a, s](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

/// Adds a [1 x m] row to every row of a [n x m] matrix.
template <std::floating_point T>
Var<T> add_row(Var<T> a, Var<T> row) {
  const auto& av = a.value();
  const auto& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    throw ShapeError("add_row: " + shape_string(av.shape()) + " + " + shape_string(rv.shape()));
  }
  Tensor<T> out = av;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto o = out.row(r);
    for (std::size_t c = 0; c < o.size(); ++c) o[c] += rv[c];
  }
  return a.tape().record(std::move(out), {a, row}, [a, row](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    if (t.needs_grad(a)) {
      auto& ga = t.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.needs_grad(row)) {
      auto& gr = t.grad(row);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        auto gs = g.row(r);
        for (std::size_t c = 0; c < gs.size(); ++c) gr[c] += gs[c];
      }
    }
  });
}

namespace detail {

template <std::floating_point T, class Fwd, class Deriv>
Var<T> unary(Var<T> a, Fwd fwd, Deriv deriv) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v = fwd(v);
  return a.tape().record(std::move(out), {a}, [a, deriv](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    const auto& y = t.value(self);
    const auto& x = a.value();
    auto& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(x[i], y[i]);
  });
}

}  // namespace detail

template <std::floating_point T>
Var<T> relu(Var<T> a) {
  return detail::unary(
      a, [](T x) { return x > T{0} ? x : T{0}; }, [](T x, T) { return x > T{0} ? T{1} : T{0}; });
}

template <std::floating_point T>
Var<T> sigmoid(Var<T> a) {
  return detail::unary(
      a, [](T x) { return T{1} / (T{1} + std::exp(-x)); }, [](T, T y) { return y * (T{1} - y); });
}

template <std::floating_point T>
Var<T> tanh(Var<T> a) {
  return detail::unary(
      a, [](T x) { return std::tanh(x); }, [](T, T y) { return T{1} - y * y; });
}

/// Stop-gradient: a constant copy of the value.
template <std::floating_point T>
Var<T> detach(Var<T> a) {
  return a.tape().constant(a.value());
}

/// Sum of all entries, as a 1x1 value.
template <std::floating_point T>
Var<T> sum(Var<T> a) {
  T s{0};
  for (auto v : a.value().values()) s += v;
  return a.tape().record(Tensor<T>::matrix(1, 1, s), {a}, [a](Tape<T>& t, std::uint32_t self) {
    const T g = t.grad(self)[0];
    auto& ga = t.grad(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

/// Mean over rows, restricted to the first `n` rows (all rows when n == 0).
template <std::floating_point T>
Var<T> mean_rows(Var<T> a, std::size_t n = 0) {
  const auto& av = a.value();
  if (n == 0) n = av.rows();
  if (n > av.rows()) throw ShapeError("mean_rows: n exceeds rows");
  auto out = Tensor<T>::matrix(1, av.cols());
  for (std::size_t r = 0; r < n; ++r) {
    auto row = av.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) out[c] += row[c];
  }
  const T inv = T{1} / static_cast<T>(n);
  for (auto& v : out.values()) v *= inv;
  return a.tape().record(std::move(out), {a}, [a, n, inv](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(a);
    for (std::size_t r = 0; r < n; ++r) {
      auto gr = ga.row(r);
      for (std::size_t c = 0; c < gr.size(); ++c) gr[c] += g[c] * inv;
    }
  });
}

/// Rows of `table` selected by index (embedding lookup, row slicing).
template <std::floating_point T>
Var<T> gather_rows(Var<T> table, std::vector<int> ids) {
  const auto& tv = table.value();
  auto out = Tensor<T>::matrix(ids.size(), tv.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= tv.rows()) {
      throw DataError("gather_rows: index " + std::to_string(ids[r]) + " out of range " +
                      std::to_string(tv.rows()));
    }
    auto src = tv.row(static_cast<std::size_t>(ids[r]));
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return table.tape().record(std::move(out), {table},
                             [table, ids = std::move(ids)](Tape<T>& t, std::uint32_t self) {
                               const auto& g = t.grad(self);
                               auto& gt = t.grad(table);
                               for (std::size_t r = 0; r < ids.size(); ++r) {
                                 auto dst = gt.row(static_cast<std::size_t>(ids[r]));
                                 auto src = g.row(r);
                                 for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
                               }
                             });
}

template <std::floating_point T>
Var<T> row(Var<T> a, std::size_t r) {
  return gather_rows(a, std::vector<int>{static_cast<int>(r)});
}

/// Columns [start, start + count).
template <std::floating_point T>
Var<T> slice_cols(Var<T> a, std::size_t start, std::size_t count) {
  const auto& av = a.value();
  if (start + count > av.cols()) throw ShapeError("slice_cols: out of range");
  auto out = Tensor<T>::matrix(av.rows(), count);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    auto src = av.row(r).subspan(start, count);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return a.tape().record(std::move(out), {a}, [a, start, count](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(a);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      auto dst = ga.row(r).subspan(start, count);
      auto src = g.row(r);
      for (std::size_t c = 0; c < count; ++c) dst[c] += src[c];
    }
  });
}

/// Vertically stacks equally wide rows/matrices.
template <std::floating_point T>
Var<T> stack_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("stack_rows: empty");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ShapeError("stack_rows: width mismatch");
    rows += p.rows();
  }
  auto out = Tensor<T>::matrix(rows, cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    std::copy(v.values().begin(), v.values().end(), out.data() + off);
    off += v.size();
  }
  return parts.front().tape().record(std::move(out), parts, [parts](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    std::size_t off = 0;
    for (const auto& p : parts) {
      const std::size_t n = p.value().size();
      if (t.needs_grad(p)) {
        auto& gp = t.grad(p);
        for (std::size_t i = 0; i < n; ++i) gp[i] += g[off + i];
      }
      off += n;
    }
  });
}

/// Row-wise layer normalization with learned gain and bias ([1 x d] each).
template <std::floating_point T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(1e-5)) {
  const auto& xv = x.value();
  const std::size_t n = xv.rows();
  const std::size_t d = xv.cols();
  if (gain.value().size() != d || bias.value().size() != d) throw ShapeError("layer_norm: width");
  auto out = Tensor<T>::matrix(n, d);
  std::vector<T> xhat(n * d);
  std::vector<T> inv_std(n);
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  for (std::size_t r = 0; r < n; ++r) {
    auto xr = xv.row(r);
    T mean{0};
    for (auto v : xr) mean += v;
    mean /= static_cast<T>(d);
    T var{0};
    for (auto v : xr) var += (v - mean) * (v - mean);
    var /= static_cast<T>(d);
    const T is = T{1} / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t c = 0; c < d; ++c) {
      const T h = (xr[c] - mean) * is;
      xhat[r * d + c] = h;
      out(r, c) = h * gv[c] + bv[c];
    }
  }
  return x.tape().record(
      std::move(out), {x, gain, bias},
      [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std), n, d](Tape<T>& t,
                                                                                std::uint32_t self) {
        const auto& g = t.grad(self);
        if (t.needs_grad(gain) || t.needs_grad(bias)) {
          auto& gg = t.grad(gain);
          auto& gb = t.grad(bias);
          for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < d; ++c) {
              gg[c] += g(r, c) * xhat[r * d + c];
              gb[c] += g(r, c);
            }
          }
        }
        if (!t.needs_grad(x)) return;
        const auto& gv = gain.value();
        auto& gx = t.grad(x);
        std::vector<T> dh(d);
        for (std::size_t r = 0; r < n; ++r) {
          T mean_dh{0};
          T mean_dh_h{0};
          for (std::size_t c = 0; c < d; ++c) {
            dh[c] = g(r, c) * gv[c];
            mean_dh += dh[c];
            mean_dh_h += dh[c] * xhat[r * d + c];
          }
          mean_dh /= static_cast<T>(d);
          mean_dh_h /= static_cast<T>(d);
          for (std::size_t c = 0; c < d; ++c) {
            gx(r, c) += inv_std[r] * (dh[c] - mean_dh - xhat[r * d + c] * mean_dh_h);
          }
        }
      });
}

/// Summed cross-entropy over rows: sum_r -log softmax(logits[r])[targets[r]].
/// `allowed`, when given, is a rows x cols 0/1 mask; disallowed classes get
/// zero probability.
template <std::floating_point T>
Var<T> cross_entropy(Var<T> logits, std::vector<int> targets,
                     std::vector<std::uint8_t> allowed = {}) {
  const auto& lv = logits.value();
  const std::size_t rows = lv.rows();
  const std::size_t k = lv.cols();
  if (targets.size() != rows) throw ShapeError("cross_entropy: target count mismatch");
  if (!allowed.empty() && allowed.size() != rows * k) throw ShapeError("cross_entropy: mask shape");
  std::vector<T> probs(rows * k, T{0});
  T total{0};
  for (std::size_t r = 0; r < rows; ++r) {
    const int tgt = targets[r];
    if (tgt < 0 || static_cast<std::size_t>(tgt) >= k ||
        (!allowed.empty() && !allowed[r * k + static_cast<std::size_t>(tgt)])) {
      throw DataError("cross_entropy: target " + std::to_string(tgt) + " out of range (corrupt batch)");
    }
    auto lr = lv.row(r);
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      if (allowed.empty() || allowed[r * k + c]) mx = std::max(mx, lr[c]);
    }
    T z{0};
    for (std::size_t c = 0; c < k; ++c) {
      if (allowed.empty() || allowed[r * k + c]) {
        const T e = std::exp(lr[c] - mx);
        probs[r * k + c] = e;
        z += e;
      }
    }
    for (std::size_t c = 0; c < k; ++c) probs[r * k + c] /= z;
    total += -(lr[static_cast<std::size_t>(tgt)] - mx - std::log(z));
  }
  return logits.tape().record(
      Tensor<T>::matrix(1, 1, total), {logits},
      [logits, targets = std::move(targets), probs = std::move(probs), k](Tape<T>& t, std::uint32_t self) {
        const T g = t.grad(self)[0];
        auto& gl = t.grad(logits);
        for (std::size_t r = 0; r < targets.size(); ++r) {
          for (std::size_t c = 0; c < k; ++c) gl(r, c) += g * probs[r * k + c];
          gl(r, static_cast<std::size_t>(targets[r])) -= g;
        }
      });
}

/// Row-wise softmax (differentiable), used where probabilities feed further ops.
template <std::floating_point T>
Var<T> softmax_rows(Var<T> logits) {
  Tensor<T> out = logits.value();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    T mx = *std::max_element(row.begin(), row.end());
    T z{0};
    for (auto& v : row) {
      v = std::exp(v - mx);
      z += v;
    }
    for (auto& v : row) v /= z;
  }
  return logits.tape().record(std::move(out), {logits}, [logits](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    const auto& p = t.value(self);
    auto& gl = t.grad(logits);
    for (std::size_t r = 0; r < p.rows(); ++r) {
      T dot{0};
      for (std::size_t c = 0; c < p.cols(); ++c) dot += g(r, c) * p(r, c);
      for (std::size_t c = 0; c < p.cols(); ++c) gl(r, c) += p(r, c) * (g(r, c) - dot);
    }
  });
}

/// Where dropout masks come from: a counter-based key derived from
/// (seed, step, example, site), so masks are reproducible in any order.
struct DropoutContext {
  double p = 0.0;
  bool training = false;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::uint64_t example = 0;

  [[nodiscard]] bool active() const noexcept { return training && p > 0.0; }
  [[nodiscard]] std::uint64_t key(std::uint64_t site) const noexcept {
    return rng::key({seed, step, example, site});
  }
};

/// Inverted dropout; identity outside training.
template <std::floating_point T>
Var<T> dropout(Var<T> x, const DropoutContext& ctx, std::uint64_t site) {
  if (!ctx.active()) return x;
  const std::uint64_t k = ctx.key(site);
  const T keep_scale = T(1.0 / (1.0 - ctx.p));
  std::vector<T> mask(x.value().size());
  Tensor<T> out = x.value();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = rng::uniform(k, i) < ctx.p ? T{0} : keep_scale;
    out[i] *= mask[i];
  }
  return x.tape().record(std::move(out), {x}, [x, mask = std::move(mask)](Tape<T>& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < mask.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

}  // namespace pnat::ops
