#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "pnat/core/functional.hpp"
#include "pnat/model/encoder.hpp"

namespace pnat {

struct SoftCopyConfig {
  double tau = 1.0;
};

/// M = max(1, n_src + offset).
inline std::size_t length_from_offset(std::size_t n_src, int offset) {
  const long m = static_cast<long>(n_src) + offset;
  return static_cast<std::size_t>(std::max(1L, m));
}

/// Soft-copy weights [m_tgt x n_src]: row j is softmax_i(-|j - i| / tau).
template <std::floating_point T>
Tensor<T> soft_copy_weights(std::size_t n_src, std::size_t m_tgt, const SoftCopyConfig& cfg) {
  if (n_src == 0 || m_tgt == 0) throw ShapeError("soft_copy: lengths must be >= 1");
  if (!(cfg.tau > 0.0)) throw ConfigError("soft_copy: tau must be > 0");
  auto w = Tensor<T>::matrix(m_tgt, n_src);
  std::vector<double> logits(n_src);
  for (std::size_t j = 0; j < m_tgt; ++j) {
    for (std::size_t i = 0; i < n_src; ++i) {
      logits[i] = -std::abs(static_cast<double>(j) - static_cast<double>(i)) / cfg.tau;
    }
    const auto row = softmax(logits);
    for (std::size_t i = 0; i < n_src; ++i) w(j, i) = static_cast<T>(row[i]);
  }
  return w;
}

/// Length classifier over offsets [-B, B] from mean-pooled encoder states,
/// plus the soft-copy construction of decoder inputs D.
template <std::floating_point T>
struct Bridge {
  Linear<T> length_proj;  // d_model -> 2B+1
  int band = 20;
  SoftCopyConfig soft_copy_cfg;

  static Bridge create(ParameterStore<T>& store, const ModelConfig& cfg, std::uint64_t seed) {
    Bridge b;
    b.band = cfg.length_band;
    b.soft_copy_cfg.tau = cfg.tau;
    b.length_proj = Linear<T>::create(store, "bridge.length", cfg.d_model,
                                      static_cast<std::size_t>(2 * cfg.length_band + 1), seed);
    return b;
  }

  [[nodiscard]] std::size_t classes() const { return static_cast<std::size_t>(2 * band + 1); }

  /// [1 x (2B+1)] logits. With `detach_encoder` no gradient reaches E.
  Var<T> length_logits(Tape<T>& tape, const EncoderOutput<T>& enc, bool detach_encoder) const {
    auto states = detach_encoder ? ops::detach(enc.states) : enc.states;
    return length_proj(tape, ops::mean_rows(states, enc.length));
  }

  [[nodiscard]] int offset_from_logits(const Tensor<T>& logits) const {
    return static_cast<int>(argmax<T>(logits.values())) - band;
  }

  std::size_t predict_length(Tape<T>& tape, const EncoderOutput<T>& enc) const {
    return length_from_offset(enc.length, offset_from_logits(length_logits(tape, enc, true).value()));
  }

  /// Offset class of a reference length; offsets beyond the band are clamped.
  [[nodiscard]] int length_class(std::size_t true_m, std::size_t n_src) const {
    const long off = static_cast<long>(true_m) - static_cast<long>(n_src);
    return static_cast<int>(std::clamp(off, -static_cast<long>(band), static_cast<long>(band)) + band);
  }

  Var<T> length_loss(Tape<T>& tape, const EncoderOutput<T>& enc, std::size_t true_m,
                     bool detach_encoder = true) const {
    return ops::cross_entropy(length_logits(tape, enc, detach_encoder), {length_class(true_m, enc.length)});
  }

  /// D = W E with W from soft_copy_weights.
  Var<T> soft_copy(Tape<T>& tape, const EncoderOutput<T>& enc, std::size_t m_tgt) const {
    auto w = soft_copy_weights<T>(enc.length, m_tgt, soft_copy_cfg);
    auto states = enc.states;
    if (states.rows() != enc.length) states = ops::gather_rows(states, iota_ids(enc.length));
    return ops::matmul(tape.constant(std::move(w)), states);
  }

 private:
  static std::vector<int> iota_ids(std::size_t n) {
    std::vector<int> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<int>(i);
    return ids;
  }
};

}  // namespace pnat
