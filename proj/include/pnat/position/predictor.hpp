#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "pnat/core/functional.hpp"
#include "pnat/model/encoder.hpp"
#include "pnat/position/permutation.hpp"

namespace pnat {

struct PositionPrediction {
  Permutation z;
  double log_prob = 0.0;
};

/// NAR argmax with conflict repair. `probs` is [M x M] (slot x position).
/// Every position claimed by one or more argmaxes goes to the most confident
/// claimant; the remaining slots, most confident first, take their best
/// still-free position. Ties prefer lower slot / position indices.
inline Permutation resolve_position_conflicts(const Tensor<double>& probs) {
  const std::size_t m = probs.rows();
  if (probs.cols() != m) throw ShapeError("resolve_position_conflicts: need [M x M] probabilities");
  std::vector<std::size_t> best(m);
  std::vector<double> conf(m);
  for (std::size_t i = 0; i < m; ++i) {
    best[i] = argmax<double>(probs.row(i));
    conf[i] = probs(i, best[i]);
  }
  auto more_confident = [&](std::size_t a, std::size_t b) {
    return conf[a] > conf[b] || (conf[a] == conf[b] && a < b);
  };
  std::vector<int> z(m, -1);
  std::vector<long> owner(m, -1);
  for (std::size_t i = 0; i < m; ++i) {
    long& o = owner[best[i]];
    if (o < 0 || more_confident(i, static_cast<std::size_t>(o))) o = static_cast<long>(i);
  }
  std::vector<char> taken(m, 0);
  for (std::size_t pos = 0; pos < m; ++pos) {
    if (owner[pos] >= 0) {
      z[static_cast<std::size_t>(owner[pos])] = static_cast<int>(pos);
      taken[pos] = 1;
    }
  }
  std::vector<std::size_t> losers;
  for (std::size_t i = 0; i < m; ++i) {
    if (z[i] < 0) losers.push_back(i);
  }
  std::sort(losers.begin(), losers.end(), more_confident);
  for (auto i : losers) {
    std::size_t pick = m;
    for (std::size_t pos = 0; pos < m; ++pos) {
      if (!taken[pos] && (pick == m || probs(i, pos) > probs(i, pick))) pick = pos;
    }
    taken[pick] = 1;
    z[i] = static_cast<int>(pick);
  }
  return Permutation(std::move(z));
}

/// Position predictor: a sub-encoder over decoder inputs D (attending to the
/// source states E) produces R; an autoregressive pointer head and a
/// per-slot classifier head turn R into a permutation.
///
/// The pointer head runs over output positions: at step t a GRU state
/// queries the slots in R and the chosen slot is assigned position t.
/// Already-chosen slots are masked, so any decode is a bijection.
template <std::floating_point T>
struct PositionPredictor {
  std::vector<TransformerLayer<T>> sub_encoder;
  LayerNorm<T> sub_norm;
  Parameter<T>* start = nullptr;  // [1 x d] GRU input at step 0
  Linear<T> init_state, gru_x, gru_h, query, key;
  Linear<T> nar_proj;  // d -> max_positions
  std::size_t d_model = 0;
  std::size_t max_positions = 0;
  PositionHeads heads = PositionHeads::both;

  static PositionPredictor create(ParameterStore<T>& store, const ModelConfig& cfg, std::uint64_t seed,
                                  std::uint64_t& next_site) {
    PositionPredictor p;
    const std::size_t d = cfg.d_model;
    p.d_model = d;
    p.max_positions = cfg.max_positions;
    p.heads = cfg.position_heads;
    for (std::size_t l = 0; l < cfg.sub_encoder_layers; ++l) {
      p.sub_encoder.push_back(TransformerLayer<T>::create(store, "position.sub_encoder." + std::to_string(l), d,
                                                          cfg.d_hidden, cfg.n_heads, true, 0, seed, next_site));
      next_site += 3;
    }
    p.sub_norm = LayerNorm<T>::create(store, "position.sub_norm", d);
    p.start = &store.create("position.ar.start", {1, d});
    init::normal(*p.start, 1.0 / std::sqrt(static_cast<double>(d)), seed);
    p.init_state = Linear<T>::create(store, "position.ar.init", d, d, seed);
    p.gru_x = Linear<T>::create(store, "position.ar.gru_x", d, 3 * d, seed);
    p.gru_h = Linear<T>::create(store, "position.ar.gru_h", d, 3 * d, seed);
    p.query = Linear<T>::create(store, "position.ar.query", d, d, seed);
    p.key = Linear<T>::create(store, "position.ar.key", d, d, seed);
    p.nar_proj = Linear<T>::create(store, "position.nar.proj", d, cfg.max_positions, seed);
    return p;
  }

  [[nodiscard]] bool uses_ar() const { return heads != PositionHeads::nar; }
  [[nodiscard]] bool uses_nar() const { return heads != PositionHeads::ar; }

  /// R = sub-encoder(D + slot sinusoids, E).
  Var<T> sub_encode(Tape<T>& tape, Var<T> d_inputs, const EncoderOutput<T>& enc,
                    const ops::DropoutContext& drop) const {
    const std::size_t m = d_inputs.rows();
    auto x = ops::add(d_inputs, tape.constant(sinusoid_table<T>(m, d_model)));
    const AttentionMask self_mask;
    const AttentionMask mem_mask = enc.mask();
    for (const auto& layer : sub_encoder) x = layer(tape, x, self_mask, nullptr, &enc.states, mem_mask, drop);
    return sub_norm(tape, x);
  }

  /// Raw pointer scores [M x M] (row t = step t, column = slot) under teacher
  /// forcing along `order` (order[t] = slot picked at step t).
  Var<T> ar_step_scores(Tape<T>& tape, Var<T> r, const std::vector<int>& order) const {
    const std::size_t m = r.rows();
    if (order.size() != m) throw ShapeError("ar_step_scores: order length mismatch");
    auto keys = key(tape, r);
    auto h = ops::tanh(init_state(tape, ops::mean_rows(r)));
    std::vector<Var<T>> rows;
    rows.reserve(m);
    for (std::size_t t = 0; t < m; ++t) {
      auto x = t == 0 ? tape.parameter(*start) : ops::row(r, static_cast<std::size_t>(order[t - 1]));
      h = gru_step(tape, x, h);
      rows.push_back(pointer_scores(tape, h, keys));
    }
    return ops::stack_rows(rows);
  }

  /// Allowed-slot mask [M x M] for teacher forcing along `order`.
  static std::vector<std::uint8_t> ar_mask(const std::vector<int>& order) {
    const std::size_t m = order.size();
    std::vector<std::uint8_t> mask(m * m, 1);
    for (std::size_t t = 0; t < m; ++t) {
      for (std::size_t s = 0; s < t; ++s) mask[t * m + static_cast<std::size_t>(order[s])] = 0;
    }
    return mask;
  }

  /// -log P(z_ref | D, E) under the pointer head.
  Var<T> ar_loss(Tape<T>& tape, Var<T> r, const Permutation& z_ref) const {
    const auto order = z_ref.inverse().values();
    return ops::cross_entropy(ar_step_scores(tape, r, order), order, ar_mask(order));
  }

  /// Greedy pointer decode.
  PositionPrediction ar_greedy(Tape<T>& tape, Var<T> r) const {
    const std::size_t m = r.rows();
    auto keys = key(tape, r);
    auto h = ops::tanh(init_state(tape, ops::mean_rows(r)));
    std::vector<std::uint8_t> free(m, 1);
    std::vector<int> z(m, -1);
    double log_prob = 0.0;
    int prev = -1;
    for (std::size_t t = 0; t < m; ++t) {
      auto x = prev < 0 ? tape.parameter(*start) : ops::row(r, static_cast<std::size_t>(prev));
      h = gru_step(tape, x, h);
      const auto& scores = pointer_scores(tape, h, keys).value();
      std::size_t pick = m;
      for (std::size_t s = 0; s < m; ++s) {
        if (free[s] && (pick == m || scores[s] > scores[pick])) pick = s;
      }
      log_prob += static_cast<double>(scores[pick] - log_sum_exp<T>(scores.values(), free));
      free[pick] = 0;
      z[pick] = static_cast<int>(t);
      prev = static_cast<int>(pick);
    }
    return {Permutation(std::move(z)), log_prob};
  }

  /// [M x max_positions] logits of the per-slot position classifier.
  Var<T> nar_logits(Tape<T>& tape, Var<T> r) const {
    if (r.rows() > max_positions) {
      throw ShapeError("position predictor: length " + std::to_string(r.rows()) + " exceeds max_positions");
    }
    return nar_proj(tape, r);
  }

  static std::vector<std::uint8_t> nar_mask(std::size_t m, std::size_t classes) {
    std::vector<std::uint8_t> mask(m * classes, 0);
    for (std::size_t i = 0; i < m; ++i) std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(i * classes), m, 1);
    return mask;
  }

  Var<T> nar_loss(Tape<T>& tape, Var<T> r, const Permutation& z_ref) const {
    const std::size_t m = r.rows();
    return ops::cross_entropy(nar_logits(tape, r), z_ref.values(), nar_mask(m, max_positions));
  }

  /// Slot-wise distribution over the first M positions [M x M].
  Tensor<double> nar_probabilities(Tape<T>& tape, Var<T> r) const {
    const std::size_t m = r.rows();
    const auto& logits = nar_logits(tape, r).value();
    auto probs = Tensor<double>::matrix(m, m);
    for (std::size_t i = 0; i < m; ++i) {
      std::vector<double> row(m);
      for (std::size_t j = 0; j < m; ++j) row[j] = static_cast<double>(logits(i, j));
      const auto p = softmax(row);
      std::copy(p.begin(), p.end(), probs.row(i).begin());
    }
    return probs;
  }

  PositionPrediction nar_predict(Tape<T>& tape, Var<T> r) const {
    const auto probs = nar_probabilities(tape, r);
    auto z = resolve_position_conflicts(probs);
    double lp = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) lp += std::log(probs(i, static_cast<std::size_t>(z[i])));
    return {std::move(z), lp};
  }

  /// L_p: AR head, NAR head, or their sum, per configuration.
  Var<T> position_loss(Tape<T>& tape, Var<T> r, const Permutation& z_ref) const {
    if (heads == PositionHeads::ar) return ar_loss(tape, r, z_ref);
    if (heads == PositionHeads::nar) return nar_loss(tape, r, z_ref);
    return ops::add(ar_loss(tape, r, z_ref), nar_loss(tape, r, z_ref));
  }

 private:
  Var<T> gru_step(Tape<T>& tape, Var<T> x, Var<T> h) const {
    const std::size_t d = d_model;
    auto gx = gru_x(tape, x);
    auto gh = gru_h(tape, h);
    auto reset = ops::sigmoid(ops::add(ops::slice_cols(gx, 0, d), ops::slice_cols(gh, 0, d)));
    auto update = ops::sigmoid(ops::add(ops::slice_cols(gx, d, d), ops::slice_cols(gh, d, d)));
    auto cand = ops::tanh(ops::add(ops::slice_cols(gx, 2 * d, d), ops::mul(reset, ops::slice_cols(gh, 2 * d, d))));
    return ops::add(cand, ops::mul(update, ops::sub(h, cand)));
  }

  Var<T> pointer_scores(Tape<T>& tape, Var<T> h, Var<T> keys) const {
    const T scale = T{1} / std::sqrt(static_cast<T>(d_model));
    return ops::scale(ops::matmul_nt(query(tape, h), keys), scale);
  }
};

}  // namespace pnat
