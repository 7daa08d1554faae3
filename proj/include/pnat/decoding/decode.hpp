#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pnat/model/at_model.hpp"
#include "pnat/model/pnat_model.hpp"
#include "pnat/position/search.hpp"

namespace pnat {

/// Where decoding takes its permutation from.
enum class PositionSource { ar, nar, hsp_oracle, identity };

inline std::string to_string(PositionSource s) {
  switch (s) {
    case PositionSource::ar: return "ar";
    case PositionSource::nar: return "nar";
    case PositionSource::hsp_oracle: return "hsp";
    case PositionSource::identity: return "identity";
  }
  return "?";
}

inline PositionSource parse_position_source(const std::string& s) {
  if (s == "ar") return PositionSource::ar;
  if (s == "nar") return PositionSource::nar;
  if (s == "hsp") return PositionSource::hsp_oracle;
  if (s == "identity") return PositionSource::identity;
  throw ConfigError("unknown predictor '" + s + "' (expected ar|nar|hsp|identity)");
}

/// Default position source for a model: NAT-base decodes with identity.
template <std::floating_point T>
PositionSource default_position_source(const PnatModel<T>& model) {
  if (!model.learns_positions()) return PositionSource::identity;
  return model.predictor().uses_ar() ? PositionSource::ar : PositionSource::nar;
}

struct DecodeResult {
  std::vector<int> tokens;  // surface order
  Permutation z_used;
  std::size_t length_used = 0;
  double model_score = 0.0;  // log P(z) + sum of per-slot argmax log-probs
  std::optional<double> rescorer_score;
};

struct DecodeOptions {
  PositionSource positions = PositionSource::ar;
  std::optional<std::size_t> forced_length;
  /// Required for PositionSource::hsp_oracle; also fixes the length.
  std::optional<std::span<const int>> reference;
};

namespace detail {

template <std::floating_point T>
DecodeResult decode_at_length(const PnatModel<T>& model, Tape<T>& tape, const EncoderOutput<T>& enc, std::size_t m,
                              const DecodeOptions& opt) {
  auto d = model.decoder_inputs(tape, enc, m);
  DecodeResult res;
  res.length_used = m;
  switch (opt.positions) {
    case PositionSource::identity: res.z_used = Permutation::identity(m); break;
    case PositionSource::hsp_oracle:
      res.z_used = hsp(similarity_matrix<T>(d.value(), *opt.reference, model.target_embedding().value));
      break;
    case PositionSource::ar:
    case PositionSource::nar: {
      if (!model.learns_positions()) throw ConfigError("model has no trained position predictor");
      auto r = model.predictor().sub_encode(tape, d, enc, {});
      auto pred = opt.positions == PositionSource::ar ? model.predictor().ar_greedy(tape, r)
                                                      : model.predictor().nar_predict(tape, r);
      res.z_used = std::move(pred.z);
      res.model_score = pred.log_prob;
      break;
    }
  }
  const auto& logits = model.decode_nat(tape, d, res.z_used, enc).value();
  std::vector<int> slot_tokens(m);
  for (std::size_t t = 0; t < m; ++t) {
    const auto row = logits.row(t);
    const std::size_t w = argmax<T>(row);
    slot_tokens[t] = static_cast<int>(w);
    res.model_score += static_cast<double>(row[w]) - static_cast<double>(log_sum_exp<T>(row));
  }
  res.tokens = res.z_used.scatter(slot_tokens);
  return res;
}

}  // namespace detail

/// encode -> length -> soft-copy -> positions -> parallel decode -> scatter.
template <std::floating_point T>
DecodeResult argmax_decode(const PnatModel<T>& model, std::span<const int> src, const DecodeOptions& opt) {
  Tape<T> tape(false);
  auto enc = model.encode(tape, src);
  std::size_t m = 0;
  if (opt.positions == PositionSource::hsp_oracle) {
    if (!opt.reference || opt.reference->empty()) throw ConfigError("HSP-oracle decoding needs a reference");
    m = opt.reference->size();
  } else {
    m = opt.forced_length ? *opt.forced_length : model.bridge().predict_length(tape, enc);
  }
  if (m == 0) throw ShapeError("decode length must be >= 1");
  return detail::decode_at_length(model, tape, enc, m, opt);
}

inline std::vector<int> with_eos(std::vector<int> tokens) {
  tokens.push_back(token::eos);
  return tokens;
}

/// Candidate lengths max(1, M-delta) .. M+delta, deduplicated, ascending.
inline std::vector<std::size_t> lpd_lengths(std::size_t predicted, std::size_t delta_m) {
  std::vector<std::size_t> out;
  for (long off = -static_cast<long>(delta_m); off <= static_cast<long>(delta_m); ++off) {
    const std::size_t m = static_cast<std::size_t>(std::max(1L, static_cast<long>(predicted) + off));
    if (out.empty() || out.back() != m) out.push_back(m);
  }
  return out;
}

/// Rescorer normalisation is off by default (total log-probability).
struct LpdOptions {
  std::size_t delta_m = 4;
  PositionSource positions = PositionSource::ar;
  bool length_normalize = false;
};

/// Length-parallel decoding: one argmax decode per candidate length, the
/// rescorer's best wins (ties: shorter length). With delta_m = 0 this is
/// argmax_decode. `candidates`, when given, receives every candidate.
template <std::floating_point T, std::floating_point U>
DecodeResult lpd_decode(const PnatModel<T>& model, std::span<const int> src, const LpdOptions& opt,
                        const AtModel<U>* rescorer, std::vector<DecodeResult>* candidates = nullptr) {
  Tape<T> tape(false);
  auto enc = model.encode(tape, src);
  const std::size_t predicted = model.bridge().predict_length(tape, enc);
  const auto lengths = lpd_lengths(predicted, opt.delta_m);
  DecodeOptions dopt;
  dopt.positions = opt.positions;
  std::vector<DecodeResult> all;
  for (auto m : lengths) all.push_back(detail::decode_at_length(model, tape, enc, m, dopt));
  if (all.size() > 1) {
    if (!rescorer) throw ConfigError("length-parallel decoding with delta_m > 0 needs a rescorer");
    for (auto& c : all) {
      double s = rescorer->score_sequence(with_eos(c.tokens), src);
      if (opt.length_normalize) s /= static_cast<double>(c.tokens.size() + 1);
      c.rescorer_score = s;
    }
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < all.size(); ++i) {
    // Lengths ascend, so strict > keeps the shorter candidate on ties.
    if (*all[i].rescorer_score > *all[best].rescorer_score) best = i;
  }
  DecodeResult out = all[best];
  if (candidates) *candidates = std::move(all);
  return out;
}

/// Collapses runs of identical adjacent tokens.
inline std::vector<int> remove_repeats(std::span<const int> tokens) {
  std::vector<int> out;
  for (int t : tokens) {
    if (out.empty() || out.back() != t) out.push_back(t);
  }
  return out;
}

}  // namespace pnat
