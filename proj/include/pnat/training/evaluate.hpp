#pragma once

#include <chrono>
#include <optional>
#include <vector>

#include "pnat/decoding/decode.hpp"
#include "pnat/harness/bleu.hpp"
#include "pnat/position/metrics.hpp"
#include "pnat/training/batch.hpp"
#include "pnat/training/objective.hpp"

namespace pnat {

struct EvalOptions {
  PositionSource positions = PositionSource::ar;
  std::size_t limit = 0;  // 0 = whole set
  std::size_t at_beam = 1;
  bool keep_outputs = false;
};

struct EvalResult {
  double bleu = 0.0;
  double bleu_rr = 0.0;  // after remove_repeats
  std::optional<double> perm_acc, rel_acc;
  double length_acc = 0.0;
  double sentences_per_second = 0.0;
  std::size_t sentences = 0;
  std::vector<std::vector<int>> outputs;
};

namespace detail {

inline void finish_bleu(EvalResult& r, const std::vector<std::vector<int>>& hyps,
                        const std::vector<std::vector<int>>& refs) {
  r.bleu = corpus_bleu(hyps, refs);
  std::vector<std::vector<int>> rr;
  rr.reserve(hyps.size());
  for (const auto& h : hyps) rr.push_back(remove_repeats(h));
  r.bleu_rr = corpus_bleu(rr, refs);
}

}  // namespace detail

/// Predicted permutation at the reference length, for position metrics.
template <std::floating_point T>
Permutation predicted_positions(const PnatModel<T>& model, Tape<T>& tape, const EncoderOutput<T>& enc, Var<T> d,
                                PositionSource src) {
  if (src == PositionSource::identity || !model.learns_positions()) return Permutation::identity(d.rows());
  auto r = model.predictor().sub_encode(tape, d, enc, {});
  return src == PositionSource::nar ? model.predictor().nar_predict(tape, r).z : model.predictor().ar_greedy(tape, r).z;
}

/// Dev BLEU with full argmax decoding (predicted length), plus position
/// accuracies against HSP references at the reference length.
template <std::floating_point T>
EvalResult evaluate(const PnatModel<T>& model, const std::vector<Example>& data, const EvalOptions& opt) {
  const std::size_t n = opt.limit ? std::min(opt.limit, data.size()) : data.size();
  if (n == 0) throw DataError("evaluate: empty evaluation set");
  EvalResult res;
  res.sentences = n;
  std::vector<std::vector<int>> hyps, refs;
  AccuracyCount perm, rel;
  std::size_t length_hits = 0;
  double decode_seconds = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ex = data[i];
    DecodeOptions dopt;
    dopt.positions = opt.positions;
    if (opt.positions == PositionSource::hsp_oracle) dopt.reference = std::span<const int>(ex.tgt);
    const auto t0 = std::chrono::steady_clock::now();
    auto out = argmax_decode(model, ex.src, dopt);
    decode_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    hyps.push_back(out.tokens);
    refs.push_back(ex.tgt);

    Tape<T> tape(false);
    auto enc = model.encode(tape, ex.src);
    length_hits += model.bridge().predict_length(tape, enc) == ex.tgt.size();
    auto d = model.decoder_inputs(tape, enc, ex.tgt.size());
    const auto z_ref = reference_positions(model, d.value(), ex.tgt);
    const auto z_pred = opt.positions == PositionSource::hsp_oracle ? z_ref
                                                                   : predicted_positions(model, tape, enc, d, opt.positions);
    perm += permutation_accuracy_count(z_pred, z_ref);
    rel += relative_accuracy_count(z_pred, z_ref, 4);
  }
  detail::finish_bleu(res, hyps, refs);
  res.perm_acc = perm.value();
  res.rel_acc = rel.value();
  res.length_acc = static_cast<double>(length_hits) / static_cast<double>(n);
  res.sentences_per_second = decode_seconds > 0 ? static_cast<double>(n) / decode_seconds : 0.0;
  if (opt.keep_outputs) res.outputs = std::move(hyps);
  return res;
}

/// AT baseline: greedy or beam decoding; no position metrics.
template <std::floating_point T>
EvalResult evaluate(const AtModel<T>& model, const std::vector<Example>& data, const EvalOptions& opt) {
  const std::size_t n = opt.limit ? std::min(opt.limit, data.size()) : data.size();
  if (n == 0) throw DataError("evaluate: empty evaluation set");
  EvalResult res;
  res.sentences = n;
  std::vector<std::vector<int>> hyps, refs;
  std::size_t length_hits = 0;
  double decode_seconds = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ex = data[i];
    const std::size_t max_len = ex.src.size() * 2 + 10;
    const auto t0 = std::chrono::steady_clock::now();
    auto out = model.beam_search(ex.src, opt.at_beam, max_len);
    decode_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    length_hits += out.size() == ex.tgt.size();
    hyps.push_back(std::move(out));
    refs.push_back(ex.tgt);
  }
  detail::finish_bleu(res, hyps, refs);
  res.length_acc = static_cast<double>(length_hits) / static_cast<double>(n);
  res.sentences_per_second = decode_seconds > 0 ? static_cast<double>(n) / decode_seconds : 0.0;
  if (opt.keep_outputs) res.outputs = std::move(hyps);
  return res;
}

}  // namespace pnat
