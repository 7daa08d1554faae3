#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "pnat/core/functional.hpp"
#include "pnat/model/encoder.hpp"

namespace pnat {

/// Left-to-right transformer: the AT baseline, the distillation teacher and
/// the length-parallel-decoding rescorer. Owns its own parameters.
template <std::floating_point T>
class AtModel {
 public:
  AtModel(ModelConfig cfg, std::uint64_t seed) : config_(std::move(cfg)), seed_(seed) {
    config_.kind = ModelKind::at;
    config_.validate();
    std::uint64_t site = 1;
    target_embedding_ = &params_.create("target_embedding", {config_.vocab_tgt, config_.d_model});
    init::normal(*target_embedding_, 1.0 / std::sqrt(static_cast<double>(config_.d_model)), seed);
    encoder_ = Encoder<T>::create(params_, "encoder", config_, config_.vocab_src, seed, site,
                                  config_.share_embeddings ? target_embedding_ : nullptr);
    embed_site_ = site++;
    for (std::size_t l = 0; l < config_.n_layers; ++l) {
      decoder_.push_back(TransformerLayer<T>::create(params_, "decoder.layers." + std::to_string(l),
                                                     config_.d_model, config_.d_hidden, config_.n_heads, true, 0,
                                                     seed, site));
      site += 3;
    }
    decoder_norm_ = LayerNorm<T>::create(params_, "decoder.norm", config_.d_model);
  }

  AtModel(const AtModel&) = delete;
  AtModel& operator=(const AtModel&) = delete;

  [[nodiscard]] const ModelConfig& config() const noexcept { return config_; }
  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
  [[nodiscard]] ParameterStore<T>& params() noexcept { return params_; }
  [[nodiscard]] const ParameterStore<T>& params() const noexcept { return params_; }
  [[nodiscard]] const Parameter<T>& target_embedding() const noexcept { return *target_embedding_; }

  EncoderOutput<T> encode(Tape<T>& tape, std::span<const int> ids, const ops::DropoutContext& drop = {}) const {
    return encoder_(tape, ids, drop);
  }

  /// Causal decoder over `inputs` (starting with BOS): [L x vocab_tgt],
  /// row t is the distribution of the token after inputs[0..t].
  Var<T> decoder_logits(Tape<T>& tape, std::span<const int> inputs, const EncoderOutput<T>& enc,
                        const ops::DropoutContext& drop = {}) const {
    if (inputs.empty() || inputs.front() != token::bos) throw DataError("decode_ar: prefix must start with BOS");
    auto x = Encoder<T>::embed(tape, *target_embedding_, inputs, config_.d_model);
    x = ops::dropout(x, drop, embed_site_);
    const AttentionMask causal{{}, true};
    const AttentionMask mem_mask = enc.mask();
    for (const auto& layer : decoder_) x = layer(tape, x, causal, nullptr, &enc.states, mem_mask, drop);
    x = decoder_norm_(tape, x);
    return ops::matmul_nt(x, tape.parameter(*target_embedding_));
  }

  /// Next-token logits after `prefix` [1 x vocab_tgt].
  Var<T> decode_ar(Tape<T>& tape, std::span<const int> prefix, const EncoderOutput<T>& enc) const {
    auto all = decoder_logits(tape, prefix, enc);
    return ops::row(all, all.rows() - 1);
  }

  /// Teacher-forced -log p(y + EOS | x), summed over tokens. `y` excludes EOS.
  Var<T> loss(Tape<T>& tape, std::span<const int> x, std::span<const int> y, const ops::DropoutContext& drop = {}) const {
    auto enc = encode(tape, x, drop);
    std::vector<int> inputs{token::bos};
    inputs.insert(inputs.end(), y.begin(), y.end());
    std::vector<int> targets(y.begin(), y.end());
    targets.push_back(token::eos);
    return ops::cross_entropy(decoder_logits(tape, inputs, enc, drop), targets);
  }

  /// sum_t log p(y_t | y_<t, x); `y` must end with EOS.
  double score_sequence(std::span<const int> y, std::span<const int> x) const {
    if (y.empty() || y.back() != token::eos) throw DataError("score_sequence: sequence must end with EOS");
    Tape<T> tape(false);
    auto enc = encode(tape, x);
    std::vector<int> inputs{token::bos};
    inputs.insert(inputs.end(), y.begin(), y.end() - 1);
    const auto& logits = decoder_logits(tape, inputs, enc).value();
    double total = 0.0;
    for (std::size_t t = 0; t < y.size(); ++t) {
      total -= static_cast<double>(cross_entropy<T>(logits.row(t), y[t]));
    }
    return total;
  }

  /// Greedy decode; result excludes BOS/EOS.
  std::vector<int> greedy(std::span<const int> x, std::size_t max_len) const {
    Tape<T> tape(false);
    auto enc = encode(tape, x);
    std::vector<int> prefix{token::bos};
    while (prefix.size() <= max_len) {
      const auto& logits = decode_ar(tape, prefix, enc).value();
      const int next = static_cast<int>(argmax<T>(logits.values()));
      if (next == token::eos) break;
      prefix.push_back(next);
    }
    return {prefix.begin() + 1, prefix.end()};
  }

  /// Beam search with total log-probability scoring; result excludes BOS/EOS.
  std::vector<int> beam_search(std::span<const int> x, std::size_t beam, std::size_t max_len) const {
    if (beam <= 1) return greedy(x, max_len);
    Tape<T> tape(false);
    auto enc = encode(tape, x);
    struct Hyp {
      std::vector<int> tokens;
      double score;
    };
    std::vector<Hyp> live{{{token::bos}, 0.0}};
    std::vector<Hyp> done;
    for (std::size_t step = 0; step <= max_len && !live.empty(); ++step) {
      std::vector<Hyp> next;
      for (const auto& h : live) {
        const auto& logits = decode_ar(tape, h.tokens, enc).value();
        const double lse = static_cast<double>(log_sum_exp<T>(logits.values()));
        for (std::size_t w = 0; w < logits.size(); ++w) {
          if (static_cast<int>(w) == token::bos || static_cast<int>(w) == token::pad) continue;
          Hyp e{h.tokens, h.score + static_cast<double>(logits[w]) - lse};
          e.tokens.push_back(static_cast<int>(w));
          next.push_back(std::move(e));
        }
      }
      std::stable_sort(next.begin(), next.end(), [](const Hyp& a, const Hyp& b) { return a.score > b.score; });
      live.clear();
      for (auto& h : next) {
        if (live.size() + done.size() >= beam) break;
        if (h.tokens.back() == token::eos || step == max_len) {
          done.push_back(std::move(h));
        } else {
          live.push_back(std::move(h));
        }
      }
      if (done.size() >= beam) break;
    }
    if (done.empty()) done = std::move(live);
    const auto best = std::max_element(done.begin(), done.end(), [](const Hyp& a, const Hyp& b) { return a.score < b.score; });
    std::vector<int> out(best->tokens.begin() + 1, best->tokens.end());
    if (!out.empty() && out.back() == token::eos) out.pop_back();
    return out;
  }

 private:
  ModelConfig config_;
  std::uint64_t seed_;
  ParameterStore<T> params_;
  Encoder<T> encoder_;
  Parameter<T>* target_embedding_ = nullptr;
  std::uint64_t embed_site_ = 0;
  std::vector<TransformerLayer<T>> decoder_;
  LayerNorm<T> decoder_norm_;
};

}  // namespace pnat
