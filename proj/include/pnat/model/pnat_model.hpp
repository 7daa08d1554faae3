#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "pnat/bridge/bridge.hpp"
#include "pnat/model/encoder.hpp"
#include "pnat/position/predictor.hpp"

namespace pnat {

/// Position-learned non-autoregressive transformer. NAT-base uses the same
/// parameters with identity positions.
///
/// Parameter groups: encoder.*, decoder.*, target_embedding (also the output
/// classifier), bridge.length.*, position.*.
template <std::floating_point T>
class PnatModel {
 public:
  PnatModel(ModelConfig cfg, std::uint64_t seed) : config_(std::move(cfg)), seed_(seed) {
    config_.validate();
    if (config_.kind == ModelKind::at) throw ConfigError("PnatModel: kind must be pnat or nat_base");
    std::uint64_t site = 1;
    target_embedding_ = &params_.create("target_embedding", {config_.vocab_tgt, config_.d_model});
    init::normal(*target_embedding_, 1.0 / std::sqrt(static_cast<double>(config_.d_model)), seed);
    encoder_ = Encoder<T>::create(params_, "encoder", config_, config_.vocab_src, seed, site,
                                  config_.share_embeddings ? target_embedding_ : nullptr);
    for (std::size_t l = 0; l < config_.n_layers; ++l) {
      decoder_.push_back(TransformerLayer<T>::create(params_, "decoder.layers." + std::to_string(l),
                                                     config_.d_model, config_.d_hidden, config_.n_heads, true,
                                                     config_.rel_clip_distance, seed, site));
      site += 3;
    }
    decoder_norm_ = LayerNorm<T>::create(params_, "decoder.norm", config_.d_model);
    bridge_ = Bridge<T>::create(params_, config_, seed);
    predictor_ = PositionPredictor<T>::create(params_, config_, seed, site);
  }

  PnatModel(const PnatModel&) = delete;
  PnatModel& operator=(const PnatModel&) = delete;

  [[nodiscard]] const ModelConfig& config() const noexcept { return config_; }
  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
  [[nodiscard]] ParameterStore<T>& params() noexcept { return params_; }
  [[nodiscard]] const ParameterStore<T>& params() const noexcept { return params_; }
  [[nodiscard]] const Encoder<T>& encoder() const noexcept { return encoder_; }
  [[nodiscard]] const Bridge<T>& bridge() const noexcept { return bridge_; }
  [[nodiscard]] const PositionPredictor<T>& predictor() const noexcept { return predictor_; }
  [[nodiscard]] const Parameter<T>& target_embedding() const noexcept { return *target_embedding_; }
  [[nodiscard]] bool learns_positions() const noexcept { return config_.kind == ModelKind::pnat; }

  EncoderOutput<T> encode(Tape<T>& tape, std::span<const int> ids, const ops::DropoutContext& drop = {},
                          std::size_t n_valid = 0) const {
    return encoder_(tape, ids, drop, n_valid);
  }

  /// Soft-copied decoder inputs D [m x d].
  Var<T> decoder_inputs(Tape<T>& tape, const EncoderOutput<T>& enc, std::size_t m) const {
    return bridge_.soft_copy(tape, enc, m);
  }

  /// Parallel decoder pass. Slot t's logits predict the token at output
  /// position z[t]; self-attention sees z only through clipped relative
  /// offsets. Returns [M x vocab_tgt].
  Var<T> decode_nat(Tape<T>& tape, Var<T> d_inputs, const Permutation& z, const EncoderOutput<T>& enc,
                    const ops::DropoutContext& drop = {}) const {
    if (z.size() != d_inputs.rows()) throw ShapeError("decode_nat: permutation length differs from M");
    const auto buckets = RelativeBuckets::from(z, config_.rel_clip_distance);
    const AttentionMask self_mask;
    const AttentionMask mem_mask = enc.mask();
    auto x = d_inputs;
    for (const auto& layer : decoder_) x = layer(tape, x, self_mask, &buckets, &enc.states, mem_mask, drop);
    x = decoder_norm_(tape, x);
    return ops::matmul_nt(x, tape.parameter(*target_embedding_));
  }

  /// Rows of the output classifier; identical to the target embedding table.
  [[nodiscard]] const Tensor<T>& classifier_weights() const noexcept { return target_embedding_->value; }

 private:
  ModelConfig config_;
  std::uint64_t seed_;
  ParameterStore<T> params_;
  Encoder<T> encoder_;
  Parameter<T>* target_embedding_ = nullptr;
  std::vector<TransformerLayer<T>> decoder_;
  LayerNorm<T> decoder_norm_;
  Bridge<T> bridge_;
  PositionPredictor<T> predictor_;
};

}  // namespace pnat
