#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "pnat/model/config.hpp"
#include "pnat/model/layers.hpp"

namespace pnat {

namespace token {
inline constexpr int pad = 0;
inline constexpr int bos = 1;
inline constexpr int eos = 2;
inline constexpr int unk = 3;
inline constexpr int first_regular = 4;
}  // namespace token

/// Encoder states E for one (possibly padded) source sentence.
template <std::floating_point T>
struct EncoderOutput {
  Var<T> states;                        // [L x d_model]; rows >= length are padding
  std::vector<std::uint8_t> key_valid;  // 1 for real tokens
  std::size_t length = 0;               // unpadded source length N

  [[nodiscard]] AttentionMask mask() const { return AttentionMask{key_valid, false}; }
};

/// Token embedding + sinusoidal absolute positions + pre-norm self-attention stack.
template <std::floating_point T>
struct Encoder {
  Parameter<T>* embedding = nullptr;
  std::vector<TransformerLayer<T>> layers;
  LayerNorm<T> norm;
  std::size_t d_model = 0;
  std::uint64_t dropout_site = 0;

  static Encoder create(ParameterStore<T>& store, const std::string& name, const ModelConfig& cfg,
                        std::size_t vocab, std::uint64_t seed, std::uint64_t& next_site,
                        Parameter<T>* shared_embedding = nullptr) {
    Encoder e;
    e.d_model = cfg.d_model;
    if (shared_embedding) {
      if (shared_embedding->value.rows() != vocab) throw ConfigError("shared embedding: vocabulary size differs");
      e.embedding = shared_embedding;
    } else {
      e.embedding = &store.create(name + ".embedding", {vocab, cfg.d_model});
      init::normal(*e.embedding, 1.0 / std::sqrt(static_cast<double>(cfg.d_model)), seed);
    }
    e.dropout_site = next_site++;
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
      e.layers.push_back(TransformerLayer<T>::create(store, name + ".layers." + std::to_string(l), cfg.d_model,
                                                     cfg.d_hidden, cfg.n_heads, false, 0, seed, next_site));
      next_site += 3;
    }
    e.norm = LayerNorm<T>::create(store, name + ".norm", cfg.d_model);
    return e;
  }

  /// Encodes `ids`; positions >= n_valid are padding and are masked out as
  /// attention keys (n_valid == 0 means no padding).
  EncoderOutput<T> operator()(Tape<T>& tape, std::span<const int> ids, const ops::DropoutContext& drop,
                              std::size_t n_valid = 0) const {
    if (ids.empty()) throw DataError("encode: empty source sentence");
    if (n_valid == 0) n_valid = ids.size();
    if (n_valid > ids.size()) throw ShapeError("encode: n_valid exceeds input length");
    EncoderOutput<T> out;
    out.length = n_valid;
    out.key_valid.assign(ids.size(), 0);
    std::fill(out.key_valid.begin(), out.key_valid.begin() + static_cast<std::ptrdiff_t>(n_valid), 1);
    auto x = embed(tape, *embedding, ids, d_model);
    x = ops::dropout(x, drop, dropout_site);
    const AttentionMask mask = out.mask();
    for (const auto& layer : layers) x = layer(tape, x, mask, nullptr, nullptr, {}, drop);
    out.states = norm(tape, x);
    return out;
  }

  /// sqrt(d) * embedding + sinusoid.
  static Var<T> embed(Tape<T>& tape, Parameter<T>& table, std::span<const int> ids, std::size_t d) {
    auto x = ops::gather_rows(tape.parameter(table), std::vector<int>(ids.begin(), ids.end()));
    x = ops::scale(x, static_cast<T>(std::sqrt(static_cast<double>(d))));
    return ops::add(x, tape.constant(sinusoid_table<T>(ids.size(), d)));
  }
};

}  // namespace pnat
