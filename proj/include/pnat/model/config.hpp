#pragma once

#include <cstdint>
#include <sstream>
#include <string>

#include "pnat/core/errors.hpp"
#include "pnat/core/rng.hpp"

namespace pnat {

enum class ModelKind { pnat, nat_base, at };
enum class PositionHeads { ar, nar, both };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::pnat: return "pnat";
    case ModelKind::nat_base: return "nat_base";
    case ModelKind::at: return "at";
  }
  return "?";
}

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "pnat") return ModelKind::pnat;
  if (s == "nat_base") return ModelKind::nat_base;
  if (s == "at") return ModelKind::at;
  throw ConfigError("unknown model kind '" + s + "' (expected pnat|nat_base|at)");
}

inline std::string to_string(PositionHeads h) {
  switch (h) {
    case PositionHeads::ar: return "ar";
    case PositionHeads::nar: return "nar";
    case PositionHeads::both: return "both";
  }
  return "?";
}

inline PositionHeads parse_position_heads(const std::string& s) {
  if (s == "ar") return PositionHeads::ar;
  if (s == "nar") return PositionHeads::nar;
  if (s == "both") return PositionHeads::both;
  throw ConfigError("unknown position heads '" + s + "' (expected ar|nar|both)");
}

struct ModelConfig {
  ModelKind kind = ModelKind::pnat;
  std::size_t d_model = 64;
  std::size_t d_hidden = 128;
  std::size_t n_layers = 2;
  std::size_t n_heads = 2;
  double p_dropout = 0.1;
  int rel_clip_distance = 4;
  std::size_t vocab_src = 0;
  std::size_t vocab_tgt = 0;
  bool tie_output_to_target_embedding = true;
  /// One embedding table for source and target (needs a joint vocabulary).
  bool share_embeddings = false;
  // Position predictor.
  std::size_t sub_encoder_layers = 2;
  PositionHeads position_heads = PositionHeads::both;
  std::size_t max_positions = 128;
  // Bridge.
  int length_band = 20;
  double tau = 1.0;

  void validate() const {
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
      throw ConfigError("model.d_model must be a positive multiple of model.n_heads");
    }
    if (d_hidden == 0 || n_layers == 0) throw ConfigError("model.d_hidden and model.n_layers must be positive");
    if (!(p_dropout >= 0.0 && p_dropout < 1.0)) throw ConfigError("model.p_dropout must be in [0, 1)");
    if (rel_clip_distance < 1) throw ConfigError("model.rel_clip_distance must be >= 1");
    if (vocab_src < 5 || vocab_tgt < 5) throw ConfigError("vocabularies must hold reserved ids plus tokens");
    if (kind != ModelKind::at && !tie_output_to_target_embedding) {
      throw ConfigError("non-autoregressive models require tied output/target embeddings");
    }
    if (share_embeddings && vocab_src != vocab_tgt) {
      throw ConfigError("model.share_embeddings needs equal source and target vocabularies");
    }
    if (length_band < 0) throw ConfigError("bridge.length_band must be >= 0");
    if (!(tau > 0.0)) throw ConfigError("bridge.tau must be > 0");
    if (max_positions == 0) throw ConfigError("model.max_positions must be positive");
  }

  [[nodiscard]] std::string describe() const {
    std::ostringstream os;
    os << "kind=" << to_string(kind) << ";d_model=" << d_model << ";d_hidden=" << d_hidden
       << ";n_layers=" << n_layers << ";n_heads=" << n_heads << ";rel_clip=" << rel_clip_distance
       << ";vocab_src=" << vocab_src << ";vocab_tgt=" << vocab_tgt
       << ";tie=" << tie_output_to_target_embedding << ";share=" << share_embeddings << ";sub_layers=" << sub_encoder_layers
       << ";heads=" << to_string(position_heads) << ";max_pos=" << max_positions
       << ";band=" << length_band;
    return os.str();
  }

  /// Identifies the parameter layout; checkpoints refuse to load across it.
  [[nodiscard]] std::uint64_t fingerprint() const {
    std::uint64_t h = 0x9E3779B97F4A7C15ULL;
    for (unsigned char c : describe()) h = rng::splitmix64(h ^ c);
    return h;
  }
};

}  // namespace pnat
