#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "pnat/harness/checkpoint.hpp"
#include "pnat/harness/vocab.hpp"
#include "pnat/model/at_model.hpp"
#include "pnat/model/pnat_model.hpp"

namespace pnat {

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"kind", to_string(c.kind)},
          {"d_model", c.d_model},
          {"d_hidden", c.d_hidden},
          {"n_layers", c.n_layers},
          {"n_heads", c.n_heads},
          {"p_dropout", c.p_dropout},
          {"rel_clip_distance", c.rel_clip_distance},
          {"vocab_src", c.vocab_src},
          {"vocab_tgt", c.vocab_tgt},
          {"tie_output_to_target_embedding", c.tie_output_to_target_embedding},
          {"share_embeddings", c.share_embeddings},
          {"sub_encoder_layers", c.sub_encoder_layers},
          {"position_heads", to_string(c.position_heads)},
          {"max_positions", c.max_positions},
          {"length_band", c.length_band},
          {"tau", c.tau}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.kind = parse_model_kind(j.at("kind").get<std::string>());
    c.d_model = j.at("d_model").get<std::size_t>();
    c.d_hidden = j.at("d_hidden").get<std::size_t>();
    c.n_layers = j.at("n_layers").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.p_dropout = j.at("p_dropout").get<double>();
    c.rel_clip_distance = j.at("rel_clip_distance").get<int>();
    c.vocab_src = j.at("vocab_src").get<std::size_t>();
    c.vocab_tgt = j.at("vocab_tgt").get<std::size_t>();
    c.tie_output_to_target_embedding = j.at("tie_output_to_target_embedding").get<bool>();
    c.share_embeddings = j.at("share_embeddings").get<bool>();
    c.sub_encoder_layers = j.at("sub_encoder_layers").get<std::size_t>();
    c.position_heads = parse_position_heads(j.at("position_heads").get<std::string>());
    c.max_positions = j.at("max_positions").get<std::size_t>();
    c.length_band = j.at("length_band").get<int>();
    c.tau = j.at("tau").get<double>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: bad model config: ") + e.what());
  }
}

/// What a checkpoint carries besides tensors.
struct ModelMeta {
  ModelConfig config;
  Vocab src_vocab, tgt_vocab;
  std::uint64_t seed = 0;
  nlohmann::json train_state = nlohmann::json::object();
};

inline nlohmann::json to_json(const ModelMeta& m) {
  return {{"model", to_json(m.config)},
          {"seed", m.seed},
          {"vocab_src", m.src_vocab.tokens()},
          {"vocab_tgt", m.tgt_vocab.tokens()},
          {"train_state", m.train_state}};
}

inline ModelMeta model_meta_from_json(const nlohmann::json& j) {
  ModelMeta m;
  m.config = model_config_from_json(j.at("model"));
  m.seed = j.value("seed", std::uint64_t{0});
  m.src_vocab = Vocab::from_tokens(j.at("vocab_src").get<std::vector<std::string>>());
  m.tgt_vocab = Vocab::from_tokens(j.at("vocab_tgt").get<std::vector<std::string>>());
  m.train_state = j.value("train_state", nlohmann::json::object());
  return m;
}

/// Writes through a temporary file and renames, so a crash never leaves a
/// truncated checkpoint behind.
template <class Model, std::floating_point T>
void save_model(const std::string& path, const Model& model, const ModelMeta& meta, const AdamState<T>* adam) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw DataError("cannot write checkpoint " + path);
    save_checkpoint(os, model.params(), adam, model.config().fingerprint(), to_json(meta));
  }
  std::filesystem::rename(tmp, path);
}

template <class Model>
struct LoadedModel {
  std::unique_ptr<Model> model;
  ModelMeta meta;
};

/// Builds the model described by the checkpoint and fills its tensors
/// (converting precision if the file was written with another dtype).
template <class Model, std::floating_point T>
LoadedModel<Model> load_model(const std::string& path, AdamState<T>* adam = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path);
  const auto header = read_checkpoint_header(is);
  LoadedModel<Model> out;
  out.meta = model_meta_from_json(header.meta);
  out.model = std::make_unique<Model>(out.meta.config, out.meta.seed);
  read_checkpoint_body(is, header, out.model->params(), out.model->config().fingerprint(), adam);
  return out;
}

}  // namespace pnat
