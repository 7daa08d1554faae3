#pragma once

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pnat/decoding/decode.hpp"
#include "pnat/harness/tasks.hpp"
#include "pnat/training/trainer.hpp"

namespace pnat {

enum class Precision { float32, float64 };

/// Everything a CLI run needs. Config files are flat `key = value` lines
/// with dotted keys; `#` starts a comment. Unknown keys are errors.
struct RunConfig {
  TaskSpec task;
  ModelConfig model;
  TrainConfig train;
  Precision precision = Precision::float32;
  std::string data_train, data_dev, data_test;  // corpus prefixes
  std::string vocab_src, vocab_tgt;             // empty: build from the training corpus
  std::string teacher;                          // AT checkpoint for distillation
  std::size_t distill_beam = 1;
  std::uint64_t finetune_steps = 0;
  double finetune_lr = 1e-3;
  PositionSource decode_positions = PositionSource::ar;
  bool decode_lpd = false;
  std::size_t decode_delta_m = 4;
  bool decode_length_normalize = false;

  RunConfig() { train.schedule.total_steps = 0; }

  /// Resolves derived defaults; call after all keys are applied.
  [[nodiscard]] TrainConfig resolved_train() const {
    TrainConfig t = train;
    if (t.schedule.total_steps == 0) t.schedule.total_steps = t.max_steps;
    return t;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class N>
N parse_number(const std::string& key, const std::string& v) {
  N out{};
  if constexpr (std::is_floating_point_v<N>) {
    std::size_t used = 0;
    try {
      out = static_cast<N>(std::stod(v, &used));
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  } else {
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true|false, got '" + v + "'");
}

}  // namespace detail

/// Key registry: setter, current-value printer and a one-line description.
class ConfigSchema {
 public:
  struct Entry {
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
    std::string doc;
  };

  static const ConfigSchema& instance() {
    static const ConfigSchema schema;
    return schema;
  }

  void set(RunConfig& c, const std::string& key, const std::string& value) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(c, value);
  }

  [[nodiscard]] const std::map<std::string, Entry>& entries() const noexcept { return entries_; }

  /// `key = value  # doc` for every key, with values from `c`.
  [[nodiscard]] std::string dump(const RunConfig& c, bool with_docs = true) const {
    std::ostringstream os;
    for (const auto& [k, e] : entries_) {
      os << k << " = " << e.get(c);
      if (with_docs) os << "  # " << e.doc;
      os << '\n';
    }
    return os.str();
  }

 private:
  template <class Get, class Set>
  void add(const std::string& key, Get get, Set set, std::string doc) {
    entries_[key] = Entry{std::move(set), std::move(get), std::move(doc)};
  }

  static std::string num(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
  }

  ConfigSchema() {
    using detail::parse_bool;
    using detail::parse_number;
#define PNAT_NUM(KEY, FIELD, TYPE, DOC)                                                              \
  add(KEY, [](const RunConfig& c) { return num(static_cast<double>(c.FIELD)); },                   \
      [](RunConfig& c, const std::string& v) { c.FIELD = parse_number<TYPE>(KEY, v); }, DOC)
#define PNAT_BOOL(KEY, FIELD, DOC)                                                                   \
  add(KEY, [](const RunConfig& c) { return std::string(c.FIELD ? "true" : "false"); },             \
      [](RunConfig& c, const std::string& v) { c.FIELD = parse_bool(KEY, v); }, DOC)
#define PNAT_STR(KEY, FIELD, DOC)                                                                    \
  add(KEY, [](const RunConfig& c) { return c.FIELD; }, [](RunConfig& c, const std::string& v) { c.FIELD = v; }, DOC)

    add("task.kind", [](const RunConfig& c) { return to_string(c.task.kind); },
        [](RunConfig& c, const std::string& v) { c.task.kind = parse_task_kind(v); }, "copy|reverse|sort|rule_reorder");
    PNAT_NUM("task.vocab_size", task.vocab_size, std::size_t, "distinct task tokens");
    PNAT_NUM("task.min_len", task.min_len, std::size_t, "shortest source sentence");
    PNAT_NUM("task.max_len", task.max_len, std::size_t, "longest source sentence");
    PNAT_NUM("task.seed", task.seed, std::uint64_t, "generator seed (also fixes the reorder rule)");
    PNAT_NUM("task.train_size", task.train_size, std::size_t, "training pairs");
    PNAT_NUM("task.dev_size", task.dev_size, std::size_t, "dev pairs");
    PNAT_NUM("task.test_size", task.test_size, std::size_t, "test pairs");

    add("model.kind", [](const RunConfig& c) { return to_string(c.model.kind); },
        [](RunConfig& c, const std::string& v) { c.model.kind = parse_model_kind(v); }, "pnat|nat_base|at");
    PNAT_NUM("model.d_model", model.d_model, std::size_t, "model width");
    PNAT_NUM("model.d_hidden", model.d_hidden, std::size_t, "feed-forward width");
    PNAT_NUM("model.n_layers", model.n_layers, std::size_t, "encoder and decoder depth");
    PNAT_NUM("model.n_heads", model.n_heads, std::size_t, "attention heads");
    PNAT_NUM("model.p_dropout", model.p_dropout, double, "dropout probability");
    PNAT_NUM("model.rel_clip_distance", model.rel_clip_distance, int, "relative position clip in the NAT decoder");
    PNAT_BOOL("model.tie_output_to_target_embedding", model.tie_output_to_target_embedding,
              "output classifier = target embedding (required for non-autoregressive models)");
    PNAT_BOOL("model.share_embeddings", model.share_embeddings, "one table for source and target (joint vocabulary)");
    PNAT_NUM("model.sub_encoder_layers", model.sub_encoder_layers, std::size_t, "position predictor sub-encoder depth");
    add("model.position_heads", [](const RunConfig& c) { return to_string(c.model.position_heads); },
        [](RunConfig& c, const std::string& v) { c.model.position_heads = parse_position_heads(v); },
        "ar|nar|both: which position heads are trained");
    PNAT_NUM("model.max_positions", model.max_positions, std::size_t, "NAR position classifier size");
    add("model.precision", [](const RunConfig& c) { return std::string(c.precision == Precision::float64 ? "float64" : "float32"); },
        [](RunConfig& c, const std::string& v) {
          if (v == "float32") c.precision = Precision::float32;
          else if (v == "float64") c.precision = Precision::float64;
          else throw ConfigError("model.precision: expected float32|float64");
        },
        "float64 gives bit-reproducible logs and gradient checks");

    PNAT_NUM("bridge.tau", model.tau, double, "soft-copy sharpness");
    PNAT_NUM("bridge.length_band", model.length_band, int, "length offsets span [-B, B]");

    PNAT_NUM("train.alpha", train.alpha, double, "position loss weight");
    add("train.schedule", [](const RunConfig& c) { return to_string(c.train.schedule.kind); },
        [](RunConfig& c, const std::string& v) {
          if (v == "inverse_sqrt") c.train.schedule.kind = ScheduleKind::inverse_sqrt;
          else if (v == "linear_anneal") c.train.schedule.kind = ScheduleKind::linear_anneal;
          else throw ConfigError("train.schedule: expected inverse_sqrt|linear_anneal");
        },
        "inverse_sqrt|linear_anneal");
    PNAT_NUM("train.warmup_steps", train.schedule.warmup_steps, std::uint64_t, "inverse_sqrt warmup");
    PNAT_NUM("train.start_lr", train.schedule.start_lr, double, "peak / initial learning rate");
    PNAT_NUM("train.end_lr", train.schedule.end_lr, double, "final learning rate (linear_anneal)");
    PNAT_NUM("train.total_steps", train.schedule.total_steps, std::uint64_t, "annealing horizon, 0 = train.max_steps");
    PNAT_NUM("train.tokens_per_batch", train.tokens_per_batch, std::size_t, "padded tokens per batch");
    PNAT_NUM("train.max_steps", train.max_steps, std::uint64_t, "optimizer updates");
    PNAT_NUM("train.eval_interval", train.eval_interval, std::uint64_t, "steps between metric records");
    PNAT_NUM("train.seed", train.seed, std::uint64_t, "initialisation, dropout and batching seed");
    PNAT_BOOL("train.distill", train.distill, "train on teacher outputs (needs train.teacher)");
    PNAT_STR("train.teacher", teacher, "AT checkpoint used for distillation");
    PNAT_NUM("train.distill_beam", distill_beam, std::size_t, "teacher beam (1 = greedy)");
    PNAT_BOOL("train.joint_length", train.joint_length, "train the length classifier during main training");
    add("train.eval_predictor",
        [](const RunConfig& c) { return c.train.eval_positions ? to_string(*c.train.eval_positions) : std::string("auto"); },
        [](RunConfig& c, const std::string& v) {
          if (v == "auto") c.train.eval_positions.reset();
          else c.train.eval_positions = parse_position_source(v);
        },
        "auto|ar|nar|identity: positions used for dev BLEU");
    PNAT_NUM("train.eval_limit", train.eval_limit, std::size_t, "dev sentences per evaluation (0 = all)");
    PNAT_NUM("finetune.steps", finetune_steps, std::uint64_t, "length-predictor finetuning updates");
    PNAT_NUM("finetune.lr", finetune_lr, double, "length-predictor finetuning learning rate");

    PNAT_STR("data.train", data_train, "training corpus prefix (<prefix>.src/.tgt)");
    PNAT_STR("data.dev", data_dev, "dev corpus prefix");
    PNAT_STR("data.test", data_test, "test corpus prefix");
    PNAT_STR("data.vocab_src", vocab_src, "source vocab file (empty: build)");
    PNAT_STR("data.vocab_tgt", vocab_tgt, "target vocab file (empty: build)");

    add("decode.predictor", [](const RunConfig& c) { return to_string(c.decode_positions); },
        [](RunConfig& c, const std::string& v) { c.decode_positions = parse_position_source(v); },
        "ar|nar|identity|hsp");
    PNAT_BOOL("decode.lpd", decode_lpd, "length-parallel decoding");
    PNAT_NUM("decode.delta_m", decode_delta_m, std::size_t, "LPD half-width");
    PNAT_BOOL("decode.length_normalize", decode_length_normalize, "divide rescorer scores by length");
#undef PNAT_NUM
#undef PNAT_BOOL
#undef PNAT_STR
  }

  std::map<std::string, Entry> entries_;
};

/// Applies `key = value` lines. Errors carry the line number.
inline void apply_config_text(RunConfig& c, const std::string& text, const std::string& origin = "config") {
  std::istringstream is(text);
  std::size_t line_no = 0;
  for (std::string line; std::getline(is, line);) {
    ++line_no;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      ConfigSchema::instance().set(c, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  RunConfig c;
  apply_config_text(c, ss.str(), path);
  return c;
}

/// `key=value` override from the command line.
inline void apply_override(RunConfig& c, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos) throw ConfigError("override must look like key=value: " + kv);
  ConfigSchema::instance().set(c, detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
}

}  // namespace pnat
