#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pnat/core/optim.hpp"
#include "pnat/training/evaluate.hpp"

namespace pnat {

struct TrainConfig {
  double alpha = 0.3;
  LrSchedule schedule{ScheduleKind::linear_anneal, 0, 3e-4, 1e-5, 10000};
  std::size_t tokens_per_batch = 2048;
  std::uint64_t max_steps = 10000;
  std::uint64_t eval_interval = 500;
  std::uint64_t seed = 1;
  bool distill = false;
  bool joint_length = true;  // train the length classifier alongside, encoder detached
  std::optional<PositionSource> eval_positions;  // default: the model's own predictor
  std::size_t eval_limit = 0;

  void validate() const {
    if (alpha < 0.0) throw ConfigError("train.alpha must be >= 0");
    if (tokens_per_batch == 0) throw ConfigError("train.tokens_per_batch must be positive");
    if (eval_interval == 0) throw ConfigError("train.eval_interval must be positive");
    if (!(schedule.start_lr > 0.0 && schedule.end_lr > 0.0)) throw ConfigError("learning rates must be positive");
  }
};

struct StepStats {
  double loss_g = 0.0;    // summed over the batch
  double loss_p = 0.0;
  double loss_len = 0.0;
  double total = 0.0;     // sum of L_g + alpha L_p
  std::size_t target_tokens = 0;
  std::size_t sentences = 0;
  double lr = 0.0;
};

/// One line of the metric log.
struct MetricRecord {
  std::uint64_t step = 0;
  double loss_g = 0.0;  // per target token, averaged since the previous record
  double loss_p = 0.0;
  std::optional<double> dev_bleu, perm_acc, rel_acc;

  [[nodiscard]] nlohmann::json to_json() const {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    return {{"step", step}, {"loss_g", loss_g}, {"loss_p", loss_p}, {"dev_bleu", opt(dev_bleu)},
            {"perm_acc", opt(perm_acc)}, {"rel_acc", opt(rel_acc)}};
  }
  static MetricRecord from_json(const nlohmann::json& j) {
    auto opt = [&](const char* k) { return j.at(k).is_null() ? std::optional<double>{} : j.at(k).get<double>(); };
    return {j.at("step").get<std::uint64_t>(), j.at("loss_g").get<double>(), j.at("loss_p").get<double>(),
            opt("dev_bleu"), opt("perm_acc"), opt("rel_acc")};
  }
};

/// Forward/backward over one batch (one tape per sentence), loss normalised
/// by the batch's target tokens, then an Adam update. A non-finite loss
/// raises NumericalError before any parameter changes.
template <class Model, std::floating_point T>
StepStats train_step(Model& model, Adam<T>& adam, const Batch& batch, const TrainConfig& cfg, std::uint64_t step) {
  auto& params = model.params();
  params.zero_grad();
  StepStats st;
  st.sentences = batch.size();
  st.target_tokens = batch.target_tokens();
  const T norm = T{1} / static_cast<T>(st.target_tokens);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Tape<T> tape;
    LossOptions opt;
    opt.alpha = cfg.alpha;
    opt.length_loss = cfg.joint_length;
    opt.drop = {model.config().p_dropout, true, cfg.seed, step, batch.indices[i]};
    auto l = example_loss(model, tape, batch.source(i), batch.target(i), opt);
    const double total = l.total.item();
    const double lg = l.loss_g.item();
    const double lp = l.loss_p ? l.loss_p->item() : 0.0;
    const double ll = l.loss_len ? l.loss_len->item() : 0.0;
    if (!std::isfinite(total) || !std::isfinite(ll)) {
      std::ostringstream os;
      os << "non-finite loss at step " << step << " (example " << batch.indices[i] << "): loss_g=" << lg
         << " loss_p=" << lp << " loss_len=" << ll << " src_len=" << batch.src_lengths[i]
         << " tgt_len=" << batch.tgt_lengths[i] << " z_ref=" << l.z_ref.to_string();
      throw NumericalError(os.str());
    }
    st.loss_g += lg;
    st.loss_p += lp;
    st.loss_len += ll;
    st.total += total;
    tape.backward(ops::scale(l.root, norm));
  }
  st.lr = cfg.schedule.at(step);
  adam.step(params, st.lr);
  return st;
}

/// Length-classifier training with every other parameter frozen (encoder
/// untouched). Uses a fresh optimizer; `steps` = 0 leaves the model as is.
template <std::floating_point T>
std::vector<double> finetune_length_predictor(PnatModel<T>& model, const std::vector<Example>& data,
                                              std::uint64_t steps, double lr, std::size_t tokens_per_batch,
                                              std::uint64_t seed) {
  std::vector<double> losses;
  if (steps == 0) return losses;
  auto& params = model.params();
  params.freeze_except([](const std::string& name) { return name.starts_with("bridge.length."); });
  Adam<T> adam;
  std::uint64_t epoch = 0;
  auto plan = plan_epoch(data, tokens_per_batch, seed ^ 0x1E57ULL, epoch);
  std::size_t cursor = 0;
  try {
    for (std::uint64_t s = 1; s <= steps; ++s) {
      if (cursor == plan.size()) {
        plan = plan_epoch(data, tokens_per_batch, seed ^ 0x1E57ULL, ++epoch);
        cursor = 0;
      }
      const auto& batch = plan[cursor++];
      params.zero_grad();
      double sum = 0.0;
      const T norm = T{1} / static_cast<T>(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) {
        Tape<T> tape;
        auto enc = model.encode(tape, batch.source(i));
        auto l = model.bridge().length_loss(tape, enc, batch.tgt_lengths[i], true);
        sum += l.item();
        tape.backward(ops::scale(l, norm));
      }
      if (!std::isfinite(sum)) throw NumericalError("non-finite length loss during finetuning");
      adam.step(params, lr);
      losses.push_back(sum / static_cast<double>(batch.size()));
    }
  } catch (...) {
    params.unfreeze_all();
    throw;
  }
  params.unfreeze_all();
  return losses;
}

struct DistillReport {
  std::size_t kept_original = 0;  // teacher produced an empty output
};

/// Replaces targets with the teacher's greedy (beam <= 1) or beam outputs.
template <std::floating_point T>
std::vector<Example> distill_corpus(const AtModel<T>& teacher, const std::vector<Example>& data, std::size_t beam = 1,
                                    DistillReport* report = nullptr) {
  std::vector<Example> out;
  out.reserve(data.size());
  for (const auto& ex : data) {
    auto y = teacher.beam_search(ex.src, beam, ex.src.size() * 2 + 10);
    if (y.empty()) {
      if (report) ++report->kept_original;
      out.push_back(ex);
    } else {
      out.push_back({ex.src, std::move(y)});
    }
  }
  return out;
}

/// Resumable training loop. Batches are a pure function of (seed, epoch),
/// so resuming at step k replays the same plan. Metric records and
/// checkpoints are produced at every eval_interval.
template <class Model>
class Trainer {
 public:
  using Scalar = std::remove_cvref_t<decltype(std::declval<Model&>().params()[0].value[0])>;

  Trainer(Model& model, TrainConfig cfg, const std::vector<Example>& train, const std::vector<Example>& dev)
      : model_(model), cfg_(std::move(cfg)), train_(train), dev_(dev) {
    cfg_.validate();
    if (train_.empty()) throw DataError("training corpus is empty");
  }

  /// Called after each evaluation: (trainer, record, is_new_best).
  std::function<void(const Trainer&, const MetricRecord&, bool)> on_eval;

  [[nodiscard]] std::uint64_t step() const noexcept { return step_; }
  [[nodiscard]] double best_dev() const noexcept { return best_dev_; }
  [[nodiscard]] const TrainConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] Model& model() noexcept { return model_; }
  [[nodiscard]] const Model& model() const noexcept { return model_; }
  [[nodiscard]] Adam<Scalar>& optimizer() noexcept { return adam_; }
  [[nodiscard]] const Adam<Scalar>& optimizer() const noexcept { return adam_; }
  [[nodiscard]] const std::vector<MetricRecord>& log() const noexcept { return log_; }

  /// Restores the counters saved alongside a checkpoint (parameters and
  /// optimizer state are loaded separately).
  void restore(std::uint64_t step, double best_dev, std::vector<MetricRecord> log) {
    step_ = step;
    best_dev_ = best_dev;
    log_.clear();
    for (auto& r : log) {
      if (r.step <= step) log_.push_back(r);
    }
    position_cursor();
    acc_g_ = acc_p_ = 0.0;
    acc_tokens_ = 0;
  }

  [[nodiscard]] nlohmann::json state_json() const {
    nlohmann::json records = nlohmann::json::array();
    for (const auto& r : log_) records.push_back(r.to_json());
    return {{"step", step_}, {"best_dev", best_dev_}, {"seed", cfg_.seed}, {"log", records}};
  }

  StepStats step_once() {
    if (plan_.empty() || cursor_ == plan_.size()) {
      if (!plan_.empty()) ++epoch_;
      plan_ = plan_epoch(train_, cfg_.tokens_per_batch, cfg_.seed, epoch_);
      cursor_ = 0;
    }
    const auto& batch = plan_[cursor_++];
    ++step_;
    auto st = train_step(model_, adam_, batch, cfg_, step_);
    acc_g_ += st.loss_g;
    acc_p_ += st.loss_p;
    acc_tokens_ += st.target_tokens;
    return st;
  }

  EvalResult evaluate_dev() const {
    EvalOptions opt;
    opt.limit = cfg_.eval_limit;
    if constexpr (requires { model_.learns_positions(); }) {
      opt.positions = cfg_.eval_positions.value_or(default_position_source(model_));
    }
    return evaluate(model_, dev_, opt);
  }

  MetricRecord record_now() {
    MetricRecord r;
    r.step = step_;
    const double tok = acc_tokens_ ? static_cast<double>(acc_tokens_) : 1.0;
    r.loss_g = acc_g_ / tok;
    r.loss_p = acc_p_ / tok;
    acc_g_ = acc_p_ = 0.0;
    acc_tokens_ = 0;
    if (!dev_.empty()) {
      const auto ev = evaluate_dev();
      r.dev_bleu = ev.bleu;
      r.perm_acc = ev.perm_acc;
      r.rel_acc = ev.rel_acc;
    }
    log_.push_back(r);
    const bool best = r.dev_bleu && *r.dev_bleu > best_dev_;
    if (best) best_dev_ = *r.dev_bleu;
    if (on_eval) on_eval(*this, r, best);
    return r;
  }

  /// Trains until max_steps (or `until`, if smaller).
  void run(std::optional<std::uint64_t> until = {}) {
    const std::uint64_t stop = until ? std::min(*until, cfg_.max_steps) : cfg_.max_steps;
    while (step_ < stop) {
      step_once();
      if (step_ % cfg_.eval_interval == 0 || step_ == cfg_.max_steps) record_now();
    }
  }

 private:
  /// Recomputes (epoch, cursor) for the current step by replaying plans.
  void position_cursor() {
    epoch_ = 0;
    std::uint64_t remaining = step_;
    plan_ = plan_epoch(train_, cfg_.tokens_per_batch, cfg_.seed, epoch_);
    while (remaining > plan_.size()) {
      remaining -= plan_.size();
      plan_ = plan_epoch(train_, cfg_.tokens_per_batch, cfg_.seed, ++epoch_);
    }
    cursor_ = static_cast<std::size_t>(remaining);
  }

  Model& model_;
  TrainConfig cfg_;
  const std::vector<Example>& train_;
  const std::vector<Example>& dev_;
  Adam<Scalar> adam_;
  std::uint64_t step_ = 0;
  std::uint64_t epoch_ = 0;
  std::vector<Batch> plan_;
  std::size_t cursor_ = 0;
  double best_dev_ = -1.0;
  double acc_g_ = 0.0, acc_p_ = 0.0;
  std::size_t acc_tokens_ = 0;
  std::vector<MetricRecord> log_;
};

}  // namespace pnat
