// pnat: command-line front end for data generation, training, decoding and
// reporting. Exit codes: 0 ok, 1 usage/config error, 2 data error,
// 3 numerical failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pnat/pnat.hpp"

namespace fs = std::filesystem;
using namespace pnat;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
};

RunConfig load_run_config(const CommonOptions& o) {
  RunConfig c;
  if (!o.config_path.empty()) c = load_config(o.config_path);
  for (const auto& kv : o.overrides) apply_override(c, kv);
  return c;
}

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config_path, "config file (key = value lines)");
  cmd->add_option("--set", o.overrides, "override a config key: --set train.alpha=0.5");
}

struct Corpora {
  ParallelCorpus train, dev, test;
};

/// Corpus files when data.* is set, otherwise the configured synthetic task.
Corpora load_corpora(const RunConfig& c) {
  Corpora out;
  if (c.data_train.empty()) {
    auto s = gen_synthetic(c.task);
    return {std::move(s.train), std::move(s.dev), std::move(s.test)};
  }
  out.train = read_corpus(c.data_train);
  if (!c.data_dev.empty()) out.dev = read_corpus(c.data_dev);
  if (!c.data_test.empty()) out.test = read_corpus(c.data_test);
  return out;
}

std::pair<Vocab, Vocab> load_vocabs(const RunConfig& c, const ParallelCorpus& train) {
  if (!c.vocab_src.empty() && !c.vocab_tgt.empty()) return {Vocab::load(c.vocab_src), Vocab::load(c.vocab_tgt)};
  if (c.model.share_embeddings) {
    auto all = train.src;
    all.insert(all.end(), train.tgt.begin(), train.tgt.end());
    auto v = Vocab::build(all);
    return {v, v};
  }
  return {Vocab::build(train.src), Vocab::build(train.tgt)};
}

std::vector<std::string> decode_tokens(const Vocab& v, const std::vector<int>& ids) {
  std::vector<std::string> out;
  for (int i : ids) out.push_back(v.token(i));
  return out;
}

/// Calls f.template operator()<T>() with T matching the checkpoint dtype.
template <class F>
decltype(auto) with_checkpoint_precision(const std::string& path, F&& f) {
  const auto h = peek_checkpoint(path);
  if (h.dtype_bytes == 8) return f.template operator()<double>();
  return f.template operator()<float>();
}

ModelKind checkpoint_kind(const std::string& path) {
  return model_config_from_json(peek_checkpoint(path).meta.at("model")).kind;
}

// ---------------------------------------------------------------- train

template <std::floating_point T, class Model>
int train_model(const RunConfig& rc, const std::string& out_dir, bool resume) {
  fs::create_directories(out_dir);
  const auto corpora = load_corpora(rc);
  auto [src_vocab, tgt_vocab] = load_vocabs(rc, corpora.train);
  auto train = encode_corpus(corpora.train, src_vocab, tgt_vocab);
  const auto dev = corpora.dev.size() ? encode_corpus(corpora.dev, src_vocab, tgt_vocab) : std::vector<Example>{};

  TrainConfig tc = rc.resolved_train();
  if (tc.distill) {
    if (rc.teacher.empty()) throw ConfigError("train.distill needs train.teacher");
    auto teacher = load_model<AtModel<T>, T>(rc.teacher);
    if (!(teacher.meta.src_vocab == src_vocab) || !(teacher.meta.tgt_vocab == tgt_vocab)) {
      throw DataError("teacher vocabularies differ from the training vocabularies");
    }
    DistillReport rep;
    train = distill_corpus(*teacher.model, train, rc.distill_beam, &rep);
    std::cerr << "distilled " << train.size() << " pairs (" << rep.kept_original << " kept original)\n";
  }

  ModelConfig mc = rc.model;
  mc.vocab_src = src_vocab.size();
  mc.vocab_tgt = tgt_vocab.size();
  ModelMeta meta{mc, src_vocab, tgt_vocab, tc.seed, {}};
  auto model = std::make_unique<Model>(mc, tc.seed);
  Trainer<Model> trainer(*model, tc, train, dev);

  const std::string last = out_dir + "/last.ckpt";
  const std::string best = out_dir + "/best.ckpt";
  const std::string log_path = out_dir + "/metrics.jsonl";
  if (resume) {
    AdamState<T> adam;
    auto loaded = load_model<Model, T>(last, &adam);
    if (loaded.model->config().fingerprint() != model->config().fingerprint()) {
      throw DataError("cannot resume: " + last + " was written for a different model configuration");
    }
    for (std::size_t i = 0; i < model->params().size(); ++i) model->params()[i].value = loaded.model->params()[i].value;
    trainer.optimizer().state() = std::move(adam);
    std::vector<MetricRecord> log;
    for (const auto& j : loaded.meta.train_state.at("log")) log.push_back(MetricRecord::from_json(j));
    trainer.restore(loaded.meta.train_state.at("step").template get<std::uint64_t>(),
                    loaded.meta.train_state.at("best_dev").template get<double>(), std::move(log));
    std::cerr << "resumed at step " << trainer.step() << "\n";
  } else {
    src_vocab.save(out_dir + "/vocab.src");
    tgt_vocab.save(out_dir + "/vocab.tgt");
    std::ofstream(out_dir + "/config.txt") << ConfigSchema::instance().dump(rc, false);
  }

  trainer.on_eval = [&](const Trainer<Model>& t, const MetricRecord& r, bool is_best) {
    std::ofstream os(log_path, std::ios::trunc);
    for (const auto& rec : t.log()) os << rec.to_json().dump() << '\n';
    os.close();
    meta.train_state = t.state_json();
    save_model(last, t.model(), meta, &t.optimizer().state());
    if (is_best) save_model(best, t.model(), meta, &t.optimizer().state());
    std::cerr << r.to_json().dump() << '\n';
  };
  trainer.run();
  return 0;
}

int cmd_train(const RunConfig& rc, const std::string& out_dir, bool resume) {
  const bool f64 = rc.precision == Precision::float64;
  if (rc.model.kind == ModelKind::at) {
    return f64 ? train_model<double, AtModel<double>>(rc, out_dir, resume)
               : train_model<float, AtModel<float>>(rc, out_dir, resume);
  }
  return f64 ? train_model<double, PnatModel<double>>(rc, out_dir, resume)
             : train_model<float, PnatModel<float>>(rc, out_dir, resume);
}

// ---------------------------------------------------------------- finetune-length

int cmd_finetune(const RunConfig& rc, const std::string& in, const std::string& out) {
  return with_checkpoint_precision(in, [&]<class T>() {
    auto loaded = load_model<PnatModel<T>, T>(in);
    const auto corpora = load_corpora(rc);
    const auto data = encode_corpus(corpora.train, loaded.meta.src_vocab, loaded.meta.tgt_vocab);
    const auto losses = finetune_length_predictor(*loaded.model, data, rc.finetune_steps, rc.finetune_lr,
                                                  rc.train.tokens_per_batch, rc.train.seed);
    if (!losses.empty()) std::cerr << "length loss " << losses.front() << " -> " << losses.back() << '\n';
    save_model<PnatModel<T>, T>(out, *loaded.model, loaded.meta, nullptr);
    return 0;
  });
}

// ---------------------------------------------------------------- distill

int cmd_distill(const std::string& teacher_path, const std::string& corpus, const std::string& out, std::size_t beam) {
  return with_checkpoint_precision(teacher_path, [&]<class T>() {
    auto teacher = load_model<AtModel<T>, T>(teacher_path);
    const auto c = read_corpus(corpus);
    const auto data = encode_corpus(c, teacher.meta.src_vocab, teacher.meta.tgt_vocab);
    DistillReport rep;
    const auto distilled = distill_corpus(*teacher.model, data, beam, &rep);
    ParallelCorpus outc{c.src, {}, "distilled"};
    for (const auto& ex : distilled) outc.tgt.push_back(teacher.meta.tgt_vocab.decode(ex.tgt));
    write_corpus(out, outc);
    std::cerr << "distilled " << distilled.size() << " pairs, " << rep.kept_original
              << " kept their original target (empty teacher output)\n";
    return 0;
  });
}

// ---------------------------------------------------------------- decode

struct DecodeArgs {
  std::string checkpoint, input, rescorer, predictor = "auto";
  bool lpd = false;
  std::size_t delta_m = 4;
  bool length_normalize = false;
};

int cmd_decode(const DecodeArgs& a) {
  std::vector<std::string> lines;
  if (a.input.empty() || a.input == "-") {
    for (std::string l; std::getline(std::cin, l);) lines.push_back(l);
  } else {
    lines = read_lines(a.input);
  }
  if (checkpoint_kind(a.checkpoint) == ModelKind::at) {
    return with_checkpoint_precision(a.checkpoint, [&]<class T>() {
      auto m = load_model<AtModel<T>, T>(a.checkpoint);
      for (const auto& l : lines) {
        const auto src = m.meta.src_vocab.encode(l);
        if (src.empty()) throw DataError("empty input line");
        std::cout << m.meta.tgt_vocab.decode(m.model->greedy(src, src.size() * 2 + 10)) << '\n';
      }
      return 0;
    });
  }
  return with_checkpoint_precision(a.checkpoint, [&]<class T>() {
    auto m = load_model<PnatModel<T>, T>(a.checkpoint);
    const auto positions = a.predictor == "auto" ? default_position_source(*m.model) : parse_position_source(a.predictor);
    if (positions == PositionSource::hsp_oracle) throw ConfigError("hsp positions need references; use eval");
    std::optional<LoadedModel<AtModel<float>>> rescorer;
    if (a.lpd && a.delta_m > 0) {
      if (a.rescorer.empty()) throw ConfigError("--lpd with --delta-m > 0 needs --rescorer");
      rescorer = load_model<AtModel<float>, float>(a.rescorer);
    }
    for (const auto& l : lines) {
      const auto src = m.meta.src_vocab.encode(l);
      if (src.empty()) throw DataError("empty input line");
      DecodeResult r;
      if (a.lpd) {
        LpdOptions o{a.delta_m, positions, a.length_normalize};
        r = lpd_decode(*m.model, src, o, rescorer ? rescorer->model.get() : nullptr);
      } else {
        DecodeOptions o;
        o.positions = positions;
        r = argmax_decode(*m.model, src, o);
      }
      std::cout << m.meta.tgt_vocab.decode(r.tokens) << '\n';
    }
    return 0;
  });
}

// ---------------------------------------------------------------- eval / repeats / positions

struct EvalArgs {
  std::string checkpoint, corpus, run_dir, split = "dev", predictor = "auto";
  std::size_t beam = 1, limit = 0;
};

EvalRow evaluate_checkpoint(const EvalArgs& a, std::vector<std::string>* hyps = nullptr) {
  const auto corpus = read_corpus(a.corpus);
  auto run = [&]<class T>() {
    EvalRow row;
    row.split = a.split;
    row.checkpoint = a.checkpoint;
    EvalOptions eo;
    eo.limit = a.limit;
    eo.at_beam = a.beam;
    eo.keep_outputs = hyps != nullptr;
    EvalResult res;
    const Vocab* tv = nullptr;
    std::optional<LoadedModel<AtModel<T>>> at;
    std::optional<LoadedModel<PnatModel<T>>> nat;
    if (checkpoint_kind(a.checkpoint) == ModelKind::at) {
      at = load_model<AtModel<T>, T>(a.checkpoint);
      res = evaluate(*at->model, encode_corpus(corpus, at->meta.src_vocab, at->meta.tgt_vocab), eo);
      row.label = report_rows::at;
      tv = &at->meta.tgt_vocab;
    } else {
      nat = load_model<PnatModel<T>, T>(a.checkpoint);
      eo.positions = a.predictor == "auto" ? default_position_source(*nat->model) : parse_position_source(a.predictor);
      res = evaluate(*nat->model, encode_corpus(corpus, nat->meta.src_vocab, nat->meta.tgt_vocab), eo);
      row.label = row_label(nat->model->config().kind, eo.positions);
      tv = &nat->meta.tgt_vocab;
    }
    row.bleu = res.bleu;
    row.bleu_rr = res.bleu_rr;
    row.perm_acc = res.perm_acc;
    row.rel_acc = res.rel_acc;
    row.sentences_per_second = res.sentences_per_second;
    row.sentences = res.sentences;
    if (hyps) {
      for (const auto& h : res.outputs) hyps->push_back(tv->decode(h));
    }
    return row;
  };
  return with_checkpoint_precision(a.checkpoint, run);
}

int cmd_eval(const EvalArgs& a) {
  const auto row = evaluate_checkpoint(a);
  std::cout << row.to_json().dump() << '\n';
  if (!a.run_dir.empty()) {
    fs::create_directories(a.run_dir);
    append_jsonl(a.run_dir + "/eval.jsonl", row.to_json());
  }
  return 0;
}

int cmd_repeats(const EvalArgs& a) {
  const auto row = evaluate_checkpoint(a);
  std::printf("%s\tBLEU %.2f\tBLEU(RR) %.2f\tdelta %.2f\n", row.label.c_str(), row.bleu, row.bleu_rr,
              row.bleu_rr - row.bleu);
  return 0;
}

int cmd_positions(const EvalArgs& a) {
  if (checkpoint_kind(a.checkpoint) == ModelKind::at) throw ConfigError("positions needs a non-autoregressive checkpoint");
  const auto corpus = read_corpus(a.corpus);
  return with_checkpoint_precision(a.checkpoint, [&]<class T>() {
    auto m = load_model<PnatModel<T>, T>(a.checkpoint);
    const auto positions = a.predictor == "auto" ? default_position_source(*m.model) : parse_position_source(a.predictor);
    const auto data = encode_corpus(corpus, m.meta.src_vocab, m.meta.tgt_vocab);
    const std::size_t n = a.limit ? std::min(a.limit, data.size()) : std::min<std::size_t>(10, data.size());
    std::vector<PositionCase> cases;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& ex = data[i];
      DecodeOptions hsp_opt;
      hsp_opt.positions = PositionSource::hsp_oracle;
      hsp_opt.reference = std::span<const int>(ex.tgt);
      const auto by_hsp = argmax_decode(*m.model, ex.src, hsp_opt);
      DecodeOptions pred_opt;
      pred_opt.positions = positions;
      pred_opt.forced_length = ex.tgt.size();
      const auto by_pred = argmax_decode(*m.model, ex.src, pred_opt);
      cases.push_back({corpus.src[i], corpus.tgt[i], m.meta.tgt_vocab.decode(by_hsp.tokens),
                       m.meta.tgt_vocab.decode(by_pred.tokens), by_hsp.z_used.to_string(), by_pred.z_used.to_string()});
    }
    if (!a.run_dir.empty()) {
      fs::create_directories(a.run_dir);
      std::ofstream os(a.run_dir + "/cases.jsonl", std::ios::trunc);
      for (const auto& c : cases) os << to_json(c).dump() << '\n';
    }
    std::cout << render_cases(cases, cases.size());
    return 0;
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pnat: position-learned non-autoregressive generation"};
  app.require_subcommand(1);

  CommonOptions common;
  std::string out, corpus, checkpoint, run_dir;
  bool resume = false, joint = false;
  std::size_t min_count = 1, beam = 1;

  auto* gen = app.add_subcommand("gen", "generate a synthetic task (train/dev/test corpora)");
  add_common(gen, common);
  gen->add_option("-o,--out", out, "output directory")->required();

  auto* vocab = app.add_subcommand("vocab", "build vocabularies from a corpus");
  vocab->add_option("--corpus", corpus, "corpus prefix")->required();
  vocab->add_option("-o,--out", out, "output prefix (<out>.src, <out>.tgt)")->required();
  vocab->add_option("--min-count", min_count, "minimum token count");
  vocab->add_flag("--joint", joint, "one vocabulary for both sides");

  auto* train = app.add_subcommand("train", "train a model");
  add_common(train, common);
  train->add_option("-o,--out", out, "run directory")->required();
  train->add_flag("--resume", resume, "continue from <run>/last.ckpt");

  auto* finetune = app.add_subcommand("finetune-length", "retrain the length predictor with everything else frozen");
  add_common(finetune, common);
  finetune->add_option("--checkpoint", checkpoint, "input checkpoint")->required();
  finetune->add_option("-o,--out", out, "output checkpoint")->required();

  auto* distill = app.add_subcommand("distill", "replace targets by a teacher's outputs");
  distill->add_option("--teacher", checkpoint, "AT checkpoint")->required();
  distill->add_option("--corpus", corpus, "corpus prefix")->required();
  distill->add_option("-o,--out", out, "output corpus prefix")->required();
  distill->add_option("--beam", beam, "teacher beam (1 = greedy)");

  DecodeArgs dargs;
  auto* decode = app.add_subcommand("decode", "decode sentences (stdin or --input)");
  decode->add_option("--checkpoint", dargs.checkpoint)->required();
  decode->add_option("--input", dargs.input, "input file, one sentence per line");
  decode->add_flag("--lpd", dargs.lpd, "length-parallel decoding");
  decode->add_option("--delta-m", dargs.delta_m, "LPD half-width");
  decode->add_option("--predictor", dargs.predictor, "auto|ar|nar|identity");
  decode->add_option("--rescorer", dargs.rescorer, "AT checkpoint for LPD rescoring");
  decode->add_flag("--length-normalize", dargs.length_normalize, "normalise rescorer scores by length");

  EvalArgs eargs;
  auto add_eval_opts = [&](CLI::App* cmd) {
    cmd->add_option("--checkpoint", eargs.checkpoint)->required();
    cmd->add_option("--corpus", eargs.corpus, "corpus prefix")->required();
    cmd->add_option("--predictor", eargs.predictor, "auto|ar|nar|identity|hsp");
    cmd->add_option("--limit", eargs.limit, "sentences to use (0 = all)");
    cmd->add_option("--split", eargs.split, "label for the split");
    cmd->add_option("--run-dir", eargs.run_dir, "append results under this directory");
  };
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint; prints one JSON row");
  add_eval_opts(eval);
  eval->add_option("--beam", eargs.beam, "AT beam size");
  auto* positions = app.add_subcommand("positions", "dump predicted vs searched positions");
  add_eval_opts(positions);
  auto* repeats = app.add_subcommand("repeats", "BLEU with and without repeat removal");
  add_eval_opts(repeats);

  auto* report = app.add_subcommand("report", "render tables from a run directory");
  report->add_option("--run-dir", run_dir)->required();
  report->add_option("--split", eargs.split);

  auto* config = app.add_subcommand("config", "print every config key with its value");
  add_common(config, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen) {
      const auto rc = load_run_config(common);
      const auto s = gen_synthetic(rc.task);
      fs::create_directories(out);
      write_corpus(out + "/train", s.train);
      write_corpus(out + "/dev", s.dev);
      if (s.test.size()) write_corpus(out + "/test", s.test);
      std::cerr << "wrote " << s.train.size() << "/" << s.dev.size() << "/" << s.test.size() << " pairs to " << out << '\n';
      return 0;
    }
    if (*vocab) {
      const auto c = read_corpus(corpus);
      if (joint) {
        auto all = c.src;
        all.insert(all.end(), c.tgt.begin(), c.tgt.end());
        const auto v = Vocab::build(all, min_count);
        v.save(out + ".src");
        v.save(out + ".tgt");
      } else {
        Vocab::build(c.src, min_count).save(out + ".src");
        Vocab::build(c.tgt, min_count).save(out + ".tgt");
      }
      return 0;
    }
    if (*train) return cmd_train(load_run_config(common), out, resume);
    if (*finetune) return cmd_finetune(load_run_config(common), checkpoint, out);
    if (*distill) return cmd_distill(checkpoint, corpus, out, beam);
    if (*decode) return cmd_decode(dargs);
    if (*eval) return cmd_eval(eargs);
    if (*repeats) return cmd_repeats(eargs);
    if (*positions) return cmd_positions(eargs);
    if (*report) {
      std::cout << report_from_directory(run_dir, eargs.split);
      return 0;
    }
    if (*config) {
      std::cout << ConfigSchema::instance().dump(load_run_config(common));
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const ShapeError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
