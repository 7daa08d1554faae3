// Acceptance run: prints one PASS/FAIL line per criterion, exits non-zero
// if any criterion fails. `--only 1,2,11` restricts the run.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pnat/pnat.hpp"

using namespace pnat;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  int id;
  std::string name;
  bool pass;
  std::string detail;
};

std::vector<Verdict> g_verdicts;

void verdict(int id, const std::string& name, bool pass, const std::string& detail) {
  g_verdicts.push_back({id, name, pass, detail});
  std::printf("%s [%d] %s: %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
}

void note(const char* fmt, auto... args) {
  std::printf("      ");
  std::printf(fmt, args...);
  std::printf("\n");
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Tensor<double> random_matrix(std::size_t rows, std::size_t cols, rng::Stream& s, double lo = -1.0, double hi = 1.0) {
  auto t = Tensor<double>::matrix(rows, cols);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = lo + (hi - lo) * s.uniform();
  return t;
}

Permutation random_permutation(std::size_t m, rng::Stream& s) {
  std::vector<int> z(m);
  for (std::size_t i = 0; i < m; ++i) z[i] = static_cast<int>(i);
  s.shuffle(z.begin(), z.end());
  return Permutation(std::move(z));
}

// ---------------------------------------------------------------- 1, 2

void criterion_hsp() {
  const auto t0 = Clock::now();
  rng::Stream s(rng::key({1001}));
  std::size_t invalid = 0, above_opt = 0, dominant_miss = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = 1 + s.below(64);
    const auto sim = random_matrix(m, m, s);
    const auto z = hsp(sim);
    if (!Permutation::is_valid(z.values()) || z.size() != m) ++invalid;
    if (assignment_score(sim, z) > assignment_score(sim, optimal_assignment(sim)) + 1e-12) ++above_opt;
  }
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + s.below(64);
    const auto pi = random_permutation(m, s);
    auto sim = random_matrix(m, m, s, -1.0, 0.5);
    for (std::size_t i = 0; i < m; ++i) sim(i, static_cast<std::size_t>(pi[i])) = 0.5 + 0.5 * s.uniform() + 1e-9;
    const auto z = hsp(sim);
    if (!(z == pi) || !(optimal_assignment(sim) == pi)) ++dominant_miss;
  }
  const double secs = seconds_since(t0);
  verdict(1, "HSP validity, optimality bound, dominant recovery",
          invalid == 0 && above_opt == 0 && dominant_miss == 0 && secs < 10.0,
          fmt("1000 random M<=64: invalid=%zu above_optimum=%zu; 200 permuted dominant: misses=%zu; %.2fs (<10s)",
              invalid, above_opt, dominant_miss, secs));
}

void criterion_hungarian() {
  rng::Stream s(rng::key({1002}));
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + s.below(7);
    const auto sim = random_matrix(m, m, s);
    const auto h = optimal_assignment(sim);
    const auto b = brute_force_assignment(sim);
    if (!(h == b) || assignment_score(sim, h) != assignment_score(sim, b)) ++mismatches;
  }
  verdict(2, "Hungarian equals brute force", mismatches == 0,
          fmt("200 random matrices M<=7, exact mismatches=%zu", mismatches));
}

// ---------------------------------------------------------------- 3

ModelConfig tiny_config() {
  ModelConfig c;
  c.d_model = 8;
  c.d_hidden = 12;
  c.n_layers = 1;
  c.n_heads = 2;
  c.p_dropout = 0.0;
  c.rel_clip_distance = 2;
  c.vocab_src = 12;
  c.vocab_tgt = 12;
  c.sub_encoder_layers = 1;
  c.max_positions = 16;
  c.length_band = 4;
  return c;
}

double op_grad_error() {
  rng::Stream s(rng::key({1003}));
  const auto a = random_matrix(3, 4, s), b = random_matrix(4, 5, s), c = random_matrix(3, 4, s);
  const auto r = random_matrix(1, 4, s), g = random_matrix(1, 4, s);
  const auto w = random_matrix(8, 8, s);
  auto reduce = [&](Var<double> v) {
    auto& t = v.tape();
    auto wt = Tensor<double>::matrix(v.rows(), v.cols());
    for (std::size_t i = 0; i < wt.size(); ++i) wt[i] = w[i % w.size()];
    return ops::sum(ops::mul(v, t.constant(wt)));
  };
  using Op = std::function<Var<double>(Tape<double>&, Var<double>)>;
  const std::vector<std::pair<const Tensor<double>*, Op>> cases = {
      {&a, [&](Tape<double>& t, Var<double> v) { return ops::matmul(v, t.constant(b)); }},
      {&b, [&](Tape<double>& t, Var<double> v) { return ops::matmul(t.constant(a), v); }},
      {&a, [&](Tape<double>& t, Var<double> v) { return ops::matmul_nt(v, t.constant(c)); }},
      {&a, [&](Tape<double>& t, Var<double> v) { return ops::add(v, t.constant(c)); }},
      {&a, [&](Tape<double>& t, Var<double> v) { return ops::sub(t.constant(c), v); }},
      {&a, [&](Tape<double>& t, Var<double> v) { return ops::mul(v, t.constant(c)); }},
      {&a, [](Tape<double>&, Var<double> v) { return ops::scale(v, 0.7); }},
      {&r, [&](Tape<double>& t, Var<double> v) { return ops::add_row(t.constant(a), v); }},
      {&a, [](Tape<double>&, Var<double> v) { return ops::relu(v); }},
      {&a, [](Tape<double>&, Var<double> v) { return ops::sigmoid(v); }},
      {&a, [](Tape<double>&, Var<double> v) { return ops::tanh(v); }},
      {&a, [](Tape<double>&, Var<double> v) { return ops::mean_rows(v); }},
      {&a, [](Tape<double>&, Var<double> v) { return ops::gather_rows(v, {2, 0, 2}); }},
      {&a, [](Tape<double>&, Var<double> v) { return ops::slice_cols(v, 1, 2); }},
      {&a, [](Tape<double>&, Var<double> v) { return ops::softmax_rows(v); }},
      {&a, [&](Tape<double>& t, Var<double> v) { return ops::layer_norm(v, t.constant(g), t.constant(r)); }},
      {&g, [&](Tape<double>& t, Var<double> v) { return ops::layer_norm(t.constant(a), v, t.constant(r)); }},
      {&a, [](Tape<double>&, Var<double> v) { return ops::dropout(v, {0.3, true, 1, 2, 3}, 4); }},
  };
  double worst = 0.0;
  for (const auto& [x, op] : cases) {
    worst = std::max(worst, grad_check([&](Tape<double>& t, Var<double> v) { return reduce(op(t, v)); }, *x));
  }
  worst = std::max(worst, grad_check([](Tape<double>&, Var<double> v) { return ops::cross_entropy(v, {3, 0, 1}); }, a));
  // Attention with relative buckets, key mask and causal mask.
  const auto q = random_matrix(4, 6, s), k = random_matrix(4, 6, s), v = random_matrix(4, 6, s);
  const auto rk = random_matrix(5, 3, s), rv = random_matrix(5, 3, s);
  const auto buckets = RelativeBuckets::from(Permutation({2, 0, 3, 1}), 2);
  for (bool causal : {false, true}) {
    const AttentionMask mask{{1, 1, 0, 1}, causal};
    worst = std::max(worst, grad_check(
                                [&](Tape<double>& t, Var<double> x) {
                                  return reduce(attention(x, t.constant(k), t.constant(v), 2, mask, &buckets,
                                                          t.constant(rk), t.constant(rv)));
                                },
                                q));
    worst = std::max(worst, grad_check(
                                [&](Tape<double>& t, Var<double> x) {
                                  return reduce(attention(t.constant(q), t.constant(k), t.constant(v), 2, mask,
                                                          &buckets, x, t.constant(rv)));
                                },
                                rk));
  }
  return worst;
}

void criterion_grad() {
  const auto t0 = Clock::now();
  PnatModel<double> model(tiny_config(), 3);
  const std::vector<std::vector<int>> src{{4, 7, 5, 9}, {6, 8, 10}};
  const std::vector<std::vector<int>> tgt{{7, 4, 9, 5, 11}, {10, 6, 8}};
  std::vector<Permutation> zs;
  for (std::size_t i = 0; i < 2; ++i) {
    Tape<double> tape(false);
    auto enc = model.encode(tape, src[i]);
    zs.push_back(reference_positions(model, model.decoder_inputs(tape, enc, tgt[i].size()).value(), tgt[i]));
  }
  auto joint = [&](Tape<double>& tape) {
    Var<double> total;
    for (std::size_t i = 0; i < 2; ++i) {
      LossOptions opt;
      opt.length_loss = false;
      opt.fixed_z = &zs[i];
      auto l = example_loss(model, tape, src[i], tgt[i], opt);
      total = total.valid() ? ops::add(total, l.root) : l.root;
    }
    return total;
  };
  const auto full = grad_check_parameters(joint, model.params(), 1e-5, 1);
  model.params().freeze_except([](const std::string& n) { return n.starts_with("bridge.length."); });
  auto length = [&](Tape<double>& tape) {
    Var<double> total;
    for (std::size_t i = 0; i < 2; ++i) {
      auto l = model.bridge().length_loss(tape, model.encode(tape, src[i]), tgt[i].size(), true);
      total = total.valid() ? ops::add(total, l) : l;
    }
    return total;
  };
  const auto len = grad_check_parameters(length, model.params(), 1e-5, 1);
  model.params().unfreeze_all();
  const double op_err = op_grad_error();
  const double secs = seconds_since(t0);
  verdict(3, "gradient integrity",
          full.max_error < 1e-4 && len.max_error < 1e-4 && op_err < 1e-5 && secs < 60.0,
          fmt("joint loss max rel err %.2e over %zu coords (worst %s); length loss %.2e; per-op max %.2e; %.1fs",
              full.max_error, full.coordinates, full.worst_parameter.c_str(), len.max_error, op_err, secs));
}

// ---------------------------------------------------------------- 4

struct TaskData {
  Vocab vocab;
  std::vector<Example> train, dev;
};

TaskData make_task(const TaskSpec& spec) {
  const auto splits = gen_synthetic(spec);
  auto joint = splits.train.src;
  joint.insert(joint.end(), splits.train.tgt.begin(), splits.train.tgt.end());
  TaskData d;
  d.vocab = Vocab::build(joint);
  d.train = encode_corpus(splits.train, d.vocab, d.vocab);
  d.dev = encode_corpus(splits.dev, d.vocab, d.vocab);
  return d;
}

ModelConfig task_model(const Vocab& v, ModelKind kind) {
  ModelConfig c;
  c.kind = kind;
  c.vocab_src = c.vocab_tgt = v.size();
  c.share_embeddings = true;
  return c;
}

TrainConfig task_train(std::uint64_t steps, std::uint64_t seed) {
  TrainConfig t;
  t.alpha = 0.3;
  t.schedule = {ScheduleKind::linear_anneal, 0, 1e-3, 3.3e-5, steps};
  t.tokens_per_batch = 512;
  t.max_steps = steps;
  t.eval_interval = steps / 10;
  t.eval_limit = 200;
  t.seed = seed;
  return t;
}

void criterion_overfit() {
  const auto t0 = Clock::now();
  TaskSpec spec;
  spec.train_size = 8;
  spec.dev_size = 0;
  spec.test_size = 0;
  spec.seed = 4;
  const auto data = make_task(spec);
  PnatModel<float> model(task_model(data.vocab, ModelKind::pnat), 4);
  auto cfg = task_train(500, 4);
  cfg.eval_interval = 500;
  const std::vector<Example> no_dev;
  Trainer<PnatModel<float>> trainer(model, cfg, data.train, no_dev);
  trainer.run();
  EvalOptions opt;
  opt.positions = PositionSource::ar;
  const auto ev = evaluate(model, data.train, opt);
  const double secs = seconds_since(t0);
  verdict(4, "overfit 8 pairs in 500 steps", ev.bleu == 100.0 && *ev.perm_acc == 1.0 && secs < 120.0,
          fmt("train BLEU %.2f (=100), perm-acc vs HSP %.4f (=1), length acc %.3f, %.1fs", ev.bleu, *ev.perm_acc,
              ev.length_acc, secs));
}

// ---------------------------------------------------------------- 5, 6, 7, 9

struct SeedRun {
  std::unique_ptr<PnatModel<float>> nat, pnat;
  std::vector<MetricRecord> nat_log, pnat_log;
  EvalResult nat_ev, ar_ev, nar_ev, hsp_ev;
};

struct Shared {
  TaskData data;
  std::vector<SeedRun> runs;
  std::unique_ptr<AtModel<float>> at;
  double seconds = 0.0;
};

constexpr std::uint64_t kTaskSteps = 1000;
// The AT model needs more steps than the parallel models to rank candidates well.
constexpr std::uint64_t kRescorerSteps = 5000;

std::vector<MetricRecord> train_model(PnatModel<float>& model, const TaskData& d, std::uint64_t seed) {
  Trainer<PnatModel<float>> trainer(model, task_train(kTaskSteps, seed), d.train, d.dev);
  trainer.run();
  return trainer.log();
}

Shared& shared() {
  static std::unique_ptr<Shared> sh;
  if (sh) return *sh;
  sh = std::make_unique<Shared>();
  const auto t0 = Clock::now();
  TaskSpec spec;  // rule_reorder, vocab 50, lengths 3..16
  spec.train_size = 20000;
  spec.dev_size = 500;
  spec.test_size = 0;
  sh->data = make_task(spec);
  const auto& d = sh->data;
  note("task: rule_reorder, %zu train / %zu dev pairs, joint vocab %zu", d.train.size(), d.dev.size(), d.vocab.size());
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    SeedRun r;
    r.nat = std::make_unique<PnatModel<float>>(task_model(d.vocab, ModelKind::nat_base), seed);
    r.nat_log = train_model(*r.nat, d, seed);
    r.pnat = std::make_unique<PnatModel<float>>(task_model(d.vocab, ModelKind::pnat), seed);
    r.pnat_log = train_model(*r.pnat, d, seed);
    r.nat_ev = evaluate(*r.nat, d.dev, {PositionSource::identity});
    r.ar_ev = evaluate(*r.pnat, d.dev, {PositionSource::ar});
    r.nar_ev = evaluate(*r.pnat, d.dev, {PositionSource::nar});
    r.hsp_ev = evaluate(*r.pnat, d.dev, {PositionSource::hsp_oracle});
    note("seed %lu: NAT-base %.2f (rr %.2f) | PNAT NAR %.2f AR %.2f (rr %.2f, perm %.3f rel %.3f) HSP %.2f "
         "(perm %.2f rel %.2f) | %.0fs",
         seed, r.nat_ev.bleu, r.nat_ev.bleu_rr, r.nar_ev.bleu, r.ar_ev.bleu, r.ar_ev.bleu_rr, *r.ar_ev.perm_acc,
         *r.ar_ev.rel_acc, r.hsp_ev.bleu, *r.hsp_ev.perm_acc, *r.hsp_ev.rel_acc, seconds_since(t0));
    sh->runs.push_back(std::move(r));
  }
  sh->at = std::make_unique<AtModel<float>>(task_model(d.vocab, ModelKind::at), 1);
  {
    auto cfg = task_train(kRescorerSteps, 1);
    cfg.eval_interval = kRescorerSteps;
    Trainer<AtModel<float>> trainer(*sh->at, cfg, d.train, d.dev);
    trainer.run();
    note("AT rescorer: dev BLEU (greedy, 200 sents) %.2f | %.0fs", *trainer.log().back().dev_bleu, seconds_since(t0));
  }
  sh->seconds = seconds_since(t0);
  return *sh;
}

double mean(const std::vector<SeedRun>& runs, const std::function<double(const SeedRun&)>& f) {
  double s = 0.0;
  for (const auto& r : runs) s += f(r);
  return s / static_cast<double>(runs.size());
}

void criterion_table3() {
  auto& sh = shared();
  const double nat = mean(sh.runs, [](const SeedRun& r) { return r.nat_ev.bleu; });
  const double nar = mean(sh.runs, [](const SeedRun& r) { return r.nar_ev.bleu; });
  const double ar = mean(sh.runs, [](const SeedRun& r) { return r.ar_ev.bleu; });
  const double hsp_bleu = mean(sh.runs, [](const SeedRun& r) { return r.hsp_ev.bleu; });
  bool hsp_acc = true;
  for (const auto& r : sh.runs) hsp_acc = hsp_acc && *r.hsp_ev.perm_acc == 1.0 && *r.hsp_ev.rel_acc == 1.0;
  const bool ordered = nat < nar && nar <= ar && ar < hsp_bleu && hsp_bleu - nat >= 1.0;
  verdict(5, "position-strategy ordering", ordered && hsp_acc && sh.seconds < 1800.0,
          fmt("dev BLEU (3-seed mean) NAT-base %.2f < NAR %.2f <= AR %.2f < HSP %.2f; HSP pos-acc 100/100: %s; "
              "shared training %.0fs (<1800s)",
              nat, nar, ar, hsp_bleu, hsp_acc ? "yes" : "no", sh.seconds));
}

void criterion_remove_repeats() {
  auto& sh = shared();
  const double d_nat = mean(sh.runs, [](const SeedRun& r) { return r.nat_ev.bleu_rr - r.nat_ev.bleu; });
  const double d_pnat = mean(sh.runs, [](const SeedRun& r) { return r.ar_ev.bleu_rr - r.ar_ev.bleu; });
  verdict(6, "remove-repeats delta", d_nat > d_pnat,
          fmt("mean BLEU gain over 3 seeds: NAT-base %+.2f > PNAT(AR) %+.2f", d_nat, d_pnat));
}

void criterion_lpd() {
  auto& sh = shared();
  const auto& model = *sh.runs[0].pnat;
  const auto& at = *sh.at;
  const auto& dev = sh.data.dev;
  std::size_t zero_mismatch = 0, too_many = 0, not_max = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    LpdOptions zero;
    zero.delta_m = 0;
    const auto a = lpd_decode<float, float>(model, dev[i].src, zero, nullptr);
    const auto b = argmax_decode(model, dev[i].src, {PositionSource::ar, {}, {}});
    zero_mismatch += !(a.tokens == b.tokens && a.z_used == b.z_used);

    std::vector<DecodeResult> cands;
    const auto out = lpd_decode(model, dev[i].src, LpdOptions{}, &at, &cands);
    too_many += cands.size() > 9;
    // Independent exhaustive rescoring over the same length band.
    Tape<float> tape(false);
    const auto m_hat = model.bridge().predict_length(tape, model.encode(tape, dev[i].src));
    const std::size_t lo = m_hat > 4 ? m_hat - 4 : 1;
    std::vector<int> best;
    double best_score = -1e300;
    for (std::size_t m = lo; m <= m_hat + 4; ++m) {
      const auto y = argmax_decode(model, dev[i].src, {PositionSource::ar, m, {}}).tokens;
      auto with_end = y;
      with_end.push_back(token::eos);
      const double sc = at.score_sequence(with_end, dev[i].src);
      if (sc > best_score) {
        best_score = sc;
        best = y;
      }
    }
    not_max += !(out.tokens == best);
  }
  std::vector<std::vector<int>> lpd_hyps, arg_hyps, refs;
  for (const auto& ex : dev) {
    lpd_hyps.push_back(lpd_decode(model, ex.src, LpdOptions{}, &at).tokens);
    arg_hyps.push_back(argmax_decode(model, ex.src, {PositionSource::ar, {}, {}}).tokens);
    refs.push_back(ex.tgt);
  }
  const double lpd_bleu = corpus_bleu(lpd_hyps, refs), arg_bleu = corpus_bleu(arg_hyps, refs);
  verdict(7, "length-parallel decoding contract",
          zero_mismatch == 0 && too_many == 0 && not_max == 0 && lpd_bleu >= arg_bleu - 0.2,
          fmt("dM=0 mismatches %zu/100; >9 candidates %zu; not rescorer-max %zu/100; dev BLEU LPD(dM=4) %.2f vs "
              "argmax %.2f (>= -0.2)",
              zero_mismatch, too_many, not_max, lpd_bleu, arg_bleu));
}

void criterion_curves() {
  auto& sh = shared();
  const std::uint64_t warmup = kTaskSteps / 10;
  std::size_t total = 0, hits = 0;
  bool every_seed = true;
  std::string per_seed;
  for (const auto& r : sh.runs) {
    std::size_t n = 0, h = 0;
    for (std::size_t k = 0; k < r.pnat_log.size() && k < r.nat_log.size(); ++k) {
      if (r.pnat_log[k].step <= warmup) continue;
      ++n;
      h += *r.pnat_log[k].dev_bleu >= *r.nat_log[k].dev_bleu;
    }
    every_seed = every_seed && n > 0 && static_cast<double>(h) >= 0.9 * static_cast<double>(n);
    per_seed += fmt(" %zu/%zu", h, n);
    total += n;
    hits += h;
  }
  verdict(9, "convergence curves", every_seed,
          fmt("checkpoints after step %lu with PNAT >= NAT-base dev BLEU, per seed:%s (>= 90%% each; overall %zu/%zu)",
              warmup, per_seed.c_str(), hits, total));
}

// ---------------------------------------------------------------- 8

void criterion_finetune() {
  auto& sh = shared();
  auto& model = *sh.runs[0].pnat;
  std::vector<Tensor<float>> before;
  for (const auto& p : model.params()) before.push_back(p.value);
  const auto losses = finetune_length_predictor(model, sh.data.train, 50, 1e-3, 512, 8);
  std::size_t changed_length = 0, changed_other = 0, length_params = 0;
  for (std::size_t i = 0; i < before.size(); ++i) {
    const auto& p = model.params()[i];
    const bool same = before[i] == p.value;
    if (p.name.starts_with("bridge.length.")) {
      ++length_params;
      changed_length += !same;
    } else {
      changed_other += !same;
    }
  }
  verdict(8, "length finetuning touches only the length classifier", changed_other == 0 && changed_length > 0,
          fmt("50 steps: %zu/%zu length tensors changed, %zu other tensors changed (bit-level); loss %.3f -> %.3f",
              changed_length, length_params, changed_other, losses.front(), losses.back()));
}

// ---------------------------------------------------------------- 10

void criterion_determinism() {
  TaskSpec spec;
  spec.train_size = 400;
  spec.dev_size = 30;
  spec.test_size = 0;
  spec.seed = 10;
  const auto data = make_task(spec);
  auto mcfg = task_model(data.vocab, ModelKind::pnat);
  mcfg.d_model = 32;
  mcfg.d_hidden = 64;
  auto tcfg = task_train(60, 10);
  tcfg.eval_interval = 15;
  tcfg.tokens_per_batch = 128;

  auto dump = [](const std::vector<MetricRecord>& log) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : log) j.push_back(r.to_json());
    return j.dump();
  };
  auto params_equal = [](const ParameterStore<double>& a, const ParameterStore<double>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!(a[i].value == b[i].value)) return false;
    }
    return true;
  };

  PnatModel<double> a(mcfg, 10), b(mcfg, 10);
  Trainer<PnatModel<double>> ta(a, tcfg, data.train, data.dev), tb(b, tcfg, data.train, data.dev);
  ta.run();
  tb.run();
  const bool same_runs = dump(ta.log()) == dump(tb.log()) && params_equal(a.params(), b.params());

  PnatModel<double> first(mcfg, 10);
  Trainer<PnatModel<double>> part(first, tcfg, data.train, data.dev);
  part.run(30);
  std::stringstream buf;
  save_checkpoint(buf, first.params(), &part.optimizer().state(), mcfg.fingerprint(), part.state_json());
  PnatModel<double> second(mcfg, 77);
  Trainer<PnatModel<double>> rest(second, tcfg, data.train, data.dev);
  const auto header = read_checkpoint_header(buf);
  read_checkpoint_body(buf, header, second.params(), mcfg.fingerprint(), &rest.optimizer().state());
  std::vector<MetricRecord> log;
  for (const auto& j : header.meta.at("log")) log.push_back(MetricRecord::from_json(j));
  rest.restore(header.meta.at("step").get<std::uint64_t>(), header.meta.at("best_dev").get<double>(), log);
  rest.run();
  const bool resumed = dump(rest.log()) == dump(ta.log()) && params_equal(second.params(), a.params());
  verdict(10, "determinism and resume (float64)", same_runs && resumed,
          fmt("two identical runs bit-identical: %s; resume at step 30 of 60 reproduces log and parameters: %s "
              "(%zu metric records)",
              same_runs ? "yes" : "no", resumed ? "yes" : "no", ta.log().size()));
}

// ---------------------------------------------------------------- 11

void criterion_metrics() {
  rng::Stream s(rng::key({1011}));
  std::size_t bad = 0;
  for (int i = 0; i < 500; ++i) {
    const auto z = random_permutation(1 + s.below(64), s);
    bad += relative_accuracy(z, z, 4) != 1.0 || permutation_accuracy(z, z) != 1.0;
  }
  std::ifstream is(std::string(PNAT_TEST_DATA_DIR) + "/bleu_golden.json");
  double worst = is ? 0.0 : 1e9;
  std::size_t corpora = 0;
  if (is) {
    const auto j = nlohmann::json::parse(is);
    for (const auto& c : j.at("cases")) {
      const auto hyps = c.at("hyps").get<std::vector<std::vector<std::string>>>();
      const auto refs = c.at("refs").get<std::vector<std::vector<std::string>>>();
      worst = std::max(worst, std::abs(corpus_bleu(hyps, refs) - c.at("bleu").get<double>()));
      ++corpora;
    }
  }
  verdict(11, "metric sanity", bad == 0 && corpora >= 50 && worst < 1e-6,
          fmt("self-accuracy failures %zu/500; BLEU vs independent oracle on %zu corpora: max |diff| %.2e (<1e-6)",
              bad, corpora, worst));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  app.add_option("--only", only, "criterion ids to run")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  const std::set<int> wanted(only.begin(), only.end());
  auto want = [&](int id) { return wanted.empty() || wanted.contains(id); };

  const std::vector<std::pair<int, std::function<void()>>> criteria = {
      {1, criterion_hsp},     {2, criterion_hungarian},     {3, criterion_grad},
      {4, criterion_overfit}, {5, criterion_table3},        {6, criterion_remove_repeats},
      {7, criterion_lpd},     {9, criterion_curves},        {8, criterion_finetune},
      {10, criterion_determinism}, {11, criterion_metrics},
  };
  const auto t0 = Clock::now();
  for (const auto& [id, run] : criteria) {
    if (!want(id)) continue;
    try {
      run();
    } catch (const std::exception& e) {
      verdict(id, "criterion " + std::to_string(id), false, std::string("exception: ") + e.what());
    }
  }
  std::size_t failed = 0;
  for (const auto& v : g_verdicts) failed += !v.pass;
  std::printf("%zu/%zu criteria passed in %.0fs\n", g_verdicts.size() - failed, g_verdicts.size(), seconds_since(t0));
  return failed == 0 ? 0 : 1;
}
