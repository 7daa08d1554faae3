#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

using namespace pnat;
using pnat::testing::random_matrix;
using pnat::testing::random_permutation;
using pnat::testing::tiny_config;

TEST(SimilarityMatrix, DiagonalOfOnesShapeAndRange) {
  auto table = random_matrix(10, 6, 1);
  const std::vector<int> ids{3, 7, 1, 8, 5};
  auto d = Tensor<double>::matrix(5, 6);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t c = 0; c < 6; ++c) d(i, c) = table(static_cast<std::size_t>(ids[i]), c);
  }
  const auto sim = similarity_matrix<double>(d, ids, table);
  EXPECT_EQ(sim.rows(), 5u);
  EXPECT_EQ(sim.cols(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(sim(i, i), 1.0, 1e-12);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    rng::Stream s(rng::key({seed}));
    const std::size_t m = 1 + s.below(10);
    const auto dd = random_matrix(m, 6, seed + 500);
    std::vector<int> y(m);
    for (auto& v : y) v = static_cast<int>(s.below(10));
    const auto sm = similarity_matrix<double>(dd, y, table);
    for (double v : sm.values()) ASSERT_LE(std::abs(v), 1.0);
  }
}

TEST(SimilarityMatrix, ZeroRowsCountedAsDegenerate) {
  auto table = random_matrix(4, 3, 2);
  auto d = Tensor<double>::matrix(2, 3);
  d(1, 0) = 1.0;
  SimilarityStats stats;
  const auto sim = similarity_matrix<double>(d, std::vector<int>{0, 1}, table, &stats);
  EXPECT_EQ(stats.degenerate, 2u);
  EXPECT_EQ(sim(0, 0), 0.0);
  EXPECT_THROW(similarity_matrix<double>(d, std::vector<int>{0}, table), ShapeError);
  EXPECT_THROW(similarity_matrix<double>(d, std::vector<int>{0, 9}, table), DataError);
}

TEST(Hsp, Examples) {
  auto eye = Tensor<double>::matrix(3, 3);
  for (std::size_t i = 0; i < 3; ++i) eye(i, i) = 1.0;
  EXPECT_EQ(hsp(eye), Permutation({0, 1, 2}));

  EXPECT_EQ(hsp(Tensor<double>::from_rows({{0.1, 0.9}, {0.8, 0.2}})), Permutation({1, 0}));

  const auto sim = Tensor<double>::from_rows({{0.9, 0.8, 0.1}, {0.85, 0.7, 0.2}, {0.1, 0.2, 0.3}});
  const auto greedy = hsp(sim);
  EXPECT_EQ(greedy, Permutation({0, 1, 2}));
  EXPECT_NEAR(assignment_score(sim, greedy), 1.9, 1e-12);
  const auto best = optimal_assignment(sim);
  EXPECT_EQ(best, Permutation({1, 0, 2}));
  EXPECT_NEAR(assignment_score(sim, best), 1.95, 1e-12);
  EXPECT_EQ(brute_force_assignment(sim), best);
}

TEST(Hsp, TiesGoToLowestRowThenColumn) {
  const auto flat = Tensor<double>::matrix(3, 3, 0.5);
  EXPECT_EQ(hsp(flat), Permutation({0, 1, 2}));
  const auto sim = Tensor<double>::from_rows({{0.2, 0.7, 0.7}, {0.7, 0.1, 0.1}, {0.3, 0.3, 0.3}});
  EXPECT_EQ(hsp(sim), Permutation({1, 0, 2}));
}

TEST(Hsp, FuzzValidityBoundAndShiftInvariance) {
  rng::Stream s(rng::key({41}));
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t m = 1 + s.below(20);
    const auto sim = random_matrix(m, m, 1000 + static_cast<std::uint64_t>(trial));
    const auto z = hsp(sim);
    ASSERT_TRUE(Permutation::is_valid(z.values()));
    ASSERT_LE(assignment_score(sim, z), assignment_score(sim, optimal_assignment(sim)) + 1e-9);
    auto shifted = sim;
    const double c = s.normal();
    for (auto& v : shifted.values()) v += c;
    ASSERT_EQ(hsp(shifted), z);
  }
}

TEST(Hsp, RecoversPermutedDiagonalDominantMatching) {
  rng::Stream s(rng::key({42}));
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 1 + s.below(30);
    const auto pi = random_permutation(m, s);
    auto sim = random_matrix(m, m, 2000 + static_cast<std::uint64_t>(trial), 0.5);
    for (std::size_t i = 0; i < m; ++i) sim(i, static_cast<std::size_t>(pi[i])) = 0.6 + 0.4 * s.uniform();
    EXPECT_EQ(hsp(sim), pi);
    EXPECT_EQ(optimal_assignment(sim), pi);
  }
}

TEST(OptimalAssignment, HungarianMatchesBruteForce) {
  rng::Stream s(rng::key({43}));
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + s.below(7);
    const auto sim = random_matrix(m, m, 3000 + static_cast<std::uint64_t>(trial));
    const auto h = optimal_assignment(sim);
    const auto b = brute_force_assignment(sim);
    EXPECT_EQ(h, b);
    EXPECT_EQ(assignment_score(sim, h), assignment_score(sim, b));
  }
  auto eye = Tensor<double>::matrix(4, 4);
  for (std::size_t i = 0; i < 4; ++i) eye(i, i) = 1.0;
  EXPECT_EQ(optimal_assignment(eye), Permutation::identity(4));
  EXPECT_EQ(assignment_score(eye, optimal_assignment(eye)), 4.0);
  EXPECT_THROW(brute_force_assignment(Tensor<double>::matrix(11, 11)), ShapeError);
}

TEST(NarRepair, ConflictFreeArgmaxUnchanged) {
  const auto probs = Tensor<double>::from_rows({{0.1, 0.7, 0.2}, {0.6, 0.3, 0.1}, {0.2, 0.2, 0.6}});
  EXPECT_EQ(resolve_position_conflicts(probs), Permutation({1, 0, 2}));
}

TEST(NarRepair, MoreConfidentSlotKeepsPosition) {
  const auto probs = Tensor<double>::from_rows({{0.9, 0.05, 0.05}, {0.6, 0.3, 0.1}, {0.1, 0.1, 0.8}});
  EXPECT_EQ(resolve_position_conflicts(probs), Permutation({0, 1, 2}));
  // Loser's best free position is 2 here, not 1.
  const auto other = Tensor<double>::from_rows({{0.6, 0.1, 0.3}, {0.9, 0.05, 0.05}, {0.1, 0.8, 0.1}});
  EXPECT_EQ(resolve_position_conflicts(other), Permutation({2, 0, 1}));
}

TEST(NarRepair, LosersRepairInConfidenceOrder) {
  // Slots 1 and 2 both lose position 0 to slot 0; slot 2 (0.8) repairs first
  // and takes position 1, which slot 1 also prefers.
  const auto probs = Tensor<double>::from_rows(
      {{0.95, 0.02, 0.02, 0.01}, {0.5, 0.4, 0.05, 0.05}, {0.8, 0.15, 0.03, 0.02}, {0.1, 0.1, 0.1, 0.7}});
  EXPECT_EQ(resolve_position_conflicts(probs), Permutation({0, 2, 1, 3}));
}

TEST(NarRepair, FuzzAlwaysValid) {
  rng::Stream s(rng::key({44}));
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t m = 1 + s.below(32);
    auto probs = Tensor<double>::matrix(m, m);
    for (std::size_t i = 0; i < m; ++i) {
      std::vector<double> row(m);
      for (auto& v : row) v = s.normal() * 3.0;
      if (s.below(2)) row[0] += 10.0;  // force many collisions
      const auto p = softmax(row);
      std::copy(p.begin(), p.end(), probs.row(i).begin());
    }
    ASSERT_TRUE(Permutation::is_valid(resolve_position_conflicts(probs).values()));
  }
}

namespace {

struct PredictorFixture {
  PnatModel<double> model;
  explicit PredictorFixture(std::uint64_t seed) : model(tiny_config(), seed) {}

  template <class F>
  auto with_r(std::span<const int> src, std::size_t m, F&& f) {
    Tape<double> tape;
    auto enc = model.encode(tape, src);
    auto d = model.decoder_inputs(tape, enc, m);
    auto r = model.predictor().sub_encode(tape, d, enc, {});
    return f(tape, r);
  }
};

}  // namespace

TEST(ArPredictor, SingleSlotHasZeroLogProb) {
  PredictorFixture fx(1);
  const std::vector<int> src{4, 5, 6};
  auto pred = fx.with_r(src, 1, [&](Tape<double>& t, Var<double> r) { return fx.model.predictor().ar_greedy(t, r); });
  EXPECT_EQ(pred.z, Permutation::identity(1));
  EXPECT_NEAR(pred.log_prob, 0.0, 1e-12);
}

TEST(ArPredictor, GreedyAlwaysValidFuzz) {
  PredictorFixture fx(2);
  rng::Stream s(rng::key({45}));
  for (int trial = 0; trial < 500; ++trial) {
    const auto src = pnat::testing::random_ids(1 + s.below(10), 12, s);
    const std::size_t m = 1 + s.below(16);
    auto pred = fx.with_r(src, m, [&](Tape<double>& t, Var<double> r) { return fx.model.predictor().ar_greedy(t, r); });
    ASSERT_EQ(pred.z.size(), m);
    ASSERT_TRUE(Permutation::is_valid(pred.z.values()));
    ASSERT_LE(pred.log_prob, 1e-12);
  }
  // A few long inputs up to 32 slots.
  for (std::size_t m : {24u, 32u}) {
    auto pred = fx.with_r(std::vector<int>{4, 5, 6, 7}, m,
                          [&](Tape<double>& t, Var<double> r) { return fx.model.predictor().ar_greedy(t, r); });
    EXPECT_TRUE(Permutation::is_valid(pred.z.values()));
  }
}

// Forced log-prob via the tape op against a hand-rolled masked softmax.
TEST(ArPredictor, ForcedLogProbMatchesIndependentRecomputation) {
  PredictorFixture fx(3);
  rng::Stream s(rng::key({46}));
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t m = 1 + s.below(9);
    const auto z = random_permutation(m, s);
    const auto src = pnat::testing::random_ids(2 + s.below(6), 12, s);
    fx.with_r(src, m, [&](Tape<double>& t, Var<double> r) {
      const double loss = fx.model.predictor().ar_loss(t, r, z).item();
      const auto order = z.inverse().values();
      const auto scores = fx.model.predictor().ar_step_scores(t, r, order).value();
      std::vector<bool> used(m, false);
      double logp = 0.0;
      for (std::size_t step = 0; step < m; ++step) {
        double mx = -1e300;
        for (std::size_t slot = 0; slot < m; ++slot) {
          if (!used[slot]) mx = std::max(mx, scores(step, slot));
        }
        double zsum = 0.0;
        for (std::size_t slot = 0; slot < m; ++slot) {
          if (!used[slot]) zsum += std::exp(scores(step, slot) - mx);
        }
        const auto pick = static_cast<std::size_t>(order[step]);
        logp += scores(step, pick) - mx - std::log(zsum);
        used[pick] = true;
      }
      EXPECT_NEAR(-loss, logp, 1e-10);
      return 0;
    });
  }
}

TEST(ArPredictor, GreedyLogProbEqualsForcedLogProbOfItsOwnOutput) {
  PredictorFixture fx(4);
  const std::vector<int> src{4, 8, 5, 9, 6};
  fx.with_r(src, 6, [&](Tape<double>& t, Var<double> r) {
    const auto pred = fx.model.predictor().ar_greedy(t, r);
    EXPECT_NEAR(pred.log_prob, -fx.model.predictor().ar_loss(t, r, pred.z).item(), 1e-10);
    return 0;
  });
}

TEST(ArPredictor, UniformPointerOnTwoSlotsCostsLn2) {
  PredictorFixture fx(5);
  fx.model.params().at("position.ar.query.weight").value.fill(0.0);
  fx.model.params().at("position.ar.query.bias").value.fill(0.0);
  const std::vector<int> src{4, 5, 6};
  for (const auto& z : {Permutation({0, 1}), Permutation({1, 0})}) {
    const double loss =
        fx.with_r(src, 2, [&](Tape<double>& t, Var<double> r) { return fx.model.predictor().ar_loss(t, r, z).item(); });
    EXPECT_NEAR(loss, std::log(2.0), 1e-12);
  }
}

TEST(NarPredictor, LossIgnoresPositionsBeyondLength) {
  PredictorFixture fx(6);
  const std::vector<int> src{4, 5, 6};
  const Permutation z({2, 0, 1});
  fx.with_r(src, 3, [&](Tape<double>& t, Var<double> r) {
    const auto& p = fx.model.predictor();
    const auto logits = p.nar_logits(t, r).value();
    double expected = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      std::vector<double> row(logits.row(i).begin(), logits.row(i).begin() + 3);
      expected += cross_entropy(row, z[i]);
    }
    EXPECT_NEAR(p.nar_loss(t, r, z).item(), expected, 1e-10);
    const auto pred = p.nar_predict(t, r);
    EXPECT_TRUE(Permutation::is_valid(pred.z.values()));
    return 0;
  });
}

TEST(NarPredictor, LengthAboveMaxPositionsIsShapeError) {
  PredictorFixture fx(7);
  EXPECT_THROW(fx.with_r(std::vector<int>{4, 5}, 17,
                         [&](Tape<double>& t, Var<double> r) { return fx.model.predictor().nar_predict(t, r); }),
               ShapeError);
}

TEST(PositionLoss, BothHeadsSumAndGradCheck) {
  PredictorFixture fx(8);
  const std::vector<int> src{4, 7, 5, 9};
  const Permutation z({3, 0, 2, 1});
  fx.with_r(src, 4, [&](Tape<double>& t, Var<double> r) {
    const auto& p = fx.model.predictor();
    EXPECT_NEAR(p.position_loss(t, r, z).item(), p.ar_loss(t, r, z).item() + p.nar_loss(t, r, z).item(), 1e-12);
    return 0;
  });
  auto loss = [&](Tape<double>& tape) {
    auto enc = fx.model.encode(tape, src);
    auto d = fx.model.decoder_inputs(tape, enc, 4);
    auto r = fx.model.predictor().sub_encode(tape, d, enc, {});
    return fx.model.predictor().position_loss(tape, r, z);
  };
  const auto report = grad_check_parameters(loss, fx.model.params(), 1e-5, 2);
  EXPECT_LT(report.max_error, 1e-4) << report.worst_parameter;
}

// After overfitting one fixed z_ref, the forced log-prob of z_ref beats
// every single-transposition neighbour.
TEST(ArPredictor, OverfitTargetBeatsTranspositions) {
  PredictorFixture fx(9);
  const std::vector<int> src{4, 7, 5, 9, 6};
  const Permutation z_ref({2, 4, 0, 1, 3});
  fx.model.params().freeze_except([](const std::string& n) { return n.starts_with("position."); });
  Adam<double> adam;
  for (int step = 0; step < 150; ++step) {
    fx.model.params().zero_grad();
    Tape<double> tape;
    auto enc = fx.model.encode(tape, src);
    auto d = fx.model.decoder_inputs(tape, enc, 5);
    auto r = fx.model.predictor().sub_encode(tape, d, enc, {});
    tape.backward(fx.model.predictor().ar_loss(tape, r, z_ref));
    adam.step(fx.model.params(), 1e-2);
  }
  fx.model.params().unfreeze_all();
  auto logp = [&](const Permutation& z) {
    return fx.with_r(src, 5, [&](Tape<double>& t, Var<double> r) { return -fx.model.predictor().ar_loss(t, r, z).item(); });
  };
  const double best = logp(z_ref);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = i + 1; j < 5; ++j) {
      auto v = z_ref.values();
      std::swap(v[i], v[j]);
      EXPECT_GT(best, logp(Permutation(v)));
    }
  }
  const auto pred = fx.with_r(src, 5, [&](Tape<double>& t, Var<double> r) { return fx.model.predictor().ar_greedy(t, r); });
  EXPECT_EQ(pred.z, z_ref);
}

TEST(Metrics, PermutationAccuracyExamples) {
  EXPECT_EQ(permutation_accuracy(Permutation({2, 0, 1}), Permutation({2, 0, 1})), 1.0);
  EXPECT_EQ(permutation_accuracy(Permutation({1, 0, 2, 3}), Permutation({0, 1, 2, 3})), 0.5);
  EXPECT_THROW(permutation_accuracy(Permutation({0}), Permutation({0, 1})), ShapeError);
}

TEST(Metrics, RelativeAccuracyExamples) {
  EXPECT_EQ(relative_accuracy(Permutation({1, 0}), Permutation({0, 1})), 0.0);
  EXPECT_EQ(relative_accuracy(Permutation({0, 2, 1}), Permutation({0, 1, 2}), 4), 0.0);
  // (1,0,2) gets pairs (0,2)/(2,0) wrong; (2,0,1) gets them right.
  EXPECT_EQ(relative_accuracy(Permutation({1, 0, 2}), Permutation({0, 1, 2}), 4), 0.0);
  EXPECT_NEAR(relative_accuracy(Permutation({2, 0, 1}), Permutation({0, 1, 2}), 4), 2.0 / 6.0, 1e-15);
  EXPECT_EQ(relative_accuracy(Permutation({0}), Permutation({0}), 4), 1.0);
  EXPECT_EQ(relative_accuracy(Permutation(), Permutation(), 4), 1.0);
  EXPECT_THROW(relative_accuracy(Permutation({0, 1}), Permutation({0, 1}), 0), ShapeError);
}

TEST(Metrics, RelativeAccuracyOnlyCountsPairsWithinThreshold) {
  // Far-apart reference pairs are skipped; a clipped far prediction of a
  // near pair is wrong.
  const auto ref = Permutation::identity(10);
  const auto c = relative_accuracy_count(ref, ref, 2);
  EXPECT_EQ(c.total, 2u * (9u + 8u));
  auto v = ref.values();
  std::swap(v[0], v[9]);
  const auto swapped = relative_accuracy_count(Permutation(v), ref, 2);
  EXPECT_EQ(swapped.total, c.total);
  EXPECT_EQ(swapped.correct, c.total - 8u);
}

TEST(Metrics, SelfAccuracyIsOneAndRelabellingInvariant) {
  rng::Stream s(rng::key({47}));
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t m = 1 + s.below(40);
    const auto z = random_permutation(m, s);
    ASSERT_EQ(permutation_accuracy(z, z), 1.0);
    for (int r = 1; r <= 6; ++r) ASSERT_EQ(relative_accuracy(z, z, r), 1.0);
    const auto other = random_permutation(m, s);
    const auto relabel = random_permutation(m, s);
    ASSERT_EQ(permutation_accuracy(Permutation(relabel.gather(other.values())), Permutation(relabel.gather(z.values()))),
              permutation_accuracy(other, z));
  }
}
