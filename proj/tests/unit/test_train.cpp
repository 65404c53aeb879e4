#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "../common/oracles.hpp"
#include "helpers.hpp"
#include "l2s/kmeans.hpp"
#include "l2s/knapsack.hpp"
#include "l2s/synth.hpp"
#include "l2s/train.hpp"

namespace l2s {
namespace {

using testing::random_matrix;
using testing::random_vector;

TEST(ClusterProbs, ZeroWeightsAreUniform) {
  const DenseVector h{1.0, -2.0, 0.5};
  const DenseVector p = cluster_probs(DenseMatrix(4, 3), h.span());
  for (double v : p.span()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(ClusterProbs, AnalyticPair) {
  DenseMatrix v(2, 1);
  v(0, 0) = std::log(3.0);
  const DenseVector h{1.0};
  const DenseVector p = cluster_probs(v, h.span());
  EXPECT_NEAR(p[0], 0.75, 1e-15);
  EXPECT_NEAR(p[1], 0.25, 1e-15);
}

TEST(ClusterProbs, SumsToOne) {
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const DenseVector p = cluster_probs(random_matrix(9, 5, rng, 3.0), random_vector(5, rng).span());
    double s = 0.0;
    for (double v : p.span()) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(GumbelSoftmax, ZeroNoiseReturnsProbs) {
  const std::vector<double> probs{0.1, 0.6, 0.3};
  const std::vector<double> g(3, 0.0);
  const DenseVector p = gumbel_softmax_sample(probs, g, 1.0);
  for (std::size_t t = 0; t < 3; ++t) EXPECT_NEAR(p[t], probs[t], 1e-12);
}

TEST(GumbelSoftmax, LowTemperatureIsOneHot) {
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const DenseVector probs = cluster_probs(random_matrix(6, 3, rng), random_vector(3, rng).span());
    const DenseVector g = gumbel_sample(rng, 6);
    const DenseVector p = gumbel_softmax_sample(probs.span(), g.span(), 1e-3);
    std::size_t best = 0;
    for (std::size_t t = 1; t < 6; ++t)
      if (std::log(probs[t]) + g[t] > std::log(probs[best]) + g[best]) best = t;
    for (std::size_t t = 0; t < 6; ++t) EXPECT_NEAR(p[t], t == best ? 1.0 : 0.0, 1e-6);
  }
}

TEST(GumbelSoftmax, ZeroProbabilityIsClamped) {
  const std::vector<double> probs{0.0, 1.0};
  const std::vector<double> g{0.3, -0.2};
  const DenseVector p = gumbel_softmax_sample(probs, g, 1.0);
  EXPECT_TRUE(all_finite(p.span()));
  EXPECT_LT(p[0], 1e-100);
}

TEST(GumbelSoftmax, ArgmaxFollowsProbs) {
  const std::vector<double> probs{0.3, 0.05, 0.2, 0.1, 0.1, 0.15, 0.05, 0.05};
  Rng rng(3);
  const int n = 100000;
  std::vector<int> hits(8, 0);
  for (int i = 0; i < n; ++i) {
    const DenseVector g = gumbel_sample(rng, 8);
    ++hits[straight_through(gumbel_softmax_sample(probs, g.span(), 1.0).span()).index];
  }
  for (std::size_t t = 0; t < 8; ++t) {
    const double sigma = std::sqrt(n * probs[t] * (1.0 - probs[t]));
    EXPECT_LE(std::abs(hits[t] - n * probs[t]), 3.0 * sigma) << "cluster " << t;
  }
}

TEST(StraightThrough, HardChoice) {
  const std::vector<double> p{0.2, 0.5, 0.3};
  const StraightThrough st = straight_through(p);
  EXPECT_EQ(st.index, 1u);
  EXPECT_EQ(st.hard, (DenseVector{0.0, 1.0, 0.0}));
  const std::vector<double> one{0.0, 0.0, 1.0};
  EXPECT_EQ(straight_through(one).hard, (DenseVector{0.0, 0.0, 1.0}));
}

TEST(MismatchCosts, MissesPlusWeightedWaste) {
  const std::vector<CandidateSet> sets{CandidateSet(10, {1, 2, 3}), CandidateSet(10, {4}),
                                       CandidateSet(10)};
  const std::vector<LabelId> y{2, 4};
  const auto a = mismatch_costs(sets, y, 0.5);
  EXPECT_DOUBLE_EQ(a[0], 1.0 + 0.5 * 2.0);
  EXPECT_DOUBLE_EQ(a[1], 1.0);
  EXPECT_DOUBLE_EQ(a[2], 2.0);
}

struct GradInstance {
  DenseMatrix weights;
  std::vector<CandidateSet> sets;
  ContextSet contexts;
  LabelSets labels;
  std::vector<std::size_t> batch;
  DenseMatrix gumbel;
};

GradInstance grad_instance(Rng& rng, std::size_t r, std::size_t d, std::size_t vocab, std::size_t n,
                           std::size_t k) {
  GradInstance g;
  g.weights = random_matrix(r, d, rng);
  g.sets = testing::random_sets(r, vocab, 0.4, rng);
  g.contexts = testing::random_contexts(n, d, rng);
  std::vector<LabelId> flat;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<LabelId> perm(vocab);
    std::iota(perm.begin(), perm.end(), LabelId{0});
    rng.shuffle(std::span<LabelId>(perm));
    flat.insert(flat.end(), perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(k));
  }
  g.labels = LabelSets(k, flat);
  for (std::size_t i = 0; i < n; ++i) g.batch.push_back(i);
  g.gumbel = DenseMatrix(n, r);
  for (double& v : g.gumbel.data()) v = rng.gumbel();
  return g;
}

double max_fd_error(const GradInstance& g, const TrainConfig& cfg, double moving) {
  const BatchGradient bg = batch_loss_and_grad(g.weights, g.sets, g.contexts, g.labels, g.batch,
                                               g.gumbel, moving, cfg);
  const double eps = 1e-5;
  double worst = 0.0;
  DenseMatrix w = g.weights;
  for (std::size_t m = 0; m < w.rows(); ++m) {
    for (std::size_t j = 0; j < w.cols(); ++j) {
      const double keep = w(m, j);
      w(m, j) = keep + eps;
      const double up = oracle::soft_surrogate(w, g.sets, g.contexts, g.labels, g.batch, g.gumbel,
                                               bg.budget_active, cfg);
      w(m, j) = keep - eps;
      const double down = oracle::soft_surrogate(w, g.sets, g.contexts, g.labels, g.batch, g.gumbel,
                                                 bg.budget_active, cfg);
      w(m, j) = keep;
      const double fd = (up - down) / (2.0 * eps);
      const double an = bg.grad(m, j);
      worst = std::max(worst, std::abs(an - fd) / std::max(1e-6, std::max(std::abs(an), std::abs(fd))));
    }
  }
  return worst;
}

TEST(BatchGradient, ToyMatchesFiniteDifferences) {
  Rng rng(4);
  const GradInstance g = grad_instance(rng, 2, 2, 4, 3, 2);
  TrainConfig cfg;
  cfg.lambda = 0.1;
  cfg.budget = 2.0;
  EXPECT_LE(max_fd_error(g, cfg, 0.0), 1e-4);
  EXPECT_LE(max_fd_error(g, cfg, 10.0), 1e-4);
}

TEST(BatchGradient, RandomInstancesMatchFiniteDifferences) {
  Rng rng(5);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t r = 2 + rng.uniform_index(3);
    const std::size_t d = 1 + rng.uniform_index(8);
    const std::size_t vocab = 4 + rng.uniform_index(13);
    const GradInstance g = grad_instance(rng, r, d, vocab, 1 + rng.uniform_index(6), 1 + rng.uniform_index(3));
    TrainConfig cfg;
    cfg.lambda = 0.05 + 0.5 * rng.uniform_open();
    cfg.gamma = 2.0 * rng.uniform_open();
    cfg.temperature = 0.5 + rng.uniform_open();
    cfg.budget = 3.0;
    const double moving = trial % 2 == 0 ? 10.0 : 0.0;
    EXPECT_LE(max_fd_error(g, cfg, moving), 1e-4) << "trial " << trial;
  }
}

TEST(BatchGradient, EqualCostsGiveZeroGradient) {
  Rng rng(6);
  GradInstance g = grad_instance(rng, 3, 4, 6, 5, 2);
  g.sets.assign(3, CandidateSet(6, {0, 2, 4}));
  TrainConfig cfg;
  cfg.budget = 10.0;
  const BatchGradient bg = batch_loss_and_grad(g.weights, g.sets, g.contexts, g.labels, g.batch,
                                               g.gumbel, 0.0, cfg);
  for (double v : bg.grad.data()) EXPECT_NEAR(v, 0.0, 1e-10);
}

TEST(BatchGradient, GammaZeroLossIsMeanSampledCost) {
  Rng rng(7);
  const GradInstance g = grad_instance(rng, 3, 4, 10, 6, 2);
  TrainConfig cfg;
  cfg.gamma = 0.0;
  cfg.budget = 2.0;
  const BatchGradient bg = batch_loss_and_grad(g.weights, g.sets, g.contexts, g.labels, g.batch,
                                               g.gumbel, 50.0, cfg);
  double want = 0.0;
  for (std::size_t b = 0; b < g.batch.size(); ++b) {
    const DenseVector probs = cluster_probs(g.weights, g.contexts[b]);
    const DenseVector p = gumbel_softmax_sample(probs.span(), g.gumbel.row(b), 1.0);
    const auto a = mismatch_costs(g.sets, g.labels[b], cfg.lambda);
    want += a[straight_through(p.span()).index];
  }
  EXPECT_NEAR(bg.loss, want / 6.0, 1e-12);
}

TrainState initial_state(Rng& rng, std::size_t r, std::size_t d, std::size_t vocab) {
  TrainState s;
  s.weights = random_matrix(r, d, rng);
  s.sets = testing::random_sets(r, vocab, 0.3, rng);
  s.moving_size = 3.0;
  s.rng = Rng(99);
  return s;
}

TEST(SgdEpoch, ZeroLearningRateLeavesWeights) {
  Rng rng(8);
  const GradInstance g = grad_instance(rng, 3, 4, 10, 40, 2);
  TrainState s = initial_state(rng, 3, 4, 10);
  const DenseMatrix before = s.weights;
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.batch_size = 7;
  const TrainState after = sgd_epoch(std::move(s), g.contexts, g.labels, cfg);
  EXPECT_EQ(after.weights, before);
  EXPECT_EQ(after.step, 6u);
}

TEST(SgdEpoch, SingleBatchStepsByLearningRateTimesGradient) {
  Rng rng(9);
  const GradInstance g = grad_instance(rng, 3, 4, 10, 12, 2);
  TrainState s = initial_state(rng, 3, 4, 10);
  TrainConfig cfg;
  cfg.learning_rate = 0.3;
  cfg.batch_size = 64;
  cfg.budget = 5.0;

  // Replay the epoch's draws: one shuffle, then one Gumbel row per sample.
  Rng replay = s.rng;
  std::vector<std::size_t> order(12);
  std::iota(order.begin(), order.end(), std::size_t{0});
  replay.shuffle(std::span<std::size_t>(order));
  DenseMatrix gumbel(12, 3);
  for (double& v : gumbel.data()) v = replay.gumbel();
  const BatchGradient bg = batch_loss_and_grad(s.weights, s.sets, g.contexts, g.labels, order,
                                               gumbel, s.moving_size, cfg);
  const DenseMatrix before = s.weights;
  const double moving_before = s.moving_size;
  const TrainState after = sgd_epoch(std::move(s), g.contexts, g.labels, cfg);
  for (std::size_t j = 0; j < before.data().size(); ++j)
    EXPECT_EQ(after.weights.data()[j], before.data()[j] - 0.3 * bg.grad.data()[j]);
  EXPECT_DOUBLE_EQ(after.moving_size, 0.9 * moving_before + 0.1 * bg.sampled_size);
}

TEST(SgdEpoch, LearnsSeparableClusters) {
  // Four bundles on orthogonal axes, each owning its own labels; the sets
  // are held at the planted subsets and only V is learned.
  const std::size_t r = 4, d = 8, vocab = 16, n = 400;
  Rng rng(10);
  DenseMatrix h(n, d);
  std::vector<LabelId> flat;
  std::vector<CandidateSet> sets;
  for (std::size_t t = 0; t < r; ++t)
    sets.emplace_back(vocab, std::vector<LabelId>{LabelId(4 * t), LabelId(4 * t + 1), LabelId(4 * t + 2),
                                                   LabelId(4 * t + 3)});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t t = i % r;
    for (std::size_t j = 0; j < d; ++j) h(i, j) = 0.1 * rng.normal();
    h(i, 2 * t) += 1.0;
    for (LabelId s = 0; s < 2; ++s) flat.push_back(static_cast<LabelId>(4 * t + s));
  }
  const ContextSet ctx(std::move(h));
  const LabelSets y(2, flat);
  TrainState s;
  s.weights = random_matrix(r, d, rng, 0.1);
  s.sets = sets;
  s.moving_size = 4.0;
  s.rng = Rng(11);
  TrainConfig cfg;
  cfg.budget = 4.0;
  cfg.learning_rate = 0.5;
  cfg.batch_size = 16;

  auto hard_loss = [&](const DenseMatrix& w) {
    const auto a = assign_clusters(w, ctx);
    return assignment_loss(collect_stats(a, y, r, vocab), sets, cfg.lambda);
  };
  const double start = hard_loss(s.weights);
  ASSERT_GT(start, 100.0);
  for (int e = 0; e < 20; ++e) s = sgd_epoch(std::move(s), ctx, y, cfg);
  EXPECT_LE(hard_loss(s.weights), 0.5 * start);
}

TEST(SgdEpoch, NonFiniteGradientNamesBatch) {
  Rng rng(12);
  GradInstance g = grad_instance(rng, 2, 2, 4, 4, 1);
  DenseMatrix poisoned = g.contexts.matrix();
  poisoned(2, 1) = std::numeric_limits<double>::quiet_NaN();
  g.contexts = ContextSet(std::move(poisoned));
  TrainState s = initial_state(rng, 2, 2, 4);
  s.sets = {CandidateSet::all(4), CandidateSet(4)};
  TrainConfig cfg;
  cfg.budget = 2.0;
  cfg.batch_size = 1;
  try {
    s = sgd_epoch(std::move(s), g.contexts, g.labels, cfg);
    FAIL() << "expected a throw";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("non-finite gradient in batch"), std::string::npos) << e.what();
  }
}

TEST(SgdEpoch, OverflowingStepIsReported) {
  DenseMatrix w(2, 2);
  w(0, 0) = 0.3;
  w(1, 1) = -0.2;
  const ContextSet ctx(DenseMatrix(4, 2, 0.7));
  const LabelSets y(1, std::vector<LabelId>{0, 1, 2, 3});
  TrainState s;
  s.weights = w;
  s.sets = {CandidateSet::all(4), CandidateSet(4)};
  s.moving_size = 3.0;
  s.rng = Rng(99);
  TrainConfig cfg;
  cfg.budget = 2.0;
  cfg.learning_rate = 1e308;
  cfg.batch_size = 1;
  EXPECT_THROW(s = sgd_epoch(std::move(s), ctx, y, cfg), std::runtime_error);
}

TEST(TrainConfig, ValidateNamesField) {
  TrainConfig c;
  c.lambda = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.temperature = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.ema_decay = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.gamma = -1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_NO_THROW(TrainConfig{}.validate());
}

class TrainOnPlanted : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    SynthSpec spec;
    spec.vocab_size = 600;
    spec.dim = 16;
    spec.contexts = 3000;
    spec.planted_clusters = 6;
    spec.subset_size = 25;
    spec.seed = 5;
    data_ = new PlantedData(generate_synthetic(spec));
    labels_ = new LabelSets(label_contexts(data_->layer, data_->contexts));
  }
  static void TearDownTestSuite() {
    delete data_;
    delete labels_;
  }
  static TrainConfig config() {
    TrainConfig c;
    c.clusters = 8;
    c.budget = 40.0;
    c.outer_iters = 5;
    c.seed = 3;
    return c;
  }
  static PlantedData* data_;
  static LabelSets* labels_;
};
PlantedData* TrainOnPlanted::data_ = nullptr;
LabelSets* TrainOnPlanted::labels_ = nullptr;

TEST_F(TrainOnPlanted, ZeroIterationsIsKmeansPlusOneKnapsack) {
  TrainConfig c = config();
  c.outer_iters = 0;
  const TrainResult got = train_with_labels(data_->contexts, *labels_, 600, c);

  Rng master(c.seed);
  Rng km = master.split();
  const KmeansState st = spherical_kmeans(data_->contexts, c.clusters, km, c.kmeans_iters);
  const auto a = assign_clusters(st.centroids, data_->contexts);
  const auto sets = greedy_knapsack(collect_stats(a, *labels_, c.clusters, 600), c.budget, c.lambda, 5);
  EXPECT_EQ(got.model.cluster_weights(), st.centroids);
  EXPECT_EQ(got.model.candidate_sets(), sets);
  EXPECT_EQ(got.log.size(), 1u);
}

TEST_F(TrainOnPlanted, SingleClusterIsGlobalShortlist) {
  TrainConfig c = config();
  c.clusters = 1;
  c.budget = 12.0;
  const TrainResult got = train_with_labels(data_->contexts, *labels_, 600, c);
  ClusterStats st(1, 600);
  for (std::size_t i = 0; i < labels_->size(); ++i) st.add(0, (*labels_)[i]);
  std::vector<LabelId> ids(600);
  std::iota(ids.begin(), ids.end(), LabelId{0});
  std::stable_sort(ids.begin(), ids.end(),
                   [&](LabelId a, LabelId b) { return st.pos_count(0, a) > st.pos_count(0, b); });
  ids.resize(12);
  EXPECT_EQ(got.model.candidates(0), CandidateSet(600, ids));
}

TEST_F(TrainOnPlanted, KnapsackHalfStepsNeverIncreaseLoss) {
  const TrainResult got = train_with_labels(data_->contexts, *labels_, 600, config());
  ASSERT_EQ(got.log.size(), 11u);
  for (std::size_t i = 2; i < got.log.size(); i += 2)
    EXPECT_LE(got.log[i].mismatch_loss, got.log[i - 1].mismatch_loss) << "half-step " << i;
  for (std::size_t i = 0; i < got.log.size(); i += 2)
    EXPECT_LE(got.log[i].hard_size, config().budget) << "half-step " << i;
  EXPECT_LE(got.log.back().moving_size, config().budget + 1.0);
}

TEST_F(TrainOnPlanted, ReturnsLowestLossPostKnapsackIterate) {
  const TrainResult got = train_with_labels(data_->contexts, *labels_, 600, config());
  double best = got.log[0].mismatch_loss;
  for (std::size_t i = 0; i < got.log.size(); i += 2) best = std::min(best, got.log[i].mismatch_loss);
  EXPECT_EQ(got.final_loss, best);
  EXPECT_EQ(got.best_step % 2, 0u);
  EXPECT_EQ(got.log[got.best_step].mismatch_loss, best);
  EXPECT_LE(got.final_loss, got.log[0].mismatch_loss);
  const auto a = assign_clusters(got.model.cluster_weights(), data_->contexts);
  EXPECT_EQ(a, got.assignments);
  const ClusterStats stats = collect_stats(a, *labels_, config().clusters, 600);
  EXPECT_DOUBLE_EQ(assignment_loss(stats, got.model.candidate_sets(), config().lambda), best);
}

TEST_F(TrainOnPlanted, DeterministicPerSeed) {
  const TrainResult a = train_with_labels(data_->contexts, *labels_, 600, config());
  const TrainResult b = train_with_labels(data_->contexts, *labels_, 600, config());
  EXPECT_EQ(a.model.cluster_weights(), b.model.cluster_weights());
  EXPECT_EQ(a.model.candidate_sets(), b.model.candidate_sets());
  std::ostringstream la, lb;
  write_train_log(la, a.log);
  write_train_log(lb, b.log);
  EXPECT_EQ(la.str(), lb.str());
}

TEST_F(TrainOnPlanted, ReachesHighPrecisionWithinTwiceSubsetSize) {
  TrainConfig c = config();
  c.probe_size = 500;
  const TrainResult got = train_with_labels(data_->contexts, *labels_, 600, c);
  EXPECT_GE(got.log.back().probe_p5, 0.95);
  EXPECT_LE(got.log.back().hard_size, 2.0 * 25.0);
}

TEST_F(TrainOnPlanted, LogHasHeaderAndOneRowPerHalfStep) {
  const TrainResult got = train_with_labels(data_->contexts, *labels_, 600, config());
  std::ostringstream out;
  write_train_log(out, got.log);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "# step\tmismatch_loss\tmean_size\tmoving_size\tprobe_p5");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, got.log.size());
}

}  // namespace
}  // namespace l2s
