#include "l2s/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

#include "l2s/kmeans.hpp"
#include "l2s/knapsack.hpp"

namespace l2s {

namespace {

[[noreturn]] void bad_config(const std::string& what) {
  throw std::invalid_argument("TrainConfig: " + what);
}

std::vector<double> relaxed_from_log_probs(std::span<const double> log_probs,
                                           std::span<const double> g, double temperature) {
  std::vector<double> z(log_probs.size());
  for (std::size_t t = 0; t < z.size(); ++t) z[t] = (log_probs[t] + g[t]) / temperature;
  const double peak = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double& v : z) {
    v = std::exp(v - peak);
    total += v;
  }
  for (double& v : z) v /= total;
  return z;
}

std::vector<double> log_softmax(std::span<const double> scores) {
  const double peak = *std::max_element(scores.begin(), scores.end());
  double total = 0.0;
  for (double s : scores) total += std::exp(s - peak);
  const double lse = peak + std::log(total);
  std::vector<double> out(scores.size());
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = scores[t] - lse;
  return out;
}

std::size_t argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t t = 1; t < v.size(); ++t)
    if (v[t] > v[best]) best = t;
  return best;
}

LabelSets slice_labels(const LabelSets& labels, std::size_t begin, std::size_t end) {
  const auto& flat = labels.flat();
  return LabelSets(labels.k(),
                   std::vector<LabelId>(flat.begin() + static_cast<std::ptrdiff_t>(begin * labels.k()),
                                        flat.begin() + static_cast<std::ptrdiff_t>(end * labels.k())));
}

// Screened top-k precision without the layer: labels of y inside C(h) rank
// above every other member of C(h), so precision@k is |y intersect C(h)| / k.
double coverage_precision(const DenseMatrix& weights, std::span<const CandidateSet> sets,
                          const ContextSet& contexts, const LabelSets& labels) {
  if (contexts.size() == 0) return 0.0;
  const auto clusters = assign_clusters(weights, contexts);
  const double k = static_cast<double>(labels.k());
  double total = 0.0;
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    const CandidateSet& c = sets[clusters[i]];
    if (c.size() < labels.k()) {
      total += 1.0;
      continue;
    }
    std::size_t hits = 0;
    for (LabelId s : labels[i]) hits += c.contains(s) ? 1 : 0;
    total += static_cast<double>(hits) / k;
  }
  return total / static_cast<double>(contexts.size());
}

}  // namespace

void TrainConfig::validate() const {
  if (clusters < 1) bad_config("clusters must be >= 1");
  if (!(lambda > 0.0 && lambda < 1.0)) bad_config("lambda must lie in (0, 1)");
  if (!(gamma >= 0.0)) bad_config("gamma must be >= 0");
  if (!(temperature > 0.0)) bad_config("temperature must be > 0");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) bad_config("ema_decay must lie in [0, 1)");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) bad_config("learning_rate must be >= 0");
  if (batch_size < 1) bad_config("batch_size must be >= 1");
  if (top_k < 1) bad_config("top_k must be >= 1");
  if (kmeans_iters < 1) bad_config("kmeans_iters must be >= 1");
  if (!(budget >= static_cast<double>(top_k))) {
    bad_config("budget " + std::to_string(budget) + " is below top_k " + std::to_string(top_k));
  }
}

DenseVector cluster_probs(const DenseMatrix& weights, std::span<const double> h) {
  if (weights.cols() != h.size()) {
    throw std::invalid_argument("cluster_probs: weights " +
                                shape_string(weights.rows(), weights.cols()) +
                                " vs context of length " + std::to_string(h.size()));
  }
  std::vector<double> scores(weights.rows());
  for (std::size_t t = 0; t < scores.size(); ++t) scores[t] = dot(weights.row(t), h);
  return probabilities(scores);
}

DenseVector gumbel_softmax_sample(std::span<const double> probs, std::span<const double> g,
                                  double temperature) {
  if (probs.size() != g.size() || probs.empty()) {
    throw std::invalid_argument("gumbel_softmax_sample: " + std::to_string(probs.size()) +
                                " probabilities vs " + std::to_string(g.size()) + " draws");
  }
  if (!(temperature > 0.0)) throw std::invalid_argument("gumbel_softmax_sample: temperature <= 0");
  std::vector<double> log_probs(probs.size());
  for (std::size_t t = 0; t < probs.size(); ++t) log_probs[t] = std::log(std::max(probs[t], 1e-300));
  return DenseVector(relaxed_from_log_probs(log_probs, g, temperature));
}

StraightThrough straight_through(std::span<const double> p) {
  if (p.empty()) throw std::invalid_argument("straight_through: empty input");
  StraightThrough out;
  out.index = argmax_lowest(p);
  out.hard = DenseVector(p.size());
  out.hard[out.index] = 1.0;
  return out;
}

std::vector<double> mismatch_costs(std::span<const CandidateSet> sets,
                                   std::span<const LabelId> labels, double lambda) {
  std::vector<double> a(sets.size());
  const auto k = static_cast<double>(labels.size());
  for (std::size_t t = 0; t < sets.size(); ++t) {
    std::size_t hits = 0;
    for (LabelId s : labels) hits += sets[t].contains(s) ? 1 : 0;
    const auto h = static_cast<double>(hits);
    a[t] = (k - h) + lambda * (static_cast<double>(sets[t].size()) - h);
  }
  return a;
}

BatchGradient batch_loss_and_grad(const DenseMatrix& weights, std::span<const CandidateSet> sets,
                                  const ContextSet& contexts, const LabelSets& labels,
                                  std::span<const std::size_t> batch, const DenseMatrix& gumbel,
                                  double moving_size, const TrainConfig& config) {
  const std::size_t r = weights.rows();
  if (batch.empty()) throw std::invalid_argument("batch_loss_and_grad: empty batch");
  if (sets.size() != r || gumbel.rows() != batch.size() || gumbel.cols() != r) {
    throw std::invalid_argument("batch_loss_and_grad: " + std::to_string(r) + " clusters, " +
                                std::to_string(sets.size()) + " sets, gumbel " +
                                shape_string(gumbel.rows(), gumbel.cols()) + " for batch of " +
                                std::to_string(batch.size()));
  }
  if (contexts.dim() != weights.cols()) {
    throw std::invalid_argument("batch_loss_and_grad: weights " +
                                shape_string(weights.rows(), weights.cols()) +
                                " vs contexts of dimension " + std::to_string(contexts.dim()));
  }

  const auto n = static_cast<double>(batch.size());
  const double tau = config.temperature;
  BatchGradient out;
  out.grad = DenseMatrix(r, weights.cols());
  out.budget_active = moving_size > config.budget;
  const double size_weight = out.budget_active ? config.gamma : 0.0;

  double mismatch_sum = 0.0;
  double size_sum = 0.0;
  std::vector<double> scores(r);
  std::vector<double> upstream(r);
  std::vector<double> d_log_probs(r);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const std::size_t i = batch[b];
    const auto h = contexts[i];
    for (std::size_t t = 0; t < r; ++t) scores[t] = dot(weights.row(t), h);
    const auto log_probs = log_softmax(scores);
    const auto p = relaxed_from_log_probs(log_probs, gumbel.row(b), tau);
    const std::size_t chosen = straight_through(p).index;
    const auto a = mismatch_costs(sets, labels[i], config.lambda);

    mismatch_sum += a[chosen];
    size_sum += static_cast<double>(sets[chosen].size());

    // Straight-through: the forward value uses one_hot(argmax p), the
    // backward pass differentiates sum_t p_t * upstream_t.
    double mean_upstream = 0.0;
    for (std::size_t t = 0; t < r; ++t) {
      upstream[t] = (a[t] + size_weight * static_cast<double>(sets[t].size())) / n;
      mean_upstream += p[t] * upstream[t];
    }
    double d_sum = 0.0;
    for (std::size_t t = 0; t < r; ++t) {
      d_log_probs[t] = p[t] * (upstream[t] - mean_upstream) / tau;
      d_sum += d_log_probs[t];
    }
    for (std::size_t m = 0; m < r; ++m) {
      const double d_score = d_log_probs[m] - std::exp(log_probs[m]) * d_sum;
      if (d_score == 0.0) continue;
      auto g = out.grad.row(m);
      for (std::size_t j = 0; j < g.size(); ++j) g[j] += d_score * h[j];
    }
  }

  out.sampled_size = size_sum / n;
  out.loss = mismatch_sum / n + config.gamma * std::max(0.0, moving_size - config.budget);
  return out;
}

TrainState sgd_epoch(TrainState state, const ContextSet& contexts, const LabelSets& labels,
                     const TrainConfig& config) {
  if (contexts.size() != labels.size()) {
    throw std::invalid_argument("sgd_epoch: " + std::to_string(contexts.size()) +
                                " contexts vs " + std::to_string(labels.size()) + " label sets");
  }
  const std::size_t r = state.weights.rows();
  std::vector<std::size_t> order(contexts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  state.rng.shuffle(std::span<std::size_t>(order));

  std::size_t batch_index = 0;
  for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size, ++batch_index) {
    const std::size_t end = std::min(order.size(), begin + config.batch_size);
    const std::span<const std::size_t> batch(order.data() + begin, end - begin);
    DenseMatrix gumbel(batch.size(), r);
    for (double& g : gumbel.data()) g = state.rng.gumbel();

    const BatchGradient bg = batch_loss_and_grad(state.weights, state.sets, contexts, labels,
                                                 batch, gumbel, state.moving_size, config);
    if (!all_finite(bg.grad.data())) {
      throw std::runtime_error("sgd_epoch: non-finite gradient in batch " +
                               std::to_string(batch_index) + " (step " +
                               std::to_string(state.step + 1) + ")");
    }
    ++state.step;
    const double lr = config.learning_rate / std::sqrt(static_cast<double>(state.step));
    auto w = state.weights.data();
    const auto g = bg.grad.data();
    for (std::size_t j = 0; j < w.size(); ++j) w[j] -= lr * g[j];
    if (!all_finite(state.weights.data())) {
      throw std::runtime_error("sgd_epoch: non-finite weights after batch " +
                               std::to_string(batch_index) + " (step " +
                               std::to_string(state.step) + ")");
    }
    state.moving_size =
        config.ema_decay * state.moving_size + (1.0 - config.ema_decay) * bg.sampled_size;
  }
  return state;
}

TrainResult train_with_labels(const ContextSet& contexts, const LabelSets& labels,
                              std::size_t vocab_size, const TrainConfig& config) {
  config.validate();
  if (contexts.size() != labels.size()) {
    throw std::invalid_argument("train: " + std::to_string(contexts.size()) + " contexts vs " +
                                std::to_string(labels.size()) + " label sets");
  }
  if (config.probe_size >= contexts.size() ||
      contexts.size() - config.probe_size < config.clusters) {
    throw std::invalid_argument("train: " + std::to_string(contexts.size()) + " contexts minus " +
                                std::to_string(config.probe_size) + " probe leaves fewer than r=" +
                                std::to_string(config.clusters));
  }
  const std::size_t n_train = contexts.size() - config.probe_size;
  const ContextSet train_ctx =
      config.probe_size == 0 ? contexts : contexts.slice(0, n_train);
  const LabelSets train_labels =
      config.probe_size == 0 ? labels : slice_labels(labels, 0, n_train);
  const ContextSet probe_ctx =
      config.probe_size == 0 ? train_ctx : contexts.slice(n_train, contexts.size());
  const LabelSets probe_labels =
      config.probe_size == 0 ? train_labels : slice_labels(labels, n_train, contexts.size());
  const std::size_t r = config.clusters;
  const std::size_t k_seed = labels.k();
  if (config.budget < static_cast<double>(k_seed)) {
    throw std::invalid_argument("train: budget below label count k=" + std::to_string(k_seed));
  }

  Rng master(config.seed);
  Rng kmeans_rng = master.split();
  TrainState state;
  state.rng = master.split();
  state.weights = spherical_kmeans(train_ctx, r, kmeans_rng, config.kmeans_iters).centroids;

  TrainResult result;
  std::size_t step = 0;
  auto record = [&](const ClusterStats& stats, double loss, bool kept) {
    if (std::isnan(loss)) {
      throw std::runtime_error("train: mismatch loss is NaN at half-step " + std::to_string(step));
    }
    TrainLogRow row;
    row.step = step++;
    row.mismatch_loss = loss;
    row.hard_size = static_cast<double>(used_capacity(stats, state.sets)) /
                    static_cast<double>(stats.total());
    row.moving_size = state.moving_size;
    row.probe_p5 = coverage_precision(state.weights, state.sets, probe_ctx, probe_labels);
    row.kept_previous_sets = kept;
    result.log.push_back(row);
  };

  // The all-zero initial sets give every cluster the same cost, so an SGD
  // pass against them has no signal; solve the sets first.
  auto assignments = assign_clusters(state.weights, train_ctx);
  {
    const ClusterStats stats = collect_stats(assignments, train_labels, r, vocab_size);
    state.sets = greedy_knapsack(stats, config.budget, config.lambda, k_seed);
    state.moving_size = static_cast<double>(used_capacity(stats, state.sets)) /
                        static_cast<double>(stats.total());
    record(stats, assignment_loss(stats, state.sets, config.lambda), false);
  }
  // The returned model is the best post-knapsack iterate, so it is never
  // worse than the k-means start on the training objective.
  double best_loss = result.log.back().mismatch_loss;
  std::size_t best_step = 0;
  DenseMatrix best_weights = state.weights;
  std::vector<CandidateSet> best_sets = state.sets;
  std::vector<ClusterId> best_assignments = assignments;

  for (std::size_t iter = 0; iter < config.outer_iters; ++iter) {
    for (std::size_t e = 0; e < config.epochs_per_iter; ++e)
      state = sgd_epoch(std::move(state), train_ctx, train_labels, config);

    assignments = assign_clusters(state.weights, train_ctx);
    const ClusterStats stats = collect_stats(assignments, train_labels, r, vocab_size);
    const double loss_before = assignment_loss(stats, state.sets, config.lambda);
    record(stats, loss_before, false);

    auto candidate = greedy_knapsack(stats, config.budget, config.lambda, k_seed);
    const double loss_after = assignment_loss(stats, candidate, config.lambda);
    // Greedy is not optimal; never trade the current sets for a worse
    // solution while they still fit the budget.
    const bool keep = loss_before < loss_after &&
                      used_capacity(stats, state.sets) <= knapsack_capacity(stats, config.budget);
    if (!keep) state.sets = std::move(candidate);
    record(stats, keep ? loss_before : loss_after, keep);
    if (result.log.back().mismatch_loss < best_loss) {
      best_loss = result.log.back().mismatch_loss;
      best_step = result.log.back().step;
      best_weights = state.weights;
      best_sets = state.sets;
      best_assignments = assignments;
    }
  }

  result.final_loss = best_loss;
  result.best_step = best_step;
  result.assignments = std::move(best_assignments);
  result.model = ScreeningModel(std::move(best_weights), std::move(best_sets), config.budget);
  return result;
}

TrainResult train(const ContextSet& contexts, const SoftmaxLayer& layer, const TrainConfig& config) {
  config.validate();
  const LabelSets labels = label_contexts(layer, contexts, config.top_k);
  return train_with_labels(contexts, labels, layer.vocab_size(), config);
}

void write_train_log(std::ostream& out, std::span<const TrainLogRow> rows) {
  out << "# step\tmismatch_loss\tmean_size\tmoving_size\tprobe_p5\n";
  char buf[256];
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof(buf), "%zu\t%.10g\t%.10g\t%.10g\t%.6f\n", row.step, row.mismatch_loss,
                  row.hard_size, row.moving_size, row.probe_p5);
    out << buf;
  }
}

}  // namespace l2s
