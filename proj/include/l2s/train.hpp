#pragma once

// End-to-end training of the screening model. The cluster weights are
// learned by SGD through a Gumbel-softmax relaxation of the cluster choice
// with a straight-through estimator; the candidate sets are re-solved by
// the greedy knapsack with the weights held fixed. The two steps alternate.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "l2s/rng.hpp"
#include "l2s/screening.hpp"
#include "l2s/softmax.hpp"
#include "l2s/tensor.hpp"

namespace l2s {

struct TrainConfig {
  std::size_t clusters = 100;
  double budget = 60.0;          // target mean candidate-set size
  double lambda = 0.0003;        // weight of wasted candidates
  double gamma = 10.0;           // budget penalty
  std::size_t outer_iters = 20;  // alternations; 0 gives the k-means baseline
  std::size_t epochs_per_iter = 1;
  double learning_rate = 0.05;   // decays as lr / sqrt(step)
  std::size_t batch_size = 64;
  double temperature = 1.0;
  double ema_decay = 0.9;
  std::uint64_t seed = 0;
  std::size_t top_k = 5;         // ground-truth label count per context
  std::size_t kmeans_iters = 50;
  std::size_t probe_size = 0;    // trailing contexts held out for the log

  /// Throws std::invalid_argument naming the first bad field.
  void validate() const;
};

struct TrainState {
  DenseMatrix weights;              // r x d cluster weights
  std::vector<CandidateSet> sets;   // fixed during SGD
  double moving_size = 0.0;         // moving average of the sampled candidate size
  std::uint64_t step = 0;           // SGD batches taken so far
  Rng rng{0};
};

/// P(t | h): softmax over t of v_t . h.
DenseVector cluster_probs(const DenseMatrix& weights, std::span<const double> h);

/// Relaxed sample p_t proportional to exp((log probs_t + g_t) / tau). Zero
/// probabilities are clamped to 1e-300 before the log.
DenseVector gumbel_softmax_sample(std::span<const double> probs, std::span<const double> g,
                                  double temperature);

struct StraightThrough {
  DenseVector hard;  // one_hot(argmax p)
  std::size_t index = 0;
};

/// Forward value of the straight-through estimator. The backward pass in
/// batch_loss_and_grad attaches gradients to the soft vector only.
StraightThrough straight_through(std::span<const double> p);

/// a_t = (k - hits_t) + lambda * (|c_t| - hits_t) for every cluster t, where
/// hits_t counts the context's labels inside c_t.
std::vector<double> mismatch_costs(std::span<const CandidateSet> sets,
                                   std::span<const LabelId> labels, double lambda);

struct BatchGradient {
  double loss = 0.0;            // mean sampled mismatch + gamma * max(0, moving - B)
  DenseMatrix grad;             // d loss / d weights, r x d
  double sampled_size = 0.0;    // mean |c_t*| of the sampled clusters
  bool budget_active = false;
};

/// Loss and gradient for one mini-batch. `gumbel` holds one row of r draws
/// per batch entry. The penalty gradient flows through the batch-mean
/// candidate size and is gated on `moving_size > budget`.
BatchGradient batch_loss_and_grad(const DenseMatrix& weights, std::span<const CandidateSet> sets,
                                  const ContextSet& contexts, const LabelSets& labels,
                                  std::span<const std::size_t> batch, const DenseMatrix& gumbel,
                                  double moving_size, const TrainConfig& config);

/// One shuffled pass of mini-batch SGD over all contexts with the sets held
/// fixed. Fresh Gumbel noise per sample.
TrainState sgd_epoch(TrainState state, const ContextSet& contexts, const LabelSets& labels,
                     const TrainConfig& config);

struct TrainLogRow {
  std::size_t step = 0;     // 0 = initial sets; odd = after SGD; even = after knapsack
  double mismatch_loss = 0.0;  // summed mismatch loss under hard assignments
  double hard_size = 0.0;   // mean |C(h)| under hard assignments
  double moving_size = 0.0;
  double probe_p5 = 0.0;    // precision@k on the probe slice
  bool kept_previous_sets = false;
};

struct TrainResult {
  ScreeningModel model;
  std::vector<TrainLogRow> log;
  std::vector<ClusterId> assignments;  // hard assignments under the returned model
  double final_loss = 0.0;             // loss of the returned model
  std::size_t best_step = 0;           // log step the returned model comes from
};

/// Alternating minimization on precomputed labels. Returns the
/// post-knapsack iterate with the lowest mismatch loss. The last `probe_size`
/// contexts are held out from training and only scored in the log.
TrainResult train_with_labels(const ContextSet& contexts, const LabelSets& labels,
                              std::size_t vocab_size, const TrainConfig& config);

/// Labels the contexts with the exact softmax, then trains.
TrainResult train(const ContextSet& contexts, const SoftmaxLayer& layer, const TrainConfig& config);

/// Tab-separated log, one row per half-step, with a leading '#' header.
void write_train_log(std::ostream& out, std::span<const TrainLogRow> rows);

}  // namespace l2s
