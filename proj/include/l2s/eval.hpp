#pragma once

// Precision@k, timing and cost counters for screened prediction against
// the exact softmax, the cluster-count sweep, and perplexity with low-rank
// logits for labels outside the candidate set.

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "l2s/io.hpp"
#include "l2s/screening.hpp"
#include "l2s/softmax.hpp"
#include "l2s/tensor.hpp"
#include "l2s/train.hpp"

namespace l2s {

/// |top-k of approx ∩ top-k of exact| / k. Both need at least k entries.
double precision_at_k(const TopKResult& approx, const TopKResult& exact, std::size_t k);

struct BenchOptions {
  std::vector<std::size_t> ks{1, 5};
  std::size_t repetitions = 5;
};

struct BenchReport {
  std::vector<std::size_t> ks;
  std::vector<double> precision;      // parallel to ks
  std::size_t queries = 0;
  std::size_t clusters = 0;
  std::size_t vocab_size = 0;
  double mean_candidate_size = 0.0;
  double fallback_rate = 0.0;         // at the largest k
  double logit_count_speedup = 0.0;   // L / (r + mean size)
  double counter_speedup = 0.0;       // measured exact / screened inner products
  double exact_time_ns = 0.0;         // per query, median over passes
  double screened_time_ns = 0.0;
  double wall_speedup = 0.0;

  /// Precision for a k that was benchmarked; throws otherwise.
  double precision_at(std::size_t k) const;
};

/// Scores every context with both predictors. One untimed warm-up pass,
/// then the median per-query time over `repetitions` timed passes. Runs on
/// the calling thread only.
BenchReport run_bench(const ScreeningModel& model, const SoftmaxLayer& layer,
                      const ContextSet& contexts, const BenchOptions& options = {});

/// `name<TAB>value` lines. Wall-clock lines carry a `timing.` prefix so
/// deterministic comparisons can drop them.
void write_report(std::ostream& out, const BenchReport& report);

struct SweepRow {
  std::size_t clusters = 0;
  double budget = 0.0;
  BenchReport report;
};

/// Trains one model per r with budget = compute_total - r, so r + B stays
/// fixed, and benchmarks each on `eval_contexts`.
std::vector<SweepRow> cluster_sweep(const ContextSet& train_contexts, const LabelSets& labels,
                                    const SoftmaxLayer& layer, const ContextSet& eval_contexts,
                                    std::span<const std::size_t> cluster_counts,
                                    double compute_total, const TrainConfig& base,
                                    const BenchOptions& options = {});

/// CSV with a header row; the time column is wall-clock.
void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows);

/// W ~= a * b with a = U diag(s) (L x rank) and b = V^T (rank x d).
class LowRankLogits {
 public:
  LowRankLogits(const SoftmaxLayer& layer, std::size_t rank);

  std::size_t rank() const { return b_.rows(); }
  /// (W~ h + b) for every label.
  DenseVector operator()(std::span<const double> h) const;

 private:
  DenseMatrix a_;
  DenseMatrix b_;
  DenseVector bias_;
};

struct PerplexityReport {
  double exact_ppl = 0.0;
  double hybrid_ppl = 0.0;
  std::size_t rank = 0;
  double gap = 0.0;  // |hybrid - exact| / exact
};

/// Exact logits inside C(h), rank-truncated logits outside it, softmax over
/// the combined vector; ppl = exp(mean NLL of the targets). Throws on a
/// target id >= L or a rank outside [1, min(L, d)].
PerplexityReport hybrid_perplexity(const ScreeningModel& model, const SoftmaxLayer& layer,
                                   std::size_t rank, const EvalStream& stream);

void write_perplexity(std::ostream& out, const PerplexityReport& report);

}  // namespace l2s
