#include "l2s/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>

#include "l2s/svd.hpp"

namespace l2s {

namespace {

TopKResult prefix(const TopKResult& r, std::size_t k) {
  TopKResult out;
  out.indices.assign(r.indices.begin(), r.indices.begin() + static_cast<std::ptrdiff_t>(k));
  out.scores.assign(r.scores.begin(), r.scores.begin() + static_cast<std::ptrdiff_t>(k));
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Keeps the timed loops from being optimized away.
volatile std::uint64_t g_sink = 0;

template <class Fn>
double time_pass_ns(const ContextSet& contexts, Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  std::uint64_t acc = 0;
  for (std::size_t i = 0; i < contexts.size(); ++i) acc += fn(contexts[i]);
  const auto stop = std::chrono::steady_clock::now();
  g_sink = g_sink + acc;
  return std::chrono::duration<double, std::nano>(stop - start).count();
}

double log_sum_exp(std::span<const double> x) {
  const double m = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

std::string fmt(double v, const char* f = "%.10g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

double precision_at_k(const TopKResult& approx, const TopKResult& exact, std::size_t k) {
  if (k < 1 || approx.k() < k || exact.k() < k) {
    throw std::invalid_argument("precision_at_k: need 1 <= k <= result sizes (k=" +
                                std::to_string(k) + ")");
  }
  std::vector<LabelId> a(approx.indices.begin(), approx.indices.begin() + static_cast<std::ptrdiff_t>(k));
  std::vector<LabelId> e(exact.indices.begin(), exact.indices.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(a.begin(), a.end());
  std::sort(e.begin(), e.end());
  std::vector<LabelId> both;
  std::set_intersection(a.begin(), a.end(), e.begin(), e.end(), std::back_inserter(both));
  return static_cast<double>(both.size()) / static_cast<double>(k);
}

double BenchReport::precision_at(std::size_t k) const {
  for (std::size_t i = 0; i < ks.size(); ++i)
    if (ks[i] == k) return precision[i];
  throw std::invalid_argument("BenchReport: k=" + std::to_string(k) + " was not benchmarked");
}

BenchReport run_bench(const ScreeningModel& model, const SoftmaxLayer& layer,
                      const ContextSet& contexts, const BenchOptions& options) {
  if (model.vocab_size() != layer.vocab_size() || model.dim() != layer.dim() ||
      contexts.dim() != layer.dim()) {
    throw std::invalid_argument("run_bench: model " + shape_string(model.vocab_size(), model.dim()) +
                                ", layer " + shape_string(layer.vocab_size(), layer.dim()) +
                                ", contexts of dim " + std::to_string(contexts.dim()));
  }
  if (contexts.size() == 0) throw std::invalid_argument("run_bench: no contexts");
  if (options.ks.empty()) throw std::invalid_argument("run_bench: empty k list");
  if (options.repetitions < 1) throw std::invalid_argument("run_bench: repetitions must be >= 1");
  const std::size_t kmax = *std::max_element(options.ks.begin(), options.ks.end());
  if (options.ks.front() < 1 || *std::min_element(options.ks.begin(), options.ks.end()) < 1 ||
      kmax > layer.vocab_size()) {
    throw std::invalid_argument("run_bench: every k must lie in [1, L]");
  }

  BenchReport rep;
  rep.ks = options.ks;
  rep.precision.assign(options.ks.size(), 0.0);
  rep.queries = contexts.size();
  rep.clusters = model.clusters();
  rep.vocab_size = layer.vocab_size();

  // Accuracy and counters, untimed.
  InnerProductCounter exact_count;
  InnerProductCounter screened_count;
  std::uint64_t size_sum = 0;
  std::size_t fallbacks = 0;
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    const auto h = contexts[i];
    const TopKResult exact = exact_topk(layer, h, kmax, &exact_count);
    for (std::size_t j = 0; j < options.ks.size(); ++j) {
      const std::size_t k = options.ks[j];
      const bool top = k == kmax;
      const ScreenedPrediction p = screened_topk(model, layer, h, k, top ? &screened_count : nullptr);
      rep.precision[j] += precision_at_k(p.topk, prefix(exact, k), k);
      if (top) {
        size_sum += p.candidate_count;
        fallbacks += p.fallback ? 1 : 0;
      }
    }
  }
  const double n = static_cast<double>(contexts.size());
  for (double& p : rep.precision) p /= n;
  rep.mean_candidate_size = static_cast<double>(size_sum) / n;
  rep.fallback_rate = static_cast<double>(fallbacks) / n;
  rep.logit_count_speedup = static_cast<double>(rep.vocab_size) /
                            (static_cast<double>(rep.clusters) + rep.mean_candidate_size);
  rep.counter_speedup =
      static_cast<double>(exact_count.count) / static_cast<double>(screened_count.count);

  auto exact_fn = [&](std::span<const double> h) -> std::uint64_t {
    return exact_topk(layer, h, kmax).indices[0];
  };
  auto screened_fn = [&](std::span<const double> h) -> std::uint64_t {
    return screened_topk(model, layer, h, kmax).topk.indices[0];
  };
  time_pass_ns(contexts, exact_fn);
  time_pass_ns(contexts, screened_fn);
  std::vector<double> exact_ns;
  std::vector<double> screened_ns;
  for (std::size_t rep_i = 0; rep_i < options.repetitions; ++rep_i) {
    exact_ns.push_back(time_pass_ns(contexts, exact_fn) / n);
    screened_ns.push_back(time_pass_ns(contexts, screened_fn) / n);
  }
  rep.exact_time_ns = median(exact_ns);
  rep.screened_time_ns = median(screened_ns);
  rep.wall_speedup = rep.exact_time_ns / std::max(rep.screened_time_ns, 1e-9);
  return rep;
}

void write_report(std::ostream& out, const BenchReport& r) {
  out << "queries\t" << r.queries << '\n';
  out << "clusters\t" << r.clusters << '\n';
  out << "vocab_size\t" << r.vocab_size << '\n';
  for (std::size_t j = 0; j < r.ks.size(); ++j)
    out << "p_at_" << r.ks[j] << '\t' << fmt(r.precision[j], "%.6f") << '\n';
  out << "mean_candidate_size\t" << fmt(r.mean_candidate_size) << '\n';
  out << "fallback_rate\t" << fmt(r.fallback_rate, "%.6f") << '\n';
  out << "logit_count_speedup\t" << fmt(r.logit_count_speedup, "%.6f") << '\n';
  out << "counter_speedup\t" << fmt(r.counter_speedup, "%.6f") << '\n';
  out << "timing.exact_time_ns\t" << fmt(r.exact_time_ns, "%.1f") << '\n';
  out << "timing.screened_time_ns\t" << fmt(r.screened_time_ns, "%.1f") << '\n';
  out << "timing.speedup\t" << fmt(r.wall_speedup, "%.3f") << '\n';
}

std::vector<SweepRow> cluster_sweep(const ContextSet& train_contexts, const LabelSets& labels,
                                    const SoftmaxLayer& layer, const ContextSet& eval_contexts,
                                    std::span<const std::size_t> cluster_counts,
                                    double compute_total, const TrainConfig& base,
                                    const BenchOptions& options) {
  std::vector<SweepRow> rows;
  for (std::size_t r : cluster_counts) {
    if (r > train_contexts.size()) {
      throw std::invalid_argument("cluster_sweep: r=" + std::to_string(r) + " exceeds N=" +
                                  std::to_string(train_contexts.size()));
    }
    TrainConfig cfg = base;
    cfg.clusters = r;
    cfg.budget = compute_total - static_cast<double>(r);
    if (!(cfg.budget > 0.0)) {
      throw std::invalid_argument("cluster_sweep: compute total " + fmt(compute_total) +
                                  " leaves no budget at r=" + std::to_string(r));
    }
    const TrainResult trained = train_with_labels(train_contexts, labels, layer.vocab_size(), cfg);
    rows.push_back({r, cfg.budget, run_bench(trained.model, layer, eval_contexts, options)});
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows) {
  out << "r,budget";
  if (!rows.empty())
    for (std::size_t k : rows.front().report.ks) out << ",p_at_" << k;
  out << ",mean_candidate_size,logit_count_speedup,screened_time_ns\n";
  for (const auto& row : rows) {
    out << row.clusters << ',' << fmt(row.budget);
    for (double p : row.report.precision) out << ',' << fmt(p, "%.6f");
    out << ',' << fmt(row.report.mean_candidate_size) << ','
        << fmt(row.report.logit_count_speedup, "%.6f") << ','
        << fmt(row.report.screened_time_ns, "%.1f") << '\n';
  }
}

LowRankLogits::LowRankLogits(const SoftmaxLayer& layer, std::size_t rank) : bias_(layer.bias()) {
  const SvdResult svd = truncated_svd(layer.weights(), rank);
  a_ = svd.u;
  for (std::size_t s = 0; s < a_.rows(); ++s)
    for (std::size_t j = 0; j < rank; ++j) a_(s, j) *= svd.s[j];
  b_ = svd.vt;
}

DenseVector LowRankLogits::operator()(std::span<const double> h) const {
  std::vector<double> proj(b_.rows());
  for (std::size_t j = 0; j < b_.rows(); ++j) proj[j] = dot(b_.row(j), h);
  DenseVector out(a_.rows());
  for (std::size_t s = 0; s < a_.rows(); ++s) out[s] = dot(a_.row(s), proj) + bias_[s];
  return out;
}

PerplexityReport hybrid_perplexity(const ScreeningModel& model, const SoftmaxLayer& layer,
                                   std::size_t rank, const EvalStream& stream) {
  const std::size_t full = std::min(layer.vocab_size(), layer.dim());
  if (rank < 1 || rank > full) {
    throw std::invalid_argument("hybrid_perplexity: rank " + std::to_string(rank) +
                                " outside [1, " + std::to_string(full) + "]");
  }
  if (stream.targets.size() != stream.contexts.size() || stream.contexts.size() == 0) {
    throw std::invalid_argument("hybrid_perplexity: need one target per context, at least one");
  }
  for (std::size_t i = 0; i < stream.targets.size(); ++i) {
    if (stream.targets[i] >= layer.vocab_size()) {
      throw std::invalid_argument("hybrid_perplexity: target " + std::to_string(stream.targets[i]) +
                                  " at position " + std::to_string(i) + " is >= L");
    }
  }
  const LowRankLogits approx(layer, rank);
  double exact_nll = 0.0;
  double hybrid_nll = 0.0;
  for (std::size_t i = 0; i < stream.contexts.size(); ++i) {
    const auto h = stream.contexts[i];
    const LabelId y = stream.targets[i];
    const DenseVector exact = logits(layer, h);
    DenseVector mixed = approx(h);
    const CandidateSet& c = model.candidates(assign_cluster(model, h));
    for (LabelId s : c.members()) mixed[s] = exact[s];
    exact_nll += log_sum_exp(exact.span()) - exact[y];
    hybrid_nll += log_sum_exp(mixed.span()) - mixed[y];
  }
  const double n = static_cast<double>(stream.contexts.size());
  PerplexityReport rep;
  rep.rank = rank;
  rep.exact_ppl = std::exp(exact_nll / n);
  rep.hybrid_ppl = std::exp(hybrid_nll / n);
  rep.gap = std::abs(rep.hybrid_ppl - rep.exact_ppl) / rep.exact_ppl;
  return rep;
}

void write_perplexity(std::ostream& out, const PerplexityReport& r) {
  out << "svd_rank\t" << r.rank << '\n';
  out << "exact_ppl\t" << fmt(r.exact_ppl) << '\n';
  out << "hybrid_ppl\t" << fmt(r.hybrid_ppl) << '\n';
  out << "relative_gap\t" << fmt(r.gap) << '\n';
}

}  // namespace l2s
