#include "l2s/screening.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>

#include <omp.h>

namespace l2s {

namespace {

ClusterId argmax_cluster(const DenseMatrix& weights, std::span<const double> h) {
  ClusterId best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < weights.rows(); ++t) {
    const double s = dot(weights.row(t), h);
    if (s > best_score) {
      best_score = s;
      best = static_cast<ClusterId>(t);
    }
  }
  return best;
}

void check_context_dim(std::size_t expected, std::size_t got, const char* where) {
  if (expected != got) {
    throw std::invalid_argument(std::string(where) + ": model dimension " +
                                std::to_string(expected) + " vs context of length " +
                                std::to_string(got));
  }
}

}  // namespace

CandidateSet::CandidateSet(std::size_t vocab_size)
    : vocab_(vocab_size), bits_((vocab_size + 63) / 64, 0) {}

CandidateSet::CandidateSet(std::size_t vocab_size, std::vector<LabelId> members)
    : CandidateSet(vocab_size) {
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());
  if (!members.empty() && members.back() >= vocab_size) {
    throw std::invalid_argument("CandidateSet: label " + std::to_string(members.back()) +
                                " outside vocabulary of " + std::to_string(vocab_size));
  }
  for (LabelId s : members) bits_[s >> 6] |= std::uint64_t{1} << (s & 63);
  members_ = std::move(members);
}

CandidateSet CandidateSet::all(std::size_t vocab_size) {
  std::vector<LabelId> ids(vocab_size);
  for (std::size_t s = 0; s < vocab_size; ++s) ids[s] = static_cast<LabelId>(s);
  return CandidateSet(vocab_size, std::move(ids));
}

ScreeningModel::ScreeningModel(DenseMatrix cluster_weights, std::vector<CandidateSet> sets,
                               double budget)
    : weights_(std::move(cluster_weights)), sets_(std::move(sets)), budget_(budget) {
  if (weights_.rows() == 0 || weights_.rows() != sets_.size()) {
    throw std::invalid_argument("ScreeningModel: " + std::to_string(weights_.rows()) +
                                " cluster weight rows vs " + std::to_string(sets_.size()) +
                                " candidate sets");
  }
  vocab_ = sets_.front().vocab_size();
  for (const auto& c : sets_) {
    if (c.vocab_size() != vocab_) {
      throw std::invalid_argument("ScreeningModel: candidate sets disagree on vocabulary size");
    }
  }
}

ScreeningModel ScreeningModel::full(std::size_t vocab_size, std::size_t dim) {
  std::vector<CandidateSet> sets;
  sets.push_back(CandidateSet::all(vocab_size));
  return ScreeningModel(DenseMatrix(1, dim), std::move(sets), static_cast<double>(vocab_size));
}

ClusterId assign_cluster(const ScreeningModel& model, std::span<const double> h,
                         InnerProductCounter* counter) {
  check_context_dim(model.dim(), h.size(), "assign_cluster");
  if (counter != nullptr) counter->count += model.clusters();
  return argmax_cluster(model.cluster_weights(), h);
}

std::vector<ClusterId> assign_clusters_serial(const DenseMatrix& weights,
                                              const ContextSet& contexts) {
  check_context_dim(weights.cols(), contexts.dim(), "assign_clusters");
  std::vector<ClusterId> out(contexts.size());
  for (std::size_t i = 0; i < contexts.size(); ++i) out[i] = argmax_cluster(weights, contexts[i]);
  return out;
}

std::vector<ClusterId> assign_clusters(const DenseMatrix& weights, const ContextSet& contexts) {
  check_context_dim(weights.cols(), contexts.dim(), "assign_clusters");
  std::vector<ClusterId> out(contexts.size());
  const auto n = static_cast<std::int64_t>(contexts.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto row = static_cast<std::size_t>(i);
    out[row] = argmax_cluster(weights, contexts[row]);
  }
  return out;
}

ScreenedPrediction screened_topk(const ScreeningModel& model, const SoftmaxLayer& layer,
                                 std::span<const double> h, std::size_t k,
                                 InnerProductCounter* counter) {
  if (model.vocab_size() != layer.vocab_size() || model.dim() != layer.dim()) {
    throw std::invalid_argument("screened_topk: model over " +
                                shape_string(model.vocab_size(), model.dim()) + " vs layer " +
                                shape_string(layer.vocab_size(), layer.dim()));
  }
  if (k < 1) throw std::invalid_argument("screened_topk: k must be >= 1");

  ScreenedPrediction out;
  out.cluster = assign_cluster(model, h, counter);
  const CandidateSet& c = model.candidates(out.cluster);
  out.candidate_count = c.size();
  if (c.size() < k) {
    out.fallback = true;
    out.topk = exact_topk(layer, h, k, counter);
    return out;
  }

  const auto members = c.members();
  std::vector<double> scores(members.size());
  matvec_rows_serial(layer.weights(), h, members, scores);
  for (std::size_t j = 0; j < members.size(); ++j) scores[j] += layer.bias()[members[j]];
  if (counter != nullptr) counter->count += members.size();

  // Members are ascending, so position ties resolve to the lower label id.
  const auto best = top_k(scores, k);
  out.topk.indices.reserve(k);
  out.topk.scores.reserve(k);
  for (const auto& e : best) {
    out.topk.indices.push_back(members[e.index]);
    out.topk.scores.push_back(e.score);
  }
  return out;
}

double candidate_logit_count(const ScreeningModel& model, const ContextSet& contexts) {
  if (contexts.size() == 0) return 0.0;
  const auto clusters = assign_clusters(model.cluster_weights(), contexts);
  std::uint64_t total = 0;
  for (ClusterId t : clusters) total += model.candidates(t).size();
  return static_cast<double>(total) / static_cast<double>(contexts.size());
}

}  // namespace l2s
