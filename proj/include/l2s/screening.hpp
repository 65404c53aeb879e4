#pragma once

// The screening predictor: pick a cluster with r inner products, then score
// only that cluster's candidate labels. Per-query cost is O((r + |C(h)|) d)
// instead of O(L d).

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "l2s/softmax.hpp"
#include "l2s/tensor.hpp"

namespace l2s {

/// Binary label subset of a fixed vocabulary. Kept both as a bitset for
/// membership tests and as an ascending id list for scanning.
class CandidateSet {
 public:
  CandidateSet() = default;
  explicit CandidateSet(std::size_t vocab_size);
  /// Sorts and deduplicates `members`; throws if an id is >= vocab_size.
  CandidateSet(std::size_t vocab_size, std::vector<LabelId> members);

  static CandidateSet all(std::size_t vocab_size);

  std::size_t vocab_size() const { return vocab_; }
  std::size_t size() const { return members_.size(); }
  bool empty() const { return members_.empty(); }
  bool contains(LabelId s) const { return (bits_[s >> 6] >> (s & 63)) & 1U; }
  std::span<const LabelId> members() const { return members_; }

  bool operator==(const CandidateSet& other) const {
    return vocab_ == other.vocab_ && members_ == other.members_;
  }

 private:
  std::size_t vocab_ = 0;
  std::vector<std::uint64_t> bits_;
  std::vector<LabelId> members_;
};

class ScreeningModel {
 public:
  ScreeningModel() = default;
  /// `cluster_weights` is r x d; one candidate set per cluster, all over the
  /// same vocabulary.
  ScreeningModel(DenseMatrix cluster_weights, std::vector<CandidateSet> sets, double budget);

  /// One cluster whose candidate set is the whole vocabulary. Predictions
  /// equal exact softmax plus one extra inner product.
  static ScreeningModel full(std::size_t vocab_size, std::size_t dim);

  std::size_t clusters() const { return weights_.rows(); }
  std::size_t vocab_size() const { return vocab_; }
  std::size_t dim() const { return weights_.cols(); }
  double budget() const { return budget_; }

  const DenseMatrix& cluster_weights() const { return weights_; }
  const std::vector<CandidateSet>& candidate_sets() const { return sets_; }
  const CandidateSet& candidates(ClusterId t) const { return sets_[t]; }

 private:
  DenseMatrix weights_;
  std::vector<CandidateSet> sets_;
  std::size_t vocab_ = 0;
  double budget_ = 0.0;
};

struct ScreenedPrediction {
  ClusterId cluster = 0;
  std::size_t candidate_count = 0;
  TopKResult topk;
  /// Set when |C(h)| < k and the exact softmax answered instead.
  bool fallback = false;
};

/// argmax_t v_t . h, lowest index on ties.
ClusterId assign_cluster(const ScreeningModel& model, std::span<const double> h,
                         InnerProductCounter* counter = nullptr);

/// Cluster of every context under `weights` (r x d), parallel over contexts.
std::vector<ClusterId> assign_clusters(const DenseMatrix& weights, const ContextSet& contexts);
std::vector<ClusterId> assign_clusters_serial(const DenseMatrix& weights,
                                              const ContextSet& contexts);

ScreenedPrediction screened_topk(const ScreeningModel& model, const SoftmaxLayer& layer,
                                 std::span<const double> h, std::size_t k,
                                 InnerProductCounter* counter = nullptr);

/// Mean |C(h_i)| over the contexts.
double candidate_logit_count(const ScreeningModel& model, const ContextSet& contexts);

}  // namespace l2s
