#pragma once

// Candidate-set selection with the clustering held fixed. Each (cluster,
// label) pair is a knapsack item: including label s in cluster t costs N_t
// candidate slots and changes the mismatch loss by -(pos - lambda * neg).

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "l2s/screening.hpp"
#include "l2s/softmax.hpp"

namespace l2s {

class ClusterStats {
 public:
  ClusterStats(std::size_t clusters, std::size_t vocab_size);

  std::size_t clusters() const { return members_.size(); }
  std::size_t vocab_size() const { return vocab_; }
  std::uint64_t total() const { return total_; }

  std::uint64_t members(ClusterId t) const { return members_[t]; }
  std::uint64_t pos_count(ClusterId t, LabelId s) const { return pos_[t * vocab_ + s]; }
  std::uint64_t neg_count(ClusterId t, LabelId s) const { return members_[t] - pos_count(t, s); }
  std::uint64_t total_pos() const { return total_pos_; }

  /// Adds one context in cluster t with ground-truth label ids `labels`.
  void add(ClusterId t, std::span<const LabelId> labels);

 private:
  std::size_t vocab_;
  std::uint64_t total_ = 0;
  std::uint64_t total_pos_ = 0;
  std::vector<std::uint64_t> members_;
  std::vector<std::uint32_t> pos_;
};

ClusterStats collect_stats(std::span<const ClusterId> assignments, const LabelSets& labels,
                           std::size_t clusters, std::size_t vocab_size);

/// Loss reduction from including an item: pos - lambda * neg. This is the
/// only place the value function is defined.
double item_value(std::uint64_t pos, std::uint64_t neg, double lambda);

struct KnapsackItem {
  ClusterId cluster;
  LabelId label;
  double value;
  std::uint64_t weight;
};

/// floor(budget * N): the capacity in candidate slots summed over contexts.
std::uint64_t knapsack_capacity(const ClusterStats& stats, double budget);

/// sum_t N_t * |c_t|.
std::uint64_t used_capacity(const ClusterStats& stats, std::span<const CandidateSet> sets);

/// Greedy solution: seed every cluster with its `k_seed` most frequent
/// labels, then add positive-value items by value/weight ratio, skipping any
/// that no longer fit. Throws if the seeds alone exceed the budget.
std::vector<CandidateSet> greedy_knapsack(const ClusterStats& stats, double budget,
                                          double lambda, std::size_t k_seed);

/// Summed mismatch loss for binary sets: misses + lambda * wasted candidates,
/// over all contexts.
double assignment_loss(const ClusterStats& stats, std::span<const CandidateSet> sets,
                       double lambda);

}  // namespace l2s
