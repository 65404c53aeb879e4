#include "l2s/knapsack.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace l2s {

ClusterStats::ClusterStats(std::size_t clusters, std::size_t vocab_size)
    : vocab_(vocab_size), members_(clusters, 0), pos_(clusters * vocab_size, 0) {}

void ClusterStats::add(ClusterId t, std::span<const LabelId> labels) {
  if (t >= members_.size()) {
    throw std::invalid_argument("ClusterStats: cluster id " + std::to_string(t) +
                                " >= r=" + std::to_string(members_.size()));
  }
  ++members_[t];
  ++total_;
  for (LabelId s : labels) {
    if (s >= vocab_) {
      throw std::invalid_argument("ClusterStats: label " + std::to_string(s) +
                                  " outside vocabulary of " + std::to_string(vocab_));
    }
    ++pos_[t * vocab_ + s];
    ++total_pos_;
  }
}

ClusterStats collect_stats(std::span<const ClusterId> assignments, const LabelSets& labels,
                           std::size_t clusters, std::size_t vocab_size) {
  if (assignments.size() != labels.size()) {
    throw std::invalid_argument("collect_stats: " + std::to_string(assignments.size()) +
                                " assignments vs " + std::to_string(labels.size()) +
                                " label sets");
  }
  ClusterStats stats(clusters, vocab_size);
  for (std::size_t i = 0; i < assignments.size(); ++i) stats.add(assignments[i], labels[i]);
  return stats;
}

double item_value(std::uint64_t pos, std::uint64_t neg, double lambda) {
  return static_cast<double>(pos) - lambda * static_cast<double>(neg);
}

std::uint64_t knapsack_capacity(const ClusterStats& stats, double budget) {
  return static_cast<std::uint64_t>(std::floor(budget * static_cast<double>(stats.total())));
}

std::uint64_t used_capacity(const ClusterStats& stats, std::span<const CandidateSet> sets) {
  std::uint64_t used = 0;
  for (std::size_t t = 0; t < sets.size(); ++t)
    used += stats.members(static_cast<ClusterId>(t)) * sets[t].size();
  return used;
}

std::vector<CandidateSet> greedy_knapsack(const ClusterStats& stats, double budget,
                                          double lambda, std::size_t k_seed) {
  if (!(lambda > 0.0 && lambda < 1.0)) {
    throw std::invalid_argument("greedy_knapsack: lambda must lie in (0, 1), got " +
                                std::to_string(lambda));
  }
  const std::size_t r = stats.clusters();
  const std::size_t vocab = stats.vocab_size();
  const std::size_t seeds = std::min(k_seed, vocab);
  const std::uint64_t capacity = knapsack_capacity(stats, budget);
  const std::uint64_t seed_cost = stats.total() * seeds;
  if (seed_cost > capacity) {
    throw std::invalid_argument(
        "greedy_knapsack: seeding " + std::to_string(seeds) + " labels per cluster needs " +
        std::to_string(seed_cost) + " slots but budget " + std::to_string(budget) + " gives " +
        std::to_string(capacity) + "; minimum budget is " + std::to_string(seeds));
  }

  std::vector<std::vector<LabelId>> chosen(r);
  std::vector<char> taken(r * vocab, 0);
  std::uint64_t used = 0;

  std::vector<LabelId> order(vocab);
  for (std::size_t t = 0; t < r; ++t) {
    const auto ct = static_cast<ClusterId>(t);
    std::iota(order.begin(), order.end(), LabelId{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(seeds),
                      order.end(), [&](LabelId a, LabelId b) {
                        const auto pa = stats.pos_count(ct, a);
                        const auto pb = stats.pos_count(ct, b);
                        return pa != pb ? pa > pb : a < b;
                      });
    for (std::size_t j = 0; j < seeds; ++j) {
      chosen[t].push_back(order[j]);
      taken[t * vocab + order[j]] = 1;
    }
    used += stats.members(ct) * seeds;
  }

  std::vector<KnapsackItem> items;
  for (std::size_t t = 0; t < r; ++t) {
    const auto ct = static_cast<ClusterId>(t);
    const std::uint64_t weight = stats.members(ct);
    if (weight == 0) continue;
    for (std::size_t s = 0; s < vocab; ++s) {
      const auto ls = static_cast<LabelId>(s);
      if (taken[t * vocab + s] || stats.pos_count(ct, ls) == 0) continue;
      const double value = item_value(stats.pos_count(ct, ls), stats.neg_count(ct, ls), lambda);
      if (value > 0.0) items.push_back({ct, ls, value, weight});
    }
  }
  // Ratio order by cross-multiplication; ties by cluster, then label.
  std::sort(items.begin(), items.end(), [](const KnapsackItem& a, const KnapsackItem& b) {
    const double lhs = a.value * static_cast<double>(b.weight);
    const double rhs = b.value * static_cast<double>(a.weight);
    if (lhs != rhs) return lhs > rhs;
    if (a.cluster != b.cluster) return a.cluster < b.cluster;
    return a.label < b.label;
  });
  for (const auto& item : items) {
    if (used + item.weight > capacity) continue;
    used += item.weight;
    chosen[item.cluster].push_back(item.label);
  }

  std::vector<CandidateSet> sets;
  sets.reserve(r);
  for (auto& ids : chosen) sets.emplace_back(vocab, std::move(ids));
  return sets;
}

double assignment_loss(const ClusterStats& stats, std::span<const CandidateSet> sets,
                       double lambda) {
  if (sets.size() != stats.clusters()) {
    throw std::invalid_argument("assignment_loss: " + std::to_string(sets.size()) +
                                " sets vs " + std::to_string(stats.clusters()) + " clusters");
  }
  std::uint64_t covered = 0;
  std::uint64_t wasted = 0;
  for (std::size_t t = 0; t < sets.size(); ++t) {
    const auto ct = static_cast<ClusterId>(t);
    for (LabelId s : sets[t].members()) {
      covered += stats.pos_count(ct, s);
      wasted += stats.neg_count(ct, s);
    }
  }
  const std::uint64_t misses = stats.total_pos() - covered;
  return static_cast<double>(misses) + lambda * static_cast<double>(wasted);
}

}  // namespace l2s
