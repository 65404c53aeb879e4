#pragma once

// Exact softmax layer: the baseline being accelerated and the oracle that
// produces ground-truth labels.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "l2s/tensor.hpp"

namespace l2s {

/// Output layer. Row s of `weights` is the weight vector of label s, so the
/// matrix is L x d.
class SoftmaxLayer {
 public:
  SoftmaxLayer() = default;
  SoftmaxLayer(DenseMatrix weights, DenseVector bias);

  std::size_t vocab_size() const { return weights_.rows(); }
  std::size_t dim() const { return weights_.cols(); }
  const DenseMatrix& weights() const { return weights_; }
  const DenseVector& bias() const { return bias_; }

 private:
  DenseMatrix weights_;
  DenseVector bias_;
};

/// N context vectors stored as the rows of an N x d matrix.
class ContextSet {
 public:
  ContextSet() = default;
  explicit ContextSet(DenseMatrix vectors) : vectors_(std::move(vectors)) {}

  std::size_t size() const { return vectors_.rows(); }
  std::size_t dim() const { return vectors_.cols(); }
  std::span<const double> operator[](std::size_t i) const { return vectors_.row(i); }
  const DenseMatrix& matrix() const { return vectors_; }

  /// Rows [begin, end) as a new set.
  ContextSet slice(std::size_t begin, std::size_t end) const;

 private:
  DenseMatrix vectors_;
};

struct TopKResult {
  std::vector<LabelId> indices;
  std::vector<double> scores;

  std::size_t k() const { return indices.size(); }
};

/// Ground-truth top-k label ids per context, in rank order.
class LabelSets {
 public:
  LabelSets() = default;
  LabelSets(std::size_t k, std::vector<LabelId> ids);

  std::size_t k() const { return k_; }
  std::size_t size() const { return k_ == 0 ? 0 : ids_.size() / k_; }
  std::span<const LabelId> operator[](std::size_t i) const { return {ids_.data() + i * k_, k_}; }
  const std::vector<LabelId>& flat() const { return ids_; }

  bool operator==(const LabelSets&) const = default;

 private:
  std::size_t k_ = 0;
  std::vector<LabelId> ids_;
};

/// Counts inner products of length d. Optional instrumentation for the
/// O((r + |C|) d) cost model; not thread-safe, one per query loop.
struct InnerProductCounter {
  std::uint64_t count = 0;
};

/// x_s = w_s . h + b_s for every label.
DenseVector logits(const SoftmaxLayer& layer, std::span<const double> h,
                   InnerProductCounter* counter = nullptr);

/// Max-subtracted softmax.
DenseVector probabilities(std::span<const double> x);

TopKResult exact_topk(const SoftmaxLayer& layer, std::span<const double> h, std::size_t k,
                      InnerProductCounter* counter = nullptr);

/// Exact top-k labels for every context, parallel over contexts.
LabelSets label_contexts(const SoftmaxLayer& layer, const ContextSet& contexts,
                         std::size_t k = 5);
/// Serial reference for label_contexts.
LabelSets label_contexts_serial(const SoftmaxLayer& layer, const ContextSet& contexts,
                                std::size_t k = 5);

}  // namespace l2s
