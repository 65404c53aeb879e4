#include "l2s/softmax.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <omp.h>

namespace l2s {

namespace {

void check_dim(const SoftmaxLayer& layer, std::size_t len, const char* where) {
  if (layer.dim() != len) {
    throw std::invalid_argument(std::string(where) + ": layer " +
                                shape_string(layer.vocab_size(), layer.dim()) +
                                " vs context of length " + std::to_string(len));
  }
}

void check_k(std::size_t k, std::size_t vocab, const char* where) {
  if (k < 1 || k > vocab) {
    throw std::invalid_argument(std::string(where) + ": k=" + std::to_string(k) +
                                " outside [1, " + std::to_string(vocab) + "]");
  }
}

void logits_into(const SoftmaxLayer& layer, std::span<const double> h, std::span<double> out) {
  const auto& w = layer.weights();
  const std::size_t d = layer.dim();
  const std::size_t vocab = layer.vocab_size();
  const double* base = w.data().data();
  std::size_t s = 0;
  for (; s + 4 <= vocab; s += 4) {
    const double* w0 = base + (s + 0) * d;
    const double* w1 = base + (s + 1) * d;
    const double* w2 = base + (s + 2) * d;
    const double* w3 = base + (s + 3) * d;
    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double x = h[j];
      a0 += w0[j] * x;
      a1 += w1[j] * x;
      a2 += w2[j] * x;
      a3 += w3[j] * x;
    }
    out[s + 0] = a0 + layer.bias()[s + 0];
    out[s + 1] = a1 + layer.bias()[s + 1];
    out[s + 2] = a2 + layer.bias()[s + 2];
    out[s + 3] = a3 + layer.bias()[s + 3];
  }
  for (; s < vocab; ++s) out[s] = dot(w.row(s), h) + layer.bias()[s];
}

void write_topk(std::span<const double> scores, std::size_t k, LabelId* dst) {
  const auto best = top_k(scores, k);
  for (std::size_t j = 0; j < k; ++j) dst[j] = static_cast<LabelId>(best[j].index);
}

}  // namespace

SoftmaxLayer::SoftmaxLayer(DenseMatrix weights, DenseVector bias)
    : weights_(std::move(weights)), bias_(std::move(bias)) {
  if (bias_.size() != weights_.rows()) {
    throw std::invalid_argument("SoftmaxLayer: weights " +
                                shape_string(weights_.rows(), weights_.cols()) +
                                " vs bias of length " + std::to_string(bias_.size()));
  }
  if (weights_.rows() == 0 || weights_.cols() == 0) {
    throw std::invalid_argument("SoftmaxLayer: empty weights");
  }
}

ContextSet ContextSet::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) {
    throw std::invalid_argument("ContextSet::slice: [" + std::to_string(begin) + ", " +
                                std::to_string(end) + ") of " + std::to_string(size()));
  }
  const auto first = vectors_.data().begin() + static_cast<std::ptrdiff_t>(begin * dim());
  const auto last = vectors_.data().begin() + static_cast<std::ptrdiff_t>(end * dim());
  return ContextSet(DenseMatrix(end - begin, dim(), std::vector<double>(first, last)));
}

LabelSets::LabelSets(std::size_t k, std::vector<LabelId> ids) : k_(k), ids_(std::move(ids)) {
  if (k_ == 0 || ids_.size() % k_ != 0) {
    throw std::invalid_argument("LabelSets: " + std::to_string(ids_.size()) +
                                " ids do not split into rows of k=" + std::to_string(k_));
  }
}

DenseVector logits(const SoftmaxLayer& layer, std::span<const double> h,
                   InnerProductCounter* counter) {
  check_dim(layer, h.size(), "logits");
  DenseVector out(layer.vocab_size());
  logits_into(layer, h, out.span());
  if (counter != nullptr) counter->count += layer.vocab_size();
  return out;
}

DenseVector probabilities(std::span<const double> x) {
  if (x.empty()) return DenseVector();
  const double peak = *std::max_element(x.begin(), x.end());
  std::vector<double> p(x.size());
  double total = 0.0;
  for (std::size_t s = 0; s < x.size(); ++s) {
    p[s] = std::exp(x[s] - peak);
    total += p[s];
  }
  for (double& v : p) v /= total;
  return DenseVector(std::move(p));
}

TopKResult exact_topk(const SoftmaxLayer& layer, std::span<const double> h, std::size_t k,
                      InnerProductCounter* counter) {
  check_k(k, layer.vocab_size(), "exact_topk");
  const DenseVector x = logits(layer, h, counter);
  TopKResult out;
  out.indices.reserve(k);
  out.scores.reserve(k);
  for (const auto& e : top_k(x.span(), k)) {
    out.indices.push_back(static_cast<LabelId>(e.index));
    out.scores.push_back(e.score);
  }
  return out;
}

LabelSets label_contexts_serial(const SoftmaxLayer& layer, const ContextSet& contexts,
                                std::size_t k) {
  check_dim(layer, contexts.dim(), "label_contexts");
  check_k(k, layer.vocab_size(), "label_contexts");
  std::vector<LabelId> ids(contexts.size() * k);
  std::vector<double> scratch(layer.vocab_size());
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    logits_into(layer, contexts[i], scratch);
    write_topk(scratch, k, ids.data() + i * k);
  }
  return LabelSets(k, std::move(ids));
}

LabelSets label_contexts(const SoftmaxLayer& layer, const ContextSet& contexts, std::size_t k) {
  check_dim(layer, contexts.dim(), "label_contexts");
  check_k(k, layer.vocab_size(), "label_contexts");
  std::vector<LabelId> ids(contexts.size() * k);
  const auto n = static_cast<std::int64_t>(contexts.size());
#pragma omp parallel
  {
    std::vector<double> scratch(layer.vocab_size());
#pragma omp for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
      const auto row = static_cast<std::size_t>(i);
      logits_into(layer, contexts[row], scratch);
      write_topk(scratch, k, ids.data() + row * k);
    }
  }
  return LabelSets(k, std::move(ids));
}

}  // namespace l2s
