#pragma once

#include <cstddef>
#include <vector>

#include "l2s/rng.hpp"
#include "l2s/screening.hpp"
#include "l2s/softmax.hpp"
#include "l2s/tensor.hpp"

namespace l2s::testing {

inline DenseMatrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  DenseMatrix m(rows, cols);
  for (double& v : m.data()) v = scale * rng.normal();
  return m;
}

inline DenseVector random_vector(std::size_t n, Rng& rng, double scale = 1.0) {
  DenseVector v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = scale * rng.normal();
  return v;
}

inline SoftmaxLayer random_layer(std::size_t vocab, std::size_t dim, Rng& rng) {
  return SoftmaxLayer(random_matrix(vocab, dim, rng), random_vector(vocab, rng, 0.1));
}

inline ContextSet random_contexts(std::size_t n, std::size_t dim, Rng& rng) {
  return ContextSet(random_matrix(n, dim, rng));
}

/// Random candidate sets; each label joins each set with probability `p`.
inline std::vector<CandidateSet> random_sets(std::size_t r, std::size_t vocab, double p, Rng& rng) {
  std::vector<CandidateSet> sets;
  for (std::size_t t = 0; t < r; ++t) {
    std::vector<LabelId> ids;
    for (std::size_t s = 0; s < vocab; ++s)
      if (rng.uniform_open() < p) ids.push_back(static_cast<LabelId>(s));
    sets.emplace_back(vocab, std::move(ids));
  }
  return sets;
}

}  // namespace l2s::testing
