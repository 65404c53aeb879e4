#pragma once

#include <cstddef>
#include <vector>

#include "l2s/rng.hpp"
#include "l2s/softmax.hpp"
#include "l2s/tensor.hpp"

namespace l2s {

struct KmeansState {
  DenseMatrix centroids;              // r x d, unit rows
  std::vector<ClusterId> assignments;  // one per context
  double objective = 0.0;             // sum_i centroid[a(i)] . normalized(h_i)
  std::size_t iterations = 0;
  std::vector<double> objective_history;  // after every completed iteration
};

/// Spherical k-means: Lloyd alternation on cosine similarity, k-means++
/// seeding on cosine distance, farthest-point repair of empty clusters.
/// Stops after `max_iters` iterations or when assignments stop changing.
KmeansState spherical_kmeans(const ContextSet& contexts, std::size_t r, Rng& rng,
                             std::size_t max_iters = 50);

}  // namespace l2s
