#include "l2s/kmeans.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <omp.h>

namespace l2s {

namespace {

DenseMatrix normalized_rows(const ContextSet& contexts) {
  DenseMatrix out(contexts.size(), contexts.dim());
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    const double n = norm2(contexts[i]);
    if (!(n > 0.0)) {
      throw std::invalid_argument("spherical_kmeans: context " + std::to_string(i) +
                                  " has zero norm");
    }
    auto dst = out.row(i);
    const auto src = contexts[i];
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = src[j] / n;
  }
  return out;
}

// k-means++ on cosine distance 1 - cos, which is half the squared chord
// length between unit vectors.
DenseMatrix seed_centroids(const DenseMatrix& x, std::size_t r, Rng& rng) {
  const std::size_t n = x.rows();
  DenseMatrix centroids(r, x.cols());
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<char> chosen(n, 0);

  auto take = [&](std::size_t t, std::size_t i) {
    chosen[i] = 1;
    auto dst = centroids.row(t);
    const auto src = x.row(i);
    std::copy(src.begin(), src.end(), dst.begin());
    for (std::size_t p = 0; p < n; ++p) {
      const double dp = std::max(0.0, 1.0 - dot(x.row(p), src));
      dist[p] = std::min(dist[p], chosen[p] ? 0.0 : dp);
    }
  };

  take(0, static_cast<std::size_t>(rng.uniform_index(n)));
  for (std::size_t t = 1; t < r; ++t) {
    double total = 0.0;
    for (double v : dist) total += v;
    std::size_t pick = n;
    if (total > 0.0) {
      const double target = rng.uniform_open() * total;
      double run = 0.0;
      for (std::size_t p = 0; p < n; ++p) {
        if (dist[p] <= 0.0) continue;
        run += dist[p];
        pick = p;
        if (run >= target) break;
      }
    } else {
      for (std::size_t p = 0; p < n && pick == n; ++p)
        if (!chosen[p]) pick = p;
    }
    take(t, pick);
  }
  return centroids;
}

ClusterId nearest(const DenseMatrix& centroids, std::span<const double> x, double* sim) {
  ClusterId best = 0;
  double best_sim = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < centroids.rows(); ++t) {
    const double s = dot(centroids.row(t), x);
    if (s > best_sim) {
      best_sim = s;
      best = static_cast<ClusterId>(t);
    }
  }
  if (sim != nullptr) *sim = best_sim;
  return best;
}

}  // namespace

KmeansState spherical_kmeans(const ContextSet& contexts, std::size_t r, Rng& rng,
                             std::size_t max_iters) {
  const std::size_t n = contexts.size();
  if (r < 1 || r > n) {
    throw std::invalid_argument("spherical_kmeans: need 1 <= r <= N, got r=" + std::to_string(r) +
                                ", N=" + std::to_string(n));
  }
  if (max_iters < 1) throw std::invalid_argument("spherical_kmeans: max_iters must be >= 1");
  const DenseMatrix x = normalized_rows(contexts);

  KmeansState state;
  state.centroids = seed_centroids(x, r, rng);
  state.assignments.assign(n, std::numeric_limits<ClusterId>::max());
  std::vector<double> sim(n);
  std::vector<ClusterId> next(n);

  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < count; ++i) {
      const auto p = static_cast<std::size_t>(i);
      next[p] = nearest(state.centroids, x.row(p), &sim[p]);
    }
    bool changed = next != state.assignments;

    // Empty cluster repair: move the point least similar to its centroid.
    std::vector<std::size_t> members(r, 0);
    for (ClusterId a : next) ++members[a];
    for (std::size_t t = 0; t < r; ++t) {
      if (members[t] != 0) continue;
      std::size_t worst = n;
      for (std::size_t p = 0; p < n; ++p) {
        if (members[next[p]] < 2) continue;
        if (worst == n || sim[p] < sim[worst]) worst = p;
      }
      --members[next[worst]];
      next[worst] = static_cast<ClusterId>(t);
      ++members[t];
      auto dst = state.centroids.row(t);
      const auto src = x.row(worst);
      std::copy(src.begin(), src.end(), dst.begin());
      sim[worst] = 1.0;
      changed = true;
    }

    DenseMatrix sums(r, x.cols());
    for (std::size_t p = 0; p < n; ++p) {
      auto dst = sums.row(next[p]);
      const auto src = x.row(p);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
    for (std::size_t t = 0; t < r; ++t) {
      const double len = norm2(sums.row(t));
      // A zero-length mean has no direction; keep the old centroid.
      if (!(len > 1e-300)) continue;
      auto dst = state.centroids.row(t);
      const auto src = sums.row(t);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = src[j] / len;
    }

    double objective = 0.0;
    for (std::size_t p = 0; p < n; ++p) objective += dot(state.centroids.row(next[p]), x.row(p));

    state.assignments = next;
    state.objective = objective;
    state.objective_history.push_back(objective);
    state.iterations = iter + 1;
    if (!changed) break;
  }
  return state;
}

}  // namespace l2s
