#include "l2s/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace l2s {

namespace {

[[noreturn]] void bad_spec(const std::string& what) {
  throw std::invalid_argument("SynthSpec: " + what);
}

DenseMatrix draw_centroids(std::size_t count, std::size_t dim, Rng& rng) {
  DenseMatrix c(count, dim);
  for (std::size_t t = 0; t < count; ++t) {
    auto row = c.row(t);
    for (;;) {
      for (double& v : row) v = rng.normal();
      // Orthogonalize against earlier centroids while there is room.
      if (t < dim) {
        for (int pass = 0; pass < 2; ++pass) {
          for (std::size_t q = 0; q < t; ++q) {
            const double proj = dot(row, c.row(q));
            const auto prev = c.row(q);
            for (std::size_t j = 0; j < dim; ++j) row[j] -= proj * prev[j];
          }
        }
      }
      const double n = norm2(row);
      if (n > 1e-8) {
        for (double& v : row) v /= n;
        break;
      }
    }
  }
  return c;
}

// Random direction of expected norm ~1 with the centroid span projected out
// when the centroids are orthonormal.
void draw_offset(const DenseMatrix& centroids, Rng& rng, std::span<double> out) {
  const std::size_t dim = out.size();
  for (double& v : out) v = rng.normal() / std::sqrt(static_cast<double>(dim));
  if (centroids.rows() >= dim) return;
  for (std::size_t q = 0; q < centroids.rows(); ++q) {
    const double proj = dot(out, centroids.row(q));
    const auto c = centroids.row(q);
    for (std::size_t j = 0; j < dim; ++j) out[j] -= proj * c[j];
  }
}

PlantedData draw(const SynthSpec& spec, Rng& rng) {
  const std::size_t vocab = spec.vocab_size;
  const std::size_t dim = spec.dim;
  PlantedData data;
  data.centroids = draw_centroids(spec.planted_clusters, dim, rng);

  std::vector<LabelId> perm(vocab);
  std::iota(perm.begin(), perm.end(), LabelId{0});
  rng.shuffle(std::span<LabelId>(perm));
  data.subsets.resize(spec.planted_clusters);
  for (std::size_t c = 0; c < spec.planted_clusters; ++c) {
    for (std::size_t j = 0; j < spec.subset_size; ++j)
      data.subsets[c].push_back(perm[(c * spec.subset_size + j) % vocab]);
    std::sort(data.subsets[c].begin(), data.subsets[c].end());
  }

  DenseMatrix weights(vocab, dim);
  for (std::size_t s = 0; s < vocab; ++s) {
    auto row = weights.row(s);
    draw_offset(data.centroids, rng, row);
    for (double& v : row) v *= spec.background_scale;
  }
  for (std::size_t c = 0; c < spec.planted_clusters; ++c) {
    const auto mu = data.centroids.row(c);
    for (LabelId s : data.subsets[c]) {
      auto row = weights.row(s);
      draw_offset(data.centroids, rng, row);
      const double a = spec.strength_lo + (spec.strength_hi - spec.strength_lo) * rng.uniform_open();
      for (std::size_t j = 0; j < dim; ++j) row[j] = a * mu[j] + spec.subset_spread * row[j];
    }
  }
  DenseVector bias(vocab);
  for (std::size_t s = 0; s < vocab; ++s) bias[s] = spec.bias_scale * rng.normal();
  data.layer = SoftmaxLayer(std::move(weights), std::move(bias));

  data.contexts = sample_contexts(data, spec.noise_sigma, spec.contexts, rng, &data.bundle);
  return data;
}

}  // namespace

void SynthSpec::validate() const {
  if (vocab_size < 1 || dim < 1 || contexts < 1) bad_spec("L, d and N must be >= 1");
  if (planted_clusters < 1 || planted_clusters > contexts) bad_spec("need 1 <= r_true <= N");
  if (subset_size < 1 || subset_size > vocab_size) bad_spec("need 1 <= subset_size <= L");
  if (top_k < 1 || top_k > subset_size) bad_spec("need 1 <= k <= subset_size");
  if (!(noise_sigma >= 0.0)) bad_spec("noise_sigma must be >= 0");
  if (!(strength_lo <= strength_hi)) bad_spec("strength_lo must not exceed strength_hi");
  if (max_attempts < 1) bad_spec("max_attempts must be >= 1");
}

ContextSet sample_contexts(const PlantedData& planted, double noise_sigma, std::size_t count,
                           Rng& rng, std::vector<ClusterId>* bundle) {
  const std::size_t dim = planted.centroids.cols();
  const std::size_t r = planted.centroids.rows();
  DenseMatrix h(count, dim);
  std::vector<ClusterId> which(count);
  for (std::size_t i = 0; i < count; ++i) {
    which[i] = static_cast<ClusterId>(rng.uniform_index(r));
    const auto mu = planted.centroids.row(which[i]);
    auto row = h.row(i);
    for (std::size_t j = 0; j < dim; ++j) row[j] = mu[j] + noise_sigma * rng.normal();
  }
  if (bundle != nullptr) *bundle = std::move(which);
  return ContextSet(std::move(h));
}

double planted_containment(const PlantedData& planted, const ContextSet& contexts,
                           const std::vector<ClusterId>& bundle, std::size_t k) {
  if (contexts.size() == 0) return 1.0;
  const LabelSets labels = label_contexts(planted.layer, contexts, k);
  std::size_t inside = 0;
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    const auto& subset = planted.subsets[bundle[i]];
    const auto row = labels[i];
    const bool all_in = std::all_of(row.begin(), row.end(), [&](LabelId s) {
      return std::binary_search(subset.begin(), subset.end(), s);
    });
    inside += all_in ? 1 : 0;
  }
  return static_cast<double>(inside) / static_cast<double>(contexts.size());
}

PlantedData generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  Rng master(spec.seed);
  double best = 0.0;
  for (std::size_t attempt = 1; attempt <= spec.max_attempts; ++attempt) {
    Rng rng = master.split();
    PlantedData data = draw(spec, rng);
    data.containment = planted_containment(data, data.contexts, data.bundle, spec.top_k);
    data.attempts = attempt;
    if (data.containment >= spec.min_containment) return data;
    best = std::max(best, data.containment);
  }
  throw std::runtime_error("generate_synthetic: planted containment reached only " +
                           std::to_string(best) + " after " + std::to_string(spec.max_attempts) +
                           " attempts (need " + std::to_string(spec.min_containment) +
                           "); try a smaller noise_sigma");
}

std::vector<LabelId> sample_targets(const SoftmaxLayer& layer, const ContextSet& contexts,
                                    Rng& rng) {
  std::vector<LabelId> targets(contexts.size());
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    const DenseVector p = probabilities(logits(layer, contexts[i]).span());
    const double u = rng.uniform_open();
    double run = 0.0;
    std::size_t pick = p.size() - 1;
    for (std::size_t s = 0; s < p.size(); ++s) {
      run += p[s];
      if (u < run) {
        pick = s;
        break;
      }
    }
    targets[i] = static_cast<LabelId>(pick);
  }
  return targets;
}

}  // namespace l2s
