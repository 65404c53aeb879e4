#pragma once

// Synthetic softmax layers and context vectors with planted cluster
// structure: contexts come in bundles around unit centroids, and each
// bundle's exact top-k labels fall inside a small label subset tied to that
// centroid.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "l2s/rng.hpp"
#include "l2s/softmax.hpp"
#include "l2s/tensor.hpp"

namespace l2s {

struct SynthSpec {
  std::size_t vocab_size = 10000;
  std::size_t dim = 64;
  std::size_t contexts = 20000;
  std::size_t planted_clusters = 10;
  std::size_t subset_size = 50;
  double noise_sigma = 0.1;  // per-coordinate std of the context noise
  std::uint64_t seed = 0;
  std::size_t top_k = 5;

  // Shape of the planted layer.
  double strength_lo = 4.0;       // subset rows get a_s * centroid, a_s ~ U[lo, hi]
  double strength_hi = 6.0;
  double subset_spread = 5.0;     // scale of the off-centroid part of subset rows
  double background_scale = 1.0;  // scale of rows outside every subset
  double bias_scale = 0.1;        // std of the bias entries
  double min_containment = 0.95;
  std::size_t max_attempts = 10;

  void validate() const;
};

struct PlantedData {
  SoftmaxLayer layer;
  ContextSet contexts;
  DenseMatrix centroids;                    // planted_clusters x dim, unit rows
  std::vector<ClusterId> bundle;            // planted cluster of each context
  std::vector<std::vector<LabelId>> subsets;  // planted label subset per cluster
  double containment = 0.0;  // fraction of contexts whose top-k lies in their subset
  std::size_t attempts = 0;
};

/// Draws a planted dataset, checks containment with the exact oracle and
/// redraws from a derived seed until it reaches `min_containment`.
PlantedData generate_synthetic(const SynthSpec& spec);

/// Extra contexts from the same planted bundles (e.g. a held-out split).
ContextSet sample_contexts(const PlantedData& planted, double noise_sigma, std::size_t count,
                           Rng& rng, std::vector<ClusterId>* bundle = nullptr);

/// Fraction of contexts whose exact top-k labels all lie in their bundle's
/// planted subset.
double planted_containment(const PlantedData& planted, const ContextSet& contexts,
                           const std::vector<ClusterId>& bundle, std::size_t k);

/// One target token per context drawn from the exact softmax distribution.
std::vector<LabelId> sample_targets(const SoftmaxLayer& layer, const ContextSet& contexts,
                                    Rng& rng);

}  // namespace l2s
