#pragma once

#include <cstddef>

#include "l2s/tensor.hpp"

namespace l2s {

struct SvdOptions {
  std::size_t max_sweeps = 60;
  // Relative off-diagonal threshold below which a column pair counts as
  // orthogonal.
  double tolerance = 1e-13;
};

/// Rank-truncated SVD: m ~= u * diag(s) * vt, u is rows x rank, vt is
/// rank x cols, s non-negative and non-increasing.
struct SvdResult {
  DenseMatrix u;
  DenseVector s;
  DenseMatrix vt;

  std::size_t rank() const { return s.size(); }
  DenseMatrix reconstruct() const;
};

/// One-sided Jacobi (Hestenes) on the narrower side of `m`. Desk-scale
/// matrices only: cost is O(sweeps * min(r,c)^2 * max(r,c)).
SvdResult truncated_svd(const DenseMatrix& m, std::size_t rank, const SvdOptions& opts = {});

double frobenius_distance(const DenseMatrix& a, const DenseMatrix& b);

}  // namespace l2s
