#include "l2s/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace l2s {

namespace {

void rotate_rows(DenseMatrix& m, std::size_t p, std::size_t q, double c, double s) {
  auto rp = m.row(p);
  auto rq = m.row(q);
  for (std::size_t j = 0; j < rp.size(); ++j) {
    const double a = rp[j];
    const double b = rq[j];
    rp[j] = c * a - s * b;
    rq[j] = s * a + c * b;
  }
}

// Fills zero columns of `u` (rows x rank) so the columns are orthonormal.
void complete_basis(DenseMatrix& u, const std::vector<char>& is_zero) {
  const std::size_t m = u.rows();
  std::size_t candidate = 0;
  for (std::size_t j = 0; j < u.cols(); ++j) {
    if (!is_zero[j]) continue;
    for (; candidate < m; ++candidate) {
      std::vector<double> e(m, 0.0);
      e[candidate] = 1.0;
      // Two passes of Gram-Schmidt for numerical orthogonality.
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t k = 0; k < u.cols(); ++k) {
          if (k == j || (is_zero[k] && k > j)) continue;
          double proj = 0.0;
          for (std::size_t i = 0; i < m; ++i) proj += u(i, k) * e[i];
          for (std::size_t i = 0; i < m; ++i) e[i] -= proj * u(i, k);
        }
      }
      const double n = norm2(e);
      if (n > 1e-6) {
        for (std::size_t i = 0; i < m; ++i) u(i, j) = e[i] / n;
        ++candidate;
        break;
      }
    }
  }
}

// Requires m.rows() >= m.cols().
SvdResult jacobi_tall(const DenseMatrix& m, std::size_t rank, const SvdOptions& opts) {
  const std::size_t n = m.cols();
  DenseMatrix cols = m.transposed();  // row j holds column j of m
  DenseMatrix right = DenseMatrix::identity(n);

  bool converged = false;
  for (std::size_t sweep = 0; sweep < opts.max_sweeps && !converged; ++sweep) {
    converged = true;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double alpha = dot(cols.row(p), cols.row(p));
        const double beta = dot(cols.row(q), cols.row(q));
        const double gamma = dot(cols.row(p), cols.row(q));
        if (alpha == 0.0 || beta == 0.0) continue;
        if (std::abs(gamma) <= opts.tolerance * std::sqrt(alpha * beta)) continue;
        converged = false;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        rotate_rows(cols, p, q, c, s);
        rotate_rows(right, p, q, c, s);
      }
    }
  }
  if (!converged) {
    throw std::runtime_error("truncated_svd: Jacobi sweeps did not converge within the cap of " +
                             std::to_string(opts.max_sweeps) + " sweeps");
  }

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) sigma[j] = norm2(cols.row(j));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sigma[a] > sigma[b]; });

  const double cutoff = sigma[order[0]] * static_cast<double>(std::max(m.rows(), n)) * 1e-15;
  SvdResult out{DenseMatrix(m.rows(), rank), DenseVector(rank), DenseMatrix(rank, n)};
  std::vector<char> zero_flags(rank, 0);
  for (std::size_t j = 0; j < rank; ++j) {
    const std::size_t src = order[j];
    const double sv = sigma[src];
    const bool is_zero = !(sv > cutoff);
    out.s[j] = is_zero ? 0.0 : sv;
    zero_flags[j] = is_zero;
    if (!is_zero) {
      for (std::size_t i = 0; i < m.rows(); ++i) out.u(i, j) = cols(src, i) / sv;
    }
    auto dst = out.vt.row(j);
    auto from = right.row(src);
    std::copy(from.begin(), from.end(), dst.begin());
  }
  if (std::find(zero_flags.begin(), zero_flags.end(), 1) != zero_flags.end()) {
    complete_basis(out.u, zero_flags);
  }
  return out;
}

}  // namespace

DenseMatrix SvdResult::reconstruct() const {
  DenseMatrix out(u.rows(), vt.cols());
  for (std::size_t i = 0; i < u.rows(); ++i) {
    for (std::size_t k = 0; k < s.size(); ++k) {
      const double coef = u(i, k) * s[k];
      if (coef == 0.0) continue;
      for (std::size_t j = 0; j < vt.cols(); ++j) out(i, j) += coef * vt(k, j);
    }
  }
  return out;
}

SvdResult truncated_svd(const DenseMatrix& m, std::size_t rank, const SvdOptions& opts) {
  const std::size_t min_dim = std::min(m.rows(), m.cols());
  if (rank < 1 || rank > min_dim) {
    throw std::invalid_argument("truncated_svd: rank " + std::to_string(rank) +
                                " outside [1, " + std::to_string(min_dim) + "] for " +
                                shape_string(m.rows(), m.cols()));
  }
  if (m.rows() >= m.cols()) return jacobi_tall(m, rank, opts);

  SvdResult t = jacobi_tall(m.transposed(), rank, opts);
  return SvdResult{t.vt.transposed(), std::move(t.s), t.u.transposed()};
}

double frobenius_distance(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("frobenius_distance: " + shape_string(a.rows(), a.cols()) +
                                " vs " + shape_string(b.rows(), b.cols()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double diff = a.data()[i] - b.data()[i];
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

}  // namespace l2s
