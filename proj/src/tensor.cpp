#include "l2s/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <omp.h>

namespace l2s {

namespace {

void require_finite(std::span<const double> values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw std::invalid_argument(std::string(what) + ": non-finite entry at offset " +
                                  std::to_string(i));
    }
  }
}

// Four rows at a time; each accumulator still walks its row left to right
// so the result matches dot() exactly.
void rows_dot(const double* base, std::size_t stride, std::size_t count,
              const double* v, std::size_t len, double* out) {
  std::size_t r = 0;
  for (; r + 4 <= count; r += 4) {
    const double* w0 = base + (r + 0) * stride;
    const double* w1 = base + (r + 1) * stride;
    const double* w2 = base + (r + 2) * stride;
    const double* w3 = base + (r + 3) * stride;
    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
    for (std::size_t j = 0; j < len; ++j) {
      const double x = v[j];
      a0 += w0[j] * x;
      a1 += w1[j] * x;
      a2 += w2[j] * x;
      a3 += w3[j] * x;
    }
    out[r + 0] = a0;
    out[r + 1] = a1;
    out[r + 2] = a2;
    out[r + 3] = a3;
  }
  for (; r < count; ++r) {
    const double* w = base + r * stride;
    double acc = 0.0;
    for (std::size_t j = 0; j < len; ++j) acc += w[j] * v[j];
    out[r] = acc;
  }
}

constexpr std::size_t kRowBlock = 256;

void check_matvec(const DenseMatrix& m, const DenseVector& v) {
  if (m.cols() != v.size()) {
    throw std::invalid_argument("matvec: matrix " + shape_string(m.rows(), m.cols()) +
                                " vs vector of length " + std::to_string(v.size()));
  }
}

void check_nt(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("matmul_nt: " + shape_string(a.rows(), a.cols()) + " vs " +
                                shape_string(b.rows(), b.cols()));
  }
}

}  // namespace

DenseVector::DenseVector(std::size_t len, double fill) : data_(len, fill) {
  require_finite(data_, "DenseVector");
}

DenseVector::DenseVector(std::vector<double> data) : data_(std::move(data)) {
  require_finite(data_, "DenseVector");
}

DenseVector::DenseVector(std::initializer_list<double> values) : data_(values) {
  require_finite(data_, "DenseVector");
}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  require_finite(data_, "DenseMatrix");
}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw std::invalid_argument("DenseMatrix: " + shape_string(rows, cols) + " needs " +
                                std::to_string(rows * cols) + " entries, got " +
                                std::to_string(data_.size()));
  }
  require_finite(data_, "DenseMatrix");
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::transposed() const {
  DenseMatrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

std::string shape_string(std::size_t rows, std::size_t cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double x) { return std::isfinite(x); });
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("dot: length " + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) acc += a[j] * b[j];
  return acc;
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

DenseVector matvec_serial(const DenseMatrix& m, const DenseVector& v) {
  check_matvec(m, v);
  DenseVector out(m.rows());
  rows_dot(m.data().data(), m.cols(), m.rows(), v.span().data(), v.size(),
           out.span().data());
  return out;
}

DenseVector matvec(const DenseMatrix& m, const DenseVector& v) {
  check_matvec(m, v);
  DenseVector out(m.rows());
  const auto blocks = static_cast<std::int64_t>((m.rows() + kRowBlock - 1) / kRowBlock);
  const double* base = m.data().data();
  double* dst = out.span().data();
#pragma omp parallel for schedule(static) if (blocks > 1)
  for (std::int64_t blk = 0; blk < blocks; ++blk) {
    const std::size_t begin = static_cast<std::size_t>(blk) * kRowBlock;
    const std::size_t count = std::min(kRowBlock, m.rows() - begin);
    rows_dot(base + begin * m.cols(), m.cols(), count, v.span().data(), v.size(), dst + begin);
  }
  return out;
}

void matvec_rows_serial(const DenseMatrix& m, std::span<const double> v,
                        std::span<const LabelId> rows, std::span<double> out) {
  if (m.cols() != v.size() || rows.size() != out.size()) {
    throw std::invalid_argument("matvec_rows: matrix " + shape_string(m.rows(), m.cols()) +
                                " vs vector of length " + std::to_string(v.size()));
  }
  const std::size_t d = v.size();
  std::size_t j = 0;
  for (; j + 4 <= rows.size(); j += 4) {
    const double* w0 = m.row(rows[j + 0]).data();
    const double* w1 = m.row(rows[j + 1]).data();
    const double* w2 = m.row(rows[j + 2]).data();
    const double* w3 = m.row(rows[j + 3]).data();
    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double x = v[c];
      a0 += w0[c] * x;
      a1 += w1[c] * x;
      a2 += w2[c] * x;
      a3 += w3[c] * x;
    }
    out[j + 0] = a0;
    out[j + 1] = a1;
    out[j + 2] = a2;
    out[j + 3] = a3;
  }
  for (; j < rows.size(); ++j) out[j] = dot(m.row(rows[j]), v);
}

DenseMatrix matmul_nt_serial(const DenseMatrix& a, const DenseMatrix& b) {
  check_nt(a, b);
  DenseMatrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    rows_dot(b.data().data(), b.cols(), b.rows(), a.row(i).data(), a.cols(),
             out.row(i).data());
  }
  return out;
}

DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  check_nt(a, b);
  DenseMatrix out(a.rows(), b.rows());
  const auto n = static_cast<std::int64_t>(a.rows());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    rows_dot(b.data().data(), b.cols(), b.rows(), a.row(r).data(), a.cols(), out.row(r).data());
  }
  return out;
}

namespace {

bool ranks_before(const Scored& a, const Scored& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.index < b.index;
}

}  // namespace

std::vector<Scored> top_k(std::span<const double> scores, std::size_t k) {
  if (k < 1 || k > scores.size()) {
    throw std::invalid_argument("top_k: k=" + std::to_string(k) + " outside [1, " +
                                std::to_string(scores.size()) + "]");
  }
  if (k > 32) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                        return ranks_before({a, scores[a]}, {b, scores[b]});
                      });
    std::vector<Scored> out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = {idx[i], scores[idx[i]]};
    return out;
  }

  // Small k: keep a sorted buffer and insert. Scanning in index order means a
  // later equal score never displaces an earlier one.
  std::vector<Scored> best;
  best.reserve(k + 1);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = scores[i];
    if (best.size() == k && !(s > best.back().score)) continue;
    std::size_t pos = best.size();
    while (pos > 0 && s > best[pos - 1].score) --pos;
    best.insert(best.begin() + static_cast<std::ptrdiff_t>(pos), Scored{i, s});
    if (best.size() > k) best.pop_back();
  }
  return best;
}

}  // namespace l2s
