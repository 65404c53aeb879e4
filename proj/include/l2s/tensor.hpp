#pragma once

// Dense row-major storage and the inner-product kernels the rest of the
// library is built on. Every kernel comes in two flavours: an OpenMP
// version used by batch paths and a serial reference that tests and the
// single-threaded benchmark call directly. Both produce bit-identical
// results because each output element is summed in the same order.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace l2s {

using LabelId = std::uint32_t;
using ClusterId = std::uint32_t;

class DenseVector {
 public:
  DenseVector() = default;
  explicit DenseVector(std::size_t len, double fill = 0.0);
  explicit DenseVector(std::vector<double> data);
  DenseVector(std::initializer_list<double> values);

  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  std::span<const double> span() const { return data_; }
  std::span<double> span() { return data_; }
  const std::vector<double>& values() const { return data_; }

  bool operator==(const DenseVector&) const = default;

 private:
  std::vector<double> data_;
};

class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  /// Takes ownership of `data`; throws if the size is wrong or an entry is
  /// not finite.
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  DenseMatrix transposed() const;

  bool operator==(const DenseMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// "RxC" formatting used in shape errors.
std::string shape_string(std::size_t rows, std::size_t cols);

bool all_finite(std::span<const double> values);

/// Left-to-right sum of a[j] * b[j]. The order is part of the contract.
double dot(std::span<const double> a, std::span<const double> b);

double norm2(std::span<const double> v);

/// out[i] = row(i) . v, parallel over rows.
DenseVector matvec(const DenseMatrix& m, const DenseVector& v);
/// Serial reference for matvec; also the path used by per-query timing.
DenseVector matvec_serial(const DenseMatrix& m, const DenseVector& v);

/// Writes m.row(rows[j]) . v into out[j] for each selected row.
void matvec_rows_serial(const DenseMatrix& m, std::span<const double> v,
                        std::span<const LabelId> rows, std::span<double> out);

/// out = a * b^T (a: n x d, b: m x d), parallel over rows of a.
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix matmul_nt_serial(const DenseMatrix& a, const DenseMatrix& b);

struct Scored {
  std::size_t index;
  double score;
  bool operator==(const Scored&) const = default;
};

/// The k largest entries ordered by (score desc, index asc).
std::vector<Scored> top_k(std::span<const double> scores, std::size_t k);

}  // namespace l2s
