#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace vclanc::tensor {

// Row-major matrix of doubles.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  void fill(double v);
  bool all_finite() const;

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct Triplet {
  std::size_t row;
  std::size_t col;
  double value;
};

// Compressed sparse row matrix. Column indices are strictly increasing per row.
class SparseCSR {
 public:
  SparseCSR() = default;
  SparseCSR(std::size_t rows, std::size_t cols);
  // Validates the CSR invariants; throws ContractError on violation.
  SparseCSR(std::size_t rows, std::size_t cols, std::vector<std::size_t> offsets,
            std::vector<std::size_t> indices, std::vector<double> values);

  // Duplicate coordinates are summed.
  static SparseCSR from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets);
  static SparseCSR identity(std::size_t n);
  static SparseCSR from_dense(const DenseMatrix& m);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t nnz() const { return indices_.size(); }

  std::span<const std::size_t> offsets() const { return offsets_; }
  std::span<const std::size_t> indices() const { return indices_; }
  std::span<const double> values() const { return values_; }

  std::span<const std::size_t> row_indices(std::size_t r) const {
    return {indices_.data() + offsets_[r], offsets_[r + 1] - offsets_[r]};
  }
  std::span<const double> row_values(std::size_t r) const {
    return {values_.data() + offsets_[r], offsets_[r + 1] - offsets_[r]};
  }

  double at(std::size_t r, std::size_t c) const;
  SparseCSR transposed() const;
  DenseMatrix densify() const;

  friend bool operator==(const SparseCSR&, const SparseCSR&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<std::size_t> indices_;
  std::vector<double> values_;
};

// Kernels. All accumulate over the inner index in ascending order, so results
// are bit-identical to the textbook triple loop.

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
// a * b^T
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);
// a^T * b
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix transpose(const DenseMatrix& a);

DenseMatrix spmm(const SparseCSR& s, const DenseMatrix& b);
// s^T * b without materializing the transpose.
DenseMatrix spmm_t(const SparseCSR& s, const DenseMatrix& b);

// out += alpha * x, shapes must agree.
void axpy(double alpha, const DenseMatrix& x, DenseMatrix& out);

void require_same_shape(const DenseMatrix& a, const DenseMatrix& b, const char* what);

}  // namespace vclanc::tensor
