#include "vclanc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vclanc/errors.hpp"

namespace vclanc::tensor {

namespace {

std::string shape_str(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

// c_row += alpha * b_row
inline void row_axpy(double alpha, const double* __restrict b, double* __restrict c, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) c[j] += alpha * b[j];
}

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("DenseMatrix: data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str(rows, cols));
  }
}

DenseMatrix::DenseMatrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionError("DenseMatrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void DenseMatrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool DenseMatrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

SparseCSR::SparseCSR(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), offsets_(rows + 1, 0) {}

SparseCSR::SparseCSR(std::size_t rows, std::size_t cols, std::vector<std::size_t> offsets,
                     std::vector<std::size_t> indices, std::vector<double> values)
    : rows_(rows),
      cols_(cols),
      offsets_(std::move(offsets)),
      indices_(std::move(indices)),
      values_(std::move(values)) {
  if (offsets_.size() != rows_ + 1 || offsets_.front() != 0 || offsets_.back() != indices_.size() ||
      indices_.size() != values_.size()) {
    throw ContractError("SparseCSR: inconsistent offsets/indices/values");
  }
  for (std::size_t r = 0; r < rows_; ++r) {
    if (offsets_[r] > offsets_[r + 1]) throw ContractError("SparseCSR: offsets not monotone");
    for (std::size_t k = offsets_[r]; k < offsets_[r + 1]; ++k) {
      if (indices_[k] >= cols_) throw ContractError("SparseCSR: column index out of range");
      if (k > offsets_[r] && indices_[k] <= indices_[k - 1]) {
        throw ContractError("SparseCSR: column indices not strictly increasing in row " +
                            std::to_string(r));
      }
    }
  }
}

SparseCSR SparseCSR::from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets) {
  for (const auto& t : triplets) {
    if (t.row >= rows || t.col >= cols) throw DimensionError("SparseCSR: triplet out of range");
  }
  std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  SparseCSR s(rows, cols);
  s.indices_.reserve(triplets.size());
  s.values_.reserve(triplets.size());
  for (std::size_t k = 0; k < triplets.size(); ++k) {
    const auto& t = triplets[k];
    if (k > 0 && triplets[k - 1].row == t.row && triplets[k - 1].col == t.col) {
      s.values_.back() += t.value;
      continue;
    }
    s.indices_.push_back(t.col);
    s.values_.push_back(t.value);
    s.offsets_[t.row + 1]++;
  }
  for (std::size_t r = 0; r < rows; ++r) s.offsets_[r + 1] += s.offsets_[r];
  return s;
}

SparseCSR SparseCSR::identity(std::size_t n) {
  std::vector<std::size_t> offsets(n + 1), indices(n);
  for (std::size_t i = 0; i < n; ++i) {
    offsets[i + 1] = i + 1;
    indices[i] = i;
  }
  return SparseCSR(n, n, std::move(offsets), std::move(indices), std::vector<double>(n, 1.0));
}

SparseCSR SparseCSR::from_dense(const DenseMatrix& m) {
  std::vector<Triplet> t;
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c)
      if (m(r, c) != 0.0) t.push_back({r, c, m(r, c)});
  return from_triplets(m.rows(), m.cols(), std::move(t));
}

double SparseCSR::at(std::size_t r, std::size_t c) const {
  auto idx = row_indices(r);
  auto it = std::lower_bound(idx.begin(), idx.end(), c);
  if (it == idx.end() || *it != c) return 0.0;
  return values_[offsets_[r] + static_cast<std::size_t>(it - idx.begin())];
}

SparseCSR SparseCSR::transposed() const {
  SparseCSR t(cols_, rows_);
  for (auto c : indices_) t.offsets_[c + 1]++;
  for (std::size_t c = 0; c < cols_; ++c) t.offsets_[c + 1] += t.offsets_[c];
  t.indices_.resize(nnz());
  t.values_.resize(nnz());
  std::vector<std::size_t> cursor(t.offsets_.begin(), t.offsets_.end() - 1);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t k = offsets_[r]; k < offsets_[r + 1]; ++k) {
      const std::size_t dst = cursor[indices_[k]]++;
      t.indices_[dst] = r;
      t.values_[dst] = values_[k];
    }
  }
  return t;
}

DenseMatrix SparseCSR::densify() const {
  DenseMatrix d(rows_, cols_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t k = offsets_[r]; k < offsets_[r + 1]; ++k) d(r, indices_[k]) = values_[k];
  return d;
}

void require_same_shape(const DenseMatrix& a, const DenseMatrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a.rows(), a.cols()) +
                         " vs " + shape_str(b.rows(), b.cols()));
  }
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + shape_str(a.rows(), a.cols()) + " x " +
                         shape_str(b.rows(), b.cols()));
  }
  DenseMatrix c(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* ci = c.data() + i * n;
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      row_axpy(aik, b.data() + k * n, ci, n);
    }
  }
  return c;
}

DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: " + shape_str(a.rows(), a.cols()) + " x (" +
                         shape_str(b.rows(), b.cols()) + ")^T");
  }
  return matmul(a, transpose(b));
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn: (" + shape_str(a.rows(), a.cols()) + ")^T x " +
                         shape_str(b.rows(), b.cols()));
  }
  DenseMatrix c(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double* bk = b.data() + k * n;
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      row_axpy(aki, bk, c.data() + i * n, n);
    }
  }
  return c;
}

DenseMatrix spmm(const SparseCSR& s, const DenseMatrix& b) {
  if (s.cols() != b.rows()) {
    throw DimensionError("spmm: " + shape_str(s.rows(), s.cols()) + " x " +
                         shape_str(b.rows(), b.cols()));
  }
  DenseMatrix c(s.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t r = 0; r < s.rows(); ++r) {
    auto idx = s.row_indices(r);
    auto val = s.row_values(r);
    double* cr = c.data() + r * n;
    for (std::size_t k = 0; k < idx.size(); ++k) row_axpy(val[k], b.data() + idx[k] * n, cr, n);
  }
  return c;
}

DenseMatrix spmm_t(const SparseCSR& s, const DenseMatrix& b) {
  if (s.rows() != b.rows()) {
    throw DimensionError("spmm_t: (" + shape_str(s.rows(), s.cols()) + ")^T x " +
                         shape_str(b.rows(), b.cols()));
  }
  DenseMatrix c(s.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t r = 0; r < s.rows(); ++r) {
    auto idx = s.row_indices(r);
    auto val = s.row_values(r);
    const double* br = b.data() + r * n;
    for (std::size_t k = 0; k < idx.size(); ++k) row_axpy(val[k], br, c.data() + idx[k] * n, n);
  }
  return c;
}

void axpy(double alpha, const DenseMatrix& x, DenseMatrix& out) {
  require_same_shape(x, out, "axpy");
  row_axpy(alpha, x.data(), out.data(), x.size());
}

}  // namespace vclanc::tensor
