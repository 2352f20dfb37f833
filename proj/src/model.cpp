#include "vclanc/model.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vclanc/errors.hpp"

namespace vclanc::model {

using tensor::Activation;

namespace {

DenseMatrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  DenseMatrix w(fan_in, fan_out);
  for (double& v : w.values()) v = u(rng);
  return w;
}

void require_finite(const DenseMatrix& m, const char* encoder, const char* layer) {
  if (!m.all_finite()) {
    throw NumericError(std::string(encoder) + ": non-finite values in " + layer);
  }
}

inline double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline void row_axpy(double a, const double* __restrict x, double* __restrict y, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) y[k] += a * x[k];
}

// logits(i, :) = sum_k left(row_begin + i, k) * right_t(k, :), k ascending.
void block_logits(const DenseMatrix& left, const DenseMatrix& right_t, std::size_t row_begin,
                  std::size_t rows, std::vector<double>& out) {
  const std::size_t c = right_t.cols();
  out.assign(rows * c, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    double* o = out.data() + i * c;
    for (std::size_t k = 0; k < left.cols(); ++k) {
      const double a = left(row_begin + i, k);
      if (a == 0.0) continue;
      row_axpy(a, right_t.data() + k * c, o, c);
    }
  }
}

}  // namespace

ModelParams ModelParams::glorot(std::size_t n_nodes, std::size_t n_attrs, std::size_t hidden,
                                std::size_t embedding, std::mt19937_64& rng) {
  ModelParams p;
  p.node.input_weight = glorot_uniform(n_attrs, hidden, rng);
  p.node.output_weight = glorot_uniform(hidden, 2 * embedding, rng);
  p.attr.input_weight = glorot_uniform(n_nodes, hidden, rng);
  p.attr.input_bias = DenseMatrix(1, hidden);
  p.attr.output_weight = glorot_uniform(hidden, 2 * embedding, rng);
  p.attr.output_bias = DenseMatrix(1, 2 * embedding);
  return p;
}

std::array<DenseMatrix*, 6> ModelParams::tensors() {
  return {&node.input_weight, &node.output_weight, &attr.input_weight,
          &attr.input_bias,   &attr.output_weight, &attr.output_bias};
}

std::array<const DenseMatrix*, 6> ModelParams::tensors() const {
  return {&node.input_weight, &node.output_weight, &attr.input_weight,
          &attr.input_bias,   &attr.output_weight, &attr.output_bias};
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  const auto ta = a.tensors();
  const auto tb = b.tensors();
  for (std::size_t i = 0; i < ta.size(); ++i)
    if (!(*ta[i] == *tb[i])) return false;
  return true;
}

DenseMatrix reparameterize(const DenseMatrix& mean, const DenseMatrix& log_var, const DenseMatrix& noise) {
  tensor::require_same_shape(mean, log_var, "reparameterize");
  tensor::require_same_shape(mean, noise, "reparameterize");
  DenseMatrix z(mean.rows(), mean.cols());
  for (std::size_t i = 0; i < z.size(); ++i) {
    z.values()[i] = mean.values()[i] + std::exp(0.5 * log_var.values()[i]) * noise.values()[i];
  }
  return z;
}

Var reparameterize(Var mean, Var log_var, const DenseMatrix& noise) {
  tensor::require_same_shape(mean.value(), log_var.value(), "reparameterize");
  Tape& t = *mean.tape;
  Var std_dev = tensor::activation(tensor::scale(log_var, 0.5), Activation::exp);
  return tensor::add(mean, tensor::hadamard(std_dev, t.constant(noise)));
}

LatentVars gcn_encode(const SparseCSR& adj_norm, const SparseCSR& features, Var input_weight,
                      Var output_weight, const DenseMatrix& noise) {
  const std::size_t j = output_weight.value().cols() / 2;
  Var hidden = tensor::activation(tensor::spmm(adj_norm, tensor::spmm(features, input_weight)), Activation::relu);
  require_finite(hidden.value(), "gcn_encode", "hidden layer");
  Var out = tensor::spmm(adj_norm, tensor::matmul(hidden, output_weight));
  require_finite(out.value(), "gcn_encode", "output layer");
  Var mean = tensor::slice_cols(out, 0, j);
  Var log_var = tensor::slice_cols(out, j, 2 * j);
  return {hidden, mean, log_var, reparameterize(mean, log_var, noise)};
}

LatentVars mlp_encode(const SparseCSR& features_t, Var input_weight, Var input_bias, Var output_weight,
                      Var output_bias, const DenseMatrix& noise) {
  const std::size_t j = output_weight.value().cols() / 2;
  Var hidden = tensor::activation(tensor::add_row(tensor::spmm(features_t, input_weight), input_bias),
                                  Activation::tanh);
  require_finite(hidden.value(), "mlp_encode", "hidden layer");
  Var out = tensor::add_row(tensor::matmul(hidden, output_weight), output_bias);
  require_finite(out.value(), "mlp_encode", "output layer");
  Var mean = tensor::slice_cols(out, 0, j);
  Var log_var = tensor::slice_cols(out, j, 2 * j);
  return {hidden, mean, log_var, reparameterize(mean, log_var, noise)};
}

LatentBatch gcn_encode(const SparseCSR& adj_norm, const SparseCSR& features, const NodeEncoderParams& p,
                       const DenseMatrix& noise) {
  Tape tape;
  auto v = gcn_encode(adj_norm, features, tape.constant(p.input_weight), tape.constant(p.output_weight), noise);
  return {v.hidden.value(), v.mean.value(), v.log_var.value(), v.sample.value()};
}

LatentBatch mlp_encode(const SparseCSR& features_t, const AttrEncoderParams& p, const DenseMatrix& noise) {
  Tape tape;
  auto v = mlp_encode(features_t, tape.constant(p.input_weight), tape.constant(p.input_bias),
                      tape.constant(p.output_weight), tape.constant(p.output_bias), noise);
  return {v.hidden.value(), v.mean.value(), v.log_var.value(), v.sample.value()};
}

DenseMatrix decode_block(const DenseMatrix& left, const DenseMatrix& right, std::size_t row_begin,
                         std::size_t row_end) {
  if (left.cols() != right.cols()) throw DimensionError("decode: latent dimensions differ");
  if (row_begin > row_end || row_end > left.rows()) throw DimensionError("decode: row range out of bounds");
  std::vector<double> logits;
  block_logits(left, tensor::transpose(right), row_begin, row_end - row_begin, logits);
  for (double& x : logits) x = stable_sigmoid(x);
  return DenseMatrix(row_end - row_begin, right.rows(), std::move(logits));
}

DenseMatrix decode_adjacency(const DenseMatrix& z) { return decode_block(z, z, 0, z.rows()); }

DenseMatrix decode_attributes(const DenseMatrix& node_z, const DenseMatrix& attr_z) {
  return decode_block(node_z, attr_z, 0, node_z.rows());
}

double bernoulli_ll(const DenseMatrix& target, const DenseMatrix& prob) {
  tensor::require_same_shape(target, prob, "bernoulli_ll");
  if (target.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double t = target.values()[i];
    const double p = std::clamp(prob.values()[i], kProbClamp, 1.0 - kProbClamp);
    total += t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
  }
  return total / static_cast<double>(target.size());
}

Var reconstruction_ll(Var left, Var right, const SparseCSR& target, const ReconstructionOptions& opt) {
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using RowArr = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  if (left.tape != right.tape) throw ContractError("reconstruction_ll: operands on different tapes");
  Tape& tape = *left.tape;
  const DenseMatrix& lv = tape.value(left);
  const DenseMatrix& rv = tape.value(right);
  if (lv.cols() != rv.cols()) throw DimensionError("reconstruction_ll: latent dimensions differ");
  if (target.rows() != lv.rows() || target.cols() != rv.rows()) {
    throw DimensionError("reconstruction_ll: target shape does not match factors");
  }
  const auto rows = static_cast<Eigen::Index>(lv.rows());
  const auto cols = static_cast<Eigen::Index>(rv.rows());
  const auto dim = static_cast<Eigen::Index>(lv.cols());
  const bool need_grad = tape.requires_grad(left) || tape.requires_grad(right);
  // Same factor on both sides with a symmetric target: the gradient matrix is
  // symmetric, so d_right equals d_left.
  const bool symmetric = left.id == right.id;
  const double limit = std::log((1.0 - kProbClamp) / kProbClamp);
  const double w = opt.pos_weight;

  Eigen::Map<const RowMat> lm(lv.data(), rows, dim);
  Eigen::Map<const RowMat> rm(rv.data(), cols, dim);

  auto d_left = std::make_shared<DenseMatrix>();
  auto d_right = std::make_shared<DenseMatrix>();
  if (need_grad) {
    *d_left = DenseMatrix(lv.rows(), lv.cols());
    if (!symmetric) *d_right = DenseMatrix(rv.rows(), rv.cols());
  }
  Eigen::Map<RowMat> dl(d_left->data(), d_left->rows(), d_left->cols());
  Eigen::Map<RowMat> dr(d_right->data(), d_right->rows(), d_right->cols());

  double total = 0.0;
  RowMat logits;
  RowArr clamped, ex, softplus, grad;
  const auto block = static_cast<Eigen::Index>(std::max<std::size_t>(1, opt.block_rows));
  for (Eigen::Index r0 = 0; r0 < rows; r0 += block) {
    const Eigen::Index b = std::min(block, rows - r0);
    logits.noalias() = lm.middleRows(r0, b) * rm.transpose();
    // Every entry as a negative (t = 0) first: -softplus(x).
    clamped = logits.array().max(-limit).min(limit);
    ex = (-clamped.abs()).exp();
    // log(1 + e) rather than log1p: vectorizes, and e <= 1 keeps the absolute error at ulp level.
    softplus = clamped.max(0.0) + (1.0 + ex).log();
    total -= softplus.sum();
    if (need_grad) {
      grad.resize(b, cols);
      const double* x = logits.data();
      const double* xc = clamped.data();
      const double* e = ex.data();
      double* g = grad.data();
      for (Eigen::Index q = 0; q < b * cols; ++q) {
        const double inv = 1.0 / (1.0 + e[q]);
        const double sig = xc[q] >= 0 ? inv : e[q] * inv;
        g[q] = std::abs(x[q]) < limit ? -sig : 0.0;
      }
    }
    // Positive entries: replace -softplus(x) with w * (x - softplus(x)).
    for (Eigen::Index i = 0; i < b; ++i) {
      for (auto j : target.row_indices(static_cast<std::size_t>(r0 + i))) {
        const auto c = static_cast<Eigen::Index>(j);
        total += softplus(i, c) + w * (clamped(i, c) - softplus(i, c));
        if (need_grad && grad(i, c) != 0.0) grad(i, c) = w * (1.0 + grad(i, c));
      }
    }
    if (!need_grad) continue;
    dl.middleRows(r0, b).noalias() = grad.matrix() * rm;
    if (!symmetric) dr.noalias() += grad.matrix().transpose() * lm.middleRows(r0, b);
  }
  const double norm = 1.0 / static_cast<double>(rows * cols);
  if (!std::isfinite(total)) throw NumericError("reconstruction_ll: non-finite log-likelihood");
  return tape.record(DenseMatrix(1, 1, total * norm), need_grad,
                     [left, right, d_left, d_right, norm, symmetric](Tape& t, const DenseMatrix& g) {
                       t.accumulate(left, g(0, 0) * norm, *d_left);
                       t.accumulate(right, g(0, 0) * norm, symmetric ? *d_left : *d_right);
                     });
}

}  // namespace vclanc::model
