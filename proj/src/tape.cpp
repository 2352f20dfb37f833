#include "vclanc/tape.hpp"

#include <cmath>
#include <string>

#include "vclanc/errors.hpp"

namespace vclanc::tensor {

const DenseMatrix& Var::value() const { return tape->value(*this); }
const DenseMatrix& Var::grad() const { return tape->grad(*this); }
bool Var::requires_grad() const { return tape->requires_grad(*this); }

Var Tape::constant(DenseMatrix value) {
  nodes_.push_back(Node{std::move(value), {}, false, true, {}});
  return Var{this, nodes_.size() - 1};
}

Var Tape::parameter(DenseMatrix value) {
  nodes_.push_back(Node{std::move(value), {}, true, true, {}});
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(DenseMatrix value, bool requires_grad, Backward backward) {
  nodes_.push_back(Node{std::move(value), {}, requires_grad, false,
                        requires_grad ? std::move(backward) : Backward{}});
  return Var{this, nodes_.size() - 1};
}

const DenseMatrix& Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.empty() && !n.value.empty()) {
    throw ContractError("Tape::grad: node " + std::to_string(v.id) +
                        " has no gradient (does it require grad?)");
  }
  return n.grad;
}

DenseMatrix& Tape::grad_buffer(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.empty()) n.grad = DenseMatrix(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(Var v, const DenseMatrix& g) { accumulate(v, 1.0, g); }

void Tape::accumulate(Var v, double alpha, const DenseMatrix& g) {
  if (!nodes_[v.id].requires_grad) return;
  axpy(alpha, g, grad_buffer(v));
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw ContractError("backward: loss belongs to another tape");
  const Node& out = nodes_[loss.id];
  if (out.value.rows() != 1 || out.value.cols() != 1) {
    throw ContractError("backward: loss must be 1x1, got " + std::to_string(out.value.rows()) + "x" +
                        std::to_string(out.value.cols()));
  }
  for (auto& n : nodes_) n.grad = DenseMatrix();
  if (out.requires_grad) {
    grad_buffer(loss)(0, 0) = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty() || !n.backward) continue;
      n.backward(*this, n.grad);
    }
  }
  for (auto& n : nodes_) {
    if (n.requires_grad && n.grad.empty()) n.grad = DenseMatrix(n.value.rows(), n.value.cols());
  }
}

namespace {

Tape& tape_of(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) throw ContractError("operands recorded on different tapes");
  return *a.tape;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

DenseMatrix apply_activation(const DenseMatrix& x, Activation kind) {
  DenseMatrix y(x.rows(), x.cols());
  auto in = x.values();
  auto out = y.values();
  switch (kind) {
    case Activation::relu:
      // NaN passes through so the finite checks downstream still see it.
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 || std::isnan(in[i]) ? in[i] : 0.0;
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::tanh(in[i]);
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = sigmoid(in[i]);
      break;
    case Activation::exp:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::exp(in[i]);
      break;
    case Activation::log:
      for (std::size_t i = 0; i < in.size(); ++i) {
        if (!(in[i] > 0.0)) {
          throw DomainError("log of non-positive entry " + std::to_string(in[i]) + " at index " +
                            std::to_string(i));
        }
        out[i] = std::log(in[i]);
      }
      break;
  }
  return y;
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.record(matmul(t.value(a), t.value(b)), rg, [a, b](Tape& t, const DenseMatrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, matmul_nt(g, t.value(b)));
    if (t.requires_grad(b)) t.accumulate(b, matmul_tn(t.value(a), g));
  });
}

Var spmm(const SparseCSR& s, Var b) {
  Tape& t = *b.tape;
  const SparseCSR* sp = &s;
  return t.record(spmm(s, t.value(b)), t.requires_grad(b), [sp, b](Tape& t, const DenseMatrix& g) {
    t.accumulate(b, spmm_t(*sp, g));
  });
}

Var activation(Var x, Activation kind) {
  Tape& t = *x.tape;
  DenseMatrix y = apply_activation(t.value(x), kind);
  const std::size_t out_id = t.size();
  return t.record(std::move(y), t.requires_grad(x), [x, kind, out_id](Tape& t, const DenseMatrix& g) {
    const auto xv = t.value(x).values();
    const auto yv = t.value(Var{&t, out_id}).values();
    const auto gv = g.values();
    DenseMatrix& dx = t.grad_buffer(x);
    auto d = dx.values();
    switch (kind) {
      case Activation::relu:
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += xv[i] > 0.0 ? gv[i] : 0.0;
        break;
      case Activation::tanh:
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += gv[i] * (1.0 - yv[i] * yv[i]);
        break;
      case Activation::sigmoid:
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += gv[i] * yv[i] * (1.0 - yv[i]);
        break;
      case Activation::exp:
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += gv[i] * yv[i];
        break;
      case Activation::log:
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += gv[i] / xv[i];
        break;
    }
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(t.value(a), t.value(b), "add");
  DenseMatrix y = t.value(a);
  axpy(1.0, t.value(b), y);
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.record(std::move(y), rg, [a, b](Tape& t, const DenseMatrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var add_row(Var a, Var row) {
  Tape& t = tape_of(a, row);
  const DenseMatrix& av = t.value(a);
  const DenseMatrix& rv = t.value(row);
  if (rv.rows() != 1 || rv.cols() != av.cols()) throw DimensionError("add_row: bias must be 1 x cols");
  DenseMatrix y = av;
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += rv(0, j);
  const bool rg = t.requires_grad(a) || t.requires_grad(row);
  return t.record(std::move(y), rg, [a, row](Tape& t, const DenseMatrix& g) {
    t.accumulate(a, g);
    if (t.requires_grad(row)) {
      DenseMatrix& dr = t.grad_buffer(row);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) dr(0, j) += g(i, j);
    }
  });
}

Var hadamard(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(t.value(a), t.value(b), "hadamard");
  DenseMatrix y = t.value(a);
  auto yv = y.values();
  auto bv = t.value(b).values();
  for (std::size_t i = 0; i < yv.size(); ++i) yv[i] *= bv[i];
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  return t.record(std::move(y), rg, [a, b](Tape& t, const DenseMatrix& g) {
    auto gv = g.values();
    if (t.requires_grad(a)) {
      auto other = t.value(b).values();
      auto d = t.grad_buffer(a).values();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += gv[i] * other[i];
    }
    if (t.requires_grad(b)) {
      auto other = t.value(a).values();
      auto d = t.grad_buffer(b).values();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += gv[i] * other[i];
    }
  });
}

Var scale(Var a, double s) {
  Tape& t = *a.tape;
  DenseMatrix y = t.value(a);
  for (double& v : y.values()) v *= s;
  return t.record(std::move(y), t.requires_grad(a),
                  [a, s](Tape& t, const DenseMatrix& g) { t.accumulate(a, s, g); });
}

Var sum(Var a) {
  Tape& t = *a.tape;
  double total = 0.0;
  for (double v : t.value(a).values()) total += v;
  return t.record(DenseMatrix(1, 1, total), t.requires_grad(a), [a](Tape& t, const DenseMatrix& g) {
    DenseMatrix& d = t.grad_buffer(a);
    for (double& v : d.values()) v += g(0, 0);
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  Tape& t = *a.tape;
  const DenseMatrix& av = t.value(a);
  if (begin > end || end > av.cols()) throw DimensionError("slice_cols: range out of bounds");
  DenseMatrix y(av.rows(), end - begin);
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = begin; j < end; ++j) y(i, j - begin) = av(i, j);
  return t.record(std::move(y), t.requires_grad(a), [a, begin, end](Tape& t, const DenseMatrix& g) {
    DenseMatrix& d = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = begin; j < end; ++j) d(i, j) += g(i, j - begin);
  });
}

}  // namespace vclanc::tensor
