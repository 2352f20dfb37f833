#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "vclanc/tensor.hpp"

namespace vclanc::tensor {

class Tape;

// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const DenseMatrix& value() const;
  const DenseMatrix& grad() const;
  bool requires_grad() const;
};

// Records a forward computation so that backward() can visit it in reverse
// order. Nodes are appended in evaluation order, which is a topological order
// of the computation graph.
class Tape {
 public:
  // Receives the node's output gradient and adds into its inputs' gradients.
  using Backward = std::function<void(Tape&, const DenseMatrix& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(DenseMatrix value);
  Var parameter(DenseMatrix value);

  // Appends a derived node. `backward` may be empty when no input requires grad.
  Var record(DenseMatrix value, bool requires_grad, Backward backward);

  const DenseMatrix& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  // Gradient of the last backward() target w.r.t. v. Nodes that require grad
  // but were not reached hold a zero matrix of the node's shape.
  const DenseMatrix& grad(Var v) const;

  // Adds g into v's gradient buffer; no-op when v does not require grad.
  void accumulate(Var v, const DenseMatrix& g);
  // Scaled accumulation: grad(v) += alpha * g.
  void accumulate(Var v, double alpha, const DenseMatrix& g);
  // Direct access to v's gradient buffer (allocated on demand).
  DenseMatrix& grad_buffer(Var v);

  // Reverse sweep from a 1x1 loss node. Throws ContractError otherwise.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    DenseMatrix value;
    DenseMatrix grad;
    bool requires_grad = false;
    bool is_leaf = false;
    Backward backward;
  };

  std::vector<Node> nodes_;
};

enum class Activation { relu, tanh, sigmoid, exp, log };

// Primitive operations. Each records itself on the tape of its operands.
Var matmul(Var a, Var b);
Var spmm(const SparseCSR& s, Var b);  // s must outlive the tape
Var activation(Var x, Activation kind);
Var add(Var a, Var b);
Var add_row(Var a, Var row);  // a + 1 * row, row is 1 x a.cols()
Var hadamard(Var a, Var b);
Var scale(Var a, double s);
Var sum(Var a);  // 1x1
Var slice_cols(Var a, std::size_t begin, std::size_t end);

// Elementwise activation on plain matrices; shared with the taped version.
DenseMatrix apply_activation(const DenseMatrix& x, Activation kind);

}  // namespace vclanc::tensor
