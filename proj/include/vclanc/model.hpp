#pragma once

#include <array>
#include <random>
#include <string_view>

#include "vclanc/tape.hpp"
#include "vclanc/tensor.hpp"

namespace vclanc::model {

using tensor::DenseMatrix;
using tensor::SparseCSR;
using tensor::Tape;
using tensor::Var;

// Two-layer GCN over the normalized adjacency. The output layer emits
// [mean | log-variance] side by side.
struct NodeEncoderParams {
  DenseMatrix input_weight;   // M x hidden
  DenseMatrix output_weight;  // hidden x 2J
};

// Two-layer tanh MLP applied to X^T, one row per attribute.
struct AttrEncoderParams {
  DenseMatrix input_weight;   // N x hidden
  DenseMatrix input_bias;     // 1 x hidden
  DenseMatrix output_weight;  // hidden x 2J
  DenseMatrix output_bias;    // 1 x 2J
};

struct ModelParams {
  NodeEncoderParams node;
  AttrEncoderParams attr;

  static constexpr std::array<std::string_view, 6> kNames{"node_w0", "node_w1", "attr_w0",
                                                          "attr_b0", "attr_w1", "attr_b1"};

  // Glorot-uniform weights, zero biases.
  static ModelParams glorot(std::size_t n_nodes, std::size_t n_attrs, std::size_t hidden,
                            std::size_t embedding, std::mt19937_64& rng);

  std::array<DenseMatrix*, 6> tensors();
  std::array<const DenseMatrix*, 6> tensors() const;
  std::size_t embedding_size() const { return node.output_weight.cols() / 2; }

  friend bool operator==(const ModelParams& a, const ModelParams& b);
};

struct LatentBatch {
  DenseMatrix hidden;  // first-layer activations
  DenseMatrix mean;
  DenseMatrix log_var;
  DenseMatrix sample;
};

struct LatentVars {
  Var hidden;
  Var mean;
  Var log_var;
  Var sample;
};

// mean + exp(log_var / 2) * noise
DenseMatrix reparameterize(const DenseMatrix& mean, const DenseMatrix& log_var, const DenseMatrix& noise);
Var reparameterize(Var mean, Var log_var, const DenseMatrix& noise);

// Taped encoders. `adj_norm`, `features` and `features_t` must outlive the tape.
LatentVars gcn_encode(const SparseCSR& adj_norm, const SparseCSR& features, Var input_weight,
                      Var output_weight, const DenseMatrix& noise);
LatentVars mlp_encode(const SparseCSR& features_t, Var input_weight, Var input_bias, Var output_weight,
                      Var output_bias, const DenseMatrix& noise);

LatentBatch gcn_encode(const SparseCSR& adj_norm, const SparseCSR& features, const NodeEncoderParams& p,
                       const DenseMatrix& noise);
LatentBatch mlp_encode(const SparseCSR& features_t, const AttrEncoderParams& p, const DenseMatrix& noise);

// sigmoid(<left_i, right_j>) for rows [row_begin, row_end) of left.
DenseMatrix decode_block(const DenseMatrix& left, const DenseMatrix& right, std::size_t row_begin,
                         std::size_t row_end);
// Fully materialized decoders; intended for small graphs and inspection.
DenseMatrix decode_adjacency(const DenseMatrix& z);
DenseMatrix decode_attributes(const DenseMatrix& node_z, const DenseMatrix& attr_z);

inline constexpr double kProbClamp = 1e-7;

// Mean over entries of t log p + (1 - t) log(1 - p), p clamped to
// [kProbClamp, 1 - kProbClamp].
double bernoulli_ll(const DenseMatrix& target, const DenseMatrix& prob);

struct ReconstructionOptions {
  double pos_weight = 1.0;  // multiplies the t = 1 terms
  std::size_t block_rows = 64;
};

// Mean Bernoulli log-likelihood of the binary `target` (rows(left) x
// rows(right)) under probabilities sigmoid(left right^T). Evaluated in row
// blocks so the probability matrix is never held in full. The gradient w.r.t.
// both factors is formed during the forward sweep. Passing the same Var twice
// gives the adjacency decoder; the target must then be symmetric.
Var reconstruction_ll(Var left, Var right, const SparseCSR& target, const ReconstructionOptions& opt = {});

}  // namespace vclanc::model
