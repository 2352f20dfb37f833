#pragma once

#include <array>
#include <string_view>
#include <vector>

#include "vclanc/model.hpp"
#include "vclanc/tape.hpp"

namespace vclanc::losses {

using tensor::DenseMatrix;
using tensor::SparseCSR;
using tensor::Var;

inline constexpr double kAssignmentFloor = 1e-10;
inline constexpr double kDistanceSmoothing = 1e-12;

struct LossReport {
  double recon_adj = 0, recon_attr = 0, kl_attr = 0, kl_node = 0, kl_cat = 0;
  double elbo = 0, cah = 0, mutual_distance = 0, total = 0;

  static constexpr std::array<std::string_view, 9> kFields{"recon_adj", "recon_attr", "kl_attr",
                                                           "kl_node",   "kl_cat",     "elbo",
                                                           "cah",       "mutual_distance", "total"};
  std::array<double, 9> values() const {
    return {recon_adj, recon_attr, kl_attr, kl_node, kl_cat, elbo, cah, mutual_distance, total};
  }
};

struct ElboInputs {
  const SparseCSR* adjacency = nullptr;  // binary N x N target
  const SparseCSR* features = nullptr;   // binary N x M target
  Var node_mean, node_log_var;
  Var attr_mean, attr_log_var;
  std::vector<Var> node_samples, attr_samples;  // one pair per Monte-Carlo draw
  Var prior_mean, prior_log_var, pi_logits;
  const DenseMatrix* gamma = nullptr;  // N x K, held constant
  model::ReconstructionOptions recon;
};

struct ElboTerms {
  Var recon_adj, recon_attr, kl_attr, kl_node, kl_cat, elbo;
};

// recon_adj + recon_attr - kl_attr - kl_node - kl_cat. Reconstruction terms
// are averaged over the supplied samples.
ElboTerms elbo(const ElboInputs& in);

// Student-t kernel similarity of rows of z to the centers, rows normalized.
DenseMatrix soft_assignment(const DenseMatrix& z, const DenseMatrix& centers, double alpha);
// Sharpened targets: q^2 / column mass, rows renormalized.
DenseMatrix target_distribution(const DenseMatrix& q);
// sum_i sum_c p log(p / q), q floored at kAssignmentFloor. Not divided by N.
double cah_loss(const DenseMatrix& p, const DenseMatrix& q);
// Taped KL(P || Q(z, centers)); P is a constant.
Var cah_loss(Var z, Var centers, const DenseMatrix& p, double alpha);

// Mean pairwise Euclidean distance over all K^2 ordered center pairs.
double mutual_distance(const DenseMatrix& centers);
Var mutual_distance(Var centers);

// Minimization form: -(elbo + beta * mdist - omega * cah).
double total_objective(double elbo, double cah, double mdist, double omega, double beta);
Var total_objective(Var elbo, Var cah, Var mdist, double omega, double beta);

}  // namespace vclanc::losses
