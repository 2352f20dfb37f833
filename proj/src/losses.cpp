#include "vclanc/losses.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "vclanc/errors.hpp"
#include "vclanc/gmm.hpp"

namespace vclanc::losses {

using tensor::Tape;

namespace {

// log of the unnormalized Student-t kernel.
double log_kernel(double d2, double alpha) { return -0.5 * (alpha + 1.0) * std::log1p(d2 / alpha); }

void check_centers(const DenseMatrix& z, const DenseMatrix& centers, double alpha, const char* what) {
  if (z.cols() != centers.cols()) throw DimensionError(std::string(what) + ": latent dimension mismatch");
  if (centers.rows() == 0) throw ContractError(std::string(what) + ": no centers");
  if (!(alpha > 0)) throw DomainError(std::string(what) + ": alpha must be positive");
}

}  // namespace

ElboTerms elbo(const ElboInputs& in) {
  if (!in.adjacency || !in.features || !in.gamma) throw ContractError("elbo: missing targets or responsibilities");
  if (in.node_samples.empty() || in.node_samples.size() != in.attr_samples.size()) {
    throw ContractError("elbo: need matching non-empty sample lists");
  }
  ElboTerms t;
  const double inv_l = 1.0 / static_cast<double>(in.node_samples.size());
  for (std::size_t s = 0; s < in.node_samples.size(); ++s) {
    Var a = model::reconstruction_ll(in.node_samples[s], in.node_samples[s], *in.adjacency, in.recon);
    Var x = model::reconstruction_ll(in.node_samples[s], in.attr_samples[s], *in.features, in.recon);
    t.recon_adj = s == 0 ? a : tensor::add(t.recon_adj, a);
    t.recon_attr = s == 0 ? x : tensor::add(t.recon_attr, x);
  }
  if (in.node_samples.size() > 1) {
    t.recon_adj = tensor::scale(t.recon_adj, inv_l);
    t.recon_attr = tensor::scale(t.recon_attr, inv_l);
  }
  t.kl_attr = gmm::kl_attr_prior(in.attr_mean, in.attr_log_var);
  t.kl_node = gmm::kl_node_mixture(in.node_mean, in.node_log_var, *in.gamma, in.prior_mean, in.prior_log_var);
  t.kl_cat = gmm::kl_categorical(*in.gamma, in.pi_logits);
  Var kl = tensor::add(tensor::add(t.kl_attr, t.kl_node), t.kl_cat);
  t.elbo = tensor::add(tensor::add(t.recon_adj, t.recon_attr), tensor::scale(kl, -1.0));
  return t;
}

DenseMatrix soft_assignment(const DenseMatrix& z, const DenseMatrix& centers, double alpha) {
  check_centers(z, centers, alpha, "soft_assignment");
  const std::size_t n = z.rows(), k = centers.rows(), dim = z.cols();
  DenseMatrix q(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -INFINITY;
    for (std::size_t c = 0; c < k; ++c) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double d = z(i, j) - centers(c, j);
        d2 += d * d;
      }
      q(i, c) = log_kernel(d2, alpha);
      mx = std::max(mx, q(i, c));
    }
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      q(i, c) = std::exp(q(i, c) - mx);
      s += q(i, c);
    }
    for (std::size_t c = 0; c < k; ++c) q(i, c) /= s;
  }
  return q;
}

DenseMatrix target_distribution(const DenseMatrix& q) {
  const std::size_t n = q.rows(), k = q.cols();
  std::vector<double> mass(k, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < k; ++c) mass[c] += q(i, c);
  DenseMatrix p(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      p(i, c) = mass[c] > 0 ? q(i, c) * q(i, c) / mass[c] : 0.0;
      s += p(i, c);
    }
    if (s <= 0) throw NumericError("target_distribution: empty row");
    for (std::size_t c = 0; c < k; ++c) p(i, c) /= s;
  }
  return p;
}

double cah_loss(const DenseMatrix& p, const DenseMatrix& q) {
  tensor::require_same_shape(p, q, "cah_loss");
  double s = 0.0;
  for (std::size_t e = 0; e < p.size(); ++e) {
    const double pe = p.values()[e];
    if (pe > 0) s += pe * std::log(pe / std::max(q.values()[e], kAssignmentFloor));
  }
  return s;
}

Var cah_loss(Var z, Var centers, const DenseMatrix& p, double alpha) {
  Tape& t = *z.tape;
  const DenseMatrix& zv = z.value();
  const DenseMatrix& cv = centers.value();
  check_centers(zv, cv, alpha, "cah_loss");
  const std::size_t n = zv.rows(), k = cv.rows(), dim = zv.cols();
  if (p.rows() != n || p.cols() != k) throw DimensionError("cah_loss: target shape mismatch");
  const DenseMatrix q = soft_assignment(zv, cv, alpha);
  const double value = cah_loss(p, q);

  auto dz = std::make_shared<DenseMatrix>(n, dim);
  auto dc = std::make_shared<DenseMatrix>(k, dim);
  for (std::size_t i = 0; i < n; ++i) {
    double prow = 0.0;
    for (std::size_t c = 0; c < k; ++c) prow += p(i, c);
    for (std::size_t c = 0; c < k; ++c) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double d = zv(i, j) - cv(c, j);
        d2 += d * d;
      }
      // dL/dd2 for this pair.
      const double w = 0.5 * (alpha + 1.0) / (alpha + d2) * (p(i, c) - q(i, c) * prow);
      for (std::size_t j = 0; j < dim; ++j) {
        const double g = 2.0 * w * (zv(i, j) - cv(c, j));
        (*dz)(i, j) += g;
        (*dc)(c, j) -= g;
      }
    }
  }
  const bool rg = t.requires_grad(z) || t.requires_grad(centers);
  return t.record(DenseMatrix(1, 1, value), rg, [z, centers, dz, dc](Tape& tp, const DenseMatrix& g) {
    tp.accumulate(z, g(0, 0), *dz);
    tp.accumulate(centers, g(0, 0), *dc);
  });
}

double mutual_distance(const DenseMatrix& centers) {
  const std::size_t k = centers.rows(), dim = centers.cols();
  if (k == 0) throw ContractError("mutual_distance: no centers");
  double s = 0.0;
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double d = centers(a, j) - centers(b, j);
        d2 += d * d;
      }
      s += std::sqrt(d2);
    }
  return s / static_cast<double>(k * k);
}

Var mutual_distance(Var centers) {
  Tape& t = *centers.tape;
  const DenseMatrix& cv = centers.value();
  const std::size_t k = cv.rows(), dim = cv.cols();
  const double value = mutual_distance(cv);
  const double scale = 1.0 / static_cast<double>(k * k);
  auto dc = std::make_shared<DenseMatrix>(k, dim);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b) {
      if (a == b) continue;
      double d2 = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double d = cv(a, j) - cv(b, j);
        d2 += d * d;
      }
      // (a, b) and (b, a) both contribute.
      const double w = 2.0 * scale / std::sqrt(d2 + kDistanceSmoothing);
      for (std::size_t j = 0; j < dim; ++j) (*dc)(a, j) += w * (cv(a, j) - cv(b, j));
    }
  return t.record(DenseMatrix(1, 1, value), t.requires_grad(centers),
                  [centers, dc](Tape& tp, const DenseMatrix& g) { tp.accumulate(centers, g(0, 0), *dc); });
}

double total_objective(double elbo, double cah, double mdist, double omega, double beta) {
  return -(elbo + beta * mdist - omega * cah);
}

Var total_objective(Var elbo, Var cah, Var mdist, double omega, double beta) {
  Var inner = tensor::add(tensor::add(elbo, tensor::scale(mdist, beta)), tensor::scale(cah, -omega));
  return tensor::scale(inner, -1.0);
}

}  // namespace vclanc::losses
