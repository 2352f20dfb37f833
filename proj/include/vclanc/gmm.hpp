#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "vclanc/tape.hpp"
#include "vclanc/tensor.hpp"

namespace vclanc::gmm {

using tensor::DenseMatrix;
using tensor::Tape;
using tensor::Var;

inline constexpr double kVarianceFloor = 1e-6;
inline constexpr double kResponsibilityFloor = 1e-10;

// Diagonal Gaussian mixture. Weights are softmax(pi_logits).
struct MixturePrior {
  DenseMatrix mean;       // K x J
  DenseMatrix log_var;    // K x J
  DenseMatrix pi_logits;  // 1 x K

  std::size_t k() const { return mean.rows(); }
  std::size_t dim() const { return mean.cols(); }
  DenseMatrix weights() const;
  DenseMatrix log_weights() const;

  // Single standard-normal component.
  static MixturePrior standard_normal(std::size_t dim);

  // Raises log_var to log(kVarianceFloor) where it fell below.
  void enforce_variance_floor();

  friend bool operator==(const MixturePrior&, const MixturePrior&) = default;
};

struct EmOptions {
  std::size_t max_iterations = 100;
  double tolerance = 1e-4;  // on the change in total log-likelihood
  std::size_t kmeans_iterations = 20;
  std::size_t max_reseeds = 3;
};

struct EmResult {
  MixturePrior prior;
  std::vector<double> log_likelihood;  // total, one entry per E-step
  std::vector<std::size_t> reseed_at;  // indices into log_likelihood where a reseed happened
  std::size_t iterations = 0;
  bool converged = false;
  bool degenerate = false;  // a component was still empty after max_reseeds
};

// K-means++ seeding followed by Lloyd iterations. Returns K x J centers.
DenseMatrix kmeans(const DenseMatrix& points, std::size_t k, std::size_t iterations, std::mt19937_64& rng);

// Diagonal-covariance EM initialized from k-means. Empty components are
// moved to the point farthest from its nearest center.
EmResult em_fit(const DenseMatrix& points, std::size_t k, std::uint64_t seed, const EmOptions& opt = {});

// N x K matrix of log pi_c + log N(z_i | mean_c, diag(exp(log_var_c))).
DenseMatrix component_log_density(const DenseMatrix& z, const MixturePrior& prior);

// Posterior cluster probabilities. Entries are floored at
// kResponsibilityFloor and rows renormalized to sum to one.
DenseMatrix responsibilities(const DenseMatrix& z, const MixturePrior& prior);
DenseMatrix responsibilities_from_log_density(const DenseMatrix& log_density);

// KL(N(mean, exp(log_var)) || N(0, 1)) summed over entries, scaled by 1/(2MJ).
double kl_attr_prior(const DenseMatrix& mean, const DenseMatrix& log_var);
// Responsibility-weighted KL to each component, scaled by 1/(2NKJ).
double kl_node_mixture(const DenseMatrix& mean, const DenseMatrix& log_var, const DenseMatrix& gamma,
                       const DenseMatrix& prior_mean, const DenseMatrix& prior_log_var);
// (1/NK) sum gamma log(gamma / pi), gamma floored at kResponsibilityFloor.
// `pi` is a 1 x K probability row.
double kl_categorical(const DenseMatrix& gamma, const DenseMatrix& pi);

// Taped versions. gamma is a constant.
Var kl_attr_prior(Var mean, Var log_var);
Var kl_node_mixture(Var mean, Var log_var, const DenseMatrix& gamma, Var prior_mean, Var prior_log_var);
Var kl_categorical(const DenseMatrix& gamma, Var pi_logits);

}  // namespace vclanc::gmm
