#include "vclanc/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

#include "vclanc/errors.hpp"

namespace vclanc::gmm {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double log_sum_exp(const double* x, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, x[i]);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(x[i] - m);
  return m + std::log(s);
}

double sq_dist(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

std::size_t nearest(const DenseMatrix& centers, std::size_t used, const double* p, double* dist = nullptr) {
  std::size_t best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < used; ++c) {
    const double d = sq_dist(p, centers.data() + c * centers.cols(), centers.cols());
    if (d < bd) {
      bd = d;
      best = c;
    }
  }
  if (dist) *dist = bd;
  return best;
}

void check_gamma(const DenseMatrix& gamma, std::size_t n, std::size_t k, const char* what) {
  if (gamma.rows() != n || gamma.cols() != k) throw DimensionError(std::string(what) + ": gamma shape mismatch");
}

}  // namespace

DenseMatrix MixturePrior::log_weights() const {
  DenseMatrix out(1, k());
  const double lse = log_sum_exp(pi_logits.data(), k());
  for (std::size_t c = 0; c < k(); ++c) out(0, c) = pi_logits(0, c) - lse;
  return out;
}

DenseMatrix MixturePrior::weights() const {
  DenseMatrix out = log_weights();
  for (double& v : out.values()) v = std::exp(v);
  return out;
}

MixturePrior MixturePrior::standard_normal(std::size_t dim) {
  return {DenseMatrix(1, dim), DenseMatrix(1, dim), DenseMatrix(1, 1)};
}

void MixturePrior::enforce_variance_floor() {
  const double lo = std::log(kVarianceFloor);
  for (double& v : log_var.values()) v = std::max(v, lo);
}

DenseMatrix kmeans(const DenseMatrix& points, std::size_t k, std::size_t iterations, std::mt19937_64& rng) {
  const std::size_t n = points.rows(), dim = points.cols();
  if (k == 0 || n < k) throw ContractError("kmeans: need 1 <= K <= N");
  DenseMatrix centers(k, dim);
  std::vector<double> d2(n);

  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  std::size_t pick = first(rng);
  std::copy_n(points.data() + pick * dim, dim, centers.data());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest(centers, c, points.data() + i * dim, &d2[i]);
      total += d2[i];
    }
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng), acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (d2[i] > 0.0 && r < acc) {
          pick = i;
          break;
        }
      }
    } else {
      pick = first(rng);
    }
    std::copy_n(points.data() + pick * dim, dim, centers.data() + c * dim);
  }

  std::vector<std::size_t> assign(n, k);
  for (std::size_t it = 0; it < iterations; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = nearest(centers, k, points.data() + i * dim);
      if (c != assign[i]) {
        assign[i] = c;
        changed = true;
      }
    }
    if (!changed) break;
    DenseMatrix sums(k, dim);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++count[assign[i]];
      for (std::size_t j = 0; j < dim; ++j) sums(assign[i], j) += points(i, j);
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] == 0) continue;  // empty cluster keeps its center
      for (std::size_t j = 0; j < dim; ++j) centers(c, j) = sums(c, j) / static_cast<double>(count[c]);
    }
  }
  return centers;
}

DenseMatrix component_log_density(const DenseMatrix& z, const MixturePrior& prior) {
  if (z.cols() != prior.dim()) throw DimensionError("component_log_density: latent dimension mismatch");
  const std::size_t n = z.rows(), k = prior.k(), dim = prior.dim();
  const DenseMatrix log_pi = prior.log_weights();
  DenseMatrix inv_var(k, dim);
  std::vector<double> base(k);
  for (std::size_t c = 0; c < k; ++c) {
    double s = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      inv_var(c, j) = std::exp(-prior.log_var(c, j));
      s += kLog2Pi + prior.log_var(c, j);
    }
    base[c] = log_pi(0, c) - 0.5 * s;
  }
  DenseMatrix out(n, k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < k; ++c) {
      double q = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double d = z(i, j) - prior.mean(c, j);
        q += d * d * inv_var(c, j);
      }
      out(i, c) = base[c] - 0.5 * q;
    }
  return out;
}

DenseMatrix responsibilities_from_log_density(const DenseMatrix& ld) {
  const std::size_t n = ld.rows(), k = ld.cols();
  DenseMatrix g(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    const double lse = log_sum_exp(ld.data() + i * k, k);
    if (!std::isfinite(lse)) throw NumericError("responsibilities: non-finite log-density");
    double floored = 0.0, rest = 0.0;
    std::size_t n_floored = 0;
    for (std::size_t c = 0; c < k; ++c) {
      g(i, c) = std::exp(ld(i, c) - lse);
      if (g(i, c) < kResponsibilityFloor) {
        g(i, c) = kResponsibilityFloor;
        floored += kResponsibilityFloor;
        ++n_floored;
      } else {
        rest += g(i, c);
      }
    }
    if (n_floored == 0) continue;
    // Floored entries keep the floor; the others share what is left.
    const double scale = (1.0 - floored) / rest;
    for (std::size_t c = 0; c < k; ++c)
      if (g(i, c) != kResponsibilityFloor) g(i, c) *= scale;
  }
  return g;
}

DenseMatrix responsibilities(const DenseMatrix& z, const MixturePrior& prior) {
  return responsibilities_from_log_density(component_log_density(z, prior));
}

EmResult em_fit(const DenseMatrix& points, std::size_t k, std::uint64_t seed, const EmOptions& opt) {
  const std::size_t n = points.rows(), dim = points.cols();
  if (k == 0 || n < k) throw ContractError("em_fit: need 1 <= K <= N");
  if (!points.all_finite()) throw NumericError("em_fit: non-finite input points");
  std::mt19937_64 rng(seed);
  const DenseMatrix centers = kmeans(points, k, opt.kmeans_iterations, rng);

  // Hard k-means assignment as the first set of responsibilities.
  DenseMatrix gamma(n, k);
  for (std::size_t i = 0; i < n; ++i) gamma(i, nearest(centers, k, points.data() + i * dim)) = 1.0;

  std::vector<double> global_var(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += points(i, j);
    m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) v += (points(i, j) - m) * (points(i, j) - m);
    global_var[j] = std::max(v / static_cast<double>(n), kVarianceFloor);
  }

  EmResult res;
  MixturePrior& prior = res.prior;
  prior.mean = DenseMatrix(k, dim);
  prior.log_var = DenseMatrix(k, dim);
  prior.pi_logits = DenseMatrix(1, k);
  std::size_t reseeds = 0;
  const double empty = 1e-8;

  for (;;) {
    // M-step.
    std::vector<double> nk(k, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < k; ++c) nk[c] += gamma(i, c);
    bool reseeded = false;
    for (std::size_t c = 0; c < k; ++c) {
      if (nk[c] < empty) continue;
      for (std::size_t j = 0; j < dim; ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) m += gamma(i, c) * points(i, j);
        m /= nk[c];
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) v += gamma(i, c) * (points(i, j) - m) * (points(i, j) - m);
        prior.mean(c, j) = m;
        prior.log_var(c, j) = std::log(std::max(v / nk[c], kVarianceFloor));
      }
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (nk[c] >= empty) continue;
      if (reseeds >= opt.max_reseeds) {
        res.degenerate = true;
        continue;
      }
      // Farthest point from its nearest live center.
      DenseMatrix live(0, dim);
      std::vector<double> rows;
      for (std::size_t o = 0; o < k; ++o)
        if (nk[o] >= empty) rows.insert(rows.end(), prior.mean.data() + o * dim, prior.mean.data() + (o + 1) * dim);
      live = DenseMatrix(rows.size() / dim, dim, rows);
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        double d = std::numeric_limits<double>::infinity();
        if (live.rows() > 0) nearest(live, live.rows(), points.data() + i * dim, &d);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      for (std::size_t j = 0; j < dim; ++j) {
        prior.mean(c, j) = points(far, j);
        prior.log_var(c, j) = std::log(global_var[j]);
      }
      nk[c] = 1.0;
      ++reseeds;
      reseeded = true;
    }
    double total = 0.0;
    for (double v : nk) total += std::max(v, kResponsibilityFloor * static_cast<double>(n));
    for (std::size_t c = 0; c < k; ++c)
      prior.pi_logits(0, c) = std::log(std::max(nk[c], kResponsibilityFloor * static_cast<double>(n)) / total);
    if (reseeded) res.reseed_at.push_back(res.log_likelihood.size());

    if (res.iterations >= opt.max_iterations) break;

    // E-step.
    const DenseMatrix ld = component_log_density(points, prior);
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double lse = log_sum_exp(ld.data() + i * k, k);
      ll += lse;
      for (std::size_t c = 0; c < k; ++c) gamma(i, c) = std::exp(ld(i, c) - lse);
    }
    if (!std::isfinite(ll)) throw NumericError("em_fit: non-finite log-likelihood");
    ++res.iterations;
    const bool fresh = !res.reseed_at.empty() && res.reseed_at.back() == res.log_likelihood.size();
    const bool done = !res.log_likelihood.empty() && !fresh && std::abs(ll - res.log_likelihood.back()) < opt.tolerance;
    res.log_likelihood.push_back(ll);
    if (done) {
      res.converged = true;
      break;
    }
  }
  return res;
}

double kl_attr_prior(const DenseMatrix& mean, const DenseMatrix& log_var) {
  tensor::require_same_shape(mean, log_var, "kl_attr_prior");
  if (mean.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    const double m = mean.values()[i], l = log_var.values()[i];
    s += std::exp(l) + m * m - l - 1.0;
  }
  return s / (2.0 * static_cast<double>(mean.size()));
}

double kl_node_mixture(const DenseMatrix& mean, const DenseMatrix& log_var, const DenseMatrix& gamma,
                       const DenseMatrix& prior_mean, const DenseMatrix& prior_log_var) {
  tensor::require_same_shape(mean, log_var, "kl_node_mixture");
  tensor::require_same_shape(prior_mean, prior_log_var, "kl_node_mixture");
  if (mean.cols() != prior_mean.cols()) throw DimensionError("kl_node_mixture: latent dimension mismatch");
  const std::size_t n = mean.rows(), k = prior_mean.rows(), dim = mean.cols();
  check_gamma(gamma, n, k, "kl_node_mixture");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < k; ++c) {
      double t = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double d = mean(i, j) - prior_mean(c, j);
        const double inv = std::exp(-prior_log_var(c, j));
        t += std::exp(log_var(i, j) - prior_log_var(c, j)) + d * d * inv - log_var(i, j) + prior_log_var(c, j) - 1.0;
      }
      s += gamma(i, c) * t;
    }
  return s / (2.0 * static_cast<double>(n * k * dim));
}

double kl_categorical(const DenseMatrix& gamma, const DenseMatrix& pi) {
  if (pi.rows() != 1 || pi.cols() != gamma.cols()) throw DimensionError("kl_categorical: pi must be 1 x K");
  const std::size_t n = gamma.rows(), k = gamma.cols();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < k; ++c) {
      const double g = std::max(gamma(i, c), kResponsibilityFloor);
      s += g * std::log(g / pi(0, c));
    }
  return s / static_cast<double>(n * k);
}

Var kl_attr_prior(Var mean, Var log_var) {
  Tape& t = *mean.tape;
  const DenseMatrix& m = mean.value();
  const DenseMatrix& l = log_var.value();
  tensor::require_same_shape(m, l, "kl_attr_prior");
  const double c = 1.0 / (2.0 * static_cast<double>(m.size()));
  auto dm = std::make_shared<DenseMatrix>(m.rows(), m.cols());
  auto dl = std::make_shared<DenseMatrix>(m.rows(), m.cols());
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double mi = m.values()[i], li = l.values()[i], e = std::exp(li);
    s += e + mi * mi - li - 1.0;
    dm->values()[i] = 2.0 * c * mi;
    dl->values()[i] = c * (e - 1.0);
  }
  const bool rg = t.requires_grad(mean) || t.requires_grad(log_var);
  return t.record(DenseMatrix(1, 1, s * c), rg, [mean, log_var, dm, dl](Tape& tp, const DenseMatrix& g) {
    tp.accumulate(mean, g(0, 0), *dm);
    tp.accumulate(log_var, g(0, 0), *dl);
  });
}

Var kl_node_mixture(Var mean, Var log_var, const DenseMatrix& gamma, Var prior_mean, Var prior_log_var) {
  Tape& t = *mean.tape;
  const DenseMatrix& mu = mean.value();
  const DenseMatrix& lv = log_var.value();
  const DenseMatrix& pm = prior_mean.value();
  const DenseMatrix& plv = prior_log_var.value();
  tensor::require_same_shape(mu, lv, "kl_node_mixture");
  tensor::require_same_shape(pm, plv, "kl_node_mixture");
  if (mu.cols() != pm.cols()) throw DimensionError("kl_node_mixture: latent dimension mismatch");
  const std::size_t n = mu.rows(), k = pm.rows(), dim = mu.cols();
  check_gamma(gamma, n, k, "kl_node_mixture");
  const double c = 1.0 / (2.0 * static_cast<double>(n * k * dim));

  DenseMatrix inv(k, dim);
  for (std::size_t q = 0; q < k; ++q)
    for (std::size_t j = 0; j < dim; ++j) inv(q, j) = std::exp(-plv(q, j));

  auto d_mu = std::make_shared<DenseMatrix>(n, dim);
  auto d_lv = std::make_shared<DenseMatrix>(n, dim);
  auto d_pm = std::make_shared<DenseMatrix>(k, dim);
  auto d_plv = std::make_shared<DenseMatrix>(k, dim);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t q = 0; q < k; ++q) {
      const double g = gamma(i, q);
      double term = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double d = mu(i, j) - pm(q, j);
        const double ratio = std::exp(lv(i, j) - plv(q, j));
        const double quad = d * d * inv(q, j);
        term += ratio + quad - lv(i, j) + plv(q, j) - 1.0;
        (*d_mu)(i, j) += c * g * 2.0 * d * inv(q, j);
        (*d_lv)(i, j) += c * g * (ratio - 1.0);
        (*d_pm)(q, j) -= c * g * 2.0 * d * inv(q, j);
        (*d_plv)(q, j) += c * g * (1.0 - ratio - quad);
      }
      s += g * term;
    }
  const bool rg = t.requires_grad(mean) || t.requires_grad(log_var) || t.requires_grad(prior_mean) ||
                  t.requires_grad(prior_log_var);
  return t.record(DenseMatrix(1, 1, s * c), rg,
                  [mean, log_var, prior_mean, prior_log_var, d_mu, d_lv, d_pm, d_plv](Tape& tp, const DenseMatrix& g) {
                    tp.accumulate(mean, g(0, 0), *d_mu);
                    tp.accumulate(log_var, g(0, 0), *d_lv);
                    tp.accumulate(prior_mean, g(0, 0), *d_pm);
                    tp.accumulate(prior_log_var, g(0, 0), *d_plv);
                  });
}

Var kl_categorical(const DenseMatrix& gamma, Var pi_logits) {
  Tape& t = *pi_logits.tape;
  const DenseMatrix& l = pi_logits.value();
  if (l.rows() != 1 || l.cols() != gamma.cols()) throw DimensionError("kl_categorical: logits must be 1 x K");
  const std::size_t n = gamma.rows(), k = gamma.cols();
  const double lse = log_sum_exp(l.data(), k);
  const double c = 1.0 / static_cast<double>(n * k);
  std::vector<double> col(k, 0.0);
  double s = 0.0, mass = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t q = 0; q < k; ++q) {
      const double g = std::max(gamma(i, q), kResponsibilityFloor);
      s += g * (std::log(g) - (l(0, q) - lse));
      col[q] += g;
      mass += g;
    }
  auto d = std::make_shared<DenseMatrix>(1, k);
  for (std::size_t q = 0; q < k; ++q) (*d)(0, q) = -c * (col[q] - std::exp(l(0, q) - lse) * mass);
  return t.record(DenseMatrix(1, 1, s * c), t.requires_grad(pi_logits),
                  [pi_logits, d](Tape& tp, const DenseMatrix& g) { tp.accumulate(pi_logits, g(0, 0), *d); });
}

}  // namespace vclanc::gmm
