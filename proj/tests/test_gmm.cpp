#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "test_support.hpp"
#include "vclanc/errors.hpp"
#include "vclanc/finite_diff.hpp"
#include "vclanc/gmm.hpp"

using namespace vclanc;
using namespace vclanc::gmm;
using testing::random_matrix;
using testing::random_normal;

namespace {

DenseMatrix blobs(const std::vector<std::vector<double>>& centers, std::size_t per, double sd, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, sd);
  const std::size_t dim = centers[0].size();
  DenseMatrix p(centers.size() * per, dim);
  for (std::size_t c = 0; c < centers.size(); ++c)
    for (std::size_t i = 0; i < per; ++i)
      for (std::size_t j = 0; j < dim; ++j) p(c * per + i, j) = centers[c][j] + nd(rng);
  return p;
}

double normal_pdf(double x, double m, double v) {
  return std::exp(-(x - m) * (x - m) / (2 * v)) / std::sqrt(2 * std::numbers::pi * v);
}

MixturePrior random_prior(std::size_t k, std::size_t dim, std::mt19937_64& rng) {
  return {random_matrix(k, dim, rng, -2, 2), random_matrix(k, dim, rng, -1, 1), random_matrix(1, k, rng)};
}

}  // namespace

TEST_CASE("em_fit recovers two separated blobs") {
  std::mt19937_64 rng(1);
  const DenseMatrix p = blobs({{-4, 0}, {4, 1}}, 200, 0.5, rng);
  const auto r = em_fit(p, 2, 7);
  CHECK(r.converged);
  CHECK_FALSE(r.degenerate);
  std::size_t lo = r.prior.mean(0, 0) < r.prior.mean(1, 0) ? 0 : 1;
  CHECK(std::abs(r.prior.mean(lo, 0) + 4) < 0.1);
  CHECK(std::abs(r.prior.mean(lo, 1) - 0) < 0.1);
  CHECK(std::abs(r.prior.mean(1 - lo, 0) - 4) < 0.1);
  CHECK(std::abs(r.prior.mean(1 - lo, 1) - 1) < 0.1);
  const DenseMatrix w = r.prior.weights();
  CHECK(w(0, 0) == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("em_fit with one point per component") {
  const DenseMatrix p{{0, 0}, {3, 1}, {-2, 5}};
  const auto r = em_fit(p, 3, 2);
  for (std::size_t i = 0; i < 3; ++i) {
    bool found = false;
    for (std::size_t c = 0; c < 3; ++c)
      if (std::abs(r.prior.mean(c, 0) - p(i, 0)) < 1e-9 && std::abs(r.prior.mean(c, 1) - p(i, 1)) < 1e-9) found = true;
    CHECK(found);
  }
  for (double v : r.prior.log_var.values()) CHECK(v == doctest::Approx(std::log(kVarianceFloor)));
}

TEST_CASE("em_fit with K = 1 is the sample moments") {
  std::mt19937_64 rng(2);
  const DenseMatrix p = random_normal(50, 3, rng);
  const auto r = em_fit(p, 1, 0);
  for (std::size_t j = 0; j < 3; ++j) {
    double m = 0, v = 0;
    for (std::size_t i = 0; i < 50; ++i) m += p(i, j);
    m /= 50;
    for (std::size_t i = 0; i < 50; ++i) v += (p(i, j) - m) * (p(i, j) - m);
    v /= 50;
    CHECK(r.prior.mean(0, j) == doctest::Approx(m).epsilon(1e-12));
    CHECK(std::exp(r.prior.log_var(0, j)) == doctest::Approx(v).epsilon(1e-12));
  }
  CHECK(r.prior.weights()(0, 0) == 1.0);
}

TEST_CASE("em_fit preconditions") {
  CHECK_THROWS_AS(em_fit(DenseMatrix(2, 2), 3, 0), ContractError);
  CHECK_THROWS_AS(em_fit(DenseMatrix(2, 2), 0, 0), ContractError);
}

TEST_CASE("EM log-likelihood is non-decreasing") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> kd(2, 5);
  std::size_t checked = 0;
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t k = kd(rng);
    std::vector<std::vector<double>> centers;
    for (std::size_t c = 0; c < k; ++c) centers.push_back({3.0 * random_normal(1, 1, rng)(0, 0), 3.0 * random_normal(1, 1, rng)(0, 0), 0.0});
    const DenseMatrix p = blobs(centers, 30, 1.0, rng);
    const auto r = em_fit(p, k, rep);
    std::size_t seg = 0;
    for (std::size_t t = 1; t < r.log_likelihood.size(); ++t) {
      while (seg < r.reseed_at.size() && r.reseed_at[seg] <= t) {
        if (r.reseed_at[seg] == t) goto next;
        ++seg;
      }
      CHECK(r.log_likelihood[t] >= r.log_likelihood[t - 1] - 1e-9);
      ++checked;
    next:;
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("degenerate duplicate points reseed without failing") {
  DenseMatrix p(20, 2);
  for (std::size_t i = 10; i < 20; ++i) p(i, 0) = 5.0;
  p(19, 1) = 0.5;
  const auto r = em_fit(p, 3, 4);
  CHECK(r.prior.mean.all_finite());
  CHECK(r.prior.log_var.all_finite());
  CHECK(r.prior.pi_logits.all_finite());
}

TEST_CASE("responsibilities") {
  std::mt19937_64 rng(5);
  const DenseMatrix z = random_normal(6, 2, rng);

  SUBCASE("K = 1") {
    const DenseMatrix g = responsibilities(z, MixturePrior{random_matrix(1, 2, rng), random_matrix(1, 2, rng), DenseMatrix(1, 1)});
    for (double v : g.values()) CHECK(v == 1.0);
  }
  SUBCASE("identical components") {
    const DenseMatrix m = random_matrix(1, 2, rng);
    const DenseMatrix l = random_matrix(1, 2, rng);
    DenseMatrix m2(2, 2), l2(2, 2);
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t j = 0; j < 2; ++j) {
        m2(c, j) = m(0, j);
        l2(c, j) = l(0, j);
      }
    const DenseMatrix g = responsibilities(z, MixturePrior{m2, l2, DenseMatrix(1, 2)});
    for (double v : g.values()) CHECK(std::abs(v - 0.5) < 1e-15);
  }
  SUBCASE("density-formula oracle") {
    const MixturePrior pr{DenseMatrix{{-1}, {2}}, DenseMatrix{{std::log(0.5)}, {std::log(2.0)}},
                          DenseMatrix{{std::log(0.3), std::log(0.7)}}};
    for (double x : {-2.0, -0.3, 0.0, 0.9, 3.5}) {
      const double a = 0.3 * normal_pdf(x, -1, 0.5), b = 0.7 * normal_pdf(x, 2, 2.0);
      const DenseMatrix g = responsibilities(DenseMatrix{{x}}, pr);
      CHECK(std::abs(g(0, 0) - a / (a + b)) < 1e-12);
      CHECK(std::abs(g(0, 1) - b / (a + b)) < 1e-12);
    }
  }
  SUBCASE("rows sum to one and respect the floor") {
    for (int rep = 0; rep < 20; ++rep) {
      const MixturePrior pr = random_prior(4, 2, rng);
      DenseMatrix zz = random_normal(30, 2, rng);
      for (double& v : zz.values()) v *= 20;
      const DenseMatrix g = responsibilities(zz, pr);
      for (std::size_t i = 0; i < g.rows(); ++i) {
        double s = 0;
        for (std::size_t c = 0; c < 4; ++c) {
          s += g(i, c);
          CHECK(g(i, c) >= kResponsibilityFloor);
        }
        CHECK(std::abs(s - 1) < 1e-9);
      }
    }
  }
  SUBCASE("shift invariance") {
    const MixturePrior pr = random_prior(3, 2, rng);
    const DenseMatrix ld = component_log_density(z, pr);
    DenseMatrix shifted = ld;
    for (double& v : shifted.values()) v += 700.0;
    const DenseMatrix a = responsibilities_from_log_density(ld), b = responsibilities_from_log_density(shifted);
    CHECK(testing::max_abs_diff(a, b) < 1e-12);
    MixturePrior pr2 = pr;
    for (double& v : pr2.pi_logits.values()) v += 50.0;
    CHECK(testing::max_abs_diff(responsibilities(z, pr), responsibilities(z, pr2)) < 1e-12);
  }
}

TEST_CASE("kl_attr_prior") {
  CHECK(kl_attr_prior(DenseMatrix(3, 2), DenseMatrix(3, 2)) == 0.0);
  CHECK(kl_attr_prior(DenseMatrix{{1}}, DenseMatrix{{0}}) == 0.5);

  // Monte-Carlo oracle on a 2x2 instance.
  std::mt19937_64 rng(6);
  const DenseMatrix m = random_matrix(2, 2, rng), l = random_matrix(2, 2, rng, -0.5, 0.5);
  const std::size_t draws = 1000000;
  std::normal_distribution<double> nd;
  double s = 0, s2 = 0;
  for (std::size_t d = 0; d < draws; ++d) {
    double est = 0;
    for (std::size_t e = 0; e < 4; ++e) {
      const double sd = std::exp(l.values()[e] / 2), mu = m.values()[e];
      const double x = mu + sd * nd(rng);
      est += -0.5 * ((x - mu) / sd) * ((x - mu) / sd) - std::log(sd) + 0.5 * x * x;
    }
    s += est;
    s2 += est * est;
  }
  const double mean = s / draws, se = std::sqrt((s2 / draws - mean * mean) / draws);
  // kl_attr_prior returns the summed KL scaled by 1/(2MJ); the estimate is the plain sum.
  CHECK(std::abs(kl_attr_prior(m, l) * 2 * 4 - 2 * mean) < 3 * 2 * se);
}

TEST_CASE("kl_node_mixture") {
  std::mt19937_64 rng(7);
  SUBCASE("posterior equals prior") {
    const DenseMatrix m = random_matrix(1, 3, rng), l = random_matrix(1, 3, rng);
    CHECK(kl_node_mixture(m, l, DenseMatrix{{1}}, m, l) == 0.0);
  }
  SUBCASE("one-hot gamma on matching components") {
    const DenseMatrix pm = random_matrix(2, 2, rng), pl = random_matrix(2, 2, rng);
    const DenseMatrix g{{0, 1}, {1, 0}};
    const DenseMatrix m{{pm(1, 0), pm(1, 1)}, {pm(0, 0), pm(0, 1)}};
    const DenseMatrix l{{pl(1, 0), pl(1, 1)}, {pl(0, 0), pl(0, 1)}};
    CHECK(kl_node_mixture(m, l, g, pm, pl) == 0.0);
  }
  SUBCASE("scalar-loop oracle") {
    for (int rep = 0; rep < 10; ++rep) {
      const DenseMatrix m = random_matrix(3, 2, rng), l = random_matrix(3, 2, rng);
      const DenseMatrix pm = random_matrix(2, 2, rng), pl = random_matrix(2, 2, rng);
      DenseMatrix g = random_matrix(3, 2, rng, 0, 1);
      for (std::size_t i = 0; i < 3; ++i) {
        const double s = g(i, 0) + g(i, 1);
        g(i, 0) /= s;
        g(i, 1) /= s;
      }
      double ref = 0;
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t c = 0; c < 2; ++c)
          for (std::size_t j = 0; j < 2; ++j) {
            const double v = std::exp(l(i, j)), pv = std::exp(pl(c, j));
            ref += g(i, c) * (v / pv + (m(i, j) - pm(c, j)) * (m(i, j) - pm(c, j)) / pv - std::log(v / pv) - 1);
          }
      ref /= 2.0 * 3 * 2 * 2;
      const double got = kl_node_mixture(m, l, g, pm, pl);
      CHECK(std::abs(got - ref) < 1e-12);
      CHECK(got >= -1e-9);
    }
  }
}

TEST_CASE("kl_categorical") {
  const DenseMatrix pi{{0.2, 0.5, 0.3}};
  CHECK(kl_categorical(DenseMatrix{{0.2, 0.5, 0.3}, {0.2, 0.5, 0.3}}, pi) == 0.0);
  const DenseMatrix onehot{{1, 0}, {0, 1}, {1, 0}};
  CHECK(kl_categorical(onehot, DenseMatrix{{0.5, 0.5}}) == doctest::Approx(std::log(2.0) / 2).epsilon(1e-8));

  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 10; ++rep) {
    DenseMatrix g = random_matrix(4, 3, rng, 0, 1);
    for (std::size_t i = 0; i < 4; ++i) {
      const double s = g(i, 0) + g(i, 1) + g(i, 2);
      for (std::size_t c = 0; c < 3; ++c) g(i, c) /= s;
    }
    double ref = 0;
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t c = 0; c < 3; ++c) ref += g(i, c) * std::log(g(i, c) / pi(0, c));
    ref /= 12;
    CHECK(kl_categorical(g, pi) == ref);
    CHECK(kl_categorical(g, pi) >= -1e-9);
  }
}

TEST_CASE("taped KL terms match plain values and finite differences") {
  std::mt19937_64 rng(9);
  const std::size_t n = 5, k = 3, dim = 2;
  const DenseMatrix m = random_matrix(n, dim, rng), l = random_matrix(n, dim, rng);
  const MixturePrior pr = random_prior(k, dim, rng);
  const DenseMatrix g = responsibilities(m, pr);

  testing::ParamPack pack;
  pack.shapes = {m, l, pr.mean, pr.log_var, pr.pi_logits};
  auto run = [&](const std::vector<DenseMatrix>& ps, std::vector<DenseMatrix>* grads) {
    tensor::Tape t;
    std::vector<tensor::Var> v;
    for (const auto& p : ps) v.push_back(t.parameter(p));
    auto loss = tensor::add(tensor::add(kl_attr_prior(v[0], v[1]), kl_node_mixture(v[0], v[1], g, v[2], v[3])),
                            kl_categorical(g, v[4]));
    if (grads) {
      t.backward(loss);
      for (auto x : v) grads->push_back(t.grad(x));
    }
    return loss.value()(0, 0);
  };
  const std::vector<DenseMatrix> init{m, l, pr.mean, pr.log_var, pr.pi_logits};
  std::vector<DenseMatrix> grads;
  const double val = run(init, &grads);
  const double plain = kl_attr_prior(m, l) + kl_node_mixture(m, l, g, pr.mean, pr.log_var) +
                       kl_categorical(g, pr.weights());
  CHECK(std::abs(val - plain) < 1e-12);
  const double err = tensor::finite_diff_check(
      [&](std::span<const double> xs) { return run(pack.unflatten(xs), nullptr); }, pack.flatten(init),
      pack.flatten(grads));
  CHECK(err < 1e-4);
}

TEST_CASE("variance floor") {
  MixturePrior p{DenseMatrix(2, 2), DenseMatrix{{-20, 0}, {1, -13}}, DenseMatrix(1, 2)};
  p.enforce_variance_floor();
  CHECK(p.log_var(0, 0) == std::log(kVarianceFloor));
  CHECK(p.log_var(0, 1) == 0.0);
  CHECK(p.log_var(1, 1) == -13.0);
}
