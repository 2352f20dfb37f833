#include <cmath>
#include <random>

#include "doctest.h"
#include "test_support.hpp"
#include "vclanc/adam.hpp"
#include "vclanc/errors.hpp"
#include "vclanc/finite_diff.hpp"
#include "vclanc/tape.hpp"

using namespace vclanc;
using namespace vclanc::tensor;
using vclanc::testing::max_abs_diff;
using vclanc::testing::naive_matmul;
using vclanc::testing::random_matrix;
using vclanc::testing::random_sparse;

TEST_CASE("matmul basics") {
  std::mt19937_64 rng(1);
  const DenseMatrix b = random_matrix(3, 4, rng);
  CHECK(matmul(DenseMatrix::identity(3), b) == b);

  const DenseMatrix a{{1, 2}, {3, 4}};
  const DenseMatrix v{{0}, {1}};
  CHECK(matmul(a, v) == DenseMatrix{{2}, {4}});

  CHECK_THROWS_AS(matmul(a, DenseMatrix(3, 1)), DimensionError);
}

TEST_CASE("matmul agrees exactly with the triple loop") {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 10; ++rep) {
    const DenseMatrix a = random_matrix(5, 4, rng);
    const DenseMatrix b = random_matrix(4, 3, rng);
    CHECK(matmul(a, b) == naive_matmul(a, b));
    CHECK(matmul_nt(a, transpose(b)) == naive_matmul(a, b));
    CHECK(matmul_tn(transpose(a), b) == naive_matmul(a, b));
  }
}

TEST_CASE("spmm") {
  std::mt19937_64 rng(2);
  const DenseMatrix b = random_matrix(4, 3, rng);
  CHECK(spmm(SparseCSR::identity(4), b) == b);

  const SparseCSR half = SparseCSR::from_dense(DenseMatrix{{.5, .5}, {.5, .5}});
  CHECK(spmm(half, DenseMatrix{{2}, {0}}) == DenseMatrix{{1}, {1}});

  CHECK_THROWS_AS(spmm(half, DenseMatrix(3, 1)), DimensionError);
}

TEST_CASE("spmm matches densified matmul on random sparse operands") {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const SparseCSR s = random_sparse(20, 20, 0.1, rng);
    const DenseMatrix b = random_matrix(20, 5, rng);
    CHECK(max_abs_diff(spmm(s, b), matmul(s.densify(), b)) < 1e-12);
    CHECK(max_abs_diff(spmm_t(s, b), matmul(transpose(s.densify()), b)) < 1e-12);
    CHECK(s.transposed().densify() == transpose(s.densify()));
  }
}

TEST_CASE("SparseCSR enforces its invariants") {
  CHECK_THROWS_AS(SparseCSR(2, 2, {0, 2, 2}, {1, 0}, {1.0, 1.0}), ContractError);
  CHECK_THROWS_AS(SparseCSR(2, 2, {0, 1, 3}, {0, 1}, {1.0, 1.0}), ContractError);
  const SparseCSR dup = SparseCSR::from_triplets(2, 2, {{0, 1, 1.0}, {0, 1, 2.0}, {1, 0, 1.0}});
  CHECK(dup.nnz() == 2);
  CHECK(dup.at(0, 1) == 3.0);
}

TEST_CASE("activations") {
  const DenseMatrix x{{-1.0, 2.0}};
  CHECK(apply_activation(x, Activation::relu) == DenseMatrix{{0.0, 2.0}});
  CHECK(apply_activation(DenseMatrix{{0.0}}, Activation::sigmoid)(0, 0) == 0.5);
  const DenseMatrix t = apply_activation(DenseMatrix{{20.0, -20.0}}, Activation::tanh);
  CHECK(std::abs(t(0, 0) - 1.0) < 1e-12);
  CHECK(std::abs(t(0, 1) + 1.0) < 1e-12);
  CHECK(apply_activation(DenseMatrix{{-800.0, 800.0}}, Activation::sigmoid).all_finite());
  CHECK_THROWS_AS(apply_activation(DenseMatrix{{1.0, 0.0}}, Activation::log), DomainError);
  CHECK_THROWS_AS(apply_activation(DenseMatrix{{-2.0}}, Activation::log), DomainError);
}

TEST_CASE("backward of sum is all ones") {
  Tape tape;
  Var w = tape.parameter(DenseMatrix(3, 2, 0.7));
  Var loss = sum(w);
  tape.backward(loss);
  CHECK(w.grad() == DenseMatrix(3, 2, 1.0));
}

TEST_CASE("backward of sum(sigmoid(W x)) at W = 0") {
  Tape tape;
  const DenseMatrix xv{{1.0}, {-2.0}, {3.0}};
  Var w = tape.parameter(DenseMatrix(2, 3));
  Var x = tape.constant(xv);
  tape.backward(sum(activation(matmul(w, x), Activation::sigmoid)));
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 3; ++c) CHECK(w.grad()(r, c) == doctest::Approx(0.25 * xv(c, 0)).epsilon(1e-15));
}

TEST_CASE("backward rejects non-scalar losses and zero-fills untouched leaves") {
  Tape tape;
  Var a = tape.parameter(DenseMatrix(2, 2, 1.0));
  Var unused = tape.parameter(DenseMatrix(3, 1, 5.0));
  CHECK_THROWS_AS(tape.backward(a), ContractError);
  tape.backward(sum(scale(a, 2.0)));
  CHECK(a.grad() == DenseMatrix(2, 2, 2.0));
  CHECK(unused.grad() == DenseMatrix(3, 1, 0.0));
}

TEST_CASE("every primitive passes a finite-difference check") {
  std::mt19937_64 rng(11);
  const SparseCSR s = random_sparse(6, 6, 0.3, rng);
  const DenseMatrix x0 = random_matrix(6, 4, rng);
  const DenseMatrix w0 = random_matrix(4, 5, rng);
  const DenseMatrix b0 = random_matrix(1, 5, rng);
  const DenseMatrix e0 = random_matrix(6, 2, rng);
  testing::ParamPack pack{{x0, w0, b0}};

  auto build = [&](Tape& tape, const std::vector<DenseMatrix>& p, std::vector<Var>* leaves) {
    Var x = tape.parameter(p[0]);
    Var w = tape.parameter(p[1]);
    Var b = tape.parameter(p[2]);
    if (leaves) *leaves = {x, w, b};
    Var h = add_row(matmul(spmm(s, x), w), b);
    Var left = activation(slice_cols(h, 0, 2), Activation::tanh);
    Var right = activation(slice_cols(h, 2, 4), Activation::sigmoid);
    Var r = activation(slice_cols(h, 3, 5), Activation::relu);
    Var mixed = hadamard(add(left, right), tape.constant(e0));
    Var pos = activation(add(activation(scale(right, 0.5), Activation::exp), r), Activation::log);
    return add(sum(mixed), scale(sum(pos), -0.3));
  };

  Tape tape;
  std::vector<Var> leaves;
  tape.backward(build(tape, {x0, w0, b0}, &leaves));
  std::vector<DenseMatrix> grads;
  for (Var v : leaves) grads.push_back(v.grad());

  auto f = [&](std::span<const double> x) {
    Tape t;
    return build(t, pack.unflatten(x), nullptr).value()(0, 0);
  };
  const auto x = pack.flatten({x0, w0, b0});
  const auto g = pack.flatten(grads);
  CHECK(finite_diff_check(f, x, g) < 1e-6);
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    std::mt19937_64 rng(4);
    DenseMatrix p = random_matrix(3, 3, rng);
    const DenseMatrix before = p;
    AdamState st(3, 3);
    for (int i = 0; i < 5; ++i) adam_step(p, DenseMatrix(3, 3), st);
    CHECK(p == before);
    CHECK(st.step == 5);
  }
  SUBCASE("first step moves by about the learning rate") {
    DenseMatrix p(1, 1, 1.0);
    AdamState st(1, 1);
    adam_step(p, DenseMatrix(1, 1, 1.0), st);
    CHECK(1.0 - p(0, 0) == doctest::Approx(0.002 * 1.0 / (1.0 + 1e-8)).epsilon(1e-12));
  }
  SUBCASE("three steps on x^2 follow the hand recurrence") {
    double x = 1.5, m = 0.0, v = 0.0;
    const double lr = 0.002, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    std::vector<double> ref;
    for (int t = 1; t <= 3; ++t) {
      const double g = 2.0 * x;
      m = b1 * m + (1 - b1) * g;
      v = b2 * v + (1 - b2) * g * g;
      const double mh = m / (1 - std::pow(b1, t));
      const double vh = v / (1 - std::pow(b2, t));
      x -= lr * mh / (std::sqrt(vh) + eps);
      ref.push_back(x);
    }
    DenseMatrix p(1, 1, 1.5);
    AdamState st(1, 1);
    for (int t = 0; t < 3; ++t) {
      adam_step(p, DenseMatrix(1, 1, 2.0 * p(0, 0)), st);
      CHECK(std::abs(p(0, 0) - ref[t]) < 1e-12);
    }
  }
  SUBCASE("shape mismatch is a contract error") {
    DenseMatrix p(2, 2);
    AdamState st(2, 2);
    CHECK_THROWS_AS(adam_step(p, DenseMatrix(2, 1), st), ContractError);
  }
}

TEST_CASE("finite_diff_check on closed forms") {
  const std::vector<double> x{3.0};
  const std::vector<double> g{6.0};
  CHECK(finite_diff_check([](std::span<const double> v) { return v[0] * v[0]; }, x, g) < 1e-9);

  const std::vector<double> xs{-1.0, 0.3, 2.0};
  std::vector<double> gs;
  for (double v : xs) {
    const double s = 1.0 / (1.0 + std::exp(-v));
    gs.push_back(s * (1 - s));
  }
  auto f = [](std::span<const double> v) {
    double t = 0;
    for (double e : v) t += 1.0 / (1.0 + std::exp(-e));
    return t;
  };
  CHECK(finite_diff_check(f, xs, gs) < 1e-6);
  CHECK(std::isnan(finite_diff_check([](std::span<const double>) { return NAN; }, x, g)));
}

TEST_CASE("kernels are deterministic") {
  std::mt19937_64 rng(5);
  const DenseMatrix a = random_matrix(30, 20, rng);
  const DenseMatrix b = random_matrix(20, 10, rng);
  const SparseCSR s = random_sparse(30, 30, 0.2, rng);
  CHECK(matmul(a, b) == matmul(a, b));
  CHECK(spmm(s, a) == spmm(s, a));
}
