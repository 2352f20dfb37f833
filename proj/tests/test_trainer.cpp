#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "vclanc/errors.hpp"
#include "vclanc/metrics.hpp"
#include "vclanc/text_io.hpp"
#include "vclanc/trainer.hpp"

using namespace vclanc;
using namespace vclanc::train;

namespace {

graph::AttributedGraph toy_graph(std::uint64_t seed = 1) {
  graph::PlantedPartitionSpec spec;
  spec.n_nodes = 60;
  spec.p_in = 0.3;
  spec.attrs_per_block = 6;
  return graph::planted_partition(spec, seed);
}

RunConfig toy_config() {
  RunConfig c;
  c.embedding_size = 4;
  c.hidden_size = 8;
  c.pretrain_epochs = 10;
  c.alternating_epochs = 10;
  c.learning_rate = 0.01;
  c.seed = 3;
  return c;
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_CASE("zero pretrain epochs leave the state untouched") {
  const auto g = toy_graph();
  Trainer t(g, toy_config(), 3);
  const model::ModelParams before = t.state().params;
  t.pretrain(0);
  CHECK(t.state().params == before);
  CHECK(t.state().history.empty());
  CHECK(t.state().epoch == 0);
}

TEST_CASE("pretraining lowers the negative elbo and keeps the prior fixed") {
  const auto g = toy_graph();
  RunConfig cfg = toy_config();
  Trainer t(g, cfg, 3);
  const gmm::MixturePrior standard = gmm::MixturePrior::standard_normal(cfg.embedding_size);
  t.set_epoch_hook([&](const TrainState& s, const EpochRecord& r) {
    CHECK(s.prior == standard);
    CHECK(r.phase == Phase::pretrain);
    CHECK(r.update == Update::network);
    CHECK(r.report.kl_cat == 0.0);
    CHECK(r.report.cah == 0.0);
    CHECK(r.report.total == -r.report.elbo);
  });
  t.pretrain(60);
  const auto& h = t.state().history;
  REQUIRE(h.size() == 60);
  CHECK(h.front().epoch == 1);
  CHECK(h.back().epoch == 60);
  double late = 0;
  for (std::size_t i = 55; i < 60; ++i) late += h[i].report.total / 5;
  CHECK(late < h.front().report.total);
}

TEST_CASE("alternating epochs freeze the side that is not updated") {
  const auto g = toy_graph();
  Trainer t(g, toy_config(), 3);
  t.pretrain(5);
  t.init_priors();
  model::ModelParams params = t.state().params;
  gmm::MixturePrior prior = t.state().prior;
  std::vector<Update> seen;
  t.set_epoch_hook([&](const TrainState& s, const EpochRecord& r) {
    seen.push_back(r.update);
    CHECK(r.phase == Phase::alternating);
    if (r.update == Update::network) {
      CHECK(s.prior == prior);
      CHECK_FALSE(s.params == params);
    } else {
      CHECK(s.params == params);
      CHECK_FALSE(s.prior == prior);
    }
    params = s.params;
    prior = s.prior;
  });
  t.alternating_train(20, 5);
  using U = Update;
  const std::vector<Update> block{U::network, U::network, U::network, U::network, U::prior,
                                  U::prior,   U::prior,   U::prior,   U::prior,   U::network};
  std::vector<Update> expected = block;
  expected.insert(expected.end(), block.begin(), block.end());
  CHECK(seen == expected);
}

TEST_CASE("interval 10 never updates the prior, interval 0 never the network") {
  const auto g = toy_graph();
  {
    Trainer t(g, toy_config(), 3);
    t.pretrain(2);
    t.init_priors();
    const gmm::MixturePrior prior = t.state().prior;
    t.alternating_train(12, 10);
    CHECK(t.state().prior == prior);
  }
  {
    Trainer t(g, toy_config(), 3);
    t.pretrain(2);
    t.init_priors();
    const model::ModelParams params = t.state().params;
    const gmm::MixturePrior prior = t.state().prior;
    t.alternating_train(12, 0);
    CHECK(t.state().params == params);
    CHECK_FALSE(t.state().prior == prior);
  }
}

TEST_CASE("variance floor holds after prior updates") {
  const auto g = toy_graph();
  RunConfig cfg = toy_config();
  cfg.learning_rate = 0.5;
  Trainer t(g, cfg, 3);
  t.pretrain(2);
  t.init_priors();
  t.set_epoch_hook([](const TrainState& s, const EpochRecord&) {
    for (double v : s.prior.log_var.values()) CHECK(v >= std::log(gmm::kVarianceFloor));
  });
  t.alternating_train(20, 0);
}

TEST_CASE("init_priors with one cluster fits the global moments") {
  const auto g = toy_graph();
  Trainer t(g, toy_config(), 1);
  t.pretrain(3);
  t.init_priors();
  CHECK(t.state().phase == Phase::alternating);
  const DenseMatrix z = t.node_means();
  const auto& p = t.state().prior;
  REQUIRE(p.k() == 1);
  for (std::size_t j = 0; j < z.cols(); ++j) {
    double m = 0, v = 0;
    for (std::size_t i = 0; i < z.rows(); ++i) m += z(i, j) / static_cast<double>(z.rows());
    for (std::size_t i = 0; i < z.rows(); ++i) v += (z(i, j) - m) * (z(i, j) - m) / static_cast<double>(z.rows());
    CHECK(p.mean(0, j) == doctest::Approx(m).epsilon(1e-9));
    CHECK(std::exp(p.log_var(0, j)) == doctest::Approx(std::max(v, gmm::kVarianceFloor)).epsilon(1e-9));
  }
  CHECK(p.weights()(0, 0) == doctest::Approx(1.0));
  const auto res = t.assign_clusters();
  for (int a : res.assignment) CHECK(a == 0);

  CHECK_THROWS_AS(t.init_priors(), ContractError);
  CHECK_THROWS_AS(t.pretrain(1), ContractError);
}

TEST_CASE("init_priors is reproducible for a fixed seed") {
  const auto g = toy_graph();
  Trainer a(g, toy_config(), 3), b(g, toy_config(), 3);
  a.pretrain(4);
  b.pretrain(4);
  a.init_priors();
  b.init_priors();
  CHECK(a.state().prior == b.state().prior);
  CHECK(a.state().em.log_likelihood == b.state().em.log_likelihood);
}

TEST_CASE("assignments follow the posterior argmax") {
  DenseMatrix tie(3, 2);
  tie(0, 0) = 0.5, tie(0, 1) = 0.5;
  tie(1, 0) = 0.2, tie(1, 1) = 0.8;
  tie(2, 0) = 0.9, tie(2, 1) = 0.1;
  CHECK(argmax_rows(tie) == std::vector<int>{0, 1, 0});

  const auto g = toy_graph();
  Trainer t(g, toy_config(), 3);
  t.pretrain(5);
  t.init_priors();
  const auto res = t.assign_clusters();
  const auto& p = t.state().prior;
  const DenseMatrix w = p.weights();
  for (std::size_t i = 0; i < res.node_mean.rows(); ++i) {
    int best = 0;
    double best_ld = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < p.k(); ++c) {
      double ld = std::log(w(0, c));
      for (std::size_t j = 0; j < p.dim(); ++j) {
        const double var = std::exp(p.log_var(c, j)), d = res.node_mean(i, j) - p.mean(c, j);
        ld += -0.5 * std::log(2 * M_PI * var) - 0.5 * d * d / var;
      }
      if (ld > best_ld) best_ld = ld, best = static_cast<int>(c);
    }
    CHECK(res.assignment[i] == best);
  }
}

TEST_CASE("contract errors") {
  const auto g = toy_graph();
  CHECK_THROWS_AS(Trainer(g, toy_config(), 0), ContractError);
  CHECK_THROWS_AS(Trainer(g, toy_config(), 61), ContractError);
  Trainer t(g, toy_config(), 3);
  CHECK_THROWS_AS(t.alternating_train(1, 5), ContractError);
  CHECK_THROWS_AS(t.assign_clusters(), ContractError);
  t.init_priors();
  CHECK_THROWS_AS(t.alternating_train(1, 11), ContractError);
}

TEST_CASE("non-finite weights raise NumericError") {
  const auto g = toy_graph();
  Trainer t(g, toy_config(), 3);
  for (double& v : t.state().params.node.input_weight.values()) v = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(t.pretrain(1), NumericError);
}

TEST_CASE("runs are bitwise deterministic") {
  const auto g = toy_graph();
  Trainer a(g, toy_config(), 3), b(g, toy_config(), 3);
  const auto ra = a.run(), rb = b.run();
  CHECK(ra.assignment == rb.assignment);
  CHECK(ra.node_mean == rb.node_mean);
  CHECK(render_loss_log(a.state().history) == render_loss_log(b.state().history));

  RunConfig other = toy_config();
  other.seed = 4;
  Trainer c(g, other, 3);
  c.run();
  CHECK_FALSE(c.state().params == a.state().params);
}

TEST_CASE("ablation keeps the standard-normal prior until the end") {
  const auto g = toy_graph();
  RunConfig cfg = toy_config();
  cfg.mixture_prior = false;
  cfg.omega = 0;
  cfg.beta = 0;
  Trainer t(g, cfg, 3);
  t.set_epoch_hook([](const TrainState& s, const EpochRecord& r) {
    CHECK(r.phase == Phase::pretrain);
    CHECK(s.prior.k() == 1);
  });
  const auto res = t.run();
  CHECK(t.state().history.size() == cfg.pretrain_epochs + cfg.alternating_epochs);
  CHECK(t.state().prior.k() == 3);
  CHECK(res.assignment.size() == g.n_nodes);
}

TEST_CASE("planted partition is recovered") {
  const auto g = graph::planted_partition({}, 7);
  RunConfig cfg;
  cfg.seed = 7;
  Trainer t(g, cfg, g.k_clusters);
  const auto res = t.run();
  const auto report = metrics::evaluate(res.assignment, g.labels);
  CHECK(report.nmi >= 0.95);
}

TEST_CASE("checkpoint round trip and corruption") {
  const auto g = toy_graph();
  Trainer t(g, toy_config(), 3);
  t.pretrain(3);
  t.init_priors();
  t.alternating_train(4, 5);
  Checkpoint c{t.state().epoch, t.state().phase, t.state().params, t.state().prior, t.node_means()};
  const std::string text = render_checkpoint(c);
  const Checkpoint back = parse_checkpoint(text);
  CHECK(back.epoch == 7);
  CHECK(back.phase == Phase::alternating);
  CHECK(back.params == c.params);
  CHECK(back.prior == c.prior);
  CHECK(back.node_mean == c.node_mean);
  CHECK(render_checkpoint(back) == text);

  const auto lines = lines_of(text);
  auto join = [](const std::vector<std::string>& ls) {
    std::string s;
    for (const auto& l : ls) s += l + "\n";
    return s;
  };
  CHECK_THROWS_AS(parse_checkpoint(""), InputError);
  CHECK_THROWS_AS(parse_checkpoint(text.substr(0, text.size() / 2)), InputError);
  auto bad = lines;
  bad[0] = "#vclanc-checkpoint\t2";
  CHECK_THROWS_AS(parse_checkpoint(join(bad)), InputError);
  bad = lines;
  bad[2] = "#phase\twarmup";
  CHECK_THROWS_AS(parse_checkpoint(join(bad)), InputError);
  bad = lines;
  bad[4] = "x" + bad[4];
  CHECK_THROWS_AS(parse_checkpoint(join(bad)), InputError);
  // Drop the last tensor (node_mean) entirely.
  std::size_t last = 0;
  for (std::size_t i = 0; i < lines.size(); ++i)
    if (lines[i].rfind("tensor\t", 0) == 0) last = i;
  CHECK_THROWS_AS(parse_checkpoint(join({lines.begin(), lines.begin() + static_cast<long>(last)})), InputError);
  // Duplicate it instead.
  std::vector<std::string> dup = lines;
  dup.insert(dup.end(), lines.begin() + static_cast<long>(last), lines.end());
  CHECK_THROWS_AS(parse_checkpoint(join(dup)), InputError);

  const auto dir = std::filesystem::temp_directory_path() / "vclanc_test_trainer";
  std::filesystem::create_directories(dir);
  const auto path = dir / "ckpt.tsv";
  save_checkpoint(c, path);
  CHECK(load_checkpoint(path).params == c.params);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.tsv"), InputError);
}

TEST_CASE("periodic checkpoints") {
  const auto g = toy_graph();
  const auto path = std::filesystem::temp_directory_path() / "vclanc_test_trainer" / "periodic.tsv";
  std::filesystem::create_directories(path.parent_path());
  std::filesystem::remove(path);
  Trainer t(g, toy_config(), 3);
  t.set_checkpoint(path, 4);
  t.pretrain(3);
  CHECK_FALSE(std::filesystem::exists(path));
  t.pretrain(2);
  REQUIRE(std::filesystem::exists(path));
  CHECK(load_checkpoint(path).epoch == 4);
  t.finish();
  CHECK(load_checkpoint(path).epoch == 5);
}

TEST_CASE("loss log layout") {
  const auto g = toy_graph();
  Trainer t(g, toy_config(), 3);
  t.run();
  const auto lines = lines_of(render_loss_log(t.state().history));
  REQUIRE(lines.size() == 21);
  CHECK(lines[0] ==
        "epoch\tphase\tupdate\trecon_adj\trecon_attr\tkl_attr\tkl_node\tkl_cat\telbo\tcah\tmutual_distance\ttotal");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = io::split_ws(lines[i]);
    REQUIRE(f.size() == 12);
    CHECK(io::parse_int(f[0], "log") == static_cast<std::int64_t>(i));
    CHECK(f[1] == (i <= 10 ? "pretrain" : "alternating"));
    const auto& rec = t.state().history[i - 1];
    CHECK(io::parse_double(f[11], "log") == rec.report.total);
  }
}
