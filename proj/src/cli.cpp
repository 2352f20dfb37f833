#include "vclanc/cli.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <iostream>
#include <map>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "vclanc/errors.hpp"
#include "vclanc/text_io.hpp"

#ifndef VCLANC_VERSION
#define VCLANC_VERSION "unknown"
#endif

namespace vclanc::cli {

namespace fs = std::filesystem;

namespace {

// Bad flag combinations that CLI11 itself cannot see.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  for (std::size_t pos = 0; pos < text.size();) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return lines;
}

std::vector<std::string> node_names(const graph::AttributedGraph& g) {
  if (g.node_names.size() == g.n_nodes) return g.node_names;
  std::vector<std::string> names(g.n_nodes);
  for (std::size_t i = 0; i < g.n_nodes; ++i) names[i] = std::to_string(i);
  return names;
}

nlohmann::ordered_json config_json(const RunConfig& cfg) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  const std::string text = render_config(cfg);
  for (std::string_view line : split_lines(text)) {
    const auto eq = line.find(" = ");
    if (eq != std::string_view::npos) j[std::string(line.substr(0, eq))] = std::string(line.substr(eq + 3));
  }
  return j;
}

// Options shared by train and sweep. Values are applied on top of --config in
// command-line order of declaration.
struct RunOptions {
  std::string config_file;
  std::vector<std::pair<std::string, CLI::Option*>> options;
  std::map<std::string, std::string> values;
  bool no_self_loops = false, cah_on_samples = false, no_mixture_prior = false;
  std::size_t jobs = 1;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "key = value file applied before the flags")->check(CLI::ExistingFile);
    const std::vector<std::pair<std::string, std::string>> keys{
        {"dataset", "dataset directory (native TSV files or one .content/.cites pair)"},
        {"edges", "native edge list"},
        {"features", "native feature list"},
        {"labels", "native label list"},
        {"planetoid-dir", "directory with one .content/.cites pair"},
        {"j", "embedding size"},
        {"hidden", "hidden layer width"},
        {"t1", "pretraining epochs"},
        {"t2", "alternating epochs"},
        {"interval", "network epochs per block of 10"},
        {"lr", "Adam learning rate"},
        {"omega", "assignment-hardening weight"},
        {"beta", "mutual-distance weight"},
        {"alpha", "Student-t degrees of freedom"},
        {"mc-samples", "Monte-Carlo samples per epoch"},
        {"seed", "first seed"},
        {"seeds", "number of consecutive seeds"},
        {"out", "output root (default $VCLANC_OUT, else ./runs)"},
        {"k", "cluster count (default: dataset class count)"},
        {"pos-weight", "weight on positive adjacency entries"},
        {"checkpoint-every", "checkpoint period in epochs, 0 = only at the end"},
        {"block-rows", "decoder row-block size"},
    };
    for (const auto& [key, help] : keys) {
      values[key];
      options.emplace_back(key, app->add_option("--" + key, values[key], help));
    }
    app->add_flag("--no-self-loops", no_self_loops, "normalize A without adding I");
    app->add_flag("--cah-on-samples", cah_on_samples, "assignment hardening on sampled Z instead of the mean");
    app->add_flag("--no-mixture-prior", no_mixture_prior, "standard-normal prior throughout, mixture fitted at the end");
    app->add_option("--jobs", jobs, "seeds run in parallel, one process each")->check(CLI::PositiveNumber);
  }

  RunConfig build() const {
    RunConfig cfg = config_file.empty() ? RunConfig{} : parse_config_file(config_file);
    for (const auto& [key, opt] : options)
      if (opt->count() > 0) apply_setting(cfg, key, values.at(key));
    if (no_self_loops) cfg.self_loops = false;
    if (cah_on_samples) cfg.cah_on_samples = true;
    if (no_mixture_prior) cfg.mixture_prior = false;
    validate(cfg);
    return cfg;
  }
};

struct SeedSummary {
  std::uint64_t seed = 0;
  std::optional<metrics::MetricReport> metrics;
};

int exit_code_for_current_exception(std::ostream& err) {
  try {
    throw;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InputError& e) {
    err << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const fs::filesystem_error& e) {
    err << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const DomainError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

// Runs every seed of cfg below root, optionally forking one process per seed.
std::vector<SeedSummary> train_seeds(const graph::AttributedGraph& g, const RunConfig& cfg, const fs::path& root,
                                     std::size_t jobs, std::ostream& err) {
  std::vector<std::uint64_t> seeds;
  for (std::size_t s = 0; s < cfg.seeds; ++s) seeds.push_back(cfg.seed + s);
  auto config_for = [&](std::uint64_t s) {
    RunConfig c = cfg;
    c.seed = s;
    c.seeds = 1;
    return c;
  };

  if (jobs <= 1 || seeds.size() <= 1) {
    for (std::uint64_t s : seeds) train_one(g, config_for(s), seed_dir(root, s));
  } else {
    std::cout.flush();
    std::cerr.flush();
    std::map<pid_t, std::uint64_t> running;
    int failure = 0;
    auto reap = [&] {
      int status = 0;
      const pid_t pid = ::wait(&status);
      if (pid < 0) return;
      const int code = WIFEXITED(status) ? WEXITSTATUS(status) : kExitNumeric;
      if (code != 0 && failure == 0) {
        failure = code;
        err << "seed " << running[pid] << " failed with exit code " << code << '\n';
      }
      running.erase(pid);
    };
    for (std::uint64_t s : seeds) {
      while (running.size() >= jobs) reap();
      const pid_t pid = ::fork();
      if (pid < 0) throw std::runtime_error("fork failed");
      if (pid == 0) {
        int code = kExitOk;
        try {
          train_one(g, config_for(s), seed_dir(root, s));
        } catch (...) {
          code = exit_code_for_current_exception(std::cerr);
        }
        std::cerr.flush();
        ::_exit(code);
      }
      running[pid] = s;
    }
    while (!running.empty()) reap();
    if (failure == kExitInput) throw InputError("a seed run failed");
    if (failure != 0) throw NumericError("a seed run failed");
  }

  std::vector<SeedSummary> out;
  for (std::uint64_t s : seeds) {
    SeedSummary summary{s, std::nullopt};
    const fs::path m = seed_dir(root, s) / "metrics.json";
    if (fs::exists(m)) summary.metrics = metrics::MetricReport::from_json(io::read_file(m));
    out.push_back(summary);
  }
  return out;
}

std::optional<metrics::MetricReport> mean_report(const std::vector<SeedSummary>& runs) {
  metrics::MetricReport mean;
  std::size_t n = 0;
  for (const auto& r : runs) {
    if (!r.metrics) return std::nullopt;
    mean.nmi += r.metrics->nmi;
    mean.purity += r.metrics->purity;
    mean.ari += r.metrics->ari;
    mean.precision += r.metrics->precision;
    mean.recall += r.metrics->recall;
    mean.f1 += r.metrics->f1;
    mean.evaluated = r.metrics->evaluated;
    ++n;
  }
  if (n == 0) return std::nullopt;
  for (double* v : {&mean.nmi, &mean.purity, &mean.ari, &mean.precision, &mean.recall, &mean.f1})
    *v /= static_cast<double>(n);
  return mean;
}

int cmd_train(const RunOptions& opts, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = opts.build();
  const graph::AttributedGraph g = load_graph(cfg);
  const fs::path root = output_root(cfg);
  fs::create_directories(root);
  const auto runs = train_seeds(g, cfg, root, opts.jobs, err);

  std::string summary = "seed\t" + std::string(metrics::MetricReport::kTsvHeader) + "\n";
  for (const auto& r : runs) {
    summary += std::to_string(r.seed);
    summary += r.metrics ? "\t" + r.metrics->to_tsv() : std::string("\tunlabelled");
    summary += '\n';
  }
  if (const auto mean = mean_report(runs)) {
    summary += "mean\t" + mean->to_tsv() + "\n";
    io::write_file(root / "metrics.json", mean->to_json() + "\n");
  }
  io::write_file(root / "summary.tsv", summary);
  out << summary;
  return kExitOk;
}

int cmd_sweep(const RunOptions& opts, const std::vector<std::size_t>& js, std::ostream& out, std::ostream& err) {
  if (js.empty()) throw UsageError("--j-list is empty");
  std::set<std::size_t> seen;
  for (std::size_t j : js)
    if (!seen.insert(j).second) throw UsageError("duplicate embedding size " + std::to_string(j) + " in --j-list");
  const RunConfig base = opts.build();
  const graph::AttributedGraph g = load_graph(base);
  if (!g.has_labels()) throw InputError("sweep needs a labelled dataset");
  const fs::path root = output_root(base);
  std::string table = "j\tnmi\tari\n";
  for (std::size_t j : js) {
    RunConfig cfg = base;
    cfg.embedding_size = j;
    validate(cfg);
    const auto mean = mean_report(train_seeds(g, cfg, root / ("j-" + std::to_string(j)), opts.jobs, err));
    if (!mean) throw InputError("sweep: missing metrics");
    table += std::to_string(j) + "\t" + io::format_double(mean->nmi) + "\t" + io::format_double(mean->ari) + "\n";
  }
  fs::create_directories(root);
  io::write_file(root / "sweep.tsv", table);
  out << table;
  return kExitOk;
}

int cmd_eval(const std::string& assignments, const std::string& labels, bool geometric, const std::string& json_out,
             std::ostream& out) {
  const auto report =
      evaluate_files(assignments, labels, geometric ? metrics::NmiNorm::geometric : metrics::NmiNorm::arithmetic);
  out << metrics::MetricReport::kTsvHeader << '\n' << report.to_tsv() << '\n';
  if (!json_out.empty()) io::write_file(json_out, report.to_json() + "\n");
  return kExitOk;
}

int cmd_embed_export(const std::string& checkpoint, const std::string& projection, const std::string& dest,
                     std::ostream& out) {
  const train::Checkpoint c = train::load_checkpoint(checkpoint);
  std::vector<std::string> names(c.node_mean.rows());
  for (std::size_t i = 0; i < names.size(); ++i) names[i] = std::to_string(i);
  const std::string text = projection == "pca2" ? render_embeddings(names, pca2(c.node_mean), "pc")
                                                : render_embeddings(names, c.node_mean);
  if (dest.empty()) out << text;
  else io::write_file(dest, text);
  return kExitOk;
}

}  // namespace

const char* version() { return VCLANC_VERSION; }

graph::AttributedGraph load_graph(const RunConfig& cfg) {
  if (!cfg.dataset.empty()) return graph::load_dataset_dir(cfg.dataset);
  if (!cfg.planetoid_dir.empty()) return graph::load_dataset_dir(cfg.planetoid_dir);
  if (!cfg.edges.empty() && !cfg.features.empty()) return graph::load_dataset(cfg.edges, cfg.features, cfg.labels);
  throw InputError("no dataset given: use --dataset, --planetoid-dir or --edges with --features");
}

std::size_t resolve_clusters(const RunConfig& cfg, const graph::AttributedGraph& g) {
  if (cfg.clusters > 0) return cfg.clusters;
  if (g.k_clusters > 0) return g.k_clusters;
  throw InputError("cluster count unknown: the dataset has no labels, pass --k");
}

fs::path output_root(const RunConfig& cfg) {
  if (!cfg.out.empty()) return cfg.out;
  if (const char* env = std::getenv(kOutEnv); env && *env) return env;
  return "runs";
}

fs::path seed_dir(const fs::path& root, std::uint64_t seed) { return root / ("seed-" + std::to_string(seed)); }

std::string render_node_values(const std::vector<std::string>& names, const std::vector<int>& values,
                               std::string_view value_header) {
  if (names.size() != values.size()) throw ContractError("render_node_values: size mismatch");
  std::string s = "node\t" + std::string(value_header) + "\n";
  for (std::size_t i = 0; i < names.size(); ++i) s += names[i] + "\t" + std::to_string(values[i]) + "\n";
  return s;
}

std::vector<std::pair<std::string, int>> parse_node_values(std::string_view text, const std::string& source) {
  std::vector<std::pair<std::string, int>> out;
  std::set<std::string, std::less<>> seen;
  bool first = true;
  const auto lines = split_lines(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const std::string_view line = io::trim(lines[ln]);
    if (line.empty() || line.front() == '#') continue;
    const auto f = io::split_ws(line);
    const std::string where = source + ":" + std::to_string(ln + 1);
    if (std::exchange(first, false) && !f.empty() && f[0] == "node") continue;
    if (f.size() != 2) throw InputError(where + ": expected `node<TAB>value`");
    const auto v = io::parse_int(f[1], where);
    if (v < -1 || v > std::numeric_limits<int>::max()) throw InputError(where + ": value out of range");
    if (!seen.emplace(f[0]).second) throw InputError(where + ": duplicate node " + std::string(f[0]));
    out.emplace_back(std::string(f[0]), static_cast<int>(v));
  }
  return out;
}

std::string render_embeddings(const std::vector<std::string>& names, const DenseMatrix& z,
                              std::string_view column_prefix) {
  if (names.size() != z.rows()) throw ContractError("render_embeddings: size mismatch");
  std::string s = "node";
  for (std::size_t j = 0; j < z.cols(); ++j) s += "\t" + std::string(column_prefix) + std::to_string(j);
  s += '\n';
  for (std::size_t i = 0; i < z.rows(); ++i) {
    s += names[i];
    for (std::size_t j = 0; j < z.cols(); ++j) s += "\t" + io::format_double(z(i, j));
    s += '\n';
  }
  return s;
}

std::pair<std::vector<std::string>, DenseMatrix> parse_embeddings(std::string_view text, const std::string& source) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw InputError(source + ": empty embeddings file");
  const auto header = io::split_ws(lines[0]);
  if (header.empty() || header[0] != "node") throw InputError(source + ":1: expected `node` header");
  const std::size_t cols = header.size() - 1;
  std::vector<std::string> names;
  std::vector<double> values;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (io::trim(lines[ln]).empty()) continue;
    const auto f = io::split_ws(lines[ln]);
    const std::string where = source + ":" + std::to_string(ln + 1);
    if (f.size() != cols + 1) throw InputError(where + ": expected " + std::to_string(cols + 1) + " fields");
    names.emplace_back(f[0]);
    for (std::size_t j = 1; j < f.size(); ++j) values.push_back(io::parse_double(f[j], where));
  }
  DenseMatrix z(names.size(), cols);
  std::copy(values.begin(), values.end(), z.values().begin());
  return {std::move(names), std::move(z)};
}

DenseMatrix pca2(const DenseMatrix& z) {
  const std::size_t n = z.rows(), d = z.cols();
  if (d < 2) throw InputError("pca2: embeddings need at least two dimensions");
  if (n == 0) return DenseMatrix(0, 2);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = z(i, j);
  x.rowwise() -= x.colwise().mean();
  const Eigen::MatrixXd cov = x.transpose() * x / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw NumericError("pca2: eigendecomposition failed");
  // Eigenvalues come back ascending.
  Eigen::MatrixXd axes(static_cast<Eigen::Index>(d), 2);
  for (Eigen::Index c = 0; c < 2; ++c) {
    Eigen::VectorXd v = es.eigenvectors().col(static_cast<Eigen::Index>(d) - 1 - c);
    Eigen::Index lead = 0;
    for (Eigen::Index j = 1; j < v.size(); ++j)
      if (std::abs(v(j)) > std::abs(v(lead))) lead = j;
    if (v(lead) < 0) v = -v;
    axes.col(c) = v;
  }
  const Eigen::MatrixXd y = x * axes;
  DenseMatrix out(n, 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 2; ++c) out(i, c) = y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
  return out;
}

std::string RunReport::to_json() const {
  nlohmann::ordered_json j;
  j["version"] = version;
  j["seed"] = config.seed;
  j["wall_seconds"] = wall_seconds;
  j["clusters"] = clusters;
  j["config"] = config_json(config);
  nlohmann::ordered_json log = nlohmann::ordered_json::array();
  for (const auto& r : history) {
    nlohmann::ordered_json row;
    row["epoch"] = r.epoch;
    row["phase"] = train::phase_name(r.phase);
    row["update"] = train::update_name(r.update);
    const auto v = r.report.values();
    for (std::size_t f = 0; f < v.size(); ++f) row[std::string(losses::LossReport::kFields[f])] = v[f];
    log.push_back(row);
  }
  j["loss_log"] = log;
  j["metrics"] = metrics ? nlohmann::ordered_json::parse(metrics->to_json()) : nlohmann::ordered_json(nullptr);
  j["assignment"] = assignment;
  j["labels"] = labels;
  return j.dump(2);
}

RunReport train_one(const graph::AttributedGraph& g, const RunConfig& cfg, const fs::path& dir) {
  const auto start = std::chrono::steady_clock::now();
  fs::create_directories(dir);
  RunReport report;
  report.config = cfg;
  report.version = version();
  report.clusters = resolve_clusters(cfg, g);
  io::write_file(dir / "config.txt", render_config(cfg));

  train::Trainer trainer(g, cfg, report.clusters);
  trainer.set_checkpoint(dir / "checkpoint.tsv", cfg.checkpoint_every);
  const train::ClusteringResult result = trainer.run();
  report.history = trainer.state().history;
  report.assignment = result.assignment;

  const auto names = node_names(g);
  io::write_file(dir / "loss_log.tsv", train::render_loss_log(report.history));
  io::write_file(dir / "embeddings.tsv", render_embeddings(names, result.node_mean));
  io::write_file(dir / "assignments.tsv", render_node_values(names, result.assignment, "cluster"));
  if (g.has_labels()) {
    report.labels = g.labels;
    report.metrics = metrics::evaluate(result.assignment, g.labels);
    io::write_file(dir / "metrics.json", report.metrics->to_json() + "\n");
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  io::write_file(dir / "report.json", report.to_json() + "\n");
  return report;
}

metrics::MetricReport evaluate_files(const fs::path& assignments, const fs::path& labels, metrics::NmiNorm norm) {
  const auto pred = parse_node_values(io::read_file(assignments), assignments.string());
  const auto truth = parse_node_values(io::read_file(labels), labels.string());
  std::map<std::string, int, std::less<>> by_name(truth.begin(), truth.end());
  if (pred.size() != truth.size()) {
    throw InputError("node sets differ: " + std::to_string(pred.size()) + " assignments vs " +
                     std::to_string(truth.size()) + " labels");
  }
  std::vector<int> p, t;
  for (const auto& [name, cluster] : pred) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw InputError("node sets differ: " + name + " has no label");
    if (cluster < 0) throw InputError("negative cluster id for node " + name);
    p.push_back(cluster);
    t.push_back(it->second);
  }
  return metrics::evaluate(p, t, norm);
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Variational co-embedding clustering for attributed networks"};
  app.set_version_flag("--version", std::string(version()));
  app.require_subcommand(1);

  RunOptions train_opts;
  CLI::App* train = app.add_subcommand("train", "train one model per seed and write a run directory");
  train_opts.attach(train);

  RunOptions sweep_opts;
  std::vector<std::size_t> j_list;
  CLI::App* sweep = app.add_subcommand("sweep", "train across embedding sizes and tabulate NMI and ARI");
  sweep_opts.attach(sweep);
  sweep->add_option("--j-list", j_list, "comma-separated embedding sizes")->required()->delimiter(',');

  std::string assignments, labels, json_out;
  bool geometric = false;
  CLI::App* eval = app.add_subcommand("eval", "score an assignments file against labels");
  eval->add_option("--assignments", assignments, "node<TAB>cluster table")->required()->check(CLI::ExistingFile);
  eval->add_option("--labels", labels, "node<TAB>class table")->required()->check(CLI::ExistingFile);
  eval->add_flag("--geometric", geometric, "normalize NMI by the geometric mean of the entropies");
  eval->add_option("--out", json_out, "write the report as JSON");

  std::string checkpoint, projection = "none", dest;
  CLI::App* embed = app.add_subcommand("embed-export", "export node embeddings from a checkpoint");
  embed->add_option("--checkpoint", checkpoint, "checkpoint.tsv from a run")->required();
  embed->add_option("--projection", projection, "none or pca2")->check(CLI::IsMember({"none", "pca2"}));
  embed->add_option("--out", dest, "output TSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) return cmd_train(train_opts, out, err);
    if (*sweep) return cmd_sweep(sweep_opts, j_list, out, err);
    if (*eval) return cmd_eval(assignments, labels, geometric, json_out, out);
    if (*embed) return cmd_embed_export(checkpoint, projection, dest, out);
  } catch (...) {
    return exit_code_for_current_exception(err);
  }
  return kExitUsage;
}

}  // namespace vclanc::cli
