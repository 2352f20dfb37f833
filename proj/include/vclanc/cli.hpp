#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vclanc/config.hpp"
#include "vclanc/graph.hpp"
#include "vclanc/metrics.hpp"
#include "vclanc/tensor.hpp"
#include "vclanc/trainer.hpp"

namespace vclanc::cli {

using tensor::DenseMatrix;

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumeric = 3;

// Environment variable naming the default output root.
inline constexpr const char* kOutEnv = "VCLANC_OUT";

const char* version();

// Entry point shared by the binary and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Dataset named by the config: dataset dir, else planetoid dir, else the
// native edges/features/labels triple.
graph::AttributedGraph load_graph(const RunConfig& cfg);
// cfg.clusters, else the dataset's class count; InputError when neither is set.
std::size_t resolve_clusters(const RunConfig& cfg, const graph::AttributedGraph& g);
// cfg.out, else $VCLANC_OUT, else ./runs.
std::filesystem::path output_root(const RunConfig& cfg);

// Per-node `name<TAB>value` tables (assignments, labels) with a header line.
std::string render_node_values(const std::vector<std::string>& names, const std::vector<int>& values,
                               std::string_view value_header);
// Accepts an optional `node<TAB>...` header and `#` comments. Rejects duplicate names.
std::vector<std::pair<std::string, int>> parse_node_values(std::string_view text, const std::string& source);

// `node<TAB>z0 ... z(J-1)` header, then one row per node.
std::string render_embeddings(const std::vector<std::string>& names, const DenseMatrix& z,
                              std::string_view column_prefix = "z");
std::pair<std::vector<std::string>, DenseMatrix> parse_embeddings(std::string_view text, const std::string& source);

// Projection onto the top two principal axes of the centered rows. Each axis
// is signed so its largest-magnitude loading is positive.
DenseMatrix pca2(const DenseMatrix& z);

struct RunReport {
  RunConfig config;
  std::size_t clusters = 0;
  std::vector<train::EpochRecord> history;
  std::optional<metrics::MetricReport> metrics;
  std::vector<int> assignment;
  std::vector<int> labels;  // empty when the dataset is unlabelled
  double wall_seconds = 0;
  std::string version;

  std::string to_json() const;
};

// Trains one seed (cfg.seed) and writes config.txt, loss_log.tsv,
// checkpoint.tsv, embeddings.tsv, assignments.tsv, report.json and, when
// labelled, metrics.json into dir.
RunReport train_one(const graph::AttributedGraph& g, const RunConfig& cfg, const std::filesystem::path& dir);

// Directory for one seed below the output root.
std::filesystem::path seed_dir(const std::filesystem::path& root, std::uint64_t seed);

// Reads assignments and labels tables and scores them; InputError when the
// node sets differ.
metrics::MetricReport evaluate_files(const std::filesystem::path& assignments, const std::filesystem::path& labels,
                                     metrics::NmiNorm norm = metrics::NmiNorm::arithmetic);

}  // namespace vclanc::cli
