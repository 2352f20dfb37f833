#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vclanc/tensor.hpp"

namespace vclanc::graph {

using tensor::SparseCSR;

inline constexpr int kUnlabelled = -1;

struct LoadStats {
  std::size_t edge_records = 0;       // edge lines read, before symmetrization and dedup
  std::size_t self_edges_dropped = 0;
  std::size_t unknown_edges_skipped = 0;  // planetoid only
};

// Undirected attributed network with binary node features. Labels, when
// present, are consumed only by evaluation code.
struct AttributedGraph {
  std::size_t n_nodes = 0;
  std::size_t n_attrs = 0;
  SparseCSR adjacency;  // N x N, binary, symmetric, zero diagonal
  SparseCSR features;   // N x M, binary
  std::vector<int> labels;  // empty when unlabelled; kUnlabelled marks missing entries
  std::size_t k_clusters = 0;
  std::vector<std::string> node_names;
  std::vector<std::string> label_names;
  LoadStats stats;

  std::size_t undirected_edges() const { return adjacency.nnz() / 2; }
  bool has_labels() const { return !labels.empty(); }
};

// Builds the symmetric binary adjacency from an undirected edge list.
// Self edges are dropped, reciprocal and duplicate edges collapse.
SparseCSR symmetric_adjacency(std::size_t n_nodes,
                              const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                              std::size_t* self_edges_dropped = nullptr);

// Native three-file TSV format:
//   edges:    `src<TAB>dst` per line
//   features: `node<TAB>attr` per line (COO of the binary matrix)
//   labels:   `node<TAB>class` per line
// Node and attribute ids are non-negative integers. Optional header lines
// `#nodes<TAB>N`, `#attrs<TAB>M` and `#clusters<TAB>K` pin the dimensions;
// without `#nodes` the ids found in the feature and label files are
// re-indexed contiguously in ascending order. Other `#` lines are comments.
// An empty labels path means unlabelled.
AttributedGraph load_dataset(const std::filesystem::path& edges, const std::filesystem::path& features,
                             const std::filesystem::path& labels);

void save_dataset(const AttributedGraph& g, const std::filesystem::path& edges,
                  const std::filesystem::path& features, const std::filesystem::path& labels);

// Citation-network content/cites pair: content rows are
// `<id> <M binary attrs> <label>`, cites rows are `<cited> <citing>`.
// Cites rows naming unknown ids are skipped and counted in stats.
AttributedGraph load_planetoid_content(const std::filesystem::path& content,
                                       const std::filesystem::path& cites);

// Loads a dataset directory holding either the native files
// (edges.tsv, features.tsv, labels.tsv) or one *.content / *.cites pair.
AttributedGraph load_dataset_dir(const std::filesystem::path& dir);

// D^{-1/2} (A [+ I]) D^{-1/2}; rows of zero-degree nodes stay empty.
SparseCSR normalize_adjacency(const AttributedGraph& g, bool add_self_loops);

}  // namespace vclanc::graph

namespace vclanc::graph {

struct PlantedPartitionSpec {
  std::size_t n_nodes = 300;
  std::size_t blocks = 3;
  double p_in = 0.2;    // edge probability within a block
  double p_out = 0.01;  // across blocks
  std::size_t attrs_per_block = 10;
  double attr_p_in = 0.3;    // node holds an attribute of its own block
  double attr_p_out = 0.02;  // attribute of another block
};

// Labelled synthetic graph: node i belongs to block i * blocks / n_nodes.
AttributedGraph planted_partition(const PlantedPartitionSpec& spec, std::uint64_t seed);

}  // namespace vclanc::graph
