#include "vclanc/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include "vclanc/errors.hpp"
#include "vclanc/text_io.hpp"

namespace vclanc::graph {

namespace fs = std::filesystem;

namespace {

struct Header {
  std::optional<std::size_t> nodes;
  std::optional<std::size_t> attrs;
  std::optional<std::size_t> clusters;
};

struct Row {
  std::size_t line;
  std::vector<std::string_view> fields;
};

// Splits a native TSV file into data rows, collecting `#key value` headers.
std::vector<Row> read_rows(const std::string& text, const fs::path& path, Header& header) {
  std::vector<Row> rows;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    ++line_no;
    pos = end + 1;
    line = io::trim(line);
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (line.front() == '#') {
      auto f = io::split_ws(line.substr(1));
      if (f.size() == 2 && (f[0] == "nodes" || f[0] == "attrs" || f[0] == "clusters")) {
        const auto v = io::parse_int(f[1], where);
        if (v < 0) throw InputError(where + ": negative header value");
        auto& slot = f[0] == "nodes" ? header.nodes : f[0] == "attrs" ? header.attrs : header.clusters;
        if (slot && *slot != static_cast<std::size_t>(v)) {
          throw InputError(where + ": conflicting #" + std::string(f[0]) + " header");
        }
        slot = static_cast<std::size_t>(v);
      }
      continue;
    }
    rows.push_back({line_no, io::split_ws(line)});
    if (end == text.size()) break;
  }
  return rows;
}

std::size_t parse_id(std::string_view s, const std::string& where) {
  const auto v = io::parse_int(s, where);
  if (v < 0) throw InputError(where + ": negative id " + std::string(s));
  return static_cast<std::size_t>(v);
}

std::string where_of(const fs::path& p, std::size_t line) { return p.string() + ":" + std::to_string(line); }

}  // namespace

SparseCSR symmetric_adjacency(std::size_t n_nodes,
                              const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                              std::size_t* self_edges_dropped) {
  std::vector<std::pair<std::size_t, std::size_t>> sym;
  sym.reserve(edges.size() * 2);
  std::size_t self = 0;
  for (auto [u, v] : edges) {
    if (u >= n_nodes || v >= n_nodes) throw InputError("edge endpoint out of range");
    if (u == v) {
      ++self;
      continue;
    }
    sym.emplace_back(u, v);
    sym.emplace_back(v, u);
  }
  std::sort(sym.begin(), sym.end());
  sym.erase(std::unique(sym.begin(), sym.end()), sym.end());
  std::vector<std::size_t> offsets(n_nodes + 1, 0), indices;
  indices.reserve(sym.size());
  for (auto [u, v] : sym) {
    offsets[u + 1]++;
    indices.push_back(v);
  }
  for (std::size_t i = 0; i < n_nodes; ++i) offsets[i + 1] += offsets[i];
  if (self_edges_dropped) *self_edges_dropped = self;
  const std::size_t nnz = indices.size();
  return SparseCSR(n_nodes, n_nodes, std::move(offsets), std::move(indices), std::vector<double>(nnz, 1.0));
}

AttributedGraph load_dataset(const fs::path& edges_path, const fs::path& features_path,
                             const fs::path& labels_path) {
  Header header;
  const std::string edge_text = io::read_file(edges_path);
  const std::string feat_text = io::read_file(features_path);
  const bool labelled = !labels_path.empty();
  const std::string label_text = labelled ? io::read_file(labels_path) : std::string();

  const auto edge_rows = read_rows(edge_text, edges_path, header);
  const auto feat_rows = read_rows(feat_text, features_path, header);
  const auto label_rows = labelled ? read_rows(label_text, labels_path, header) : std::vector<Row>{};

  // Resolve the node index space.
  std::unordered_map<std::size_t, std::size_t> index;
  std::vector<std::string> names;
  if (header.nodes) {
    names.reserve(*header.nodes);
    for (std::size_t i = 0; i < *header.nodes; ++i) {
      index.emplace(i, i);
      names.push_back(std::to_string(i));
    }
  } else {
    std::set<std::size_t> ids;
    for (const auto& r : feat_rows) {
      if (r.fields.empty()) continue;
      ids.insert(parse_id(r.fields[0], where_of(features_path, r.line)));
    }
    for (const auto& r : label_rows) {
      if (r.fields.empty()) continue;
      ids.insert(parse_id(r.fields[0], where_of(labels_path, r.line)));
    }
    for (auto id : ids) {
      index.emplace(id, names.size());
      names.push_back(std::to_string(id));
    }
  }
  const std::size_t n = names.size();
  auto node_of = [&](std::string_view tok, const fs::path& p, std::size_t line) {
    const std::size_t id = parse_id(tok, where_of(p, line));
    auto it = index.find(id);
    if (it == index.end()) throw InputError(where_of(p, line) + ": unknown node id " + std::string(tok));
    return it->second;
  };

  AttributedGraph g;
  g.n_nodes = n;
  g.node_names = std::move(names);

  // Features.
  std::vector<tensor::Triplet> feats;
  std::size_t max_attr = 0;
  for (const auto& r : feat_rows) {
    const std::string where = where_of(features_path, r.line);
    if (r.fields.size() != 2 && r.fields.size() != 3) {
      throw InputError(where + ": expected `node attr [value]`");
    }
    const std::size_t node = node_of(r.fields[0], features_path, r.line);
    const std::size_t attr = parse_id(r.fields[1], where);
    if (header.attrs && attr >= *header.attrs) {
      throw InputError(where + ": attribute " + std::to_string(attr) + " exceeds declared #attrs " +
                       std::to_string(*header.attrs));
    }
    double value = 1.0;
    if (r.fields.size() == 3) {
      value = io::parse_double(r.fields[2], where);
      if (value != 0.0 && value != 1.0) throw InputError(where + ": feature values must be 0 or 1");
    }
    max_attr = std::max(max_attr, attr + 1);
    if (value == 1.0) feats.push_back({node, attr, 1.0});
  }
  g.n_attrs = header.attrs ? *header.attrs : max_attr;
  std::sort(feats.begin(), feats.end(),
            [](const auto& a, const auto& b) { return a.row != b.row ? a.row < b.row : a.col < b.col; });
  feats.erase(std::unique(feats.begin(), feats.end(),
                          [](const auto& a, const auto& b) { return a.row == b.row && a.col == b.col; }),
              feats.end());
  g.features = SparseCSR::from_triplets(n, g.n_attrs, std::move(feats));

  // Edges.
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  edges.reserve(edge_rows.size());
  for (const auto& r : edge_rows) {
    if (r.fields.size() != 2) throw InputError(where_of(edges_path, r.line) + ": expected `src dst`");
    edges.emplace_back(node_of(r.fields[0], edges_path, r.line), node_of(r.fields[1], edges_path, r.line));
  }
  g.stats.edge_records = edges.size();
  g.adjacency = symmetric_adjacency(n, edges, &g.stats.self_edges_dropped);

  // Labels.
  if (labelled) {
    g.labels.assign(n, kUnlabelled);
    int max_label = -1;
    for (const auto& r : label_rows) {
      const std::string where = where_of(labels_path, r.line);
      if (r.fields.size() != 2) throw InputError(where + ": expected `node label`");
      const std::size_t node = node_of(r.fields[0], labels_path, r.line);
      const auto label = io::parse_int(r.fields[1], where);
      if (label < 0 || (header.clusters && static_cast<std::size_t>(label) >= *header.clusters)) {
        throw InputError(where + ": label out of range");
      }
      if (g.labels[node] != kUnlabelled && g.labels[node] != label) {
        throw InputError(where + ": conflicting labels for node " + std::string(r.fields[0]));
      }
      g.labels[node] = static_cast<int>(label);
      max_label = std::max(max_label, static_cast<int>(label));
    }
    g.k_clusters = header.clusters ? *header.clusters : static_cast<std::size_t>(max_label + 1);
    for (std::size_t c = 0; c < g.k_clusters; ++c) g.label_names.push_back(std::to_string(c));
  } else if (header.clusters) {
    g.k_clusters = *header.clusters;
  }
  return g;
}

void save_dataset(const AttributedGraph& g, const fs::path& edges_path, const fs::path& features_path,
                  const fs::path& labels_path) {
  std::ostringstream e, f, l;
  e << "#nodes\t" << g.n_nodes << '\n';
  for (std::size_t u = 0; u < g.n_nodes; ++u)
    for (auto v : g.adjacency.row_indices(u))
      if (u < v) e << u << '\t' << v << '\n';
  f << "#nodes\t" << g.n_nodes << "\n#attrs\t" << g.n_attrs << '\n';
  for (std::size_t u = 0; u < g.n_nodes; ++u)
    for (auto a : g.features.row_indices(u)) f << u << '\t' << a << '\n';
  io::write_file(edges_path, e.str());
  io::write_file(features_path, f.str());
  if (!labels_path.empty() && g.has_labels()) {
    l << "#nodes\t" << g.n_nodes << "\n#clusters\t" << g.k_clusters << '\n';
    for (std::size_t u = 0; u < g.n_nodes; ++u)
      if (g.labels[u] != kUnlabelled) l << u << '\t' << g.labels[u] << '\n';
    io::write_file(labels_path, l.str());
  }
}

AttributedGraph load_planetoid_content(const fs::path& content_path, const fs::path& cites_path) {
  const std::string content = io::read_file(content_path);
  const std::string cites = io::read_file(cites_path);

  AttributedGraph g;
  std::unordered_map<std::string, std::size_t> index;
  std::map<std::string, int> label_ids;
  std::vector<tensor::Triplet> feats;
  std::optional<std::size_t> width;

  std::istringstream cin_(content);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(cin_, line)) {
    ++line_no;
    auto fields = io::split_ws(line);
    if (fields.empty()) continue;
    const std::string where = where_of(content_path, line_no);
    if (fields.size() < 2) throw InputError(where + ": content row needs an id and a label");
    const std::size_t m = fields.size() - 2;
    if (width && *width != m) {
      throw InputError(where + ": " + std::to_string(m) + " attribute columns, expected " +
                       std::to_string(*width));
    }
    width = m;
    const std::string id(fields.front());
    if (!index.emplace(id, g.n_nodes).second) throw InputError(where + ": duplicate node id " + id);
    for (std::size_t a = 0; a < m; ++a) {
      const auto tok = fields[a + 1];
      if (tok == "1") {
        feats.push_back({g.n_nodes, a, 1.0});
      } else if (tok != "0") {
        const double v = io::parse_double(tok, where);
        if (v == 1.0) {
          feats.push_back({g.n_nodes, a, 1.0});
        } else if (v != 0.0) {
          throw InputError(where + ": feature values must be 0 or 1");
        }
      }
    }
    const std::string label(fields.back());
    auto [it, inserted] = label_ids.emplace(label, static_cast<int>(g.label_names.size()));
    if (inserted) g.label_names.push_back(label);
    g.labels.push_back(it->second);
    g.node_names.push_back(id);
    ++g.n_nodes;
  }
  g.n_attrs = width.value_or(0);
  g.k_clusters = g.label_names.size();
  g.features = SparseCSR::from_triplets(g.n_nodes, g.n_attrs, std::move(feats));

  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::istringstream ein(cites);
  line_no = 0;
  while (std::getline(ein, line)) {
    ++line_no;
    auto fields = io::split_ws(line);
    if (fields.empty()) continue;
    if (fields.size() != 2) throw InputError(where_of(cites_path, line_no) + ": expected `cited citing`");
    g.stats.edge_records++;
    auto a = index.find(std::string(fields[0]));
    auto b = index.find(std::string(fields[1]));
    if (a == index.end() || b == index.end()) {
      g.stats.unknown_edges_skipped++;
      continue;
    }
    edges.emplace_back(a->second, b->second);
  }
  g.adjacency = symmetric_adjacency(g.n_nodes, edges, &g.stats.self_edges_dropped);
  return g;
}

AttributedGraph load_dataset_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputError("dataset directory not found: " + dir.string());
  if (fs::exists(dir / "edges.tsv") && fs::exists(dir / "features.tsv")) {
    const fs::path labels = dir / "labels.tsv";
    return load_dataset(dir / "edges.tsv", dir / "features.tsv", fs::exists(labels) ? labels : fs::path());
  }
  std::vector<fs::path> contents, citations;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".content") contents.push_back(entry.path());
    if (entry.path().extension() == ".cites") citations.push_back(entry.path());
  }
  if (contents.size() == 1 && citations.size() == 1) return load_planetoid_content(contents[0], citations[0]);
  throw InputError("no dataset found in " + dir.string() +
                   " (expected edges.tsv + features.tsv or one .content/.cites pair)");
}

SparseCSR normalize_adjacency(const AttributedGraph& g, bool add_self_loops) {
  const std::size_t n = g.n_nodes;
  std::vector<double> degree(n, 0.0);
  std::vector<tensor::Triplet> t;
  t.reserve(g.adjacency.nnz() + (add_self_loops ? n : 0));
  for (std::size_t i = 0; i < n; ++i) {
    auto idx = g.adjacency.row_indices(i);
    auto val = g.adjacency.row_values(i);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      t.push_back({i, idx[k], val[k]});
      degree[i] += val[k];
    }
    if (add_self_loops) {
      t.push_back({i, i, 1.0});
      degree[i] += 1.0;
    }
  }
  for (auto& e : t) e.value /= std::sqrt(degree[e.row] * degree[e.col]);
  return SparseCSR::from_triplets(n, n, std::move(t));
}

AttributedGraph planted_partition(const PlantedPartitionSpec& spec, std::uint64_t seed) {
  if (spec.blocks == 0 || spec.n_nodes < spec.blocks) throw ContractError("planted_partition: need 1 <= blocks <= nodes");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t n = spec.n_nodes, m = spec.blocks * spec.attrs_per_block;
  AttributedGraph g;
  g.n_nodes = n;
  g.n_attrs = m;
  g.k_clusters = spec.blocks;
  g.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) g.labels[i] = static_cast<int>(i * spec.blocks / n);

  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (u(rng) < (g.labels[i] == g.labels[j] ? spec.p_in : spec.p_out)) edges.emplace_back(i, j);
  g.stats.edge_records = edges.size();
  g.adjacency = symmetric_adjacency(n, edges);

  std::vector<tensor::Triplet> f;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < m; ++a) {
      const bool own = a / spec.attrs_per_block == static_cast<std::size_t>(g.labels[i]);
      if (u(rng) < (own ? spec.attr_p_in : spec.attr_p_out)) f.push_back({i, a, 1.0});
    }
  g.features = SparseCSR::from_triplets(n, m, std::move(f));
  for (std::size_t i = 0; i < n; ++i) g.node_names.push_back(std::to_string(i));
  for (std::size_t b = 0; b < spec.blocks; ++b) g.label_names.push_back(std::to_string(b));
  return g;
}

}  // namespace vclanc::graph
