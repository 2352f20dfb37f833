#include "vclanc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"
#include "vclanc/errors.hpp"
#include "vclanc/graph.hpp"
#include "vclanc/text_io.hpp"

namespace vclanc::metrics {

namespace {

std::int64_t pairs(std::int64_t n) { return n * (n - 1) / 2; }

double entropy(const std::vector<std::int64_t>& sums, double n) {
  double h = 0.0;
  for (std::int64_t s : sums)
    if (s > 0) {
      const double p = static_cast<double>(s) / n;
      h -= p * std::log(p);
    }
  return h;
}

}  // namespace

ContingencyTable contingency(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.size() != truth.size()) {
    throw InputError("contingency: " + std::to_string(pred.size()) + " predictions vs " +
                     std::to_string(truth.size()) + " labels");
  }
  ContingencyTable t;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0 || truth[i] < 0) throw InputError("contingency: negative label at position " + std::to_string(i));
    t.rows = std::max(t.rows, static_cast<std::size_t>(pred[i]) + 1);
    t.cols = std::max(t.cols, static_cast<std::size_t>(truth[i]) + 1);
  }
  t.counts.assign(t.rows * t.cols, 0);
  t.row_sums.assign(t.rows, 0);
  t.col_sums.assign(t.cols, 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ++t.counts[static_cast<std::size_t>(pred[i]) * t.cols + static_cast<std::size_t>(truth[i])];
    ++t.row_sums[static_cast<std::size_t>(pred[i])];
    ++t.col_sums[static_cast<std::size_t>(truth[i])];
  }
  t.total = static_cast<std::int64_t>(pred.size());
  return t;
}

double nmi(const ContingencyTable& t, NmiNorm norm) {
  if (t.total < 1) throw ContractError("nmi: empty table");
  const double n = static_cast<double>(t.total);
  const double hp = entropy(t.row_sums, n), ht = entropy(t.col_sums, n);
  if (hp == 0.0 && ht == 0.0) return 1.0;
  if (hp == 0.0 || ht == 0.0) return 0.0;
  double mi = 0.0;
  for (std::size_t i = 0; i < t.rows; ++i)
    for (std::size_t j = 0; j < t.cols; ++j) {
      const std::int64_t c = t(i, j);
      if (c == 0) continue;
      const double nij = static_cast<double>(c);
      mi += nij / n *
            std::log(n * nij / (static_cast<double>(t.row_sums[i]) * static_cast<double>(t.col_sums[j])));
    }
  const double denom = norm == NmiNorm::arithmetic ? 0.5 * (hp + ht) : std::sqrt(hp * ht);
  // Rounding can push MI a hair past the entropies.
  return std::clamp(mi / denom, 0.0, 1.0);
}

double purity(const ContingencyTable& t) {
  if (t.total < 1) throw ContractError("purity: empty table");
  std::int64_t s = 0;
  for (std::size_t i = 0; i < t.rows; ++i) {
    std::int64_t best = 0;
    for (std::size_t j = 0; j < t.cols; ++j) best = std::max(best, t(i, j));
    s += best;
  }
  return static_cast<double>(s) / static_cast<double>(t.total);
}

double ari(const ContingencyTable& t) {
  if (t.total < 2) throw ContractError("ari: need at least two items");
  std::int64_t index = 0, sum_rows = 0, sum_cols = 0;
  for (std::int64_t c : t.counts) index += pairs(c);
  for (std::int64_t a : t.row_sums) sum_rows += pairs(a);
  for (std::int64_t b : t.col_sums) sum_cols += pairs(b);
  const double all = static_cast<double>(pairs(t.total));
  const double expected = static_cast<double>(sum_rows) * static_cast<double>(sum_cols) / all;
  const double max_index = 0.5 * static_cast<double>(sum_rows + sum_cols);
  if (max_index == expected) return 1.0;
  return (static_cast<double>(index) - expected) / (max_index - expected);
}

std::vector<std::size_t> hungarian(const std::vector<double>& benefit, std::size_t n) {
  if (benefit.size() != n * n) throw DimensionError("hungarian: matrix is not n x n");
  if (n == 0) return {};
  // Shortest augmenting path with potentials, minimizing -benefit. 1-based
  // internally; index 0 is the virtual source column.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = -benefit[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> perm(n);
  for (std::size_t j = 1; j <= n; ++j) perm[p[j] - 1] = j - 1;
  return perm;
}

std::vector<int> match_clusters(const ContingencyTable& t) {
  const std::size_t n = std::max(t.rows, t.cols);
  const double total = static_cast<double>(t.total);
  std::vector<double> benefit(n * n, 0.0);
  for (std::size_t i = 0; i < t.rows; ++i)
    for (std::size_t j = 0; j < t.cols; ++j) {
      const double c = static_cast<double>(t(i, j));
      if (c == 0) continue;
      const double a = static_cast<double>(t.row_sums[i]), b = static_cast<double>(t.col_sums[j]);
      // Secondary term sums to at most 0.5 over a matching, below one count.
      const double secondary = b / total * (c / a + 2.0 * c / (a + b));
      benefit[i * n + j] = c + 0.25 * secondary;
    }
  const std::vector<std::size_t> perm = hungarian(benefit, n);
  std::vector<int> match(t.rows, -1);
  for (std::size_t i = 0; i < t.rows; ++i)
    if (perm[i] < t.cols) match[i] = static_cast<int>(perm[i]);
  return match;
}

Prf weighted_prf(const ContingencyTable& t, const std::vector<int>& match) {
  if (match.size() != t.rows) throw ContractError("weighted_prf: matching size differs from cluster count");
  std::vector<std::int64_t> tp(t.cols, 0), predicted(t.cols, 0);
  for (std::size_t i = 0; i < t.rows; ++i) {
    if (match[i] < 0) continue;
    const auto j = static_cast<std::size_t>(match[i]);
    if (j >= t.cols) throw ContractError("weighted_prf: matched class out of range");
    tp[j] += t(i, j);
    predicted[j] += t.row_sums[i];
  }
  Prf r;
  const double n = static_cast<double>(t.total);
  for (std::size_t j = 0; j < t.cols; ++j) {
    const double support = static_cast<double>(t.col_sums[j]);
    if (support == 0 || tp[j] == 0) continue;
    const double w = support / n, hits = static_cast<double>(tp[j]);
    r.precision += w * hits / static_cast<double>(predicted[j]);
    r.recall += w * hits / support;
    r.f1 += w * 2.0 * hits / (static_cast<double>(predicted[j]) + support);
  }
  return r;
}

std::string MetricReport::to_tsv() const {
  std::string s;
  for (double v : {nmi, purity, ari, precision, recall, f1}) s += io::format_double(v) + "\t";
  return s + std::to_string(evaluated);
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["nmi"] = nmi;
  j["purity"] = purity;
  j["ari"] = ari;
  j["precision"] = precision;
  j["recall"] = recall;
  j["f1"] = f1;
  j["evaluated"] = evaluated;
  return j.dump(2);
}

MetricReport MetricReport::from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    MetricReport r;
    r.nmi = j.at("nmi").get<double>();
    r.purity = j.at("purity").get<double>();
    r.ari = j.at("ari").get<double>();
    r.precision = j.at("precision").get<double>();
    r.recall = j.at("recall").get<double>();
    r.f1 = j.at("f1").get<double>();
    r.evaluated = j.at("evaluated").get<std::size_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("metric report: ") + e.what());
  }
}

MetricReport evaluate(const std::vector<int>& pred, const std::vector<int>& truth, NmiNorm norm) {
  if (pred.size() != truth.size()) {
    throw InputError("evaluate: " + std::to_string(pred.size()) + " predictions vs " +
                     std::to_string(truth.size()) + " labels");
  }
  std::vector<int> p, c;
  p.reserve(pred.size());
  c.reserve(truth.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (truth[i] == graph::kUnlabelled) continue;
    p.push_back(pred[i]);
    c.push_back(truth[i]);
  }
  if (p.size() < 2) throw InputError("evaluate: fewer than two labelled nodes");
  const ContingencyTable t = contingency(p, c);
  MetricReport r;
  r.nmi = nmi(t, norm);
  r.purity = purity(t);
  r.ari = ari(t);
  const Prf w = weighted_prf(t, match_clusters(t));
  r.precision = w.precision;
  r.recall = w.recall;
  r.f1 = w.f1;
  r.evaluated = p.size();
  return r;
}

}  // namespace vclanc::metrics
