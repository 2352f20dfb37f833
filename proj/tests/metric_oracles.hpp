#pragma once

// Brute-force reference implementations of the clustering metrics. They work
// on raw label vectors, never on a contingency table.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "vclanc/metrics.hpp"

namespace vclanc::testing {

// All restricted-growth strings of length n with at most max_blocks blocks.
inline std::vector<std::vector<int>> set_partitions(std::size_t n, int max_blocks) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(n, 0);
  std::function<void(std::size_t, int)> rec = [&](std::size_t pos, int used) {
    if (pos == n) {
      out.push_back(cur);
      return;
    }
    for (int b = 0; b <= std::min(used, max_blocks - 1); ++b) {
      cur[pos] = b;
      rec(pos + 1, std::max(used, b + 1));
    }
  };
  rec(0, 0);
  return out;
}

inline double oracle_nmi(const std::vector<int>& x, const std::vector<int>& y, bool geometric = false) {
  const double n = static_cast<double>(x.size());
  std::map<int, double> px, py;
  std::map<std::pair<int, int>, double> pxy;
  for (std::size_t i = 0; i < x.size(); ++i) {
    px[x[i]] += 1.0 / n;
    py[y[i]] += 1.0 / n;
    pxy[{x[i], y[i]}] += 1.0 / n;
  }
  double hx = 0, hy = 0, mi = 0;
  for (auto& [k, p] : px) hx -= p * std::log(p);
  for (auto& [k, p] : py) hy -= p * std::log(p);
  for (auto& [k, p] : pxy) mi += p * std::log(p / (px[k.first] * py[k.second]));
  // Single-block partitions have exactly zero entropy; the sums above can
  // leave a rounding residue, so detect them structurally.
  const bool zx = px.size() == 1, zy = py.size() == 1;
  if (zx && zy) return 1.0;
  if (zx || zy) return 0.0;
  return mi / (geometric ? std::sqrt(hx * hy) : 0.5 * (hx + hy));
}

inline double oracle_purity(const std::vector<int>& x, const std::vector<int>& y) {
  std::map<int, std::map<int, int>> c;
  for (std::size_t i = 0; i < x.size(); ++i) ++c[x[i]][y[i]];
  int s = 0;
  for (auto& [k, row] : c) {
    int best = 0;
    for (auto& [l, v] : row) best = std::max(best, v);
    s += best;
  }
  return static_cast<double>(s) / static_cast<double>(x.size());
}

// Hubert-Arabie form over explicitly enumerated pairs.
inline double oracle_ari(const std::vector<int>& x, const std::vector<int>& y) {
  double a = 0, b = 0, c = 0, d = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const bool sx = x[i] == x[j], sy = y[i] == y[j];
      if (sx && sy) a += 1;
      else if (sx) b += 1;
      else if (sy) c += 1;
      else d += 1;
    }
  const double den = (a + b) * (b + d) + (a + c) * (c + d);
  if (den == 0) return 1.0;
  return 2.0 * (a * d - b * c) / den;
}

struct OraclePrf {
  std::int64_t matched = 0;  // nodes whose relabelled prediction is correct
  double precision = 0, recall = 0, f1 = 0;
};

// Scores the relabelled predictions with per-class TP/FP/FN loops.
inline OraclePrf oracle_prf_for(const std::vector<int>& x, const std::vector<int>& y, const std::vector<int>& match) {
  const int classes = *std::max_element(y.begin(), y.end()) + 1;
  const double n = static_cast<double>(x.size());
  OraclePrf r;
  for (int c = 0; c < classes; ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const int p = match[static_cast<std::size_t>(x[i])];
      if (p == c && y[i] == c) tp += 1;
      else if (p == c) fp += 1;
      else if (y[i] == c) fn += 1;
    }
    r.matched += static_cast<std::int64_t>(tp);
    const double support = tp + fn;
    if (support == 0) continue;
    const double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double rec = tp / support;
    const double f = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    r.precision += support / n * prec;
    r.recall += support / n * rec;
    r.f1 += support / n * f;
  }
  return r;
}

// Every injective cluster -> class map (unmatched clusters get -1), scored.
inline std::vector<OraclePrf> oracle_all_matchings(const std::vector<int>& x, const std::vector<int>& y) {
  const int clusters = *std::max_element(x.begin(), x.end()) + 1;
  const int classes = *std::max_element(y.begin(), y.end()) + 1;
  const int slots = std::max(clusters, classes);
  std::vector<int> perm(static_cast<std::size_t>(slots));
  for (int i = 0; i < slots; ++i) perm[static_cast<std::size_t>(i)] = i;
  std::vector<OraclePrf> out;
  do {
    std::vector<int> match(static_cast<std::size_t>(clusters));
    for (int i = 0; i < clusters; ++i) {
      const int c = perm[static_cast<std::size_t>(i)];
      match[static_cast<std::size_t>(i)] = c < classes ? c : -1;
    }
    out.push_back(oracle_prf_for(x, y, match));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

// True when `got` equals the scores of some count-maximal matching whose
// precision + F1 is maximal among those, within tol.
inline bool prf_matches_oracle(const metrics::Prf& got, const std::vector<int>& x, const std::vector<int>& y,
                               double tol) {
  const auto all = oracle_all_matchings(x, y);
  std::int64_t best = 0;
  for (const auto& m : all) best = std::max(best, m.matched);
  double best_sec = -1;
  for (const auto& m : all)
    if (m.matched == best) best_sec = std::max(best_sec, m.precision + m.f1);
  for (const auto& m : all) {
    if (m.matched != best || m.precision + m.f1 < best_sec - tol) continue;
    if (std::abs(m.precision - got.precision) <= tol && std::abs(m.recall - got.recall) <= tol &&
        std::abs(m.f1 - got.f1) <= tol)
      return true;
  }
  return false;
}

}  // namespace vclanc::testing
