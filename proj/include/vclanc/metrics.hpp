#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace vclanc::metrics {

// Rows are predicted clusters, columns true classes.
struct ContingencyTable {
  std::size_t rows = 0, cols = 0;
  std::vector<std::int64_t> counts;  // row-major
  std::vector<std::int64_t> row_sums, col_sums;
  std::int64_t total = 0;

  std::int64_t operator()(std::size_t i, std::size_t j) const { return counts[i * cols + j]; }
};

// Labels are dense non-negative ids; the table has max id + 1 rows/columns,
// so empty clusters show up as zero rows. Throws InputError on length
// mismatch or negative ids.
ContingencyTable contingency(const std::vector<int>& pred, const std::vector<int>& truth);

enum class NmiNorm { arithmetic, geometric };

// I(pred; truth) / mean of the entropies (natural log). Both entropies zero
// gives 1, exactly one zero gives 0.
double nmi(const ContingencyTable& t, NmiNorm norm = NmiNorm::arithmetic);
double purity(const ContingencyTable& t);
// Pair-counting adjusted Rand index. Requires total >= 2. Returns 1 when the
// chance-corrected denominator vanishes (both partitions trivial).
double ari(const ContingencyTable& t);

// Maximum-benefit perfect matching on a square matrix (row-major, n x n).
// Returns perm with perm[row] = matched column.
std::vector<std::size_t> hungarian(const std::vector<double>& benefit, std::size_t n);

struct Prf {
  double precision = 0, recall = 0, f1 = 0;
};

// Cluster -> class matching that maximizes the matched node count. Among
// count-optimal matchings the one with the larger weighted precision + F1
// wins. match[cluster] = class, or -1 when the cluster is left unmatched.
std::vector<int> match_clusters(const ContingencyTable& t);

// Class-support-weighted precision, recall and F1 after relabelling each
// cluster to its matched class. Classes without a matched cluster score 0.
Prf weighted_prf(const ContingencyTable& t, const std::vector<int>& match);

struct MetricReport {
  double nmi = 0, purity = 0, ari = 0, precision = 0, recall = 0, f1 = 0;
  std::size_t evaluated = 0;  // labelled nodes used

  static constexpr std::string_view kTsvHeader = "nmi\tpurity\tari\tprecision\trecall\tf1\tevaluated";
  std::string to_tsv() const;  // one line, no newline
  std::string to_json() const;
  static MetricReport from_json(std::string_view text);
  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

// Full report; nodes whose truth is graph::kUnlabelled (-1) are skipped.
MetricReport evaluate(const std::vector<int>& pred, const std::vector<int>& truth,
                      NmiNorm norm = NmiNorm::arithmetic);

}  // namespace vclanc::metrics
