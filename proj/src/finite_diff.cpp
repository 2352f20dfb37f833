#include "vclanc/finite_diff.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "vclanc/errors.hpp"

namespace vclanc::tensor {

double finite_diff_check(const std::function<double(std::span<const double>)>& f,
                         std::span<const double> x, std::span<const double> analytic, double h) {
  if (x.size() != analytic.size()) throw ContractError("finite_diff_check: gradient length mismatch");
  std::vector<double> probe(x.begin(), x.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double down = f(probe);
    probe[i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double err = std::abs(analytic[i] - numeric) /
                       std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
    if (!std::isfinite(err)) return err;
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace vclanc::tensor
