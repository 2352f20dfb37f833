#pragma once

#include <functional>
#include <span>

namespace vclanc::tensor {

// Largest coordinate-wise relative error between an analytic gradient and a
// central difference of f at x:
//   |analytic - numeric| / max(1e-8, |analytic| + |numeric|)
double finite_diff_check(const std::function<double(std::span<const double>)>& f,
                         std::span<const double> x, std::span<const double> analytic,
                         double h = 1e-5);

}  // namespace vclanc::tensor
