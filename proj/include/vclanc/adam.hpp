#pragma once

#include <cstdint>

#include "vclanc/tensor.hpp"

namespace vclanc::tensor {

struct AdamConfig {
  double learning_rate = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Moment accumulators for one parameter tensor.
struct AdamState {
  DenseMatrix first_moment;
  DenseMatrix second_moment;
  std::int64_t step = 0;
  AdamConfig config;

  AdamState() = default;
  AdamState(std::size_t rows, std::size_t cols, AdamConfig cfg = {})
      : first_moment(rows, cols), second_moment(rows, cols), config(cfg) {}
};

// One bias-corrected Adam update of `param` in place; increments state.step.
void adam_step(DenseMatrix& param, const DenseMatrix& grad, AdamState& state);

}  // namespace vclanc::tensor
