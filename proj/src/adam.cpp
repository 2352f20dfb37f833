#include "vclanc/adam.hpp"

#include <cmath>

#include "vclanc/errors.hpp"

namespace vclanc::tensor {

void adam_step(DenseMatrix& param, const DenseMatrix& grad, AdamState& state) {
  if (param.rows() != grad.rows() || param.cols() != grad.cols() ||
      param.rows() != state.first_moment.rows() || param.cols() != state.first_moment.cols() ||
      param.rows() != state.second_moment.rows() || param.cols() != state.second_moment.cols()) {
    throw ContractError("adam_step: parameter, gradient and moment shapes must agree");
  }
  const AdamConfig& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);
  auto p = param.values();
  auto g = grad.values();
  auto m = state.first_moment.values();
  auto v = state.second_moment.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
    const double m_hat = m[i] / bias1;
    const double v_hat = v[i] / bias2;
    p[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

}  // namespace vclanc::tensor
