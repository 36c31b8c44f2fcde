#include "hmdn/adam.hpp"

#include <cmath>

#include "hmdn/errors.hpp"

namespace hmdn {

namespace {

void update_coord(double& p, double& m, double& v, double g, const AdamConfig& c,
                  double bc1, double bc2) {
  m = c.beta1 * m + (1.0 - c.beta1) * g;
  v = c.beta2 * v + (1.0 - c.beta2) * g * g;
  const double m_hat = m / bc1;
  const double v_hat = v / bc2;
  p -= c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
}

}  // namespace

void adam_step(AdamState& state, Matrix& params, const Matrix& grads,
               const std::string& block_name) {
  if (!params.same_shape(grads)) {
    throw ShapeError("adam_step: gradient shape mismatch for block '" + block_name + "'");
  }
  if (state.m.size() == 0) {
    state.m = Matrix(params.rows(), params.cols());
    state.v = Matrix(params.rows(), params.cols());
  }
  if (!grads.all_finite()) {
    throw NumericError("adam_step: non-finite gradient in block '" + block_name + "'");
  }
  state.t += 1;
  const auto& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    update_coord(params.data()[i], state.m.data()[i], state.v.data()[i],
                 grads.data()[i], c, bc1, bc2);
  }
}

void adam_step_rows(AdamState& state, Matrix& params,
                    const std::map<std::int32_t, std::vector<double>>& row_grads,
                    const std::string& block_name) {
  if (state.m.size() == 0) {
    state.m = Matrix(params.rows(), params.cols());
    state.v = Matrix(params.rows(), params.cols());
  }
  for (const auto& [r, g] : row_grads) {
    if (r < 0 || static_cast<std::size_t>(r) >= params.rows() || g.size() != params.cols()) {
      throw ShapeError("adam_step_rows: bad row gradient for block '" + block_name + "'");
    }
    for (double v : g) {
      if (!std::isfinite(v)) {
        throw NumericError("adam_step_rows: non-finite gradient in block '" + block_name +
                           "' row " + std::to_string(r));
      }
    }
  }
  state.t += 1;
  const auto& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
  for (const auto& [r, g] : row_grads) {
    for (std::size_t j = 0; j < params.cols(); ++j) {
      update_coord(params(r, j), state.m(r, j), state.v(r, j), g[j], c, bc1, bc2);
    }
  }
}

AdamState& AdamOptimizer::state_for(const std::string& name, const Matrix& params) {
  auto it = states_.find(name);
  if (it == states_.end()) {
    AdamState s;
    s.config = config_;
    s.m = Matrix(params.rows(), params.cols());
    s.v = Matrix(params.rows(), params.cols());
    it = states_.emplace(name, std::move(s)).first;
  }
  return it->second;
}

void AdamOptimizer::step(const std::string& name, Matrix& params, const Matrix& grads) {
  adam_step(state_for(name, params), params, grads, name);
}

void AdamOptimizer::step_rows(const std::string& name, Matrix& params,
                              const std::map<std::int32_t, std::vector<double>>& row_grads) {
  adam_step_rows(state_for(name, params), params, row_grads, name);
}

}  // namespace hmdn
