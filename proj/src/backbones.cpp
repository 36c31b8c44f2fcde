#include "hmdn/backbones.hpp"

#include <string>

#include "hmdn/errors.hpp"

namespace hmdn {

MoEParams MoEParams::create(std::size_t x_dim, std::size_t gate_dim, std::size_t n_experts,
                            const std::vector<std::size_t>& expert_dims, Rng& rng) {
  if (n_experts < 1) throw ConfigError("moe: n_experts must be >= 1");
  if (expert_dims.empty()) throw ConfigError("moe: empty expert layer list");
  MoEParams p;
  for (std::size_t i = 0; i < n_experts; ++i) {
    p.experts.push_back(MlpParams::create(x_dim, expert_dims, Activation::relu,
                                          OutputActivation::none, rng));
  }
  p.gate_weight = Matrix(gate_dim, n_experts);
  init_glorot(p.gate_weight, rng);
  p.tower = MlpParams::create(expert_dims.back(), {1}, Activation::relu,
                              OutputActivation::sigmoid, rng);
  return p;
}

Matrix moe_forward(const MoEParams& params, const Matrix& x, const Matrix& gate_input,
                   MoECache* cache) {
  if (gate_input.cols() != params.gate_weight.rows()) {
    throw ShapeError("moe_forward: gate input dim " + std::to_string(gate_input.cols()) +
                     " != gate weight rows " + std::to_string(params.gate_weight.rows()));
  }
  if (gate_input.rows() != x.rows()) {
    throw ShapeError("moe_forward: batch mismatch between x and gate input");
  }
  const std::size_t n = x.rows();
  const std::size_t n_experts = params.experts.size();

  MoECache local;
  MoECache& c = cache ? *cache : local;
  c.experts.assign(n_experts, MlpCache{});
  c.expert_out.clear();
  for (std::size_t i = 0; i < n_experts; ++i) {
    c.expert_out.push_back(mlp_forward(params.experts[i], x, &c.experts[i]));
  }
  c.gate = softmax_rows(matmul(gate_input, params.gate_weight));

  const std::size_t out_dim = c.expert_out.front().cols();
  c.combined = Matrix(n, out_dim);
  for (std::size_t i = 0; i < n_experts; ++i) {
    const Matrix& h = c.expert_out[i];
    for (std::size_t b = 0; b < n; ++b) {
      const double w = c.gate(b, i);
      for (std::size_t j = 0; j < out_dim; ++j) c.combined(b, j) += w * h(b, j);
    }
  }
  Matrix y = mlp_forward(params.tower, c.combined, &c.tower);
  c.valid = true;
  return y;
}

MoEGrads moe_backward(const MoEParams& params, const MoECache& cache,
                      const Matrix& gate_input, const Matrix& upstream) {
  if (!cache.valid) throw UsageError("moe_backward: missing forward cache");
  const std::size_t n = upstream.rows();
  const std::size_t n_experts = params.experts.size();
  const std::size_t out_dim = cache.combined.cols();

  MoEGrads g;
  g.tower = mlp_backward(params.tower, cache.tower, upstream);
  const Matrix& grad_combined = g.tower.input_grad;

  // Gradient wrt gate weights: d combined / d gate(b,i) = expert_i(b,:).
  Matrix grad_gate(n, n_experts);
  for (std::size_t i = 0; i < n_experts; ++i) {
    const Matrix& h = cache.expert_out[i];
    for (std::size_t b = 0; b < n; ++b) {
      grad_gate(b, i) = dot(grad_combined.row(b), h.row(b));
    }
  }
  // Softmax backward per row.
  Matrix grad_logits(n, n_experts);
  for (std::size_t b = 0; b < n; ++b) {
    double inner = 0.0;
    for (std::size_t i = 0; i < n_experts; ++i) inner += grad_gate(b, i) * cache.gate(b, i);
    for (std::size_t i = 0; i < n_experts; ++i) {
      grad_logits(b, i) = cache.gate(b, i) * (grad_gate(b, i) - inner);
    }
  }
  g.gate_weight = matmul_atb(gate_input, grad_logits);
  g.grad_gate_input = matmul_abt(grad_logits, params.gate_weight);

  for (std::size_t i = 0; i < n_experts; ++i) {
    Matrix grad_h(n, out_dim);
    for (std::size_t b = 0; b < n; ++b) {
      const double w = cache.gate(b, i);
      for (std::size_t j = 0; j < out_dim; ++j) grad_h(b, j) = w * grad_combined(b, j);
    }
    g.experts.push_back(mlp_backward(params.experts[i], cache.experts[i], grad_h));
    if (i == 0) {
      g.grad_x = g.experts.back().input_grad;
    } else {
      add_scaled(g.grad_x, g.experts.back().input_grad, 1.0);
    }
  }
  return g;
}

DwParams DwParams::create(std::size_t x_dim, std::size_t gate_dim,
                          const std::vector<std::size_t>& tower_dims, Rng& rng) {
  DwParams p;
  const std::size_t hidden = (x_dim + 1) / 2;
  p.gate_nu = MlpParams::create(gate_dim, {hidden, x_dim}, Activation::relu,
                                OutputActivation::two_sigmoid, rng);
  std::vector<std::size_t> dims = tower_dims;
  dims.push_back(1);
  p.tower =
      MlpParams::create(x_dim, dims, Activation::relu, OutputActivation::sigmoid, rng);
  return p;
}

DwForwardResult dw_forward(const DwParams& params, const Matrix& x,
                           const Matrix& gate_input, DwCache* cache) {
  if (gate_input.rows() != x.rows()) {
    throw ShapeError("dw_forward: batch mismatch between x and gate input");
  }
  if (params.gate_nu.output_dim() != x.cols()) {
    throw ShapeError("dw_forward: gate output dim " +
                     std::to_string(params.gate_nu.output_dim()) + " != x dim " +
                     std::to_string(x.cols()));
  }
  DwCache local;
  DwCache& c = cache ? *cache : local;
  c.delta = mlp_forward(params.gate_nu, gate_input, &c.gate_nu);
  c.scaled = hadamard(c.delta, x);
  c.x = x;
  Matrix y = mlp_forward(params.tower, c.scaled, &c.tower);
  c.valid = true;
  return DwForwardResult{std::move(y), c.delta};
}

DwGrads dw_backward(const DwParams& params, const DwCache& cache, const Matrix& upstream) {
  if (!cache.valid) throw UsageError("dw_backward: missing forward cache");
  DwGrads g;
  g.tower = mlp_backward(params.tower, cache.tower, upstream);
  const Matrix& grad_scaled = g.tower.input_grad;
  const Matrix grad_delta = hadamard(grad_scaled, cache.x);
  g.grad_x = hadamard(grad_scaled, cache.delta);
  g.gate_nu = mlp_backward(params.gate_nu, cache.gate_nu, grad_delta);
  g.grad_gate_input = g.gate_nu.input_grad;
  return g;
}

MlpParams dnn_create(std::size_t x_dim, const std::vector<std::size_t>& hidden_dims,
                     Rng& rng) {
  std::vector<std::size_t> dims = hidden_dims;
  dims.push_back(1);
  return MlpParams::create(x_dim, dims, Activation::relu, OutputActivation::sigmoid, rng);
}

Matrix dnn_forward(const MlpParams& params, const Matrix& x, MlpCache* cache) {
  return mlp_forward(params, x, cache);
}

}  // namespace hmdn
