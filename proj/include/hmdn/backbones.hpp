#pragma once

#include <vector>

#include "hmdn/mlp.hpp"

namespace hmdn {

enum class BackboneKind { Moe, Dw, Dnn };
enum class GateInput { HierarchicalSd, RawXb };

/// Mixture-of-experts head: softmax gate over expert MLP outputs, combined
/// vector through a linear+sigmoid tower.
struct MoEParams {
  std::vector<MlpParams> experts;  // shared input dim, shared output dim
  Matrix gate_weight;              // gate-input dim x n_experts
  MlpParams tower;                 // expert output dim -> 1, sigmoid

  static MoEParams create(std::size_t x_dim, std::size_t gate_dim, std::size_t n_experts,
                          const std::vector<std::size_t>& expert_dims, Rng& rng);
};

struct MoECache {
  std::vector<MlpCache> experts;
  std::vector<Matrix> expert_out;
  Matrix gate;  // batch x n_experts, rows on the simplex
  Matrix combined;
  MlpCache tower;
  bool valid = false;
};

/// y_hat(b) = sigmoid(tower(sum_i gate(b,i) * expert_i(x)(b,:))) with
/// gate = softmax(gate_input * W_g).
Matrix moe_forward(const MoEParams& params, const Matrix& x, const Matrix& gate_input,
                   MoECache* cache = nullptr);

struct MoEGrads {
  std::vector<MlpGrads> experts;
  Matrix gate_weight;
  MlpGrads tower;
  Matrix grad_x;
  Matrix grad_gate_input;
};

MoEGrads moe_backward(const MoEParams& params, const MoECache& cache,
                      const Matrix& gate_input, const Matrix& upstream);

/// Dynamic-weight head: a gate network emits a per-coordinate scale in
/// (0, 2) that multiplies the bottom embedding before the tower.
struct DwParams {
  MlpParams gate_nu;  // gate-input dim -> hidden -> x dim, two_sigmoid output
  MlpParams tower;    // x dim -> ... -> 1, sigmoid

  static DwParams create(std::size_t x_dim, std::size_t gate_dim,
                         const std::vector<std::size_t>& tower_dims, Rng& rng);
};

struct DwCache {
  MlpCache gate_nu;
  Matrix delta;   // batch x x_dim, entries in (0, 2)
  Matrix scaled;  // delta (element-wise) x
  Matrix x;
  MlpCache tower;
  bool valid = false;
};

struct DwForwardResult {
  Matrix y_hat;
  Matrix delta;
};

DwForwardResult dw_forward(const DwParams& params, const Matrix& x,
                           const Matrix& gate_input, DwCache* cache = nullptr);

struct DwGrads {
  MlpGrads gate_nu;
  MlpGrads tower;
  Matrix grad_x;
  Matrix grad_gate_input;
};

DwGrads dw_backward(const DwParams& params, const DwCache& cache, const Matrix& upstream);

/// Plain MLP baseline with a sigmoid head.
MlpParams dnn_create(std::size_t x_dim, const std::vector<std::size_t>& hidden_dims,
                     Rng& rng);
Matrix dnn_forward(const MlpParams& params, const Matrix& x, MlpCache* cache = nullptr);

}  // namespace hmdn
