#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "hmdn/matrix.hpp"
#include "hmdn/rng.hpp"

namespace hmdn {

enum class Activation { none, relu };
enum class OutputActivation { none, sigmoid, two_sigmoid };

/// Numerically stable logistic; exact for |x| up to ~700 without overflow.
inline double sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Max-subtracted softmax; output sums to 1 and lives in (0, 1).
std::vector<double> softmax(std::span<const double> logits);
/// Row-wise softmax of a batch of logit rows.
Matrix softmax_rows(const Matrix& logits);

struct MlpLayer {
  Matrix weight;  // in x out
  Matrix bias;    // 1 x out
};

struct MlpParams {
  std::vector<MlpLayer> layers;
  Activation hidden_activation = Activation::relu;
  OutputActivation output_activation = OutputActivation::none;

  /// Layer dims are (input_dim, dims[0]), (dims[0], dims[1]), ...
  /// Weights Glorot-initialized, biases zero.
  static MlpParams create(std::size_t input_dim, const std::vector<std::size_t>& dims,
                          Activation hidden, OutputActivation output, Rng& rng);

  std::size_t input_dim() const { return layers.front().weight.rows(); }
  std::size_t output_dim() const { return layers.back().weight.cols(); }
  void validate() const;
};

/// Forward cache: layer inputs plus pre/post-activation values, enough for an
/// exact backward pass.
struct MlpCache {
  Matrix input;
  std::vector<Matrix> pre;   // per layer, before activation
  std::vector<Matrix> post;  // per layer, after activation
  bool valid = false;
};

Matrix mlp_forward(const MlpParams& params, const Matrix& input, MlpCache* cache = nullptr);

struct MlpGrads {
  std::vector<MlpLayer> layers;  // same shapes as params
  Matrix input_grad;
};

MlpGrads mlp_backward(const MlpParams& params, const MlpCache& cache,
                      const Matrix& upstream_grad);

}  // namespace hmdn
