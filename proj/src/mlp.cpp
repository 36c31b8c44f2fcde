#include "hmdn/mlp.hpp"

#include <algorithm>
#include <string>

#include "hmdn/errors.hpp"

namespace hmdn {

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = softmax(logits.row(r));
    std::copy(row.begin(), row.end(), out.row(r).begin());
  }
  return out;
}

MlpParams MlpParams::create(std::size_t input_dim, const std::vector<std::size_t>& dims,
                            Activation hidden, OutputActivation output, Rng& rng) {
  MlpParams p;
  p.hidden_activation = hidden;
  p.output_activation = output;
  std::size_t in = input_dim;
  for (std::size_t d : dims) {
    MlpLayer layer{Matrix(in, d), Matrix(1, d)};
    init_glorot(layer.weight, rng);
    p.layers.push_back(std::move(layer));
    in = d;
  }
  p.validate();
  return p;
}

void MlpParams::validate() const {
  if (layers.empty()) throw ShapeError("mlp: no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.bias.rows() != 1 || layer.bias.cols() != layer.weight.cols()) {
      throw ShapeError("mlp: layer " + std::to_string(l) + " bias shape mismatch");
    }
    if (l + 1 < layers.size() && layer.weight.cols() != layers[l + 1].weight.rows()) {
      throw ShapeError("mlp: layer " + std::to_string(l) + " output dim " +
                       std::to_string(layer.weight.cols()) + " != layer " +
                       std::to_string(l + 1) + " input dim " +
                       std::to_string(layers[l + 1].weight.rows()));
    }
  }
}

namespace {

void apply_hidden(Matrix& m, Activation act) {
  if (act == Activation::relu) {
    for (double& v : m.data()) v = v > 0.0 ? v : 0.0;
  }
}

void apply_output(Matrix& m, OutputActivation act) {
  switch (act) {
    case OutputActivation::none:
      break;
    case OutputActivation::sigmoid:
      for (double& v : m.data()) v = sigmoid(v);
      break;
    case OutputActivation::two_sigmoid:
      for (double& v : m.data()) v = 2.0 * sigmoid(v);
      break;
  }
}

// Multiplies the upstream gradient by the activation derivative in place,
// using post-activation values (relu subgradient at 0 is 0).
void chain_hidden(Matrix& grad, const Matrix& post, Activation act) {
  if (act == Activation::relu) {
    for (std::size_t i = 0; i < grad.size(); ++i) {
      if (post.data()[i] <= 0.0) grad.data()[i] = 0.0;
    }
  }
}

void chain_output(Matrix& grad, const Matrix& post, OutputActivation act) {
  switch (act) {
    case OutputActivation::none:
      break;
    case OutputActivation::sigmoid:
      for (std::size_t i = 0; i < grad.size(); ++i) {
        const double a = post.data()[i];
        grad.data()[i] *= a * (1.0 - a);
      }
      break;
    case OutputActivation::two_sigmoid:
      for (std::size_t i = 0; i < grad.size(); ++i) {
        const double a = post.data()[i];
        grad.data()[i] *= a * (2.0 - a) / 2.0;
      }
      break;
  }
}

}  // namespace

Matrix mlp_forward(const MlpParams& params, const Matrix& input, MlpCache* cache) {
  params.validate();
  if (input.cols() != params.input_dim()) {
    throw ShapeError("mlp_forward: layer 0 expects input dim " +
                     std::to_string(params.input_dim()) + ", got " +
                     std::to_string(input.cols()));
  }
  if (cache) {
    cache->input = input;
    cache->pre.clear();
    cache->post.clear();
    cache->valid = true;
  }
  Matrix a = input;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    Matrix z = matmul(a, params.layers[l].weight);
    add_row_broadcast(z, params.layers[l].bias);
    if (cache) cache->pre.push_back(z);
    const bool last = (l + 1 == params.layers.size());
    if (last) {
      apply_output(z, params.output_activation);
    } else {
      apply_hidden(z, params.hidden_activation);
    }
    if (cache) cache->post.push_back(z);
    a = std::move(z);
  }
  return a;
}

MlpGrads mlp_backward(const MlpParams& params, const MlpCache& cache,
                      const Matrix& upstream_grad) {
  if (!cache.valid || cache.post.size() != params.layers.size()) {
    throw UsageError("mlp_backward: missing or stale forward cache");
  }
  const Matrix& out = cache.post.back();
  if (!upstream_grad.same_shape(out)) {
    throw ShapeError("mlp_backward: upstream grad shape mismatch");
  }

  MlpGrads grads;
  grads.layers.resize(params.layers.size());

  Matrix g = upstream_grad;
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const bool last = (l + 1 == params.layers.size());
    if (last) {
      chain_output(g, cache.post[l], params.output_activation);
    } else {
      chain_hidden(g, cache.post[l], params.hidden_activation);
    }
    const Matrix& layer_input = (l == 0) ? cache.input : cache.post[l - 1];
    grads.layers[l].weight = matmul_atb(layer_input, g);
    grads.layers[l].bias = column_sums(g);
    g = matmul_abt(g, params.layers[l].weight);
  }
  grads.input_grad = std::move(g);
  return grads;
}

}  // namespace hmdn
