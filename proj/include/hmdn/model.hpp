#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hmdn/backbones.hpp"
#include "hmdn/embedding.hpp"
#include "hmdn/quantizer.hpp"

namespace hmdn {

/// Everything that defines a run: the head, its gate input, the quantizer,
/// the objective weights and the optimization knobs.
struct TrainConfig {
  BackboneKind backbone = BackboneKind::Moe;
  GateInput gate_input = GateInput::HierarchicalSd;
  bool quantizer_enabled = true;
  QuantizerConfig quantizer;
  std::size_t n_experts = 3;
  std::vector<std::size_t> hidden_layers = {128, 64, 32};
  double alpha = 1.0;
  double lr = 1e-3;
  std::size_t batch_size = 256;
  std::size_t epochs = 3;
  std::uint64_t seed = 17;
  std::int64_t eval_every = 0;  // extra test evals every N steps; 0 = epoch ends only

  void validate() const;
};

struct Model {
  FeatureSchema schema;
  TrainConfig config;
  EmbeddingTables tables;
  std::optional<Quantizer> quantizer;
  MoEParams moe;
  DwParams dw;
  MlpParams dnn;

  static Model create(const FeatureSchema& schema, const TrainConfig& config);

  std::size_t gate_dim() const;

  /// Visit every trainable block in a fixed order with a stable name;
  /// the same order backs the optimizer, the gradient checker and the
  /// checkpoint layout.
  void for_each_param(const std::function<void(const std::string&, Matrix&)>& fn);
  void for_each_param(
      const std::function<void(const std::string&, const Matrix&)>& fn) const;

  std::size_t parameter_count() const;
};

void for_each_mlp_param(const std::string& prefix, MlpParams& mlp,
                        const std::function<void(const std::string&, Matrix&)>& fn);

}  // namespace hmdn
