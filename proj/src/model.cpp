#include "hmdn/model.hpp"

#include "hmdn/errors.hpp"

namespace hmdn {

void TrainConfig::validate() const {
  if (alpha < 0.0) throw ConfigError("training: alpha must be >= 0");
  if (lr < 0.0) throw ConfigError("training: lr must be >= 0");
  if (batch_size < 1) throw ConfigError("training: batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("training: epochs must be >= 1");
  if (n_experts < 1) throw ConfigError("backbone: n_experts must be >= 1");
  if (hidden_layers.empty()) throw ConfigError("backbone: hidden_layers must be nonempty");
  if (gate_input == GateInput::HierarchicalSd && backbone != BackboneKind::Dnn &&
      !quantizer_enabled) {
    throw ConfigError("training: hierarchical gate input requires the quantizer");
  }
}

Model Model::create(const FeatureSchema& schema, const TrainConfig& config) {
  schema.validate();
  config.validate();
  Model m;
  m.schema = schema;
  m.config = config;

  Rng root(config.seed);
  Rng emb_rng = root.fork(1);
  Rng quant_rng = root.fork(2);
  Rng backbone_rng = root.fork(3);

  m.tables = EmbeddingTables::create(schema, emb_rng);
  // The plain baseline carries no quantizer; nothing downstream consumes it.
  if (config.quantizer_enabled && config.backbone != BackboneKind::Dnn) {
    m.quantizer.emplace(config.quantizer, schema, quant_rng);
  }

  const std::size_t x_dim = schema.x_dim();
  const std::size_t gate = m.gate_dim();
  switch (config.backbone) {
    case BackboneKind::Moe:
      m.moe = MoEParams::create(x_dim, gate, config.n_experts, config.hidden_layers,
                                backbone_rng);
      break;
    case BackboneKind::Dw:
      m.dw = DwParams::create(x_dim, gate, config.hidden_layers, backbone_rng);
      break;
    case BackboneKind::Dnn:
      m.dnn = dnn_create(x_dim, config.hidden_layers, backbone_rng);
      break;
  }
  return m;
}

std::size_t Model::gate_dim() const {
  if (config.gate_input == GateInput::HierarchicalSd && quantizer.has_value()) {
    return quantizer->z();
  }
  return schema.xb_dim();
}

void for_each_mlp_param(const std::string& prefix, MlpParams& mlp,
                        const std::function<void(const std::string&, Matrix&)>& fn) {
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    fn(prefix + "/layer_" + std::to_string(l) + "/weight", mlp.layers[l].weight);
    fn(prefix + "/layer_" + std::to_string(l) + "/bias", mlp.layers[l].bias);
  }
}

void Model::for_each_param(const std::function<void(const std::string&, Matrix&)>& fn) {
  for (std::size_t f = 0; f < schema.features.size(); ++f) {
    fn("emb/" + schema.features[f].name, tables.tables[f]);
  }
  if (quantizer.has_value()) {
    auto& q = *quantizer;
    for (std::size_t d = 0; d < q.codebooks().size(); ++d) {
      fn("quantizer/codebook_" + std::to_string(d + 1), q.codebooks()[d]);
    }
    for (std::size_t d = 0; d < q.projections().size(); ++d) {
      fn("quantizer/projection_" + std::to_string(d + 1), q.projections()[d]);
    }
  }
  switch (config.backbone) {
    case BackboneKind::Moe:
      for (std::size_t i = 0; i < moe.experts.size(); ++i) {
        for_each_mlp_param("moe/expert_" + std::to_string(i), moe.experts[i], fn);
      }
      fn("moe/gate_weight", moe.gate_weight);
      for_each_mlp_param("moe/tower", moe.tower, fn);
      break;
    case BackboneKind::Dw:
      for_each_mlp_param("dw/gate_nu", dw.gate_nu, fn);
      for_each_mlp_param("dw/tower", dw.tower, fn);
      break;
    case BackboneKind::Dnn:
      for_each_mlp_param("dnn", dnn, fn);
      break;
  }
}

void Model::for_each_param(
    const std::function<void(const std::string&, const Matrix&)>& fn) const {
  auto* self = const_cast<Model*>(this);
  self->for_each_param([&fn](const std::string& name, Matrix& m) {
    fn(name, static_cast<const Matrix&>(m));
  });
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for_each_param([&n](const std::string&, const Matrix& m) { n += m.size(); });
  return n;
}

}  // namespace hmdn
