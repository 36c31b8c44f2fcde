#include "hmdn/config.hpp"

#include <fstream>
#include <set>

#include "hmdn/errors.hpp"

namespace hmdn {

using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& section) {
  if (!obj.is_object()) throw ConfigError("config: '" + section + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("config: unknown key '" + key + "' in " + section);
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

QuantizerMode mode_from_string(const std::string& s) {
  if (s == "implicit") return QuantizerMode::Implicit;
  if (s == "explicit") return QuantizerMode::Explicit;
  throw ConfigError("config: unknown quantizer mode '" + s + "'");
}

std::string mode_to_string(QuantizerMode m) {
  return m == QuantizerMode::Implicit ? "implicit" : "explicit";
}

BackboneKind backbone_from_string(const std::string& s) {
  if (s == "moe") return BackboneKind::Moe;
  if (s == "dw") return BackboneKind::Dw;
  if (s == "dnn") return BackboneKind::Dnn;
  throw ConfigError("config: unknown backbone '" + s + "'");
}

std::string backbone_to_string(BackboneKind k) {
  switch (k) {
    case BackboneKind::Moe: return "moe";
    case BackboneKind::Dw: return "dw";
    case BackboneKind::Dnn: return "dnn";
  }
  return "moe";
}

GateInput gate_from_string(const std::string& s) {
  if (s == "hierarchical_sd") return GateInput::HierarchicalSd;
  if (s == "raw_xb") return GateInput::RawXb;
  throw ConfigError("config: unknown gate_input '" + s + "'");
}

std::string gate_to_string(GateInput g) {
  return g == GateInput::HierarchicalSd ? "hierarchical_sd" : "raw_xb";
}

}  // namespace

json schema_to_json(const FeatureSchema& schema) {
  json features = json::array();
  for (const auto& f : schema.features) {
    json jf{{"name", f.name},
            {"cardinality", f.cardinality},
            {"embedding_dim", f.embedding_dim},
            {"distribution_feature", f.distribution_feature}};
    if (!f.distribution_type.empty()) jf["distribution_type"] = f.distribution_type;
    if (f.explicit_level > 0) jf["explicit_level"] = f.explicit_level;
    features.push_back(std::move(jf));
  }
  return json{{"features", std::move(features)}, {"label_column", schema.label_column}};
}

FeatureSchema schema_from_json(const json& j) {
  check_keys(j, {"features", "label_column"}, "schema");
  FeatureSchema schema;
  if (!j.contains("features") || !j.at("features").is_array()) {
    throw ConfigError("config: schema.features must be an array");
  }
  for (const auto& jf : j.at("features")) {
    check_keys(jf,
               {"name", "cardinality", "embedding_dim", "distribution_feature",
                "distribution_type", "explicit_level"},
               "schema.features[]");
    FeatureSpec spec;
    if (!jf.contains("name") || !jf.contains("cardinality")) {
      throw ConfigError("config: each feature needs a name and a cardinality");
    }
    spec.name = jf.at("name").get<std::string>();
    spec.cardinality = jf.at("cardinality").get<std::int32_t>();
    read(jf, "embedding_dim", spec.embedding_dim);
    read(jf, "distribution_feature", spec.distribution_feature);
    read(jf, "distribution_type", spec.distribution_type);
    read(jf, "explicit_level", spec.explicit_level);
    schema.features.push_back(std::move(spec));
  }
  read(j, "label_column", schema.label_column);
  schema.validate();
  return schema;
}

json train_config_to_json(const TrainConfig& c) {
  json quantizer{{"enabled", c.quantizer_enabled},
                 {"depth", c.quantizer.depth},
                 {"codebook_size", c.quantizer.codebook_size},
                 {"beta", c.quantizer.beta},
                 {"mode", mode_to_string(c.quantizer.mode)},
                 {"include_zero_code", c.quantizer.include_zero_code},
                 {"restart_dead_codes_every", c.quantizer.restart_dead_codes_every}};
  if (c.quantizer.code_dim != 0) quantizer["z"] = c.quantizer.code_dim;
  json backbone{{"kind", backbone_to_string(c.backbone)},
                {"n_experts", c.n_experts},
                {"gate_input", gate_to_string(c.gate_input)},
                {"hidden_layers", c.hidden_layers}};
  json training{{"alpha", c.alpha},       {"lr", c.lr},
                {"batch_size", c.batch_size}, {"epochs", c.epochs},
                {"seed", c.seed},         {"eval_every", c.eval_every}};
  return json{{"quantizer", std::move(quantizer)},
              {"backbone", std::move(backbone)},
              {"training", std::move(training)}};
}

TrainConfig train_config_from_json(const json& j) {
  check_keys(j, {"quantizer", "backbone", "training"}, "config");
  TrainConfig c;
  if (j.contains("quantizer")) {
    const json& q = j.at("quantizer");
    check_keys(q,
               {"enabled", "depth", "codebook_size", "z", "beta", "mode",
                "include_zero_code", "restart_dead_codes_every"},
               "quantizer");
    read(q, "enabled", c.quantizer_enabled);
    read(q, "depth", c.quantizer.depth);
    read(q, "codebook_size", c.quantizer.codebook_size);
    if (q.contains("z")) {
      if (q.at("z").is_string()) {
        if (q.at("z").get<std::string>() != "auto") {
          throw ConfigError("config: quantizer.z must be an integer or \"auto\"");
        }
        c.quantizer.code_dim = 0;
      } else {
        c.quantizer.code_dim = q.at("z").get<std::int32_t>();
      }
    }
    read(q, "beta", c.quantizer.beta);
    if (q.contains("mode")) {
      c.quantizer.mode = mode_from_string(q.at("mode").get<std::string>());
    }
    read(q, "include_zero_code", c.quantizer.include_zero_code);
    read(q, "restart_dead_codes_every", c.quantizer.restart_dead_codes_every);
  }
  if (j.contains("backbone")) {
    const json& b = j.at("backbone");
    check_keys(b, {"kind", "n_experts", "gate_input", "hidden_layers"}, "backbone");
    if (b.contains("kind")) c.backbone = backbone_from_string(b.at("kind").get<std::string>());
    read(b, "n_experts", c.n_experts);
    if (b.contains("gate_input")) {
      c.gate_input = gate_from_string(b.at("gate_input").get<std::string>());
    }
    read(b, "hidden_layers", c.hidden_layers);
  }
  if (j.contains("training")) {
    const json& t = j.at("training");
    check_keys(t, {"alpha", "lr", "batch_size", "epochs", "seed", "eval_every"},
               "training");
    read(t, "alpha", c.alpha);
    read(t, "lr", c.lr);
    read(t, "batch_size", c.batch_size);
    read(t, "epochs", c.epochs);
    read(t, "seed", c.seed);
    read(t, "eval_every", c.eval_every);
  }
  return c;
}

namespace {

SyntheticConfig synthetic_from_json(const json& j) {
  check_keys(j,
             {"distribution_types", "n_nondist_features", "nondist_cardinality",
              "embedding_dim", "n_train", "n_test", "base_logit", "type_effect_scales",
              "interaction_scale", "feature_effect_scale", "feature_context",
              "label_noise", "seed"},
             "data.synthetic");
  SyntheticConfig c;
  if (j.contains("distribution_types")) {
    c.distribution_types.clear();
    c.type_effect_scales.clear();
    for (const auto& jt : j.at("distribution_types")) {
      check_keys(jt, {"name", "cardinality"}, "data.synthetic.distribution_types[]");
      DistributionTypeSpec t;
      t.name = jt.at("name").get<std::string>();
      read(jt, "cardinality", t.cardinality);
      c.distribution_types.push_back(std::move(t));
    }
  }
  read(j, "n_nondist_features", c.n_nondist_features);
  read(j, "nondist_cardinality", c.nondist_cardinality);
  read(j, "embedding_dim", c.embedding_dim);
  read(j, "n_train", c.n_train);
  read(j, "n_test", c.n_test);
  read(j, "base_logit", c.base_logit);
  read(j, "type_effect_scales", c.type_effect_scales);
  read(j, "interaction_scale", c.interaction_scale);
  read(j, "feature_effect_scale", c.feature_effect_scale);
  if (j.contains("feature_context")) {
    const std::string ctx = j.at("feature_context").get<std::string>();
    if (ctx == "global") c.feature_context = FeatureContext::Global;
    else if (ctx == "coarse") c.feature_context = FeatureContext::Coarse;
    else if (ctx == "cell") c.feature_context = FeatureContext::Cell;
    else throw ConfigError("config: unknown feature_context '" + ctx + "'");
  }
  read(j, "label_noise", c.label_noise);
  read(j, "seed", c.seed);
  c.validate();
  return c;
}

}  // namespace

void RunConfig::validate() const {
  training.validate();
  if (!data.synthetic) {
    if (data.train_csv.empty()) throw ConfigError("config: data.train_csv is required");
    if (!schema.has_value() && data.schema_file.empty()) {
      throw ConfigError("config: CSV data needs an inline schema or a schema_file");
    }
  }
}

RunConfig parse_run_config(const json& j) {
  check_keys(j, {"schema", "quantizer", "backbone", "training", "data", "output"},
             "config");
  RunConfig c;
  json model_part = json::object();
  for (const char* key : {"quantizer", "backbone", "training"}) {
    if (j.contains(key)) model_part[key] = j.at(key);
  }
  c.training = train_config_from_json(model_part);
  if (j.contains("schema")) c.schema = schema_from_json(j.at("schema"));
  if (j.contains("data")) {
    const json& d = j.at("data");
    check_keys(d, {"synthetic", "train_csv", "test_csv", "schema_file"}, "data");
    if (d.contains("synthetic")) {
      if (d.contains("train_csv") || d.contains("test_csv")) {
        throw ConfigError("config: data is either synthetic or CSV, not both");
      }
      c.data.synthetic = true;
      c.data.synthetic_config = synthetic_from_json(d.at("synthetic"));
      if (c.schema.has_value()) {
        throw ConfigError("config: synthetic data defines its own schema");
      }
    } else {
      c.data.synthetic = false;
      read(d, "train_csv", c.data.train_csv);
      read(d, "test_csv", c.data.test_csv);
      read(d, "schema_file", c.data.schema_file);
    }
  }
  if (j.contains("output")) {
    const json& o = j.at("output");
    check_keys(o, {"checkpoint", "metrics"}, "output");
    read(o, "checkpoint", c.checkpoint_path);
    read(o, "metrics", c.metrics_path);
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  return parse_run_config(j);
}

LoadedData load_data(const RunConfig& config) {
  LoadedData data;
  if (config.data.synthetic) {
    SyntheticData synth = generate_synthetic(config.data.synthetic_config);
    data.schema = std::move(synth.schema);
    data.train = std::move(synth.train);
    data.test = std::move(synth.test);
    data.dictionaries = canonical_dictionaries(data.schema);
    return data;
  }
  if (config.schema.has_value()) {
    data.schema = *config.schema;
  } else {
    std::ifstream in(config.data.schema_file);
    if (!in) throw ConfigError("cannot open schema file '" + config.data.schema_file + "'");
    json j;
    in >> j;
    data.schema = schema_from_json(j);
  }
  CsvLoadResult train = load_csv_fit(data.schema, config.data.train_csv);
  data.train = std::move(train.batch);
  data.dictionaries = std::move(train.dictionaries);
  if (!config.data.test_csv.empty()) {
    data.test = load_csv_apply(data.schema, data.dictionaries, config.data.test_csv);
  }
  return data;
}

RunConfig gradcheck_preset() {
  RunConfig c;
  c.data.synthetic = true;
  auto& s = c.data.synthetic_config;
  s.distribution_types = {{"group_a", 3}, {"group_b", 2}};
  s.type_effect_scales = {1.0, 1.0};
  s.n_nondist_features = 1;
  s.nondist_cardinality = 5;
  s.embedding_dim = 3;
  s.n_train = 4;
  s.n_test = 4;
  s.seed = 7;
  c.training.quantizer.depth = 2;
  c.training.quantizer.codebook_size = 4;
  c.training.n_experts = 2;
  c.training.hidden_layers = {8, 6};
  c.training.seed = 7;
  return c;
}

}  // namespace hmdn
