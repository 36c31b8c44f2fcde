#include "hmdn/data.hpp"

#include <fstream>
#include <sstream>

#include "hmdn/errors.hpp"
#include "hmdn/mlp.hpp"
#include "hmdn/rng.hpp"

namespace hmdn {

void SyntheticConfig::validate() const {
  if (distribution_types.size() < 2) {
    throw ConfigError("synthetic: at least 2 distribution types are required");
  }
  for (const auto& t : distribution_types) {
    if (t.name.empty()) throw ConfigError("synthetic: empty distribution type name");
    if (t.cardinality < 2) {
      throw ConfigError("synthetic: distribution type '" + t.name +
                        "' cardinality must be >= 2");
    }
  }
  if (n_nondist_features < 0) throw ConfigError("synthetic: negative feature count");
  if (n_nondist_features > 0 && nondist_cardinality < 1) {
    throw ConfigError("synthetic: nondist_cardinality must be >= 1");
  }
  if (embedding_dim < 1) throw ConfigError("synthetic: embedding_dim must be >= 1");
  if (n_train < 1 || n_test < 0) throw ConfigError("synthetic: bad split sizes");
  if (!type_effect_scales.empty() &&
      type_effect_scales.size() != distribution_types.size()) {
    throw ConfigError("synthetic: type_effect_scales length must match types");
  }
  for (double s : type_effect_scales) {
    if (s < 0.0) throw ConfigError("synthetic: negative effect scale");
  }
  if (interaction_scale < 0.0 || feature_effect_scale < 0.0 || label_noise < 0.0) {
    throw ConfigError("synthetic: negative scale");
  }
}

SyntheticData generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  Rng root(config.seed);
  Rng effect_rng = root.fork(1);
  Rng sample_rng = root.fork(2);

  SyntheticData out;
  const std::size_t n_types = config.distribution_types.size();
  for (std::size_t t = 0; t < n_types; ++t) {
    const auto& type = config.distribution_types[t];
    FeatureSpec spec;
    spec.name = type.name;
    spec.cardinality = type.cardinality;
    spec.embedding_dim = config.embedding_dim;
    spec.distribution_feature = true;
    spec.distribution_type = type.name;
    spec.explicit_level = static_cast<std::int32_t>(t) + 1;
    out.schema.features.push_back(spec);
  }
  for (std::int32_t f = 0; f < config.n_nondist_features; ++f) {
    FeatureSpec spec;
    spec.name = "feat_" + std::to_string(f);
    spec.cardinality = config.nondist_cardinality;
    spec.embedding_dim = config.embedding_dim;
    out.schema.features.push_back(spec);
  }
  out.schema.label_column = "label";
  out.schema.validate();

  // Planted parameters. Effects are drawn per member; the per-type scales
  // decrease from coarse to fine.
  for (std::size_t t = 0; t < n_types; ++t) {
    const double scale =
        config.type_effect_scales.empty() ? 1.0 : config.type_effect_scales[t];
    std::vector<double> effects(config.distribution_types[t].cardinality);
    for (double& e : effects) e = scale * effect_rng.normal();
    out.type_effects.push_back(std::move(effects));
  }
  for (std::size_t a = 0; a < n_types; ++a) {
    for (std::size_t b = a + 1; b < n_types; ++b) {
      Matrix table(config.distribution_types[a].cardinality,
                   config.distribution_types[b].cardinality);
      for (double& v : table.data()) v = config.interaction_scale * effect_rng.normal();
      out.interactions.emplace(std::make_pair(a, b), std::move(table));
    }
  }
  std::size_t n_contexts = 1;
  if (config.feature_context == FeatureContext::Coarse) {
    n_contexts = static_cast<std::size_t>(config.distribution_types.front().cardinality);
  } else if (config.feature_context == FeatureContext::Cell) {
    for (const auto& t : config.distribution_types) {
      n_contexts *= static_cast<std::size_t>(t.cardinality);
    }
  }
  for (std::int32_t f = 0; f < config.n_nondist_features; ++f) {
    Matrix effects(n_contexts, static_cast<std::size_t>(config.nondist_cardinality));
    for (double& e : effects.data()) e = config.feature_effect_scale * effect_rng.normal();
    out.feature_effects.push_back(std::move(effects));
  }

  const std::int64_t total = config.n_train + config.n_test;
  const std::size_t n_features = out.schema.features.size();
  ExampleBatch all;
  all.ids.assign(n_features, {});
  for (auto& col : all.ids) col.reserve(total);
  all.labels.reserve(total);

  std::vector<std::int32_t> member(n_types);
  for (std::int64_t i = 0; i < total; ++i) {
    double logit = config.base_logit;
    for (std::size_t t = 0; t < n_types; ++t) {
      member[t] = static_cast<std::int32_t>(
          sample_rng.next_below(config.distribution_types[t].cardinality));
      all.ids[t].push_back(member[t] + 1);  // ids are 1-based; 0 is OOV
      logit += out.type_effects[t][member[t]];
    }
    for (const auto& [pair, table] : out.interactions) {
      logit += table(member[pair.first], member[pair.second]);
    }
    std::size_t context = 0;
    if (config.feature_context == FeatureContext::Coarse) {
      context = static_cast<std::size_t>(member[0]);
    } else if (config.feature_context == FeatureContext::Cell) {
      for (std::size_t t = 0; t < n_types; ++t) {
        context = context * static_cast<std::size_t>(
                                config.distribution_types[t].cardinality) +
                  static_cast<std::size_t>(member[t]);
      }
    }
    for (std::int32_t f = 0; f < config.n_nondist_features; ++f) {
      const auto value =
          static_cast<std::int32_t>(sample_rng.next_below(config.nondist_cardinality));
      all.ids[n_types + f].push_back(value + 1);
      logit += out.feature_effects[f](context, static_cast<std::size_t>(value));
    }
    if (config.label_noise > 0.0) logit += config.label_noise * sample_rng.normal();
    const double y = sample_rng.uniform() < sigmoid(logit) ? 1.0 : 0.0;
    all.labels.push_back(y);
  }

  std::vector<std::size_t> train_idx(config.n_train);
  for (std::int64_t i = 0; i < config.n_train; ++i) train_idx[i] = i;
  std::vector<std::size_t> test_idx(config.n_test);
  for (std::int64_t i = 0; i < config.n_test; ++i) test_idx[i] = config.n_train + i;
  out.train = all.gather(train_idx);
  out.test = all.gather(test_idx);
  return out;
}

std::int32_t Dictionaries::encode(std::size_t feature, const std::string& value) const {
  const auto& vocab = values[feature];
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    if (vocab[i] == value) return static_cast<std::int32_t>(i) + 1;
  }
  return 0;
}

const std::string& Dictionaries::decode(std::size_t feature, std::int32_t id) const {
  static const std::string oov = "<oov>";
  if (id < 1 || static_cast<std::size_t>(id) > values[feature].size()) return oov;
  return values[feature][static_cast<std::size_t>(id) - 1];
}

Dictionaries canonical_dictionaries(const FeatureSchema& schema) {
  Dictionaries d;
  for (const auto& f : schema.features) {
    std::vector<std::string> vocab;
    vocab.reserve(f.cardinality);
    for (std::int32_t v = 1; v <= f.cardinality; ++v) {
      vocab.push_back(f.name + "_" + std::to_string(v));
    }
    d.values.push_back(std::move(vocab));
  }
  return d;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

struct CsvLayout {
  std::vector<std::size_t> feature_cols;  // per schema feature
  std::size_t label_col = 0;
};

CsvLayout parse_header(const FeatureSchema& schema, const std::string& header,
                       const std::string& path) {
  const auto cells = split_line(header);
  CsvLayout layout;
  for (const auto& f : schema.features) {
    bool found = false;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (cells[c] == f.name) {
        layout.feature_cols.push_back(c);
        found = true;
        break;
      }
    }
    if (!found) {
      throw DataError(path + ": missing column '" + f.name + "'");
    }
  }
  bool found_label = false;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (cells[c] == schema.label_column) {
      layout.label_col = c;
      found_label = true;
      break;
    }
  }
  if (!found_label) {
    throw DataError(path + ": missing column '" + schema.label_column + "'");
  }
  return layout;
}

ExampleBatch load_csv_impl(const FeatureSchema& schema, const std::string& path,
                           Dictionaries* fit, const Dictionaries* apply) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string header;
  if (!std::getline(in, header)) throw DataError(path + ": empty file");
  if (!header.empty() && header.back() == '\r') header.pop_back();
  const CsvLayout layout = parse_header(schema, header, path);

  ExampleBatch batch;
  batch.ids.assign(schema.features.size(), {});
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    const auto cells = split_line(line);
    for (std::size_t f = 0; f < schema.features.size(); ++f) {
      const std::size_t c = layout.feature_cols[f];
      if (c >= cells.size()) {
        throw DataError(path + ": row " + std::to_string(row) + " too short");
      }
      const std::string& value = cells[c];
      std::int32_t id = 0;
      if (fit) {
        id = fit->encode(f, value);
        if (id == 0) {
          if (static_cast<std::int32_t>(fit->values[f].size()) >=
              schema.features[f].cardinality) {
            throw DataError(path + ": feature '" + schema.features[f].name +
                            "' has more distinct values than its cardinality " +
                            std::to_string(schema.features[f].cardinality));
          }
          fit->values[f].push_back(value);
          id = static_cast<std::int32_t>(fit->values[f].size());
        }
      } else {
        id = apply->encode(f, value);
      }
      batch.ids[f].push_back(id);
    }
    const std::string& label = cells.size() > layout.label_col ? cells[layout.label_col] : "";
    if (label == "0") {
      batch.labels.push_back(0.0);
    } else if (label == "1") {
      batch.labels.push_back(1.0);
    } else {
      throw DataError(path + ": non-binary label '" + label + "' at row " +
                      std::to_string(row));
    }
  }
  if (batch.labels.empty()) throw DataError(path + ": no data rows");
  return batch;
}

}  // namespace

CsvLoadResult load_csv_fit(const FeatureSchema& schema, const std::string& path) {
  schema.validate();
  CsvLoadResult res;
  res.dictionaries.values.assign(schema.features.size(), {});
  res.batch = load_csv_impl(schema, path, &res.dictionaries, nullptr);
  return res;
}

ExampleBatch load_csv_apply(const FeatureSchema& schema, const Dictionaries& dicts,
                            const std::string& path) {
  schema.validate();
  return load_csv_impl(schema, path, nullptr, &dicts);
}

void write_csv(const FeatureSchema& schema, const Dictionaries& dicts,
               const ExampleBatch& batch, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  for (const auto& f : schema.features) out << f.name << ',';
  out << schema.label_column << '\n';
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t f = 0; f < schema.features.size(); ++f) {
      out << dicts.decode(f, batch.ids[f][i]) << ',';
    }
    out << (batch.labels[i] == 1.0 ? '1' : '0') << '\n';
  }
  if (!out) throw DataError("write failed for '" + path + "'");
}

std::map<std::vector<std::int32_t>, std::int64_t> partition_report(
    const FeatureSchema& schema, const ExampleBatch& batch) {
  batch.validate(schema);
  const auto dist = schema.distribution_feature_indices();
  std::map<std::vector<std::int32_t>, std::int64_t> report;
  std::vector<std::int32_t> key(dist.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t k = 0; k < dist.size(); ++k) key[k] = batch.ids[dist[k]][i];
    ++report[key];
  }
  return report;
}

std::string format_partition_report(
    const FeatureSchema& schema,
    const std::map<std::vector<std::int32_t>, std::int64_t>& report) {
  const auto dist = schema.distribution_feature_indices();
  std::ostringstream os;
  os << "partition";
  for (std::size_t k = 0; k < dist.size(); ++k) os << '\t' << schema.features[dist[k]].name;
  os << "\tcount\n";
  std::size_t cell = 0;
  for (const auto& [key, count] : report) {
    os << cell++;
    for (std::int32_t id : key) os << '\t' << id;
    os << '\t' << count << '\n';
  }
  return os.str();
}

}  // namespace hmdn
