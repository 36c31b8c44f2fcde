#include "hmdn/embedding.hpp"

#include <set>

#include "hmdn/errors.hpp"

namespace hmdn {

void FeatureSchema::validate() const {
  if (features.empty()) throw ConfigError("schema: no features");
  std::set<std::string> names;
  bool any_distribution = false;
  for (const auto& f : features) {
    if (f.name.empty()) throw ConfigError("schema: empty feature name");
    if (!names.insert(f.name).second) {
      throw ConfigError("schema: duplicate feature name '" + f.name + "'");
    }
    if (f.cardinality < 1) {
      throw ConfigError("schema: feature '" + f.name + "' cardinality must be >= 1");
    }
    if (f.embedding_dim < 1) {
      throw ConfigError("schema: feature '" + f.name + "' embedding_dim must be >= 1");
    }
    if (f.explicit_level < 0) {
      throw ConfigError("schema: feature '" + f.name + "' explicit_level must be >= 1");
    }
    if (f.explicit_level > 0 && !f.distribution_feature) {
      throw ConfigError("schema: feature '" + f.name +
                        "' has an explicit_level but is not a distribution feature");
    }
    any_distribution = any_distribution || f.distribution_feature;
  }
  if (!any_distribution) {
    throw ConfigError("schema: at least one distribution feature is required");
  }
  if (label_column.empty()) throw ConfigError("schema: empty label column name");
}

std::size_t FeatureSchema::x_dim() const {
  std::size_t d = 0;
  for (const auto& f : features) d += static_cast<std::size_t>(f.embedding_dim);
  return d;
}

std::size_t FeatureSchema::xb_dim() const {
  std::size_t d = 0;
  for (const auto& f : features) {
    if (f.distribution_feature) d += static_cast<std::size_t>(f.embedding_dim);
  }
  return d;
}

std::vector<std::size_t> FeatureSchema::distribution_feature_indices() const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].distribution_feature) idx.push_back(i);
  }
  return idx;
}

std::size_t FeatureSchema::feature_index(const std::string& name) const {
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].name == name) return i;
  }
  throw ConfigError("schema: unknown feature '" + name + "'");
}

EmbeddingTables EmbeddingTables::create(const FeatureSchema& schema, Rng& rng,
                                        double init_stddev) {
  schema.validate();
  EmbeddingTables t;
  for (const auto& f : schema.features) {
    Matrix table(static_cast<std::size_t>(f.cardinality) + 1,
                 static_cast<std::size_t>(f.embedding_dim));
    init_normal(table, rng, init_stddev);
    t.tables.push_back(std::move(table));
  }
  return t;
}

void ExampleBatch::validate(const FeatureSchema& schema) const {
  if (ids.size() != schema.features.size()) {
    throw DataError("batch: expected " + std::to_string(schema.features.size()) +
                    " id columns, got " + std::to_string(ids.size()));
  }
  for (std::size_t f = 0; f < ids.size(); ++f) {
    if (ids[f].size() != labels.size()) {
      throw DataError("batch: column '" + schema.features[f].name +
                      "' length does not match labels");
    }
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0.0 && labels[i] != 1.0) {
      throw DataError("batch: non-binary label at row " + std::to_string(i));
    }
  }
}

ExampleBatch ExampleBatch::gather(const std::vector<std::size_t>& indices) const {
  ExampleBatch out;
  out.ids.resize(ids.size());
  out.labels.reserve(indices.size());
  for (std::size_t f = 0; f < ids.size(); ++f) out.ids[f].reserve(indices.size());
  for (std::size_t i : indices) {
    for (std::size_t f = 0; f < ids.size(); ++f) out.ids[f].push_back(ids[f][i]);
    out.labels.push_back(labels[i]);
  }
  return out;
}

EmbedResult embed_batch(const FeatureSchema& schema, const EmbeddingTables& tables,
                        const ExampleBatch& batch) {
  batch.validate(schema);
  const std::size_t n = batch.size();
  EmbedResult out;
  out.x = Matrix(n, schema.x_dim());
  out.xb = Matrix(n, schema.xb_dim());

  std::size_t x_col = 0;
  std::size_t xb_col = 0;
  for (std::size_t f = 0; f < schema.features.size(); ++f) {
    const auto& spec = schema.features[f];
    const Matrix& table = tables.tables[f];
    const std::size_t dim = static_cast<std::size_t>(spec.embedding_dim);
    SliceRange slice{f, x_col, -1, dim};
    if (spec.distribution_feature) {
      slice.xb_begin = static_cast<std::ptrdiff_t>(xb_col);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const std::int32_t id = batch.ids[f][i];
      if (id < 0 || id > spec.cardinality) {
        throw DataError("feature '" + spec.name + "': id " + std::to_string(id) +
                        " out of range [0, " + std::to_string(spec.cardinality) +
                        "] at row " + std::to_string(i));
      }
      const auto row = table.row(static_cast<std::size_t>(id));
      for (std::size_t d = 0; d < dim; ++d) out.x(i, x_col + d) = row[d];
      if (spec.distribution_feature) {
        for (std::size_t d = 0; d < dim; ++d) out.xb(i, xb_col + d) = row[d];
      }
    }
    x_col += dim;
    if (spec.distribution_feature) xb_col += dim;
    out.slices.push_back(slice);
  }
  return out;
}

EmbeddingRowGrads embedding_gradients(const FeatureSchema& schema,
                                      const ExampleBatch& batch, const Matrix& grad_x,
                                      const Matrix& grad_xb,
                                      const std::vector<SliceRange>& slices) {
  const std::size_t n = batch.size();
  if (grad_x.rows() != n || grad_x.cols() != schema.x_dim()) {
    throw ShapeError("embedding_gradients: grad_x shape mismatch");
  }
  if (grad_xb.rows() != n || grad_xb.cols() != schema.xb_dim()) {
    throw ShapeError("embedding_gradients: grad_xb shape mismatch");
  }
  EmbeddingRowGrads grads(schema.features.size());
  for (const auto& slice : slices) {
    auto& table_grads = grads[slice.feature];
    for (std::size_t i = 0; i < n; ++i) {
      const std::int32_t id = batch.ids[slice.feature][i];
      auto [it, inserted] = table_grads.try_emplace(id, std::vector<double>(slice.dim, 0.0));
      auto& acc = it->second;
      for (std::size_t d = 0; d < slice.dim; ++d) acc[d] += grad_x(i, slice.x_begin + d);
      if (slice.xb_begin >= 0) {
        const std::size_t xb0 = static_cast<std::size_t>(slice.xb_begin);
        for (std::size_t d = 0; d < slice.dim; ++d) acc[d] += grad_xb(i, xb0 + d);
      }
    }
  }
  return grads;
}

}  // namespace hmdn
