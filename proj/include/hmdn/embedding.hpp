#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hmdn/matrix.hpp"
#include "hmdn/rng.hpp"

namespace hmdn {

struct FeatureSpec {
  std::string name;
  std::int32_t cardinality = 0;
  std::int32_t embedding_dim = 8;
  bool distribution_feature = false;
  std::string distribution_type;  // label of the distribution family, e.g. "population"
  std::int32_t explicit_level = 0;  // 0 = unassigned; otherwise 1-based codebook level
};

struct FeatureSchema {
  std::vector<FeatureSpec> features;
  std::string label_column = "label";

  void validate() const;
  std::size_t x_dim() const;
  std::size_t xb_dim() const;
  std::vector<std::size_t> distribution_feature_indices() const;
  std::size_t feature_index(const std::string& name) const;
};

/// One table per feature, (cardinality + 1) x embedding_dim; row 0 is the
/// out-of-vocabulary row and trains like any other when id 0 occurs.
struct EmbeddingTables {
  std::vector<Matrix> tables;

  static EmbeddingTables create(const FeatureSchema& schema, Rng& rng,
                                double init_stddev = 0.01);
};

struct ExampleBatch {
  std::vector<std::vector<std::int32_t>> ids;  // per feature, one column of ids
  std::vector<double> labels;                  // binary 0/1

  std::size_t size() const { return labels.size(); }
  void validate(const FeatureSchema& schema) const;
  ExampleBatch gather(const std::vector<std::size_t>& indices) const;
};

/// Column geometry of one feature inside the concatenated outputs.
/// xb_begin is -1 for features that are absent from x_b.
struct SliceRange {
  std::size_t feature = 0;
  std::size_t x_begin = 0;
  std::ptrdiff_t xb_begin = -1;
  std::size_t dim = 0;
};

struct EmbedResult {
  Matrix x;   // batch x sum of all embedding dims
  Matrix xb;  // batch x sum of distribution-feature dims
  std::vector<SliceRange> slices;
};

EmbedResult embed_batch(const FeatureSchema& schema, const EmbeddingTables& tables,
                        const ExampleBatch& batch);

/// Sparse per-table row gradients: feature index -> (row id -> accumulated
/// gradient). Distribution features accumulate both the x and x_b paths.
using EmbeddingRowGrads = std::vector<std::map<std::int32_t, std::vector<double>>>;

EmbeddingRowGrads embedding_gradients(const FeatureSchema& schema,
                                      const ExampleBatch& batch, const Matrix& grad_x,
                                      const Matrix& grad_xb,
                                      const std::vector<SliceRange>& slices);

}  // namespace hmdn
