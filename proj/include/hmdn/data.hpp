#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hmdn/embedding.hpp"
#include "hmdn/matrix.hpp"

namespace hmdn {

struct DistributionTypeSpec {
  std::string name;
  std::int32_t cardinality = 2;
};

/// How the per-feature effects enter the planted logit: one global response
/// table per feature, one table per member of the coarsest distribution type,
/// or one table per full partition cell (the same feature acts differently
/// across distributions, which is the hierarchical structure the models are
/// meant to exploit).
enum class FeatureContext { Global, Coarse, Cell };

/// Planted-model generator config. Labels follow a logistic model over a
/// base rate, one additive effect per distribution-type member, pairwise
/// interactions between members of different types (the coarse-to-fine
/// structure) and per-value effects for the remaining features.
struct SyntheticConfig {
  std::vector<DistributionTypeSpec> distribution_types = {
      {"population", 3}, {"scenario", 2}, {"ad_source", 2}};
  std::int32_t n_nondist_features = 5;
  std::int32_t nondist_cardinality = 50;
  std::int32_t embedding_dim = 8;
  std::int64_t n_train = 50000;
  std::int64_t n_test = 10000;
  double base_logit = -0.5;
  std::vector<double> type_effect_scales = {1.6, 1.3, 1.0};
  double interaction_scale = 1.0;
  double feature_effect_scale = 0.5;
  FeatureContext feature_context = FeatureContext::Coarse;
  double label_noise = 0.1;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticData {
  FeatureSchema schema;
  ExampleBatch train;
  ExampleBatch test;
  // Ground-truth planted parameters, kept for sign-recovery checks.
  std::vector<std::vector<double>> type_effects;           // [type][member]
  std::map<std::pair<std::size_t, std::size_t>, Matrix> interactions;  // (type a, type b)
  std::vector<Matrix> feature_effects;  // [feature], context member x value
};

SyntheticData generate_synthetic(const SyntheticConfig& config);

/// Per-feature value dictionaries: ids 1..cardinality in first-seen order of
/// the training file; id 0 is out-of-vocabulary.
struct Dictionaries {
  std::vector<std::vector<std::string>> values;  // [feature][id - 1]

  std::int32_t encode(std::size_t feature, const std::string& value) const;
  const std::string& decode(std::size_t feature, std::int32_t id) const;
};

/// Canonical dictionaries ("<feature>_<k>") matching generate_synthetic ids.
Dictionaries canonical_dictionaries(const FeatureSchema& schema);

struct CsvLoadResult {
  ExampleBatch batch;
  Dictionaries dictionaries;
};

/// Load a training CSV, fitting dictionaries in first-seen order.
CsvLoadResult load_csv_fit(const FeatureSchema& schema, const std::string& path);
/// Load with existing dictionaries; unseen values map to id 0.
ExampleBatch load_csv_apply(const FeatureSchema& schema, const Dictionaries& dicts,
                            const std::string& path);

void write_csv(const FeatureSchema& schema, const Dictionaries& dicts,
               const ExampleBatch& batch, const std::string& path);

/// Counts per combination of distribution-feature ids; keys are id tuples in
/// schema order of the distribution features.
std::map<std::vector<std::int32_t>, std::int64_t> partition_report(
    const FeatureSchema& schema, const ExampleBatch& batch);

std::string format_partition_report(
    const FeatureSchema& schema,
    const std::map<std::vector<std::int32_t>, std::int64_t>& report);

}  // namespace hmdn
