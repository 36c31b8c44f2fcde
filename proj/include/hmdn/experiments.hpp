#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "hmdn/config.hpp"

namespace hmdn {

/// Fixed ablation roster: the plain baseline, both heads gated on raw x_b,
/// and both heads gated on the hierarchical representation (MoE also in
/// explicit mode).
const std::vector<std::string>& ablation_model_names();

/// Derive the variant's config from the base run config. Explicit variants
/// set the depth to the highest explicit level found in the schema.
TrainConfig variant_config(const TrainConfig& base, const std::string& model,
                           const FeatureSchema& schema);

struct VariantResult {
  std::string model;
  std::vector<double> aucs;  // one per seed
  double mean_auc = 0.0;
  double min_auc = 0.0;
  double max_auc = 0.0;
  double rel_impr_pct = 0.0;  // vs the dnn row mean
};

/// Train every requested model over `n_seeds` consecutive seeds and report
/// test AUC. Rows keep roster order.
std::vector<VariantResult> run_ablation(const RunConfig& config, const LoadedData& data,
                                        const std::vector<std::string>& models,
                                        std::size_t n_seeds, std::ostream* log);

std::string format_ablation_table(const std::vector<VariantResult>& rows);

struct DepthResult {
  std::int32_t depth = 0;
  std::vector<double> aucs;
  double mean_auc = 0.0;
  double min_auc = 0.0;
  double max_auc = 0.0;
  double seconds = 0.0;
  std::int64_t distance_evals = 0;
};

/// Train the configured quantized model at each depth over `n_seeds` seeds.
/// Duplicate depths are rejected.
std::vector<DepthResult> run_depth_sweep(const RunConfig& config, const LoadedData& data,
                                         const std::vector<std::int32_t>& depths,
                                         std::size_t n_seeds, std::ostream* log);

std::string format_depth_table(const std::vector<DepthResult>& rows);

/// Train one model with the given seed and return its test AUC.
double train_and_score(const TrainConfig& config, std::uint64_t seed,
                       const LoadedData& data, std::int64_t* distance_evals = nullptr);

}  // namespace hmdn
