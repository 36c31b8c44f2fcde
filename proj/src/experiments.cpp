#include "hmdn/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <ostream>
#include <set>
#include <sstream>

#include "hmdn/errors.hpp"
#include "hmdn/train.hpp"

namespace hmdn {

const std::vector<std::string>& ablation_model_names() {
  static const std::vector<std::string> names = {
      "dnn",       "moe-vanilla", "hmdn-moe-implicit",
      "hmdn-moe-explicit", "dw-vanilla",  "hmdn-dw"};
  return names;
}

namespace {

std::int32_t max_explicit_level(const FeatureSchema& schema) {
  std::int32_t level = 0;
  for (const auto& f : schema.features) level = std::max(level, f.explicit_level);
  if (level == 0) {
    throw ConfigError("explicit mode requires explicit_level assignments in the schema");
  }
  return level;
}

}  // namespace

TrainConfig variant_config(const TrainConfig& base, const std::string& model,
                           const FeatureSchema& schema) {
  TrainConfig c = base;
  if (model == "dnn") {
    c.backbone = BackboneKind::Dnn;
    c.quantizer_enabled = false;
    c.gate_input = GateInput::RawXb;
  } else if (model == "moe-vanilla") {
    c.backbone = BackboneKind::Moe;
    c.quantizer_enabled = false;
    c.gate_input = GateInput::RawXb;
  } else if (model == "hmdn-moe-implicit") {
    c.backbone = BackboneKind::Moe;
    c.quantizer_enabled = true;
    c.quantizer.mode = QuantizerMode::Implicit;
    c.gate_input = GateInput::HierarchicalSd;
  } else if (model == "hmdn-moe-explicit") {
    c.backbone = BackboneKind::Moe;
    c.quantizer_enabled = true;
    c.quantizer.mode = QuantizerMode::Explicit;
    c.quantizer.depth = max_explicit_level(schema);
    c.gate_input = GateInput::HierarchicalSd;
  } else if (model == "dw-vanilla") {
    c.backbone = BackboneKind::Dw;
    c.quantizer_enabled = false;
    c.gate_input = GateInput::RawXb;
  } else if (model == "hmdn-dw") {
    c.backbone = BackboneKind::Dw;
    c.quantizer_enabled = true;
    c.quantizer.mode = QuantizerMode::Implicit;
    c.gate_input = GateInput::HierarchicalSd;
  } else {
    throw ConfigError("unknown ablation model '" + model + "'");
  }
  return c;
}

double train_and_score(const TrainConfig& config, std::uint64_t seed,
                       const LoadedData& data, std::int64_t* distance_evals) {
  TrainConfig c = config;
  c.seed = seed;
  Model model = Model::create(data.schema, c);
  train_model(model, data.train, nullptr, nullptr);
  const Metrics m = evaluate(model, data.test);
  if (distance_evals != nullptr) {
    *distance_evals = model.quantizer.has_value() ? model.quantizer->distance_evals() : 0;
  }
  return m.auc;
}

namespace {

void fill_stats(std::vector<double>& aucs, double& mean, double& mn, double& mx) {
  mean = 0.0;
  mn = aucs.front();
  mx = aucs.front();
  for (double a : aucs) {
    mean += a;
    mn = std::min(mn, a);
    mx = std::max(mx, a);
  }
  mean /= static_cast<double>(aucs.size());
}

}  // namespace

std::vector<VariantResult> run_ablation(const RunConfig& config, const LoadedData& data,
                                        const std::vector<std::string>& models,
                                        std::size_t n_seeds, std::ostream* log) {
  const auto& roster = ablation_model_names();
  for (const auto& m : models) {
    if (std::find(roster.begin(), roster.end(), m) == roster.end()) {
      throw ConfigError("unknown ablation model '" + m + "'");
    }
  }

  std::vector<VariantResult> rows;
  double dnn_mean = 0.0;
  bool have_dnn = false;
  for (const auto& name : roster) {
    if (std::find(models.begin(), models.end(), name) == models.end()) continue;
    VariantResult row;
    row.model = name;
    const TrainConfig variant = variant_config(config.training, name, data.schema);
    for (std::size_t s = 0; s < n_seeds; ++s) {
      const std::uint64_t seed = config.training.seed + s;
      const double score = train_and_score(variant, seed, data);
      row.aucs.push_back(score);
      if (log) {
        *log << "ablation\t" << name << "\tseed=" << seed << "\tauc=" << score << "\n";
      }
    }
    fill_stats(row.aucs, row.mean_auc, row.min_auc, row.max_auc);
    if (name == "dnn") {
      dnn_mean = row.mean_auc;
      have_dnn = true;
    }
    rows.push_back(std::move(row));
  }
  for (auto& row : rows) {
    row.rel_impr_pct =
        have_dnn && dnn_mean > 0.0 ? (row.mean_auc - dnn_mean) / dnn_mean * 100.0 : 0.0;
  }
  return rows;
}

std::string format_ablation_table(const std::vector<VariantResult>& rows) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed;
  os << "model\tauc_mean\tauc_min\tauc_max\trelaimpr_pct\n";
  for (const auto& r : rows) {
    os << r.model << '\t' << r.mean_auc << '\t' << r.min_auc << '\t' << r.max_auc << '\t'
       << r.rel_impr_pct << '\n';
  }
  return os.str();
}

std::vector<DepthResult> run_depth_sweep(const RunConfig& config, const LoadedData& data,
                                         const std::vector<std::int32_t>& depths,
                                         std::size_t n_seeds, std::ostream* log) {
  if (depths.empty()) throw ConfigError("depth sweep: empty depth list");
  std::set<std::int32_t> seen;
  for (std::int32_t d : depths) {
    if (d < 1) throw ConfigError("depth sweep: depth must be >= 1");
    if (!seen.insert(d).second) {
      throw ConfigError("depth sweep: duplicate depth " + std::to_string(d));
    }
  }
  if (!config.training.quantizer_enabled) {
    throw ConfigError("depth sweep: quantizer must be enabled");
  }

  std::vector<DepthResult> rows;
  for (std::int32_t d : depths) {
    DepthResult row;
    row.depth = d;
    TrainConfig c = config.training;
    c.quantizer.depth = d;
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t s = 0; s < n_seeds; ++s) {
      std::int64_t evals = 0;
      const double score = train_and_score(c, config.training.seed + s, data, &evals);
      row.aucs.push_back(score);
      row.distance_evals += evals;
      if (log) {
        *log << "sweep\tD=" << d << "\tseed=" << config.training.seed + s
             << "\tauc=" << score << "\n";
      }
    }
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                      .count();
    fill_stats(row.aucs, row.mean_auc, row.min_auc, row.max_auc);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_depth_table(const std::vector<DepthResult>& rows) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed;
  os << "depth\tauc_mean\tauc_min\tauc_max\tseconds\tdistance_evals\n";
  for (const auto& r : rows) {
    os << r.depth << '\t' << r.mean_auc << '\t' << r.min_auc << '\t' << r.max_auc << '\t'
       << r.seconds << '\t' << r.distance_evals << '\n';
  }
  return os.str();
}

}  // namespace hmdn
