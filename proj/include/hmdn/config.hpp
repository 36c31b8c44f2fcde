#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "hmdn/data.hpp"
#include "hmdn/model.hpp"

namespace hmdn {

struct DataConfig {
  bool synthetic = true;
  SyntheticConfig synthetic_config;
  std::string train_csv;
  std::string test_csv;
  std::string schema_file;  // sidecar written by gen-data
};

/// One JSON document describing a full run. Unknown keys are rejected;
/// absent keys fall back to the defaults baked into the structs.
struct RunConfig {
  TrainConfig training;
  std::optional<FeatureSchema> schema;  // required for CSV data, absent for synthetic
  DataConfig data;
  std::string checkpoint_path = "model.ckpt";
  std::string metrics_path;

  void validate() const;
};

nlohmann::json schema_to_json(const FeatureSchema& schema);
FeatureSchema schema_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

/// Schema + splits + dictionaries resolved from the data section.
struct LoadedData {
  FeatureSchema schema;
  ExampleBatch train;
  ExampleBatch test;
  Dictionaries dictionaries;
};

LoadedData load_data(const RunConfig& config);

/// Small model preset used by the gradient-check command and the gradient
/// acceptance suite: two distribution types plus one plain feature, a
/// two-level quantizer and narrow towers.
RunConfig gradcheck_preset();

}  // namespace hmdn
