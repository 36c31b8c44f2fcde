#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hmdn/config.hpp"
#include "hmdn/errors.hpp"

using namespace hmdn;
using nlohmann::json;

namespace {

std::filesystem::path temp_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "hmdn_cli_tests";
  std::filesystem::create_directories(dir);
  return dir;
}

std::string write_config(const std::string& name, const json& j) {
  const auto path = temp_dir() / name;
  std::ofstream out(path);
  out << j.dump(2);
  return path.string();
}

json tiny_config() {
  return json{
      {"quantizer", {{"depth", 2}, {"codebook_size", 4}}},
      {"backbone", {{"kind", "moe"}, {"n_experts", 2}, {"hidden_layers", {8, 6}}}},
      {"training", {{"epochs", 1}, {"batch_size", 64}, {"seed", 5}}},
      {"data",
       {{"synthetic",
         {{"n_train", 256},
          {"n_test", 128},
          {"n_nondist_features", 2},
          {"nondist_cardinality", 8},
          {"embedding_dim", 3},
          {"distribution_types",
           {{{"name", "pop"}, {"cardinality", 3}}, {{"name", "src"}, {"cardinality", 2}}}},
          {"seed", 9}}}}}};
}

// Runs the CLI binary named by $HMDN_CLI and captures stdout+stderr.
int run_cli(const std::string& args, std::string* output = nullptr) {
  const char* cli = std::getenv("HMDN_CLI");
  REQUIRE_MESSAGE(cli != nullptr, "HMDN_CLI must point at the hmdn binary");
  const std::string command = std::string(cli) + " " + args + " 2>&1";
  FILE* pipe = popen(command.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string captured;
  char buffer[4096];
  while (std::size_t n = fread(buffer, 1, sizeof(buffer), pipe)) {
    captured.append(buffer, n);
  }
  const int status = pclose(pipe);
  if (output) *output = captured;
  return WEXITSTATUS(status);
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_SUITE_BEGIN("config-cli");

TEST_CASE("unknown keys are rejected at every level") {
  json bad_top = tiny_config();
  bad_top["surprise"] = 1;
  CHECK_THROWS_WITH_AS(parse_run_config(bad_top), doctest::Contains("surprise"),
                       ConfigError);

  json bad_nested = tiny_config();
  bad_nested["quantizer"]["codebooksize"] = 4;
  CHECK_THROWS_WITH_AS(parse_run_config(bad_nested), doctest::Contains("codebooksize"),
                       ConfigError);

  json bad_synth = tiny_config();
  bad_synth["data"]["synthetic"]["rows"] = 10;
  CHECK_THROWS_AS(parse_run_config(bad_synth), ConfigError);
}

TEST_CASE("defaults apply when keys are absent") {
  const RunConfig config = parse_run_config(json::object());
  CHECK(config.training.quantizer.depth == 6);
  CHECK(config.training.quantizer.codebook_size == 64);
  CHECK(config.training.quantizer.beta == 0.25);
  CHECK(config.training.alpha == 1.0);
  CHECK(config.training.lr == 1e-3);
  CHECK(config.training.batch_size == 256);
  CHECK(config.training.epochs == 3);
  CHECK(config.training.n_experts == 3);
  CHECK(config.training.hidden_layers == std::vector<std::size_t>{128, 64, 32});
  CHECK(config.training.backbone == BackboneKind::Moe);
  CHECK(config.training.gate_input == GateInput::HierarchicalSd);
  CHECK(config.data.synthetic);
}

TEST_CASE("quantizer z accepts auto or an integer") {
  json with_auto = tiny_config();
  with_auto["quantizer"]["z"] = "auto";
  CHECK(parse_run_config(with_auto).training.quantizer.code_dim == 0);
  json with_int = tiny_config();
  with_int["quantizer"]["z"] = 6;
  with_int["quantizer"]["mode"] = "explicit";
  CHECK(parse_run_config(with_int).training.quantizer.code_dim == 6);
  json with_junk = tiny_config();
  with_junk["quantizer"]["z"] = "wide";
  CHECK_THROWS_AS(parse_run_config(with_junk), ConfigError);
}

TEST_CASE("synthetic and csv data sections are mutually exclusive") {
  json both = tiny_config();
  both["data"]["train_csv"] = "x.csv";
  CHECK_THROWS_AS(parse_run_config(both), ConfigError);

  json csv_only = tiny_config();
  csv_only["data"].erase("synthetic");
  csv_only["data"]["train_csv"] = "x.csv";
  CHECK_THROWS_AS(parse_run_config(csv_only), ConfigError);  // schema missing
  csv_only["schema"] = {{"features",
                         {{{"name", "a"}, {"cardinality", 3},
                           {"distribution_feature", true}, {"distribution_type", "a"},
                           {"explicit_level", 1}}}}};
  const RunConfig config = parse_run_config(csv_only);
  CHECK_FALSE(config.data.synthetic);
  CHECK(config.schema.has_value());
}

TEST_CASE("train config and schema survive a json round trip") {
  RunConfig base = gradcheck_preset();
  base.training.quantizer.mode = QuantizerMode::Explicit;
  base.training.quantizer.code_dim = 5;
  base.training.backbone = BackboneKind::Dw;
  base.training.gate_input = GateInput::RawXb;
  base.training.alpha = 0.5;
  const TrainConfig restored = train_config_from_json(train_config_to_json(base.training));
  CHECK(restored.quantizer.mode == QuantizerMode::Explicit);
  CHECK(restored.quantizer.code_dim == 5);
  CHECK(restored.backbone == BackboneKind::Dw);
  CHECK(restored.gate_input == GateInput::RawXb);
  CHECK(restored.alpha == 0.5);
  CHECK(restored.hidden_layers == base.training.hidden_layers);

  const LoadedData data = load_data(gradcheck_preset());
  const FeatureSchema schema2 = schema_from_json(schema_to_json(data.schema));
  CHECK(schema2.features.size() == data.schema.features.size());
  for (std::size_t f = 0; f < schema2.features.size(); ++f) {
    CHECK(schema2.features[f].name == data.schema.features[f].name);
    CHECK(schema2.features[f].cardinality == data.schema.features[f].cardinality);
    CHECK(schema2.features[f].explicit_level == data.schema.features[f].explicit_level);
  }
}

TEST_CASE("gen-data writes identical bytes for identical seeds") {
  const std::string config = write_config("gen.json", tiny_config());
  const auto out1 = temp_dir() / "gen1";
  const auto out2 = temp_dir() / "gen2";
  std::string report;
  CHECK(run_cli("gen-data -c " + config + " -o " + out1.string(), &report) == 0);
  CHECK(run_cli("gen-data -c " + config + " -o " + out2.string()) == 0);
  CHECK(slurp(out1 / "train.csv") == slurp(out2 / "train.csv"));
  CHECK(slurp(out1 / "test.csv") == slurp(out2 / "test.csv"));
  CHECK(!slurp(out1 / "schema.json").empty());
  // 3 * 2 = 6 partition cells for the tiny layout.
  CHECK(report.find("partition") != std::string::npos);
}

TEST_CASE("gen-data with one example emits a header plus one row") {
  json config = tiny_config();
  config["data"]["synthetic"]["n_train"] = 1;
  config["data"]["synthetic"]["n_test"] = 0;
  const std::string path = write_config("gen_one.json", config);
  const auto out = temp_dir() / "gen_one";
  CHECK(run_cli("gen-data -c " + path + " -o " + out.string()) == 0);
  std::istringstream lines(slurp(out / "train.csv"));
  std::string line;
  std::size_t count = 0;
  while (std::getline(lines, line)) ++count;
  CHECK(count == 2);
}

TEST_CASE("train writes a checkpoint that eval and inspect can consume") {
  const std::string config = write_config("train.json", tiny_config());
  const auto ckpt = temp_dir() / "model.ckpt";
  std::string output;
  CHECK(run_cli("train -c " + config + " -o " + ckpt.string(), &output) == 0);
  CHECK(output.find("test\tauc") != std::string::npos);
  CHECK(std::filesystem::exists(ckpt));

  std::string eval_out;
  CHECK(run_cli("eval --checkpoint " + ckpt.string() + " -c " + config, &eval_out) == 0);
  CHECK(eval_out.find("auc\t") != std::string::npos);
  CHECK(eval_out.find("l_rq\t") != std::string::npos);

  std::string inspect_out;
  CHECK(run_cli("inspect-codebooks --checkpoint " + ckpt.string() + " -c " + config,
                &inspect_out) == 0);
  CHECK(inspect_out.find("entropy") != std::string::npos);
}

TEST_CASE("train with alpha zero still reports the quantization loss") {
  json config = tiny_config();
  config["training"]["alpha"] = 0.0;
  const std::string path = write_config("alpha0.json", config);
  const auto ckpt = temp_dir() / "alpha0.ckpt";
  std::string output;
  CHECK(run_cli("train -c " + path + " -o " + ckpt.string(), &output) == 0);
  CHECK(output.find("l_rq") != std::string::npos);
}

TEST_CASE("flag overrides take precedence over config keys") {
  const std::string config = write_config("override.json", tiny_config());
  const auto ckpt = temp_dir() / "dnn.ckpt";
  std::string output;
  CHECK(run_cli("train -c " + config + " --backbone dnn --gate-input raw_xb -o " +
                    ckpt.string(),
                &output) == 0);
  // A dnn run has no quantizer, so no l_rq records appear.
  CHECK(output.find("l_rq") == std::string::npos);
}

TEST_CASE("exploding training exits with the numeric failure code") {
  json config = tiny_config();
  config["training"]["lr"] = 1e120;
  const std::string path = write_config("explode.json", config);
  std::string output;
  const int code = run_cli("train -c " + path + " -o " + (temp_dir() / "x.ckpt").string(),
                           &output);
  CHECK(code == 2);
  CHECK(output.find("non-finite") != std::string::npos);
}

TEST_CASE("gradcheck command passes on its default preset") {
  std::string output;
  CHECK(run_cli("gradcheck", &output) == 0);
  CHECK(output.find("PASS") != std::string::npos);
  CHECK(run_cli("gradcheck --backbone dw --mode explicit", &output) == 0);
  CHECK(run_cli("gradcheck --backbone dnn --tolerance 1e-6", &output) == 0);
  CHECK(run_cli("gradcheck --no-freeze-codes", &output) == 0);
}

TEST_CASE("ablation restricted to one model emits a single data row") {
  const std::string config = write_config("ablation.json", tiny_config());
  std::string output;
  CHECK(run_cli("ablation -c " + config + " --models dnn --seeds 1", &output) == 0);
  std::istringstream lines(output);
  std::string line;
  std::size_t rows = 0;
  bool saw_header = false;
  while (std::getline(lines, line)) {
    if (line.rfind("model\t", 0) == 0) saw_header = true;
    else if (line.rfind("dnn\t", 0) == 0) ++rows;
  }
  CHECK(saw_header);
  CHECK(rows == 1);
}

TEST_CASE("sweep-depth validates its depth list") {
  const std::string config = write_config("sweep.json", tiny_config());
  std::string output;
  CHECK(run_cli("sweep-depth -c " + config + " --depths 1 --seeds 1", &output) == 0);
  std::istringstream lines(output);
  std::string line;
  std::size_t rows = 0;
  while (std::getline(lines, line)) {
    if (line.rfind("1\t", 0) == 0) ++rows;
  }
  CHECK(rows == 1);
  CHECK(run_cli("sweep-depth -c " + config + " --depths 2,2 --seeds 1", &output) == 1);
  CHECK(output.find("duplicate") != std::string::npos);
}

TEST_SUITE_END();
