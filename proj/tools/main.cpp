#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hmdn/checkpoint.hpp"
#include "hmdn/config.hpp"
#include "hmdn/errors.hpp"
#include "hmdn/experiments.hpp"
#include "hmdn/train.hpp"

namespace {

using namespace hmdn;

struct CommonFlags {
  std::string config_path;
  std::string backbone;
  std::string gate_input;
  std::string mode;
  std::optional<double> alpha;
  std::optional<double> lr;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<std::uint64_t> seed;
  std::optional<std::int32_t> depth;
  std::optional<std::int32_t> codebook_size;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config,-c", flags.config_path, "run config JSON (or $HMDN_CONFIG)");
  cmd->add_option("--backbone", flags.backbone, "moe|dw|dnn");
  cmd->add_option("--gate-input", flags.gate_input, "hierarchical_sd|raw_xb");
  cmd->add_option("--mode", flags.mode, "quantizer mode: implicit|explicit");
  cmd->add_option("--alpha", flags.alpha, "quantization loss weight");
  cmd->add_option("--lr", flags.lr, "learning rate");
  cmd->add_option("--epochs", flags.epochs, "training epochs");
  cmd->add_option("--batch-size", flags.batch_size, "minibatch size");
  cmd->add_option("--seed", flags.seed, "run seed");
  cmd->add_option("--depth", flags.depth, "quantizer depth");
  cmd->add_option("--codebook-size", flags.codebook_size, "codebook rows per level");
}

RunConfig resolve_config(const CommonFlags& flags, bool gradcheck_defaults = false) {
  RunConfig config;
  std::string path = flags.config_path;
  if (path.empty()) {
    if (const char* env = std::getenv("HMDN_CONFIG")) path = env;
  }
  if (!path.empty()) {
    config = load_run_config(path);
  } else if (gradcheck_defaults) {
    config = gradcheck_preset();
  }

  // Flags override config file keys.
  auto& t = config.training;
  if (!flags.backbone.empty()) {
    if (flags.backbone == "moe") t.backbone = BackboneKind::Moe;
    else if (flags.backbone == "dw") t.backbone = BackboneKind::Dw;
    else if (flags.backbone == "dnn") t.backbone = BackboneKind::Dnn;
    else throw ConfigError("unknown backbone '" + flags.backbone + "'");
  }
  if (!flags.gate_input.empty()) {
    if (flags.gate_input == "hierarchical_sd") t.gate_input = GateInput::HierarchicalSd;
    else if (flags.gate_input == "raw_xb") t.gate_input = GateInput::RawXb;
    else throw ConfigError("unknown gate input '" + flags.gate_input + "'");
  }
  if (!flags.mode.empty()) {
    if (flags.mode == "implicit") t.quantizer.mode = QuantizerMode::Implicit;
    else if (flags.mode == "explicit") t.quantizer.mode = QuantizerMode::Explicit;
    else throw ConfigError("unknown quantizer mode '" + flags.mode + "'");
  }
  if (flags.alpha) t.alpha = *flags.alpha;
  if (flags.lr) t.lr = *flags.lr;
  if (flags.epochs) t.epochs = *flags.epochs;
  if (flags.batch_size) t.batch_size = *flags.batch_size;
  if (flags.seed) t.seed = *flags.seed;
  if (flags.depth) t.quantizer.depth = *flags.depth;
  if (flags.codebook_size) t.quantizer.codebook_size = *flags.codebook_size;
  config.validate();
  return config;
}

int cmd_gen_data(const CommonFlags& flags, const std::string& out_dir) {
  RunConfig config = resolve_config(flags);
  if (!config.data.synthetic) {
    throw ConfigError("gen-data needs a synthetic data section");
  }
  const SyntheticData data = generate_synthetic(config.data.synthetic_config);
  const Dictionaries dicts = canonical_dictionaries(data.schema);

  std::filesystem::create_directories(out_dir);
  const auto dir = std::filesystem::path(out_dir);
  write_csv(data.schema, dicts, data.train, (dir / "train.csv").string());
  write_csv(data.schema, dicts, data.test, (dir / "test.csv").string());
  std::ofstream schema_out(dir / "schema.json");
  schema_out << schema_to_json(data.schema).dump(2) << "\n";
  if (!schema_out) throw DataError("cannot write schema.json");

  std::cout << "wrote " << (dir / "train.csv").string() << " (" << data.train.size()
            << " rows), " << (dir / "test.csv").string() << " (" << data.test.size()
            << " rows)\n";
  std::cout << format_partition_report(data.schema,
                                       partition_report(data.schema, data.train));
  return 0;
}

int cmd_train(const CommonFlags& flags, const std::string& checkpoint_override) {
  RunConfig config = resolve_config(flags);
  if (!checkpoint_override.empty()) config.checkpoint_path = checkpoint_override;
  const LoadedData data = load_data(config);

  Model model = Model::create(data.schema, config.training);
  std::ofstream metrics_file;
  if (!config.metrics_path.empty()) {
    metrics_file.open(config.metrics_path);
    if (!metrics_file) throw DataError("cannot write metrics file");
  }

  struct Tee : std::ostream, std::streambuf {
    std::ostream* a;
    std::ostream* b;
    Tee(std::ostream* a, std::ostream* b) : std::ostream(this), a(a), b(b) {}
    int overflow(int c) override {
      if (c != EOF) {
        if (a) a->put(static_cast<char>(c));
        if (b) b->put(static_cast<char>(c));
      }
      return c;
    }
  } tee(&std::cout, metrics_file.is_open() ? &metrics_file : nullptr);

  train_model(model, data.train, data.test.size() ? &data.test : nullptr, &tee);
  save_checkpoint(model, data.dictionaries, config.checkpoint_path);
  std::cout << "checkpoint written to " << config.checkpoint_path << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& csv_path,
             const CommonFlags& flags) {
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  ExampleBatch batch;
  if (!csv_path.empty()) {
    batch = load_csv_apply(ckpt.model.schema, ckpt.dictionaries, csv_path);
  } else {
    RunConfig config = resolve_config(flags);
    const LoadedData data = load_data(config);
    batch = data.test.size() ? data.test : data.train;
  }
  const Metrics m = evaluate(ckpt.model, batch);
  std::cout << "auc\t" << m.auc << "\n";
  std::cout << "logloss\t" << m.logloss << "\n";
  if (ckpt.model.quantizer.has_value()) {
    std::cout << "l_rq\t" << m.l_rq << "\n";
    for (std::size_t d = 0; d < m.usage_entropy.size(); ++d) {
      std::cout << "usage_entropy_level_" << (d + 1) << "\t" << m.usage_entropy[d]
                << "\n";
    }
  }
  return 0;
}

int cmd_gradcheck(const CommonFlags& flags, bool freeze_codes, double step,
                  double tolerance) {
  RunConfig config = resolve_config(flags, /*gradcheck_defaults=*/true);
  const LoadedData data = load_data(config);

  std::vector<std::size_t> head(std::min<std::size_t>(4, data.train.size()));
  for (std::size_t i = 0; i < head.size(); ++i) head[i] = i;
  const ExampleBatch batch = data.train.gather(head);

  Model model = Model::create(data.schema, config.training);
  ModelGradCheckOptions options;
  options.freeze_codes = freeze_codes;
  options.step = step;
  options.tolerance = tolerance;
  const GradCheckReport report = model_grad_check(model, batch, options);
  std::cout << report.summary();
  std::cout << (report.passed ? "PASS" : "FAIL") << " max_rel_err=" << report.max_rel_err
            << " tolerance=" << tolerance;
  if (report.excluded > 0) {
    std::cout << " excluded_coordinates=" << report.excluded;
  }
  std::cout << "\n";
  return report.passed ? 0 : 2;
}

int cmd_sweep_depth(const CommonFlags& flags, const std::vector<std::int32_t>& depths,
                    std::size_t n_seeds) {
  RunConfig config = resolve_config(flags);
  const LoadedData data = load_data(config);
  const auto rows = run_depth_sweep(config, data, depths, n_seeds, &std::cerr);
  std::cout << format_depth_table(rows);
  return 0;
}

int cmd_ablation(const CommonFlags& flags, std::vector<std::string> models,
                 std::size_t n_seeds) {
  RunConfig config = resolve_config(flags);
  const LoadedData data = load_data(config);
  if (models.empty()) models = ablation_model_names();
  const auto rows = run_ablation(config, data, models, n_seeds, &std::cerr);
  std::cout << format_ablation_table(rows);
  return 0;
}

int cmd_inspect_codebooks(const std::string& checkpoint_path, const std::string& csv_path,
                          const CommonFlags& flags) {
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  if (!ckpt.model.quantizer.has_value()) {
    throw ConfigError("checkpoint has no quantizer");
  }
  ExampleBatch batch;
  if (!csv_path.empty()) {
    batch = load_csv_apply(ckpt.model.schema, ckpt.dictionaries, csv_path);
  } else {
    RunConfig config = resolve_config(flags);
    const LoadedData data = load_data(config);
    batch = data.test.size() ? data.test : data.train;
  }
  const EmbedResult embed = embed_batch(ckpt.model.schema, ckpt.model.tables, batch);
  const QuantizeOutput out = ckpt.model.quantizer->quantize(embed.xb);
  UsageStats usage(ckpt.model.quantizer->depth(),
                   ckpt.model.quantizer->config().codebook_size);
  usage.add(out);
  std::cout << "level\tused\tdead\tentropy_nats\ttop_codes\n";
  for (std::size_t d = 0; d < usage.depth(); ++d) {
    const auto& hist = usage.histogram(d);
    std::vector<std::pair<std::int64_t, std::size_t>> top;
    for (std::size_t c = 0; c < hist.size(); ++c) {
      if (hist[c] > 0) top.emplace_back(hist[c], c);
    }
    std::sort(top.rbegin(), top.rend());
    std::cout << (d + 1) << '\t' << top.size() << '\t' << usage.dead_codes(d) << '\t'
              << usage.entropy(d) << '\t';
    for (std::size_t k = 0; k < std::min<std::size_t>(5, top.size()); ++k) {
      if (k) std::cout << ' ';
      std::cout << top[k].second << ":" << top[k].first;
    }
    std::cout << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical multi-distribution CTR models"};
  app.require_subcommand(1);

  CommonFlags flags;

  auto* gen = app.add_subcommand("gen-data", "generate a planted synthetic dataset");
  std::string out_dir = "data";
  add_common_flags(gen, flags);
  gen->add_option("--out,-o", out_dir, "output directory");

  auto* train = app.add_subcommand("train", "train a model and write a checkpoint");
  std::string checkpoint_override;
  add_common_flags(train, flags);
  train->add_option("--out,-o", checkpoint_override, "checkpoint path");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_checkpoint;
  std::string eval_csv;
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint path")->required();
  eval->add_option("--data", eval_csv, "CSV file to evaluate on");
  add_common_flags(eval, flags);

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
  bool no_freeze = false;
  double gc_step = 1e-5;
  double gc_tol = 1e-4;
  add_common_flags(gradcheck, flags);
  gradcheck->add_flag("--no-freeze-codes", no_freeze,
                      "recompute code assignments per evaluation and exclude flips");
  gradcheck->add_option("--step", gc_step, "finite difference step");
  gradcheck->add_option("--tolerance", gc_tol, "relative error tolerance");

  auto* sweep = app.add_subcommand("sweep-depth", "AUC as a function of quantizer depth");
  std::vector<std::int32_t> depths = {1, 3, 6, 9, 12};
  std::size_t sweep_seeds = 3;
  add_common_flags(sweep, flags);
  sweep->add_option("--depths", depths, "depths to train")->delimiter(',');
  sweep->add_option("--seeds", sweep_seeds, "seeds per depth");

  auto* ablation = app.add_subcommand("ablation", "compare heads and gate inputs");
  std::vector<std::string> models;
  std::size_t ablation_seeds = 3;
  add_common_flags(ablation, flags);
  ablation->add_option("--models", models, "subset of the model roster")->delimiter(',');
  ablation->add_option("--seeds", ablation_seeds, "seeds per model");

  auto* inspect = app.add_subcommand("inspect-codebooks", "usage stats from a checkpoint");
  std::string inspect_checkpoint;
  std::string inspect_csv;
  inspect->add_option("--checkpoint", inspect_checkpoint, "checkpoint path")->required();
  inspect->add_option("--data", inspect_csv, "CSV file to quantize");
  add_common_flags(inspect, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(flags, out_dir);
    if (train->parsed()) return cmd_train(flags, checkpoint_override);
    if (eval->parsed()) return cmd_eval(eval_checkpoint, eval_csv, flags);
    if (gradcheck->parsed()) return cmd_gradcheck(flags, !no_freeze, gc_step, gc_tol);
    if (sweep->parsed()) return cmd_sweep_depth(flags, depths, sweep_seeds);
    if (ablation->parsed()) return cmd_ablation(flags, models, ablation_seeds);
    if (inspect->parsed()) return cmd_inspect_codebooks(inspect_checkpoint, inspect_csv, flags);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
