// Acceptance suite: one independently checkable criterion per section, one
// PASS/FAIL line each, nonzero exit if anything fails. Heavier end-to-end
// benchmark sections run last. A subset of section numbers can be passed as
// arguments during development, e.g. "hmdn_acceptance 1 3 5".

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <vector>

#include "hmdn/checkpoint.hpp"
#include "hmdn/config.hpp"
#include "hmdn/experiments.hpp"
#include "hmdn/train.hpp"

using namespace hmdn;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.5,
                     double hi = 1.5) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

FeatureSchema quantizer_schema(std::int32_t dim) {
  FeatureSchema schema;
  schema.features.push_back({"d", 4, dim, true, "d", 1});
  return schema;
}

Quantizer random_implicit_quantizer(std::int32_t depth, std::int32_t k, std::int32_t dim,
                                    Rng& rng) {
  QuantizerConfig config;
  config.depth = depth;
  config.codebook_size = k;
  Rng build_rng(rng.next_u64());
  Quantizer q(config, quantizer_schema(dim), build_rng);
  Rng init_rng(rng.next_u64());
  q.initialize_from_batch(random_matrix(static_cast<std::size_t>(k) + 4, dim, rng),
                          init_rng);
  return q;
}

// ---------------------------------------------------------------------------
// 1. Equation-level oracles at 1e-12 over random small instances.
Outcome criterion_equation_oracles() {
  Rng rng(1001);
  double worst = 0.0;
  std::size_t instances = 0;

  // vq_nearest against an exhaustive scan.
  for (int t = 0; t < 150; ++t) {
    const std::size_t k = 2 + rng.next_below(9);
    const std::size_t dim = 1 + rng.next_below(6);
    const Matrix book = random_matrix(k, dim, rng);
    std::vector<double> s(dim);
    for (double& v : s) v = rng.uniform(-2.0, 2.0);
    std::size_t best = 0;
    double best_dist = 1e300;
    for (std::size_t c = 0; c < k; ++c) {
      double dist = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double d = s[j] - book(c, j);
        dist += d * d;
      }
      if (dist < best_dist) {
        best_dist = dist;
        best = c;
      }
    }
    if (vq_nearest(s, book) != static_cast<std::int32_t>(best)) {
      return {false, "vq_nearest mismatch at instance " + std::to_string(t)};
    }
    ++instances;
  }

  // rq_quantize + rq_loss against a greedy chain oracle and the two-term form.
  for (int t = 0; t < 120; ++t) {
    const std::int32_t depth = 1 + static_cast<std::int32_t>(rng.next_below(4));
    const std::int32_t k = 2 + static_cast<std::int32_t>(rng.next_below(7));
    const std::int32_t dim = 2 + static_cast<std::int32_t>(rng.next_below(5));
    Quantizer q = random_implicit_quantizer(depth, k, dim, rng);
    const Matrix xb = random_matrix(3 + rng.next_below(6), dim, rng);
    const QuantizeOutput out = q.quantize(xb);

    double term = 0.0;
    for (std::size_t i = 0; i < xb.rows(); ++i) {
      std::vector<double> residual(dim);
      for (std::int32_t j = 0; j < dim; ++j) residual[j] = xb(i, j);
      std::vector<double> s(dim, 0.0);
      for (std::int32_t d = 0; d < depth; ++d) {
        std::size_t best = 0;
        double best_dist = 1e300;
        for (std::int32_t c = 0; c < k; ++c) {
          double dist = 0.0;
          for (std::int32_t j = 0; j < dim; ++j) {
            const double delta = residual[j] - q.codebooks()[d](c, j);
            dist += delta * delta;
          }
          if (dist < best_dist) {
            best_dist = dist;
            best = c;
          }
        }
        if (out.codes[d][i] != static_cast<std::int32_t>(best)) {
          return {false, "rq code mismatch at instance " + std::to_string(t)};
        }
        for (std::int32_t j = 0; j < dim; ++j) {
          s[j] += q.codebooks()[d](best, j);
          residual[j] -= q.codebooks()[d](best, j);
        }
        for (std::int32_t j = 0; j < dim; ++j) {
          term += residual[j] * residual[j];  // equals both loss terms at level d
        }
      }
      for (std::int32_t j = 0; j < dim; ++j) {
        worst = std::max(worst, std::fabs(out.s_d(i, j) - s[j]));
      }
    }
    const double beta = q.config().beta;
    const double oracle_loss = (1.0 + beta) * term / static_cast<double>(xb.rows());
    worst = std::max(worst, std::fabs(rq_loss(out, beta) - oracle_loss));
    ++instances;
  }

  // moe_forward against a term-by-term loop.
  for (int t = 0; t < 110; ++t) {
    Rng prng(rng.next_u64());
    MoEParams p = MoEParams::create(5, 4, 3, {6, 3}, prng);
    const Matrix x = random_matrix(4, 5, rng);
    const Matrix gate_in = random_matrix(4, 4, rng);
    const Matrix y = moe_forward(p, x, gate_in);
    std::vector<Matrix> experts;
    for (const auto& e : p.experts) experts.push_back(mlp_forward(e, x));
    for (std::size_t b = 0; b < 4; ++b) {
      std::vector<double> logits(3, 0.0);
      for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t c = 0; c < 4; ++c) logits[i] += gate_in(b, c) * p.gate_weight(c, i);
      }
      const auto gate = softmax(logits);
      double logit = p.tower.layers[0].bias(0, 0);
      for (std::size_t j = 0; j < 3; ++j) {
        double combined = 0.0;
        for (std::size_t i = 0; i < 3; ++i) combined += gate[i] * experts[i](b, j);
        logit += combined * p.tower.layers[0].weight(j, 0);
      }
      worst = std::max(worst, std::fabs(y(b, 0) - sigmoid(logit)));
    }
    ++instances;
  }

  // dw_forward against an element-wise multiply-then-tower loop.
  for (int t = 0; t < 110; ++t) {
    Rng prng(rng.next_u64());
    DwParams p = DwParams::create(5, 3, {6}, prng);
    const Matrix x = random_matrix(4, 5, rng);
    const Matrix gate_in = random_matrix(4, 3, rng);
    const DwForwardResult res = dw_forward(p, x, gate_in);
    const Matrix delta = mlp_forward(p.gate_nu, gate_in);
    Matrix scaled(4, 5);
    for (std::size_t i = 0; i < scaled.size(); ++i) {
      scaled.data()[i] = delta.data()[i] * x.data()[i];
    }
    const Matrix expected = mlp_forward(p.tower, scaled);
    for (std::size_t b = 0; b < 4; ++b) {
      worst = std::max(worst, std::fabs(res.y_hat(b, 0) - expected(b, 0)));
    }
    ++instances;
  }

  // total_loss against a per-example summation.
  for (int t = 0; t < 150; ++t) {
    const std::size_t n = 1 + rng.next_below(30);
    std::vector<double> y_hat(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y_hat[i] = rng.uniform(1e-9, 1.0 - 1e-9);
      y[i] = static_cast<double>(rng.next_below(2));
    }
    const double l_rq = rng.uniform(0.0, 2.0);
    const double alpha = rng.uniform(0.0, 2.0);
    double expected = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      expected += y[i] * std::log(y_hat[i]) + (1.0 - y[i]) * std::log(1.0 - y_hat[i]);
    }
    expected = -expected / static_cast<double>(n) + alpha * l_rq;
    worst = std::max(worst, std::fabs(total_loss(y_hat, y, l_rq, alpha) - expected));
    ++instances;
  }

  std::ostringstream detail;
  detail << instances << " instances, max abs deviation " << worst;
  return {worst <= 1e-12, detail.str()};
}

// ---------------------------------------------------------------------------
// 2. Full-model finite differences at 1e-4 for both heads and both modes.
Outcome criterion_gradient_suite() {
  const auto start = std::chrono::steady_clock::now();
  std::ostringstream detail;
  bool passed = true;
  for (const bool dw : {false, true}) {
    for (const bool explicit_mode : {false, true}) {
      RunConfig base = gradcheck_preset();
      base.training.backbone = dw ? BackboneKind::Dw : BackboneKind::Moe;
      base.training.quantizer.mode =
          explicit_mode ? QuantizerMode::Explicit : QuantizerMode::Implicit;
      const LoadedData data = load_data(base);
      std::vector<std::size_t> head = {0, 1, 2, 3};
      const ExampleBatch batch = data.train.gather(head);
      Model model = Model::create(data.schema, base.training);
      const GradCheckReport report = model_grad_check(model, batch, {});
      detail << (dw ? "dw" : "moe") << "/" << (explicit_mode ? "explicit" : "implicit")
             << "=" << report.max_rel_err << " ";
      passed = passed && report.passed;
    }
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  detail << "(" << seconds << " s)";
  return {passed && seconds < 60.0, detail.str()};
}

// ---------------------------------------------------------------------------
// 3. Quantizer invariants over >= 1000 random inputs.
Outcome criterion_quantizer_invariants() {
  Rng rng(3003);
  std::size_t checked = 0;

  Quantizer q = random_implicit_quantizer(5, 6, 4, rng);
  const Matrix xb = random_matrix(600, 4, rng, -2.0, 2.0);
  const QuantizeOutput out = q.quantize(xb);
  for (std::size_t i = 0; i < xb.rows(); ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      const double recon = out.s_d(i, j) + out.level_residuals[4](i, j);
      if (std::fabs(recon - xb(i, j)) > 1e-12) {
        return {false, "reconstruction identity violated"};
      }
    }
    for (std::size_t d = 0; d < 5; ++d) {
      const double r = squared_norm(out.level_residuals[d].row(i));
      for (std::size_t c = 0; c < 6; ++c) {
        if (r > squared_distance(out.level_inputs[d].row(i), q.codebooks()[d].row(c)) +
                    1e-15) {
          return {false, "greedy optimality violated"};
        }
      }
    }
    ++checked;
  }

  QuantizerConfig zc_config;
  zc_config.depth = 4;
  zc_config.codebook_size = 5;
  zc_config.include_zero_code = true;
  Rng build_rng(rng.next_u64());
  Quantizer zq(zc_config, quantizer_schema(4), build_rng);
  Rng init_rng(rng.next_u64());
  zq.initialize_from_batch(random_matrix(24, 4, rng), init_rng);
  const Matrix xb2 = random_matrix(600, 4, rng, -2.0, 2.0);
  const QuantizeOutput out2 = zq.quantize(xb2);
  for (std::size_t i = 0; i < xb2.rows(); ++i) {
    double prev = squared_norm(xb2.row(i));
    for (std::size_t d = 0; d < 4; ++d) {
      const double cur = squared_norm(out2.level_residuals[d].row(i));
      if (cur > prev + 1e-15) return {false, "residual norms increased with depth"};
      prev = cur;
    }
    ++checked;
  }
  return {checked >= 1000, std::to_string(checked) + " inputs checked"};
}

// ---------------------------------------------------------------------------
// 4. Straight-through identity, bitwise, alpha = 0.
Outcome criterion_straight_through() {
  Rng rng(4004);
  for (int t = 0; t < 100; ++t) {
    const std::int32_t depth = 1 + static_cast<std::int32_t>(rng.next_below(5));
    const std::int32_t dim = 2 + static_cast<std::int32_t>(rng.next_below(5));
    Quantizer q = random_implicit_quantizer(depth, 4, dim, rng);
    const Matrix xb = random_matrix(6, dim, rng);
    const QuantizeOutput out = q.quantize(xb);
    const Matrix grad_sd = random_matrix(6, dim, rng);
    const RqBackwardResult res = q.backward(out, grad_sd, 0.0);
    if (!(res.grad_xb == grad_sd)) {
      return {false, "grad_xb != grad_sd at instance " + std::to_string(t)};
    }
    for (const auto& g : res.codebook_grads) {
      if (g.max_abs() != 0.0) return {false, "codebooks received gradient at alpha=0"};
    }
  }
  return {true, "100 random instances, bitwise equal"};
}

// ---------------------------------------------------------------------------
// 5. Rank-based AUC equals brute-force pair counting, exact, 200 vectors.
Outcome criterion_auc_oracle() {
  Rng rng(5005);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + rng.next_below(49);
    std::vector<double> scores(n), labels(n);
    bool has_pos = false, has_neg = false;
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = static_cast<double>(rng.next_below(10)) / 10.0;
      labels[i] = static_cast<double>(rng.next_below(2));
      has_pos = has_pos || labels[i] == 1.0;
      has_neg = has_neg || labels[i] == 0.0;
    }
    if (!has_pos) labels[0] = 1.0;
    if (!has_neg) labels[n - 1] = 0.0;
    double wins = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (labels[i] != 1.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        if (labels[j] != 0.0) continue;
        ++pairs;
        if (scores[i] > scores[j]) wins += 1.0;
        else if (scores[i] == scores[j]) wins += 0.5;
      }
    }
    if (auc(scores, labels) != wins / static_cast<double>(pairs)) {
      return {false, "auc mismatch at instance " + std::to_string(t)};
    }
  }
  return {true, "200 vectors, exact match"};
}

// ---------------------------------------------------------------------------
// Shared benchmark data (criteria 6 and 7): the default planted dataset.
const RunConfig& benchmark_config() {
  static const RunConfig config = [] {
    RunConfig c;  // library defaults throughout
    return c;
  }();
  return config;
}

const LoadedData& benchmark_data() {
  static const LoadedData data = load_data(benchmark_config());
  return data;
}

// 6. Planted-data benchmark: hierarchical gating beats the baseline and at
// least matches vanilla gating, with the expected ordering in most seeds.
Outcome criterion_benchmark() {
  const auto start = std::chrono::steady_clock::now();
  const std::vector<std::string> models = {"dnn", "moe-vanilla", "hmdn-moe-implicit",
                                           "hmdn-moe-explicit"};
  const auto rows =
      run_ablation(benchmark_config(), benchmark_data(), models, 3, nullptr);
  double dnn = 0.0, vanilla = 0.0, implicit = 0.0;
  std::vector<double> implicit_seeds, explicit_seeds, vanilla_seeds;
  for (const auto& row : rows) {
    if (row.model == "dnn") dnn = row.mean_auc;
    if (row.model == "moe-vanilla") {
      vanilla = row.mean_auc;
      vanilla_seeds = row.aucs;
    }
    if (row.model == "hmdn-moe-implicit") {
      implicit = row.mean_auc;
      implicit_seeds = row.aucs;
    }
    if (row.model == "hmdn-moe-explicit") explicit_seeds = row.aucs;
  }
  int ordered = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    if (implicit_seeds[s] >= explicit_seeds[s] && explicit_seeds[s] >= vanilla_seeds[s]) {
      ++ordered;
    }
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  std::ostringstream detail;
  detail.precision(4);
  detail << std::fixed << "dnn=" << dnn << " vanilla=" << vanilla
         << " implicit=" << implicit << " ordered_seeds=" << ordered << "/3 ("
         << seconds << " s)";
  const bool passed = implicit >= dnn + 0.01 && implicit >= vanilla - 0.002 &&
                      ordered >= 2 && seconds < 600.0;
  return {passed, detail.str()};
}

// ---------------------------------------------------------------------------
// 7. Depth sweep: some depth in [3, 9] beats depth 1, and going beyond 9
// does not improve on the best in-range depth.
Outcome criterion_depth_sweep() {
  const auto rows =
      run_depth_sweep(benchmark_config(), benchmark_data(), {1, 3, 6, 9, 12}, 3, nullptr);
  double at1 = 0.0, at12 = 0.0, best_mid = 0.0;
  for (const auto& row : rows) {
    if (row.depth == 1) at1 = row.mean_auc;
    if (row.depth == 12) at12 = row.mean_auc;
    if (row.depth >= 3 && row.depth <= 9) best_mid = std::max(best_mid, row.mean_auc);
  }
  std::ostringstream detail;
  detail.precision(4);
  detail << std::fixed << "auc(D=1)=" << at1 << " best(D in 3..9)=" << best_mid
         << " auc(D=12)=" << at12;
  return {best_mid > at1 && at12 <= best_mid, detail.str()};
}

// ---------------------------------------------------------------------------
// 8. Determinism and persistence.
Outcome criterion_determinism() {
  RunConfig config = gradcheck_preset();
  config.data.synthetic_config.n_train = 2048;
  config.data.synthetic_config.n_test = 512;
  config.training.batch_size = 128;
  const LoadedData data = load_data(config);

  const auto dir = std::filesystem::temp_directory_path();
  const std::string path_a = (dir / "hmdn_acc_a.ckpt").string();
  const std::string path_b = (dir / "hmdn_acc_b.ckpt").string();
  for (const auto& path : {path_a, path_b}) {
    Model model = Model::create(data.schema, config.training);
    train_model(model, data.train, nullptr, nullptr);
    save_checkpoint(model, data.dictionaries, path);
  }
  std::ifstream a(path_a, std::ios::binary), b(path_b, std::ios::binary);
  const std::string bytes_a((std::istreambuf_iterator<char>(a)),
                            std::istreambuf_iterator<char>());
  const std::string bytes_b((std::istreambuf_iterator<char>(b)),
                            std::istreambuf_iterator<char>());
  if (bytes_a != bytes_b || bytes_a.empty()) {
    return {false, "checkpoints differ between identical runs"};
  }

  const Checkpoint loaded = load_checkpoint(path_a);
  Model model = Model::create(data.schema, config.training);
  train_model(model, data.train, nullptr, nullptr);
  const Metrics fresh = evaluate(model, data.test);
  const Metrics restored = evaluate(loaded.model, data.test);
  if (fresh.auc != restored.auc || fresh.logloss != restored.logloss ||
      fresh.l_rq != restored.l_rq) {
    return {false, "round-trip metrics differ"};
  }
  std::ostringstream detail;
  detail << bytes_a.size() << "-byte checkpoints identical, metrics preserved";
  return {true, detail.str()};
}

// ---------------------------------------------------------------------------
// 9. Alpha = 0 training leaves codebook rows bitwise unchanged.
Outcome criterion_alpha_zero_codebooks() {
  RunConfig config = gradcheck_preset();
  config.data.synthetic_config.n_train = 2048;
  config.training.batch_size = 128;
  config.training.alpha = 0.0;
  const LoadedData data = load_data(config);
  Model model = Model::create(data.schema, config.training);

  const EmbedResult pre = embed_batch(model.schema, model.tables, data.train);
  Rng init_rng = Rng(config.training.seed).fork(11).fork(101);
  model.quantizer->initialize_from_batch(pre.xb, init_rng);
  const std::vector<Matrix> before = model.quantizer->codebooks();

  train_model(model, data.train, nullptr, nullptr);
  const std::vector<Matrix>& after = model.quantizer->codebooks();
  for (std::size_t d = 0; d < before.size(); ++d) {
    if (!(before[d] == after[d])) {
      return {false, "codebook level " + std::to_string(d + 1) + " changed"};
    }
  }
  return {true, std::to_string(before.size()) + " codebook levels bitwise unchanged"};
}

}  // namespace

int main(int argc, char** argv) {
  struct Section {
    int number;
    const char* title;
    Outcome (*run)();
  };
  const std::vector<Section> sections = {
      {1, "equation oracles match brute force at 1e-12", criterion_equation_oracles},
      {2, "full-model gradient checks pass at 1e-4", criterion_gradient_suite},
      {3, "quantizer invariants hold over 1000+ inputs", criterion_quantizer_invariants},
      {4, "straight-through identity is bitwise at alpha=0", criterion_straight_through},
      {5, "rank-based AUC equals all-pairs counting exactly", criterion_auc_oracle},
      {6, "planted benchmark: hierarchical gating wins", criterion_benchmark},
      {7, "depth sweep peaks in [3,9] and flattens past 9", criterion_depth_sweep},
      {8, "determinism and checkpoint persistence", criterion_determinism},
      {9, "alpha=0 training leaves codebooks untouched", criterion_alpha_zero_codebooks},
  };

  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  bool all_passed = true;
  for (const auto& section : sections) {
    if (!selected.empty() && !selected.count(section.number)) continue;
    Outcome outcome;
    try {
      outcome = section.run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (outcome.passed ? "[PASS] " : "[FAIL] ") << "criterion "
              << section.number << ": " << section.title << " — " << outcome.detail
              << std::endl;
    all_passed = all_passed && outcome.passed;
  }
  return all_passed ? 0 : 1;
}
