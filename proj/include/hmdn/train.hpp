#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hmdn/adam.hpp"
#include "hmdn/gradcheck.hpp"
#include "hmdn/model.hpp"

namespace hmdn {

/// Cross-entropy over clamped probabilities plus alpha times the
/// quantization loss. Predictions are clamped to [1e-12, 1 - 1e-12] before
/// the logs, never rejected.
double binary_cross_entropy(std::span<const double> y_hat, std::span<const double> labels);
double total_loss(std::span<const double> y_hat, std::span<const double> labels,
                  double l_rq, double alpha);

/// Rank-based AUC with average ranks on ties: the probability that a random
/// positive outranks a random negative, ties counting one half. Throws when
/// only one class is present.
double auc(std::span<const double> scores, std::span<const double> labels);

struct MetricsRecord {
  std::int64_t step = 0;
  std::string split;
  std::string metric;
  double value = 0.0;
};

struct Metrics {
  double auc = 0.0;
  double logloss = 0.0;
  double l_rq = 0.0;
  std::vector<double> usage_entropy;  // per quantizer level
  std::vector<std::size_t> dead_codes;
};

/// One forward pass over a batch, retaining what the backward needs.
struct ForwardPass {
  EmbedResult embed;
  std::optional<QuantizeOutput> quant;
  Matrix gate_input;
  MoECache moe;
  DwCache dw;
  MlpCache dnn;
  Matrix y_hat;  // batch x 1
  double l_rq = 0.0;
};

ForwardPass model_forward(const Model& model, const ExampleBatch& batch);

/// All gradients of one training step, keyed exactly like the model census.
struct ModelGradients {
  EmbeddingRowGrads embeddings;
  std::vector<Matrix> codebooks;
  std::vector<Matrix> projections;
  std::optional<MoEGrads> moe;
  std::optional<DwGrads> dw;
  std::optional<MlpGrads> dnn;
};

ModelGradients model_backward(const Model& model, const ExampleBatch& batch,
                              const ForwardPass& fwd);

/// One minibatch step: forward, backward, Adam on every trainable block.
/// Initializes quantizer codebooks from the batch on first use. Returns the
/// batch objective value.
double train_step(Model& model, const ExampleBatch& batch, AdamOptimizer& opt,
                  std::int64_t step, Rng& aux_rng, UsageStats* restart_usage);

struct TrainResult {
  std::vector<MetricsRecord> trace;
  std::int64_t steps = 0;
};

/// Seeded-shuffle minibatch training for config.epochs passes; evaluates on
/// the test split at every epoch end (plus every eval_every steps when set)
/// and appends line records to the trace / stream.
TrainResult train_model(Model& model, const ExampleBatch& train_set,
                        const ExampleBatch* test_set, std::ostream* trace_out = nullptr);

Metrics evaluate(const Model& model, const ExampleBatch& batch);

std::string format_record(const MetricsRecord& r);

/// Full-model finite-difference gradient check on a small batch. Code
/// assignments and stop-gradient captures are frozen so the loss closure is
/// smooth; with freeze_codes off, perturbations that flip a nearest-code
/// assignment are excluded from the check instead.
struct ModelGradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  double denom_floor = 1e-6;
  bool freeze_codes = true;
};

GradCheckReport model_grad_check(Model& model, const ExampleBatch& batch,
                                 const ModelGradCheckOptions& options = {});

}  // namespace hmdn
