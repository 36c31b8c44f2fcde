#include "hmdn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "hmdn/errors.hpp"

namespace hmdn {

namespace {
constexpr double kProbClamp = 1e-12;

double clamp_prob(double p) {
  return std::min(1.0 - kProbClamp, std::max(kProbClamp, p));
}
}  // namespace

double binary_cross_entropy(std::span<const double> y_hat,
                            std::span<const double> labels) {
  if (y_hat.size() != labels.size()) {
    throw ShapeError("cross_entropy: prediction/label length mismatch");
  }
  if (y_hat.empty()) throw UsageError("cross_entropy: empty batch");
  double sum = 0.0;
  for (std::size_t i = 0; i < y_hat.size(); ++i) {
    const double p = clamp_prob(y_hat[i]);
    sum += labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p);
  }
  return -sum / static_cast<double>(y_hat.size());
}

double total_loss(std::span<const double> y_hat, std::span<const double> labels,
                  double l_rq, double alpha) {
  return binary_cross_entropy(y_hat, labels) + alpha * l_rq;
}

double auc(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) {
    throw ShapeError("auc: score/label length mismatch");
  }
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&scores](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }

  double rank_sum_pos = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (labels[k] == 1.0) {
      rank_sum_pos += rank[k];
      ++n_pos;
    }
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw DataError("auc: undefined, labels contain a single class");
  }
  const double u =
      rank_sum_pos - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

ForwardPass model_forward(const Model& model, const ExampleBatch& batch) {
  ForwardPass fwd;
  fwd.embed = embed_batch(model.schema, model.tables, batch);

  if (model.quantizer.has_value()) {
    fwd.quant = model.quantizer->quantize(fwd.embed.xb);
    fwd.l_rq = fwd.quant->l_rq;
  }
  if (model.config.backbone != BackboneKind::Dnn) {
    fwd.gate_input = (model.config.gate_input == GateInput::HierarchicalSd)
                         ? fwd.quant->s_d
                         : fwd.embed.xb;
  }

  switch (model.config.backbone) {
    case BackboneKind::Moe:
      fwd.y_hat = moe_forward(model.moe, fwd.embed.x, fwd.gate_input, &fwd.moe);
      break;
    case BackboneKind::Dw:
      fwd.y_hat = dw_forward(model.dw, fwd.embed.x, fwd.gate_input, &fwd.dw).y_hat;
      break;
    case BackboneKind::Dnn:
      fwd.y_hat = dnn_forward(model.dnn, fwd.embed.x, &fwd.dnn);
      break;
  }
  return fwd;
}

namespace {

// d(mean cross-entropy)/d(y_hat), using clamped probabilities.
Matrix bce_grad(const Matrix& y_hat, std::span<const double> labels) {
  Matrix g(y_hat.rows(), 1);
  const double inv_n = 1.0 / static_cast<double>(y_hat.rows());
  for (std::size_t i = 0; i < y_hat.rows(); ++i) {
    const double p = clamp_prob(y_hat(i, 0));
    g(i, 0) = -inv_n * (labels[i] / p - (1.0 - labels[i]) / (1.0 - p));
  }
  return g;
}

}  // namespace

ModelGradients model_backward(const Model& model, const ExampleBatch& batch,
                              const ForwardPass& fwd) {
  const std::size_t n = batch.size();
  const Matrix grad_yhat = bce_grad(fwd.y_hat, batch.labels);

  ModelGradients grads;
  Matrix grad_x;
  Matrix grad_gate;
  switch (model.config.backbone) {
    case BackboneKind::Moe: {
      grads.moe = moe_backward(model.moe, fwd.moe, fwd.gate_input, grad_yhat);
      grad_x = grads.moe->grad_x;
      grad_gate = grads.moe->grad_gate_input;
      break;
    }
    case BackboneKind::Dw: {
      grads.dw = dw_backward(model.dw, fwd.dw, grad_yhat);
      grad_x = grads.dw->grad_x;
      grad_gate = grads.dw->grad_gate_input;
      break;
    }
    case BackboneKind::Dnn: {
      grads.dnn = mlp_backward(model.dnn, fwd.dnn, grad_yhat);
      grad_x = grads.dnn->input_grad;
      break;
    }
  }

  Matrix grad_xb(n, model.schema.xb_dim());
  if (model.quantizer.has_value()) {
    const bool gate_on_sd = model.config.gate_input == GateInput::HierarchicalSd &&
                            model.config.backbone != BackboneKind::Dnn;
    const Matrix zero_sd(n, model.quantizer->z());
    const Matrix& grad_sd = gate_on_sd ? grad_gate : zero_sd;
    RqBackwardResult rq =
        model.quantizer->backward(*fwd.quant, grad_sd, model.config.alpha);
    grads.codebooks = std::move(rq.codebook_grads);
    grads.projections = std::move(rq.projection_grads);
    grad_xb = std::move(rq.grad_xb);
    if (!gate_on_sd && model.config.backbone != BackboneKind::Dnn) {
      add_scaled(grad_xb, grad_gate, 1.0);
    }
  } else if (model.config.backbone != BackboneKind::Dnn) {
    grad_xb = grad_gate;
  }

  grads.embeddings =
      embedding_gradients(model.schema, batch, grad_x, grad_xb, fwd.embed.slices);
  return grads;
}

namespace {

void apply_gradients(Model& model, const ModelGradients& grads, AdamOptimizer& opt) {
  for (std::size_t f = 0; f < model.schema.features.size(); ++f) {
    opt.step_rows("emb/" + model.schema.features[f].name, model.tables.tables[f],
                  grads.embeddings[f]);
  }
  if (model.quantizer.has_value()) {
    auto& q = *model.quantizer;
    for (std::size_t d = 0; d < q.codebooks().size(); ++d) {
      opt.step("quantizer/codebook_" + std::to_string(d + 1), q.codebooks()[d],
               grads.codebooks[d]);
    }
    for (std::size_t d = 0; d < q.projections().size(); ++d) {
      opt.step("quantizer/projection_" + std::to_string(d + 1), q.projections()[d],
               grads.projections[d]);
    }
  }
  switch (model.config.backbone) {
    case BackboneKind::Moe: {
      const auto& g = *grads.moe;
      for (std::size_t i = 0; i < model.moe.experts.size(); ++i) {
        for (std::size_t l = 0; l < model.moe.experts[i].layers.size(); ++l) {
          const std::string prefix = "moe/expert_" + std::to_string(i) + "/layer_" +
                                     std::to_string(l) + "/";
          opt.step(prefix + "weight", model.moe.experts[i].layers[l].weight,
                   g.experts[i].layers[l].weight);
          opt.step(prefix + "bias", model.moe.experts[i].layers[l].bias,
                   g.experts[i].layers[l].bias);
        }
      }
      opt.step("moe/gate_weight", model.moe.gate_weight, g.gate_weight);
      for (std::size_t l = 0; l < model.moe.tower.layers.size(); ++l) {
        const std::string prefix = "moe/tower/layer_" + std::to_string(l) + "/";
        opt.step(prefix + "weight", model.moe.tower.layers[l].weight,
                 g.tower.layers[l].weight);
        opt.step(prefix + "bias", model.moe.tower.layers[l].bias, g.tower.layers[l].bias);
      }
      break;
    }
    case BackboneKind::Dw: {
      const auto& g = *grads.dw;
      for (std::size_t l = 0; l < model.dw.gate_nu.layers.size(); ++l) {
        const std::string prefix = "dw/gate_nu/layer_" + std::to_string(l) + "/";
        opt.step(prefix + "weight", model.dw.gate_nu.layers[l].weight,
                 g.gate_nu.layers[l].weight);
        opt.step(prefix + "bias", model.dw.gate_nu.layers[l].bias,
                 g.gate_nu.layers[l].bias);
      }
      for (std::size_t l = 0; l < model.dw.tower.layers.size(); ++l) {
        const std::string prefix = "dw/tower/layer_" + std::to_string(l) + "/";
        opt.step(prefix + "weight", model.dw.tower.layers[l].weight,
                 g.tower.layers[l].weight);
        opt.step(prefix + "bias", model.dw.tower.layers[l].bias, g.tower.layers[l].bias);
      }
      break;
    }
    case BackboneKind::Dnn: {
      const auto& g = *grads.dnn;
      for (std::size_t l = 0; l < model.dnn.layers.size(); ++l) {
        const std::string prefix = "dnn/layer_" + std::to_string(l) + "/";
        opt.step(prefix + "weight", model.dnn.layers[l].weight, g.layers[l].weight);
        opt.step(prefix + "bias", model.dnn.layers[l].bias, g.layers[l].bias);
      }
      break;
    }
  }
}

}  // namespace

double train_step(Model& model, const ExampleBatch& batch, AdamOptimizer& opt,
                  std::int64_t step, Rng& aux_rng, UsageStats* restart_usage) {
  if (model.quantizer.has_value() && !model.quantizer->initialized()) {
    const EmbedResult embed = embed_batch(model.schema, model.tables, batch);
    Rng init_rng = aux_rng.fork(101);
    model.quantizer->initialize_from_batch(embed.xb, init_rng);
  }

  const ForwardPass fwd = model_forward(model, batch);
  if (!fwd.y_hat.all_finite()) {
    throw NumericError("non-finite prediction at step " + std::to_string(step) +
                       " (backbone)");
  }
  const double loss =
      total_loss(std::span<const double>(fwd.y_hat.data()), batch.labels, fwd.l_rq,
                 model.config.alpha);
  if (!std::isfinite(loss)) {
    const std::string component = !std::isfinite(fwd.l_rq) ? "quantization loss"
                                                           : "cross-entropy";
    throw NumericError("non-finite loss at step " + std::to_string(step) + " (" +
                       component + ")");
  }

  const ModelGradients grads = model_backward(model, batch, fwd);
  apply_gradients(model, grads, opt);

  if (model.quantizer.has_value() && restart_usage != nullptr) {
    restart_usage->add(*fwd.quant);
    const auto every = model.quantizer->config().restart_dead_codes_every;
    if (every > 0 && step > 0 && step % every == 0) {
      Rng restart_rng = aux_rng.fork(200 + static_cast<std::uint64_t>(step));
      model.quantizer->restart_dead_codes(*restart_usage, *fwd.quant, restart_rng);
      restart_usage->reset();
    }
  }
  return loss;
}

std::string format_record(const MetricsRecord& r) {
  std::ostringstream os;
  os << r.step << '\t' << r.split << '\t' << r.metric << '\t';
  os.precision(12);
  os << r.value;
  return os.str();
}

namespace {

void emit(TrainResult& result, std::ostream* out, std::int64_t step,
          const std::string& split, const std::string& metric, double value) {
  MetricsRecord rec{step, split, metric, value};
  if (out) *out << format_record(rec) << '\n';
  result.trace.push_back(std::move(rec));
}

void emit_eval(TrainResult& result, std::ostream* out, std::int64_t step,
               const Model& model, const ExampleBatch& test_set) {
  const Metrics m = evaluate(model, test_set);
  emit(result, out, step, "test", "auc", m.auc);
  emit(result, out, step, "test", "logloss", m.logloss);
  if (model.quantizer.has_value()) emit(result, out, step, "test", "l_rq", m.l_rq);
}

}  // namespace

TrainResult train_model(Model& model, const ExampleBatch& train_set,
                        const ExampleBatch* test_set, std::ostream* trace_out) {
  model.config.validate();
  train_set.validate(model.schema);

  AdamOptimizer opt(AdamConfig{model.config.lr, 0.9, 0.999, 1e-8});
  Rng root(model.config.seed);
  Rng shuffle_rng = root.fork(10);
  Rng aux_rng = root.fork(11);

  std::optional<UsageStats> restart_usage;
  if (model.quantizer.has_value() &&
      model.quantizer->config().restart_dead_codes_every > 0) {
    restart_usage.emplace(model.quantizer->depth(),
                          model.quantizer->config().codebook_size);
  }

  TrainResult result;
  const std::size_t n = train_set.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::int64_t step = 0;
  for (std::size_t epoch = 0; epoch < model.config.epochs; ++epoch) {
    // Fisher-Yates, one stream across all epochs.
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(shuffle_rng.next_below(i));
      std::swap(order[i - 1], order[j]);
    }
    for (std::size_t start = 0; start < n; start += model.config.batch_size) {
      const std::size_t end = std::min(n, start + model.config.batch_size);
      const std::vector<std::size_t> idx(order.begin() + start, order.begin() + end);
      const ExampleBatch batch = train_set.gather(idx);
      const double loss = train_step(model, batch, opt, step,
                                     aux_rng, restart_usage ? &*restart_usage : nullptr);
      ++step;
      emit(result, trace_out, step, "train", "loss", loss);
      if (test_set != nullptr && model.config.eval_every > 0 &&
          step % model.config.eval_every == 0) {
        emit_eval(result, trace_out, step, model, *test_set);
      }
    }
    if (test_set != nullptr) emit_eval(result, trace_out, step, model, *test_set);
  }
  result.steps = step;
  return result;
}

Metrics evaluate(const Model& model, const ExampleBatch& batch) {
  batch.validate(model.schema);
  const ForwardPass fwd = model_forward(model, batch);
  Metrics m;
  std::span<const double> scores(fwd.y_hat.data());
  m.auc = auc(scores, batch.labels);
  m.logloss = binary_cross_entropy(scores, batch.labels);
  m.l_rq = fwd.l_rq;
  if (model.quantizer.has_value()) {
    UsageStats usage(model.quantizer->depth(), model.quantizer->config().codebook_size);
    usage.add(*fwd.quant);
    for (std::size_t d = 0; d < usage.depth(); ++d) {
      m.usage_entropy.push_back(usage.entropy(d));
      m.dead_codes.push_back(usage.dead_codes(d));
    }
  }
  return m;
}

GradCheckReport model_grad_check(Model& model, const ExampleBatch& batch,
                                 const ModelGradCheckOptions& options) {
  if (model.quantizer.has_value() && !model.quantizer->initialized()) {
    const EmbedResult embed = embed_batch(model.schema, model.tables, batch);
    Rng init_rng = Rng(model.config.seed).fork(101);
    model.quantizer->initialize_from_batch(embed.xb, init_rng);
  }

  // Analytic gradients at the base point.
  const ForwardPass fwd = model_forward(model, batch);
  const ModelGradients grads = model_backward(model, batch, fwd);

  // Densify the sparse embedding row gradients for coordinate-wise checking.
  std::vector<Matrix> emb_dense;
  for (std::size_t f = 0; f < model.schema.features.size(); ++f) {
    Matrix dense(model.tables.tables[f].rows(), model.tables.tables[f].cols());
    for (const auto& [row, g] : grads.embeddings[f]) {
      for (std::size_t j = 0; j < dense.cols(); ++j) {
        dense(static_cast<std::size_t>(row), j) = g[j];
      }
    }
    emb_dense.push_back(std::move(dense));
  }

  std::optional<FrozenQuantization> frozen;
  if (model.quantizer.has_value()) {
    frozen = model.quantizer->freeze(*fwd.quant, fwd.embed.xb);
  }

  const bool gate_on_sd = model.config.gate_input == GateInput::HierarchicalSd &&
                          model.config.backbone != BackboneKind::Dnn;

  LossFn loss = [&]() -> FdEval {
    FdEval eval;
    const EmbedResult embed = embed_batch(model.schema, model.tables, batch);
    double l_rq = 0.0;
    Matrix gate_input;
    if (model.quantizer.has_value()) {
      const auto f =
          model.quantizer->forward_frozen(embed.xb, *frozen, !options.freeze_codes);
      eval.excluded = f.code_flip;
      l_rq = f.l_rq;
      gate_input = gate_on_sd ? f.gate_input : embed.xb;
    } else if (model.config.backbone != BackboneKind::Dnn) {
      gate_input = embed.xb;
    }
    Matrix y;
    switch (model.config.backbone) {
      case BackboneKind::Moe:
        y = moe_forward(model.moe, embed.x, gate_input, nullptr);
        break;
      case BackboneKind::Dw:
        y = dw_forward(model.dw, embed.x, gate_input, nullptr).y_hat;
        break;
      case BackboneKind::Dnn:
        y = dnn_forward(model.dnn, embed.x, nullptr);
        break;
    }
    eval.value = total_loss(std::span<const double>(y.data()), batch.labels, l_rq,
                            model.config.alpha);
    return eval;
  };

  // Assemble blocks in census order, pairing parameters with analytics.
  std::vector<ParamBlockRef> blocks;
  for (std::size_t f = 0; f < model.schema.features.size(); ++f) {
    blocks.push_back(ParamBlockRef{"emb/" + model.schema.features[f].name,
                                   &model.tables.tables[f], &emb_dense[f]});
  }
  if (model.quantizer.has_value()) {
    auto& q = *model.quantizer;
    const bool zero_code = q.config().include_zero_code;
    for (std::size_t d = 0; d < q.codebooks().size(); ++d) {
      ParamBlockRef ref{"quantizer/codebook_" + std::to_string(d + 1), &q.codebooks()[d],
                        &grads.codebooks[d]};
      if (zero_code) ref.frozen_rows.insert(0);
      blocks.push_back(std::move(ref));
    }
    for (std::size_t d = 0; d < q.projections().size(); ++d) {
      blocks.push_back(ParamBlockRef{"quantizer/projection_" + std::to_string(d + 1),
                                     &q.projections()[d], &grads.projections[d]});
    }
  }
  auto add_mlp = [&blocks](const std::string& prefix, MlpParams& mlp,
                           const MlpGrads& g) {
    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
      const std::string p = prefix + "/layer_" + std::to_string(l) + "/";
      blocks.push_back(ParamBlockRef{p + "weight", &mlp.layers[l].weight,
                                     &g.layers[l].weight});
      blocks.push_back(ParamBlockRef{p + "bias", &mlp.layers[l].bias, &g.layers[l].bias});
    }
  };
  switch (model.config.backbone) {
    case BackboneKind::Moe:
      for (std::size_t i = 0; i < model.moe.experts.size(); ++i) {
        add_mlp("moe/expert_" + std::to_string(i), model.moe.experts[i],
                grads.moe->experts[i]);
      }
      blocks.push_back(
          ParamBlockRef{"moe/gate_weight", &model.moe.gate_weight, &grads.moe->gate_weight});
      add_mlp("moe/tower", model.moe.tower, grads.moe->tower);
      break;
    case BackboneKind::Dw:
      add_mlp("dw/gate_nu", model.dw.gate_nu, grads.dw->gate_nu);
      add_mlp("dw/tower", model.dw.tower, grads.dw->tower);
      break;
    case BackboneKind::Dnn:
      add_mlp("dnn", model.dnn, *grads.dnn);
      break;
  }

  return grad_check(loss, std::move(blocks), options.step, options.tolerance,
                    options.denom_floor);
}

}  // namespace hmdn
