#include "hmdn/quantizer.hpp"

#include <cmath>
#include <string>

#include "hmdn/errors.hpp"

namespace hmdn {

std::int32_t vq_nearest(std::span<const double> s, const Matrix& codebook) {
  if (codebook.rows() == 0) throw ConfigError("vq_nearest: empty codebook");
  if (codebook.cols() != s.size()) {
    throw ShapeError("vq_nearest: input dim " + std::to_string(s.size()) +
                     " != code dim " + std::to_string(codebook.cols()));
  }
  std::int32_t best = 0;
  double best_dist = squared_distance(s, codebook.row(0));
  for (std::size_t c = 1; c < codebook.rows(); ++c) {
    const double d = squared_distance(s, codebook.row(c));
    if (d < best_dist) {
      best_dist = d;
      best = static_cast<std::int32_t>(c);
    }
  }
  return best;
}

void UsageStats::add(const QuantizeOutput& out) {
  for (std::size_t d = 0; d < out.codes.size() && d < counts_.size(); ++d) {
    for (std::int32_t c : out.codes[d]) ++counts_[d][static_cast<std::size_t>(c)];
  }
}

void UsageStats::reset() {
  for (auto& level : counts_) level.assign(level.size(), 0);
}

std::int64_t UsageStats::total(std::size_t level) const {
  std::int64_t t = 0;
  for (std::int64_t c : counts_[level]) t += c;
  return t;
}

double UsageStats::entropy(std::size_t level) const {
  const double n = static_cast<double>(total(level));
  if (n == 0.0) return 0.0;
  double h = 0.0;
  for (std::int64_t c : counts_[level]) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log(p);
  }
  return h;
}

std::size_t UsageStats::dead_codes(std::size_t level) const {
  std::size_t dead = 0;
  for (std::int64_t c : counts_[level]) {
    if (c == 0) ++dead;
  }
  return dead;
}

Quantizer::Quantizer(const QuantizerConfig& config, const FeatureSchema& schema, Rng& rng)
    : config_(config) {
  schema.validate();
  if (config_.depth < 1) throw ConfigError("quantizer: depth must be >= 1");
  if (config_.codebook_size < 2) throw ConfigError("quantizer: codebook_size must be >= 2");
  if (config_.beta < 0.0) throw ConfigError("quantizer: beta must be >= 0");

  xb_dim_ = schema.xb_dim();
  if (config_.mode == QuantizerMode::Implicit) {
    if (config_.code_dim != 0 && static_cast<std::size_t>(config_.code_dim) != xb_dim_) {
      throw ConfigError("quantizer: implicit mode requires code_dim = dim(x_b) = " +
                        std::to_string(xb_dim_));
    }
    z_ = xb_dim_;
  } else {
    z_ = config_.code_dim == 0 ? xb_dim_ : static_cast<std::size_t>(config_.code_dim);
    if (z_ < 1) throw ConfigError("quantizer: code_dim must be >= 1");

    level_slices_.resize(depth());
    level_slice_dims_.assign(depth(), 0);
    std::size_t xb_col = 0;
    for (std::size_t f = 0; f < schema.features.size(); ++f) {
      const auto& spec = schema.features[f];
      if (!spec.distribution_feature) continue;
      const std::size_t dim = static_cast<std::size_t>(spec.embedding_dim);
      if (spec.explicit_level > 0) {
        if (static_cast<std::size_t>(spec.explicit_level) > depth()) {
          throw ConfigError("quantizer: feature '" + spec.name + "' explicit_level " +
                            std::to_string(spec.explicit_level) + " exceeds depth " +
                            std::to_string(depth()));
        }
        const std::size_t level = static_cast<std::size_t>(spec.explicit_level) - 1;
        level_slices_[level].push_back(
            SliceRange{f, 0, static_cast<std::ptrdiff_t>(xb_col), dim});
        level_slice_dims_[level] += dim;
      }
      xb_col += dim;
    }
    for (std::size_t d = 0; d < depth(); ++d) {
      if (level_slices_[d].empty()) {
        throw ConfigError("quantizer: explicit mode level " + std::to_string(d + 1) +
                          " has no assigned features");
      }
      Matrix proj(level_slice_dims_[d], z_);
      init_glorot(proj, rng);
      projections_.push_back(std::move(proj));
    }
  }
}

Matrix Quantizer::gather_level_slice(const Matrix& xb, std::size_t level) const {
  Matrix slice(xb.rows(), level_slice_dims_[level]);
  std::size_t col = 0;
  for (const auto& range : level_slices_[level]) {
    const std::size_t src = static_cast<std::size_t>(range.xb_begin);
    for (std::size_t i = 0; i < xb.rows(); ++i) {
      for (std::size_t d = 0; d < range.dim; ++d) slice(i, col + d) = xb(i, src + d);
    }
    col += range.dim;
  }
  return slice;
}

void Quantizer::scatter_level_slice(Matrix& grad_xb, const Matrix& grad_slice,
                                    std::size_t level) const {
  std::size_t col = 0;
  for (const auto& range : level_slices_[level]) {
    const std::size_t dst = static_cast<std::size_t>(range.xb_begin);
    for (std::size_t i = 0; i < grad_xb.rows(); ++i) {
      for (std::size_t d = 0; d < range.dim; ++d) {
        grad_xb(i, dst + d) += grad_slice(i, col + d);
      }
    }
    col += range.dim;
  }
}

void Quantizer::initialize_from_batch(const Matrix& xb, Rng& rng) {
  const std::size_t n = xb.rows();
  const std::size_t k = static_cast<std::size_t>(config_.codebook_size);
  codebooks_.clear();

  auto seed_codebook = [&](const Matrix& inputs) {
    Matrix book(k, z_);
    if (n >= k) {
      for (std::size_t c = 0; c < k; ++c) {
        const std::size_t pick = static_cast<std::size_t>(rng.next_below(n));
        const auto src = inputs.row(pick);
        std::copy(src.begin(), src.end(), book.row(c).begin());
      }
    } else {
      init_normal(book, rng, 0.1);
    }
    if (config_.include_zero_code) {
      for (std::size_t j = 0; j < z_; ++j) book(0, j) = 0.0;
    }
    return book;
  };

  if (config_.mode == QuantizerMode::Implicit) {
    Matrix residual = xb;
    for (std::size_t d = 0; d < depth(); ++d) {
      codebooks_.push_back(seed_codebook(residual));
      const Matrix& book = codebooks_.back();
      for (std::size_t i = 0; i < n; ++i) {
        const std::int32_t code = vq_nearest(residual.row(i), book);
        const auto e = book.row(static_cast<std::size_t>(code));
        auto r = residual.row(i);
        for (std::size_t j = 0; j < z_; ++j) r[j] -= e[j];
      }
    }
  } else {
    for (std::size_t d = 0; d < depth(); ++d) {
      const Matrix inputs = matmul(gather_level_slice(xb, d), projections_[d]);
      codebooks_.push_back(seed_codebook(inputs));
    }
  }
  initialized_ = true;
}

void Quantizer::allocate_codebooks() {
  codebooks_.assign(depth(),
                    Matrix(static_cast<std::size_t>(config_.codebook_size), z_));
  initialized_ = true;
}

QuantizeOutput Quantizer::quantize(const Matrix& xb) const {
  if (!initialized_) throw UsageError("quantizer: codebooks not initialized");
  const std::size_t n = xb.rows();
  const bool implicit = config_.mode == QuantizerMode::Implicit;
  if (xb.cols() != xb_dim_) {
    throw ShapeError("quantizer: x_b has " + std::to_string(xb.cols()) +
                     " columns, expected " + std::to_string(xb_dim_));
  }

  QuantizeOutput out;
  out.batch = n;
  out.s_d = Matrix(n, z_);
  out.codes.assign(depth(), std::vector<std::int32_t>(n, 0));

  Matrix carry;
  if (implicit) carry = xb;
  for (std::size_t d = 0; d < depth(); ++d) {
    Matrix input;
    if (implicit) {
      input = std::move(carry);
    } else {
      Matrix slice = gather_level_slice(xb, d);
      input = matmul(slice, projections_[d]);
      out.level_slice_inputs.push_back(std::move(slice));
    }
    Matrix residual(n, z_);
    const Matrix& book = codebooks_[d];
    for (std::size_t i = 0; i < n; ++i) {
      const std::int32_t code = vq_nearest(input.row(i), book);
      distance_evals_ += static_cast<std::int64_t>(book.rows());
      out.codes[d][i] = code;
      const auto e = book.row(static_cast<std::size_t>(code));
      auto s = out.s_d.row(i);
      for (std::size_t j = 0; j < z_; ++j) {
        residual(i, j) = input(i, j) - e[j];
        s[j] += e[j];
      }
    }
    if (implicit) carry = residual;
    out.level_inputs.push_back(std::move(input));
    out.level_residuals.push_back(std::move(residual));
  }
  out.l_rq = rq_loss(out, config_.beta);
  return out;
}

double rq_loss(const QuantizeOutput& out, double beta) {
  if (out.batch == 0) return 0.0;
  double ssq = 0.0;
  for (const auto& residual : out.level_residuals) {
    for (double v : residual.data()) ssq += v * v;
  }
  return (1.0 + beta) * ssq / static_cast<double>(out.batch);
}

RqBackwardResult Quantizer::backward(const QuantizeOutput& out, const Matrix& grad_sd,
                                     double alpha) const {
  const std::size_t n = out.batch;
  if (grad_sd.rows() != n || grad_sd.cols() != z_) {
    throw ShapeError("rq backward: grad_sd shape mismatch");
  }
  const bool implicit = config_.mode == QuantizerMode::Implicit;
  const double inv_n = 1.0 / static_cast<double>(n);
  const double scale_book = 2.0 * alpha * inv_n;
  const double scale_commit = 2.0 * alpha * config_.beta * inv_n;

  RqBackwardResult res;
  res.codebook_grads.assign(depth(),
                            Matrix(static_cast<std::size_t>(config_.codebook_size), z_));

  if (implicit) {
    // Straight-through: the task gradient at s_D passes to x_b as identity.
    // The commitment term is chained back through the residual recursion, so
    // a level-d row also collects commitment gradients from all deeper levels.
    res.grad_xb = grad_sd;
    if (alpha != 0.0) {
      std::vector<double> suffix(z_);
      for (std::size_t i = 0; i < n; ++i) {
        suffix.assign(z_, 0.0);
        for (std::size_t d = depth(); d-- > 0;) {
          const auto code = static_cast<std::size_t>(out.codes[d][i]);
          auto grad_row = res.codebook_grads[d].row(code);
          const auto r = out.level_residuals[d].row(i);
          for (std::size_t j = 0; j < z_; ++j) {
            grad_row[j] += -scale_book * r[j] - scale_commit * suffix[j];
            suffix[j] += r[j];
          }
        }
        auto gx = res.grad_xb.row(i);
        for (std::size_t j = 0; j < z_; ++j) gx[j] += scale_commit * suffix[j];
      }
    }
  } else {
    if (out.level_slice_inputs.size() != depth()) {
      throw UsageError("rq backward: quantize output lacks slice inputs");
    }
    res.grad_xb = Matrix(n, xb_dim_);
    res.projection_grads.reserve(depth());
    for (std::size_t d = 0; d < depth(); ++d) {
      // Levels are quantized independently; each level input receives the
      // task gradient as identity plus its own commitment gradient, then the
      // sum is chained through the level projection.
      Matrix arriving = grad_sd;
      if (alpha != 0.0) {
        add_scaled(arriving, out.level_residuals[d], scale_commit);
        for (std::size_t i = 0; i < n; ++i) {
          const auto code = static_cast<std::size_t>(out.codes[d][i]);
          auto grad_row = res.codebook_grads[d].row(code);
          const auto r = out.level_residuals[d].row(i);
          for (std::size_t j = 0; j < z_; ++j) grad_row[j] += -scale_book * r[j];
        }
      }
      res.projection_grads.push_back(matmul_atb(out.level_slice_inputs[d], arriving));
      const Matrix grad_slice = matmul_abt(arriving, projections_[d]);
      scatter_level_slice(res.grad_xb, grad_slice, d);
    }
  }

  if (config_.include_zero_code) {
    for (auto& grads : res.codebook_grads) {
      for (std::size_t j = 0; j < z_; ++j) grads(0, j) = 0.0;
    }
  }
  return res;
}

FrozenQuantization Quantizer::freeze(const QuantizeOutput& out, const Matrix& xb) const {
  FrozenQuantization frozen;
  frozen.codes = out.codes;
  frozen.term1_targets = out.level_inputs;
  const std::size_t n = out.batch;
  frozen.term2_codewords.reserve(depth());
  for (std::size_t d = 0; d < depth(); ++d) {
    Matrix words(n, z_);
    for (std::size_t i = 0; i < n; ++i) {
      const auto e = codebooks_[d].row(static_cast<std::size_t>(out.codes[d][i]));
      std::copy(e.begin(), e.end(), words.row(i).begin());
    }
    frozen.term2_codewords.push_back(std::move(words));
  }
  frozen.gate_offset = out.s_d;
  if (config_.mode == QuantizerMode::Implicit) {
    add_scaled(frozen.gate_offset, xb, -1.0);
  } else {
    for (const auto& input : out.level_inputs) {
      add_scaled(frozen.gate_offset, input, -1.0);
    }
  }
  return frozen;
}

Quantizer::FrozenForward Quantizer::forward_frozen(const Matrix& xb,
                                                   const FrozenQuantization& frozen,
                                                   bool check_flips) const {
  const std::size_t n = xb.rows();
  const bool implicit = config_.mode == QuantizerMode::Implicit;
  FrozenForward fwd;
  double term1 = 0.0;
  double term2 = 0.0;

  Matrix gate = implicit ? xb : Matrix(n, z_);
  Matrix carry;
  if (implicit) carry = xb;
  for (std::size_t d = 0; d < depth(); ++d) {
    const Matrix input =
        implicit ? carry : matmul(gather_level_slice(xb, d), projections_[d]);
    const Matrix& book = codebooks_[d];
    if (implicit) carry = Matrix(n, z_);
    for (std::size_t i = 0; i < n; ++i) {
      const auto code = static_cast<std::size_t>(frozen.codes[d][i]);
      if (check_flips && vq_nearest(input.row(i), book) != frozen.codes[d][i]) {
        fwd.code_flip = true;
      }
      const auto e = book.row(code);
      const auto in = input.row(i);
      term1 += squared_distance(e, frozen.term1_targets[d].row(i));
      term2 += squared_distance(frozen.term2_codewords[d].row(i), in);
      if (implicit) {
        auto next = carry.row(i);
        for (std::size_t j = 0; j < z_; ++j) next[j] = in[j] - e[j];
      } else {
        auto g = gate.row(i);
        for (std::size_t j = 0; j < z_; ++j) g[j] += in[j];
      }
    }
  }
  add_scaled(gate, frozen.gate_offset, 1.0);
  fwd.gate_input = std::move(gate);
  fwd.l_rq = (term1 + config_.beta * term2) / static_cast<double>(n);
  return fwd;
}

std::size_t Quantizer::restart_dead_codes(const UsageStats& usage,
                                          const QuantizeOutput& batch_out, Rng& rng) {
  if (!initialized_ || batch_out.batch == 0) return 0;
  std::size_t restarted = 0;
  const std::size_t first = config_.include_zero_code ? 1 : 0;
  for (std::size_t d = 0; d < depth(); ++d) {
    const auto& hist = usage.histogram(d);
    const Matrix& inputs = batch_out.level_inputs[d];
    for (std::size_t c = first; c < codebooks_[d].rows(); ++c) {
      if (hist[c] != 0) continue;
      const std::size_t pick = static_cast<std::size_t>(rng.next_below(batch_out.batch));
      const auto src = inputs.row(pick);
      std::copy(src.begin(), src.end(), codebooks_[d].row(c).begin());
      ++restarted;
    }
  }
  return restarted;
}

}  // namespace hmdn
