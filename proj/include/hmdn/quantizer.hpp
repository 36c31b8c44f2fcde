#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hmdn/embedding.hpp"
#include "hmdn/matrix.hpp"
#include "hmdn/rng.hpp"

namespace hmdn {

enum class QuantizerMode { Implicit, Explicit };

struct QuantizerConfig {
  std::int32_t depth = 6;           // number of codebook levels
  std::int32_t codebook_size = 64;  // rows per level
  std::int32_t code_dim = 0;        // 0 = derive from the schema (dim of x_b)
  QuantizerMode mode = QuantizerMode::Implicit;
  double beta = 0.25;               // commitment weight
  bool include_zero_code = false;   // freeze row 0 of every level at zero
  std::int64_t restart_dead_codes_every = 0;  // steps; 0 = never
};

/// Per-example result of quantizing a batch of x_b rows.
///
/// level_inputs[d] is the vector presented to the level-(d+1) codebook: the
/// running residual in implicit mode, the projected feature slice in
/// explicit mode. level_residuals[d] is that input minus the selected row.
struct QuantizeOutput {
  std::vector<std::vector<std::int32_t>> codes;  // [level][example]
  Matrix s_d;                                    // batch x z, sum of selected rows
  std::vector<Matrix> level_inputs;              // [level] batch x z
  std::vector<Matrix> level_residuals;           // [level] batch x z
  std::vector<Matrix> level_slice_inputs;        // explicit mode: raw gathered slices
  double l_rq = 0.0;                             // batch-mean quantization loss
  std::size_t batch = 0;
};

struct RqBackwardResult {
  Matrix grad_xb;                        // batch x dim(x_b)
  std::vector<Matrix> codebook_grads;    // [level] K x z
  std::vector<Matrix> projection_grads;  // explicit mode only, [level] slice_dim x z
};

/// Snapshot of everything the stop-gradient operator holds constant, used to
/// turn one quantized forward pass into a smooth closure for finite
/// differences: code assignments, the per-level targets of both loss terms,
/// and the gate-input offset that realizes the straight-through estimator.
struct FrozenQuantization {
  std::vector<std::vector<std::int32_t>> codes;
  std::vector<Matrix> term1_targets;    // sg[x_b^(d)] captured per level
  std::vector<Matrix> term2_codewords;  // sg[e(c_d)] captured per level
  Matrix gate_offset;                   // s_D minus the straight-through base
};

/// Nearest codebook row by squared distance, lowest index on ties.
std::int32_t vq_nearest(std::span<const double> s, const Matrix& codebook);

/// Per-level code usage over any number of batches.
class UsageStats {
 public:
  UsageStats(std::size_t depth, std::size_t codebook_size)
      : counts_(depth, std::vector<std::int64_t>(codebook_size, 0)) {}

  void add(const QuantizeOutput& out);
  void reset();

  const std::vector<std::int64_t>& histogram(std::size_t level) const {
    return counts_[level];
  }
  std::int64_t total(std::size_t level) const;
  /// Shannon entropy of the empirical code distribution, in nats.
  double entropy(std::size_t level) const;
  std::size_t dead_codes(std::size_t level) const;
  std::size_t depth() const { return counts_.size(); }

 private:
  std::vector<std::vector<std::int64_t>> counts_;
};

/// Residual-quantization state: one codebook per level plus, in explicit
/// mode, one linear projection per level mapping that level's feature slice
/// into the shared code space.
class Quantizer {
 public:
  /// Validates the config against the schema, resolves z, and in explicit
  /// mode resolves per-level feature slices and initializes projections.
  /// Codebooks stay empty until initialize_from_batch or a checkpoint load.
  Quantizer(const QuantizerConfig& config, const FeatureSchema& schema, Rng& rng);

  const QuantizerConfig& config() const { return config_; }
  std::size_t z() const { return z_; }
  std::size_t depth() const { return static_cast<std::size_t>(config_.depth); }
  bool initialized() const { return initialized_; }
  void mark_initialized() { initialized_ = true; }

  std::vector<Matrix>& codebooks() { return codebooks_; }
  const std::vector<Matrix>& codebooks() const { return codebooks_; }
  std::vector<Matrix>& projections() { return projections_; }
  const std::vector<Matrix>& projections() const { return projections_; }

  /// Seed codebook rows from the first batch's per-level inputs (sampling
  /// with replacement), falling back to N(0, 0.1^2) when the batch is
  /// smaller than the codebook.
  void initialize_from_batch(const Matrix& xb, Rng& rng);

  /// Allocate zero codebooks and mark the quantizer initialized; used when
  /// restoring parameters from a checkpoint.
  void allocate_codebooks();

  QuantizeOutput quantize(const Matrix& xb) const;

  /// Straight-through backward. grad_sd is the task-loss gradient at s_D;
  /// alpha scales the quantization loss. The returned grad_xb carries the
  /// identity pass-through plus the commitment route; codebook rows receive
  /// the codebook-loss route only (frozen zero rows receive nothing).
  RqBackwardResult backward(const QuantizeOutput& out, const Matrix& grad_sd,
                            double alpha) const;

  FrozenQuantization freeze(const QuantizeOutput& out, const Matrix& xb) const;

  /// Recompute the loss and gate input under frozen code assignments and
  /// captured stop-gradient values; used by the finite-difference checker.
  /// With check_flips set, also reports whether any current nearest-neighbor
  /// assignment deviates from the frozen one.
  struct FrozenForward {
    Matrix gate_input;
    double l_rq = 0.0;
    bool code_flip = false;
  };
  FrozenForward forward_frozen(const Matrix& xb, const FrozenQuantization& frozen,
                               bool check_flips) const;

  /// Re-seed rows that `usage` reports unused, drawing from the current
  /// batch's level inputs. Returns the number of rows re-seeded.
  std::size_t restart_dead_codes(const UsageStats& usage, const QuantizeOutput& batch_out,
                                 Rng& rng);

  std::int64_t distance_evals() const { return distance_evals_; }

  const std::vector<std::vector<SliceRange>>& level_slices() const {
    return level_slices_;
  }
  std::size_t level_slice_dim(std::size_t level) const {
    return level_slice_dims_[level];
  }

 private:
  Matrix gather_level_slice(const Matrix& xb, std::size_t level) const;
  void scatter_level_slice(Matrix& grad_xb, const Matrix& grad_slice,
                           std::size_t level) const;

  QuantizerConfig config_;
  std::size_t z_ = 0;
  std::size_t xb_dim_ = 0;
  std::vector<Matrix> codebooks_;
  std::vector<Matrix> projections_;
  std::vector<std::vector<SliceRange>> level_slices_;  // explicit mode, per level
  std::vector<std::size_t> level_slice_dims_;
  bool initialized_ = false;
  mutable std::int64_t distance_evals_ = 0;
};

/// Batch-mean quantization loss recomputed from a quantize output: the
/// codebook term plus beta times the commitment term. Both terms share the
/// same value and differ only in which side the gradient reaches.
double rq_loss(const QuantizeOutput& out, double beta);

}  // namespace hmdn
