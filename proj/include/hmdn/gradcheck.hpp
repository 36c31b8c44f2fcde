#pragma once

#include <functional>
#include <set>
#include <string>
#include <vector>

#include "hmdn/matrix.hpp"

namespace hmdn {

/// One loss evaluation under perturbed parameters. `excluded` marks
/// evaluations that crossed a quantizer decision boundary and must not be
/// used for a finite difference.
struct FdEval {
  double value = 0.0;
  bool excluded = false;
};

using LossFn = std::function<FdEval()>;

/// A named parameter block checked in place. `analytic_grad` must match the
/// block's shape. Rows in `frozen_rows` are not trainable and are skipped.
struct ParamBlockRef {
  std::string name;
  Matrix* params = nullptr;
  const Matrix* analytic_grad = nullptr;
  std::set<std::size_t> frozen_rows;
};

struct BlockReport {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t worst_row = 0;
  std::size_t worst_col = 0;
  std::size_t checked = 0;
  std::size_t excluded = 0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<BlockReport> blocks;
  double step = 0.0;
  double tolerance = 0.0;
  bool passed = true;
  double max_rel_err = 0.0;
  std::size_t excluded = 0;

  std::string summary() const;
};

/// Central-difference check of analytic gradients against `loss`, one
/// coordinate at a time. The closure must be deterministic: two evaluations
/// at the base point are compared bitwise and a mismatch is an error.
GradCheckReport grad_check(const LossFn& loss, std::vector<ParamBlockRef> blocks,
                           double step = 1e-5, double tolerance = 1e-4,
                           double denom_floor = 1e-6);

}  // namespace hmdn
