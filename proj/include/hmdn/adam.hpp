#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hmdn/matrix.hpp"

namespace hmdn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Per-parameter-block Adam buffers. Moments are shaped like the parameters;
/// t counts applied steps.
struct AdamState {
  Matrix m;
  Matrix v;
  std::int64_t t = 0;
  AdamConfig config;
};

/// One bias-corrected Adam step on the whole block. Throws NumericError when
/// the gradient contains non-finite values, naming the block.
void adam_step(AdamState& state, Matrix& params, const Matrix& grads,
               const std::string& block_name);

/// Sparse variant: only the listed rows have their moments and values
/// updated; every other row (and its Adam state) is left untouched.
void adam_step_rows(AdamState& state, Matrix& params,
                    const std::map<std::int32_t, std::vector<double>>& row_grads,
                    const std::string& block_name);

/// Keyed collection of AdamStates, lazily created per block.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig config) : config_(config) {}

  void step(const std::string& name, Matrix& params, const Matrix& grads);
  void step_rows(const std::string& name, Matrix& params,
                 const std::map<std::int32_t, std::vector<double>>& row_grads);

  const AdamConfig& config() const { return config_; }

 private:
  AdamState& state_for(const std::string& name, const Matrix& params);

  AdamConfig config_;
  std::map<std::string, AdamState> states_;
};

}  // namespace hmdn
