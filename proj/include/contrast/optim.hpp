#pragma once

#include <cstdint>
#include <vector>

#include "contrast/nn.hpp"

namespace contrast {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;
};

// Moments are stored in registry order, one buffer per parameter.
struct AdamState {
  std::int64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

AdamState init_adam(const ParamRegistry& params);

/// One bias-corrected Adam update from the gradients currently held by the
/// parameters. Throws ContractError if a parameter has no gradient buffer or
/// the state does not match the registry layout.
void adam_step(const ParamRegistry& params, AdamState& state, double lr, const AdamConfig& cfg = {});

}  // namespace contrast
