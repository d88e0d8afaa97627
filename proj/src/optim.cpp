#include "contrast/optim.hpp"

#include <cmath>

#include "contrast/errors.hpp"

namespace contrast {

AdamState init_adam(const ParamRegistry& params) {
  AdamState s;
  for (const auto& [name, t] : params.entries()) {
    s.m.emplace_back(static_cast<std::size_t>(t.numel()), 0.0);
    s.v.emplace_back(static_cast<std::size_t>(t.numel()), 0.0);
  }
  return s;
}

void adam_step(const ParamRegistry& params, AdamState& state, double lr, const AdamConfig& cfg) {
  const auto& entries = params.entries();
  if (state.m.size() != entries.size() || state.v.size() != entries.size())
    throw ContractError("adam_step: optimizer state does not match parameter registry");
  for (const auto& [name, t] : entries)
    if (!t.has_grad()) throw ContractError("adam_step: parameter '" + name + "' has no gradient");

  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Tensor p = entries[i].second;
    auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != w.size() || v.size() != w.size())
      throw ContractError("adam_step: moment size mismatch for '" + entries[i].first + "'");
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      const double mhat = m[k] / bc1, vhat = v[k] / bc2;
      w[k] -= lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
}

}  // namespace contrast
