#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "contrast/nn.hpp"
#include "contrast/ops.hpp"
#include "contrast/tensor.hpp"

namespace contrast::testing {

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "input[i]" of the worst entry
  std::size_t checked = 0;
};

// Central differences (step h) against the analytic gradient of a scalar
// loss. Relative error uses max(|a|, |n|, 1e-6 max(1, |loss|)) as the
// denominator.
// `max_per_input` > 0 checks an evenly spaced subset of each input.
GradcheckResult gradcheck(const std::function<Tensor()>& loss, const std::vector<Tensor>& inputs, double h = 1e-4,
                          std::size_t max_per_input = 0);

// sum(f(x) * R) with a fixed random R, so every output entry matters.
std::function<Tensor()> weighted_sum(std::function<Tensor()> f, std::uint64_t seed = 99);

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0, bool requires_grad = true);
// Overwrites every parameter with uniform values in [lo, hi].
void randomize(const ParamRegistry& reg, std::mt19937_64& rng, double lo = -0.5, double hi = 0.5);
std::vector<Tensor> tensors_of(const ParamRegistry& reg);

double max_abs_diff(std::span<const double> a, std::span<const double> b);

}  // namespace contrast::testing
