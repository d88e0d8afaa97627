#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "contrast/tensor.hpp"

namespace contrast {

using Rng = std::mt19937_64;

struct Conv2dParams {
  Tensor weight;  // [out_c, in_c / groups, kh, kw]
  Tensor bias;    // [out_c]; may be undefined
  std::int64_t stride = 1;
  std::int64_t padding = 0;
  std::int64_t groups = 1;

  std::int64_t out_channels() const { return weight.dim(0); }
  std::int64_t in_channels() const { return weight.dim(1) * groups; }
};

struct LinearParams {
  Tensor weight;  // [out_f, in_f]
  Tensor bias;    // [out_f]; undefined for bias-free projections

  std::int64_t in_features() const { return weight.dim(1); }
  std::int64_t out_features() const { return weight.dim(0); }
};

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;
  double epsilon = 1e-6;
};

// Ordered (name, tensor) list; order defines checkpoint and optimizer layout.
class ParamRegistry {
 public:
  void add(std::string name, const Tensor& t);
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::int64_t total_numel() const;
  const Tensor* find(const std::string& name) const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

void register_params(ParamRegistry& reg, const std::string& prefix, const Conv2dParams& p);
void register_params(ParamRegistry& reg, const std::string& prefix, const LinearParams& p);
void register_params(ParamRegistry& reg, const std::string& prefix, const LayerNormParams& p);

/// Cross-correlation with zero padding over NCHW input.
Tensor conv2d(const Tensor& x, const Conv2dParams& p);
/// x . W^T + b over the last axis.
Tensor linear(const Tensor& x, const LinearParams& p);
/// Normalizes the last axis: (x - mean) / sqrt(var + eps) * gamma + beta.
Tensor layer_norm(const Tensor& x, const LayerNormParams& p);

// (b, C r^2, H, W) -> (b, C, rH, rW); channel c*r^2 + i*r + j lands at (i, j).
Tensor pixel_shuffle(const Tensor& x, std::int64_t r);
Tensor pixel_unshuffle(const Tensor& x, std::int64_t r);

// (b, C, H, W) -> (b * H/M * W/M, M*M, C), windows in row-major order.
Tensor window_partition(const Tensor& x, std::int64_t window);
Tensor window_reverse(const Tensor& windows, std::int64_t window, std::int64_t batch, std::int64_t h, std::int64_t w);

namespace init {

inline constexpr double kWeightStd = 0.02;

// Normal(0, std) resampled outside +-2 std.
double trunc_normal_sample(Rng& rng, double stddev = kWeightStd);
Tensor trunc_normal(Shape shape, Rng& rng, double stddev = kWeightStd);

Conv2dParams conv2d(Rng& rng, std::int64_t in_c, std::int64_t out_c, std::int64_t kernel, std::int64_t groups = 1,
                    bool bias = true);
LinearParams linear(Rng& rng, std::int64_t in_f, std::int64_t out_f, bool bias = true);
LayerNormParams layer_norm(std::int64_t channels, double epsilon = 1e-6);

}  // namespace init

}  // namespace contrast
