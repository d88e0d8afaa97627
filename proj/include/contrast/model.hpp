#pragma once

// The full network: shallow 3x3 conv, N1 residual groups of (N2 VSS blocks,
// one OCAB, a 3x3 conv, skip), a trailing conv with a long skip, and a
// pixel-shuffle reconstruction head.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "contrast/attention.hpp"
#include "contrast/ffn.hpp"
#include "contrast/nn.hpp"
#include "contrast/ssm.hpp"

namespace contrast {

struct ModelConfig {
  std::string name = "custom";
  std::int64_t scale = 4;
  std::int64_t embed_dim = 210;
  std::int64_t num_groups = 6;        // N1
  std::int64_t blocks_per_group = 6;  // N2
  std::int64_t window = 32;
  double overlap_ratio = 0.5;
  std::int64_t num_heads = 6;
  double mlp_ratio = 2.0;
  std::int64_t ssm_state_dim = 1;
  double ssm_ratio = 1.0;
  std::int64_t dt_rank = 0;  // 0 selects ceil(C / 16)
  bool use_cab = false;
  FfnKind ffn_kind = FfnKind::sgfn;
  // SS2D output gate silu(W_z x). Off in the presets.
  bool ss2d_gated = false;
  // Width of the reconstruction head. 0 runs the shuffle stages at C
  // channels with no pre-conv; otherwise conv C -> F + LeakyReLU first.
  std::int64_t upsample_features = 64;

  std::int64_t inner_dim() const;
  std::int64_t ffn_hidden() const;
  std::int64_t resolved_dt_rank() const;
  std::int64_t overlap_window() const;
  std::int64_t head_features() const { return upsample_features > 0 ? upsample_features : embed_dim; }
  void validate() const;  // ConfigError on any violated invariant

  bool operator==(const ModelConfig&) const = default;
};

/// Named presets: "contrast", "contrast-s", "tiny". ConfigError otherwise.
ModelConfig model_preset(std::string_view name);
std::vector<std::string> model_preset_names();

std::string ffn_kind_name(FfnKind k);
FfnKind parse_ffn_kind(std::string_view s);

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

/// Shuffle factors applied in order: 2 -> {2}, 3 -> {3}, 4 -> {2, 2}.
std::vector<std::int64_t> upsample_factors(std::int64_t scale);

inline constexpr std::array<double, 3> kRgbMean{0.4488, 0.4371, 0.4040};

struct ResidualGroupParams {
  std::vector<VssBlockParams> blocks;
  OcabParams ocab;
  Conv2dParams conv;
};

struct ReconstructParams {
  std::optional<Conv2dParams> pre;  // present when upsample_features > 0
  std::vector<std::int64_t> factors;
  std::vector<Conv2dParams> stages;  // F -> F r^2 each
  Conv2dParams last;                 // F -> 3
};

struct ModelParams {
  Conv2dParams shallow;
  std::vector<ResidualGroupParams> groups;
  Conv2dParams body_conv;
  ReconstructParams head;
};

ModelParams init_model_params(Rng& rng, const ModelConfig& cfg);
void register_params(ParamRegistry& reg, const ModelParams& p);

Tensor shallow_extract(const Tensor& lr, const Conv2dParams& conv);
Tensor residual_group(const Tensor& f, const ResidualGroupParams& p);
/// Reflect-pads F_S to a multiple of `window`, runs the groups and the
/// trailing conv, crops back and adds F_S.
Tensor deep_extract(const Tensor& fs, const std::vector<ResidualGroupParams>& groups, const Conv2dParams& body_conv,
                    std::int64_t window);
Tensor reconstruct(const Tensor& fd, const ReconstructParams& p);

class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  const ModelParams& parts() const { return params_; }
  ModelParams& parts() { return params_; }
  const ParamRegistry& params() const { return registry_; }

  /// (b, 3, h, w) in [0, 1] -> (b, 3, scale h, scale w). Any h, w.
  Tensor forward(const Tensor& lr) const;

 private:
  ModelConfig cfg_;
  ModelParams params_;
  ParamRegistry registry_;
};

// Analytic accounting, derived from the config alone.
std::int64_t count_params(const ModelConfig& cfg);

struct FlopBreakdown {
  std::int64_t conv_macs = 0;
  std::int64_t linear_macs = 0;
  std::int64_t attention_macs = 0;
  std::int64_t scan_macs = 0;

  std::int64_t total_macs() const { return conv_macs + linear_macs + attention_macs + scan_macs; }
  std::int64_t flops() const { return 2 * total_macs(); }
};

/// MAC-based count (FLOPs = 2 MACs) for an output of out_h x out_w.
/// Normalization, activations and softmax are not counted.
FlopBreakdown flop_breakdown(const ModelConfig& cfg, std::int64_t out_h, std::int64_t out_w);
std::int64_t count_flops(const ModelConfig& cfg, std::int64_t out_h, std::int64_t out_w);

}  // namespace contrast
