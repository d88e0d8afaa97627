#pragma once

#include <cstdint>
#include <string>

#include "contrast/nn.hpp"

namespace contrast {

enum class FfnKind { sgfn, mlp };

// Spatial-gated feed-forward: fc1 (C -> C'), GELU, split channels in half,
// depthwise 3x3 conv on the second half gates the first, fc2 (C'/2 -> C).
struct SgfnParams {
  LinearParams fc1;
  Conv2dParams dwconv;
  LinearParams fc2;
};

struct MlpParams {
  LinearParams fc1;
  LinearParams fc2;
};

struct FeedForwardParams {
  FfnKind kind = FfnKind::sgfn;
  SgfnParams sgfn;
  MlpParams mlp;
};

// Channel attention block used by the use_cab ablation arm:
// conv3x3 (C -> C/3), GELU, conv3x3 (-> C), then squeeze-excite gating.
struct CabParams {
  Conv2dParams conv1;
  Conv2dParams conv2;
  Conv2dParams squeeze;
  Conv2dParams excite;
};

inline constexpr std::int64_t kCabCompressRatio = 3;
inline constexpr std::int64_t kCabSqueezeFactor = 30;
inline constexpr double kCabScale = 0.01;

SgfnParams init_sgfn(Rng& rng, std::int64_t channels, std::int64_t hidden);
MlpParams init_mlp(Rng& rng, std::int64_t channels, std::int64_t hidden);
FeedForwardParams init_ffn(Rng& rng, FfnKind kind, std::int64_t channels, std::int64_t hidden);
CabParams init_cab(Rng& rng, std::int64_t channels);

void register_params(ParamRegistry& reg, const std::string& prefix, const FeedForwardParams& p);
void register_params(ParamRegistry& reg, const std::string& prefix, const CabParams& p);

// Token form: (b, h*w, C) in and out.
Tensor sgfn_tokens(const Tensor& tokens, std::int64_t h, std::int64_t w, const SgfnParams& p);
Tensor mlp_tokens(const Tensor& tokens, const MlpParams& p);
Tensor ffn_tokens(const Tensor& tokens, std::int64_t h, std::int64_t w, const FeedForwardParams& p);

// Feature-map form: (b, C, H, W) in and out.
Tensor sgfn_forward(const Tensor& x, const SgfnParams& p);
Tensor cab_forward(const Tensor& x, const CabParams& p);

}  // namespace contrast
