#pragma once

// Overlapping cross-attention: queries come from non-overlapping M x M
// windows, keys and values from Mo x Mo patches centred on the same window
// (zero padded at the image border), so information crosses window borders.

#include <cstdint>
#include <string>
#include <vector>

#include "contrast/ffn.hpp"
#include "contrast/nn.hpp"

namespace contrast {

// Mo = M + 2 * round(overlap * M / 2); always M plus an even margin.
std::int64_t overlap_window_size(std::int64_t window, double overlap_ratio);

struct OcabParams {
  LayerNormParams norm1;
  LinearParams q_proj;
  LinearParams kv_proj;  // C -> 2C, keys first
  LinearParams out_proj;
  Tensor rel_pos_bias;  // [heads, (M + Mo - 1)^2]
  std::int64_t num_heads = 1;
  std::int64_t window = 1;
  std::int64_t overlap_window = 1;
  LayerNormParams norm2;
  FeedForwardParams ffn;
};

OcabParams init_ocab(Rng& rng, std::int64_t channels, std::int64_t num_heads, std::int64_t window, double overlap_ratio,
                     FfnKind ffn_kind, std::int64_t ffn_hidden);
void register_params(ParamRegistry& reg, const std::string& prefix, const OcabParams& p);

/// (b, C, H, W) -> (b * nw, Mo^2, C). Patch of window (wy, wx) covers rows
/// wy*M - (Mo-M)/2 .. + Mo, zero outside the image; window order matches
/// window_partition.
Tensor unfold_overlapping(const Tensor& x, std::int64_t window, std::int64_t overlap_window);

/// Bias-table index for each (query cell, key cell) pair, row-major over
/// [M^2, Mo^2]. Depends only on the spatial offset between the cells.
std::vector<std::int64_t> rel_bias_lookup(std::int64_t window, std::int64_t overlap_window);

/// Multi-head attention per window. q: [nw, Mq, C]; k, v: [nw, Mk, C];
/// bias: [heads, Mq, Mk] or undefined. Returns [nw, Mq, C].
Tensor windowed_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::int64_t num_heads, const Tensor& bias);

// Attention branch only (norm1 -> projections -> attention -> out_proj).
Tensor ocab_attention_branch(const Tensor& tokens, std::int64_t h, std::int64_t w, const OcabParams& p);
// Full block: attention branch plus residual, then norm2 + FFN plus residual.
Tensor ocab_block_tokens(const Tensor& tokens, std::int64_t h, std::int64_t w, const OcabParams& p);
Tensor ocab_attention(const Tensor& x, const OcabParams& p);

}  // namespace contrast
