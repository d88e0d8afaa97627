#pragma once

// Selective-scan state-space layers: the 1D recurrence, its four-direction
// 2D cross-scan, and the VSS block built around them.
//
// Recurrence per channel c and state s, with h_0 = 0:
//   h_t = exp(delta_t A) * h_{t-1} + delta_t B_t u_t
//   y_t = <C_t, h_t> + D u_t

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "contrast/ffn.hpp"
#include "contrast/nn.hpp"

namespace contrast {

enum class ScanDirection { row_forward = 0, row_backward = 1, col_forward = 2, col_backward = 3 };

inline constexpr std::array<ScanDirection, 4> kScanDirections{ScanDirection::row_forward, ScanDirection::row_backward,
                                                              ScanDirection::col_forward, ScanDirection::col_backward};

// Position in row-major spatial order visited at step t of a traversal.
std::int64_t scan_position(ScanDirection dir, std::int64_t t, std::int64_t h, std::int64_t w);

// Initialization constants of the delta/A parameterization.
struct SsmInitConstants {
  double dt_min = 1e-3;
  double dt_max = 1e-1;
  double dt_floor = 1e-4;
  double d_skip = 1.0;
};

struct SelectiveScanParams {
  Tensor A_log;   // [inner, state]; A = -exp(A_log)
  Tensor D_skip;  // [inner]
  std::int64_t dt_rank = 1;
  LinearParams delta_proj;  // dt_rank -> inner, with bias
  LinearParams x_proj;      // inner -> dt_rank + 2 state, no bias
};

struct Ss2dParams {
  LinearParams in_proj;
  LinearParams gate_proj;  // weight undefined when the block is ungated
  Conv2dParams dwconv;
  std::array<SelectiveScanParams, 4> directions;
  LayerNormParams out_norm;
  LinearParams out_proj;

  bool gated() const { return gate_proj.weight.defined(); }
};

struct Ss2dDims {
  std::int64_t channels = 1;
  std::int64_t inner = 1;
  std::int64_t state = 1;
  std::int64_t dt_rank = 1;
  bool gated = false;
};

struct VssBlockParams {
  LayerNormParams norm1;
  Ss2dParams ss2d;
  std::optional<CabParams> cab;
  LayerNormParams norm2;
  FeedForwardParams ffn;
};

Ss2dParams init_ss2d(Rng& rng, const Ss2dDims& dims, const SsmInitConstants& k = {});
void register_params(ParamRegistry& reg, const std::string& prefix, const Ss2dParams& p);
void register_params(ParamRegistry& reg, const std::string& prefix, const VssBlockParams& p);

/// u, delta: [b, L, C]; A: [C, S]; B, C: [b, L, S]; D: [C] -> [b, L, C].
/// Differentiable in every argument.
Tensor selective_scan(const Tensor& u, const Tensor& delta, const Tensor& A, const Tensor& B, const Tensor& C,
                      const Tensor& D);

// [b, C, H, W] -> [b, 4, H*W, C], one sequence per ScanDirection.
Tensor cross_scan(const Tensor& x);
// Adjoint of cross_scan: maps each sequence back to spatial order and sums.
Tensor cross_merge(const Tensor& y, std::int64_t h, std::int64_t w);

Tensor ss2d_tokens(const Tensor& tokens, std::int64_t h, std::int64_t w, const Ss2dParams& p);
Tensor ss2d_forward(const Tensor& x, const Ss2dParams& p);

// r = x + ss2d(norm1(x)) [+ 0.01 cab(norm1(x))]; out = r + ffn(norm2(r)).
Tensor vss_block_tokens(const Tensor& tokens, std::int64_t h, std::int64_t w, const VssBlockParams& p);
Tensor vss_block(const Tensor& x, const VssBlockParams& p);

}  // namespace contrast
