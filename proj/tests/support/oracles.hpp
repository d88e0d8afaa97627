#pragma once

// Loop-level reference implementations used as test oracles. They work on
// flat vectors and read parameters straight out of the param structs; none
// of them call the library's differentiable ops.

#include <cstdint>
#include <vector>

#include "contrast/attention.hpp"
#include "contrast/data.hpp"
#include "contrast/ffn.hpp"
#include "contrast/ssm.hpp"

namespace contrast::testing::naive {

using Vec = std::vector<double>;
using i64 = std::int64_t;

Vec vec(const Tensor& t);

double gelu(double x);
double silu(double x);
double softplus(double x);
double sigmoid(double x);

Vec matmul(const Vec& a, const Vec& b, i64 m, i64 k, i64 n);
// x: [b, cin, h, w], w: [cout, cin/groups, k, k]; output extents via the
// usual formula.
Vec conv2d(const Vec& x, i64 b, i64 cin, i64 h, i64 w, const Vec& wt, const Vec* bias, i64 cout, i64 k, i64 stride,
           i64 pad, i64 groups);
Vec conv2d(const Vec& x, i64 b, i64 h, i64 w, const Conv2dParams& p);
// rows x in -> rows x out
Vec linear(const Vec& x, i64 rows, const LinearParams& p);
Vec layer_norm(const Vec& x, i64 rows, const LayerNormParams& p);

Vec to_tokens(const Vec& x, i64 b, i64 c, i64 h, i64 w);
Vec from_tokens(const Vec& t, i64 b, i64 c, i64 h, i64 w);

// h_t = exp(delta_t A) h_{t-1} + delta_t B_t u_t; y_t = <C_t, h_t> + D u_t.
Vec selective_scan(const Vec& u, const Vec& delta, const Vec& A, const Vec& B, const Vec& C, const Vec& D, i64 b, i64 L,
                   i64 ch, i64 S);

// Spatial index visited at step t of direction d (0 row, 1 row reversed,
// 2 column, 3 column reversed).
i64 traversal(int d, i64 t, i64 h, i64 w);

// Token-form blocks: tokens [b, h*w, C].
Vec sgfn(const Vec& tokens, i64 b, i64 h, i64 w, const SgfnParams& p);
Vec ffn(const Vec& tokens, i64 b, i64 h, i64 w, const FeedForwardParams& p);
Vec cab(const Vec& x_nchw, i64 b, i64 h, i64 w, const CabParams& p);
Vec ss2d(const Vec& tokens, i64 b, i64 h, i64 w, const Ss2dParams& p);
Vec vss_block(const Vec& tokens, i64 b, i64 h, i64 w, const VssBlockParams& p);
// Attention branch only, then the full block with residuals and FFN.
Vec ocab_branch(const Vec& tokens, i64 b, i64 h, i64 w, const OcabParams& p);
Vec ocab_block(const Vec& tokens, i64 b, i64 h, i64 w, const OcabParams& p);
// Non-overlapping windowed cross-attention written from scratch: K, V
// projected from the same M x M window as Q.
Vec plain_window_attention_branch(const Vec& tokens, i64 b, i64 h, i64 w, const OcabParams& p);

// Dense [out, in] resampling matrix of the widened cubic kernel (a = -0.5),
// built by walking every input tap with mirrored boundaries.
Vec bicubic_matrix(i64 in_len, i64 out_len);
// Rows first, then columns, then clamp to [0, 1].
ImagePlane bicubic_dense(const ImagePlane& img, i64 out_h, i64 out_w);

}  // namespace contrast::testing::naive
