#include "contrast/attention.hpp"

#include <cmath>

#include "contrast/ops.hpp"

namespace contrast {

std::int64_t overlap_window_size(std::int64_t window, double overlap_ratio) {
  if (overlap_ratio < 0.0 || overlap_ratio >= 1.0) throw ConfigError("overlap ratio must be in [0, 1)");
  return window + 2 * std::lround(overlap_ratio * static_cast<double>(window) / 2.0);
}

OcabParams init_ocab(Rng& rng, std::int64_t channels, std::int64_t num_heads, std::int64_t window, double overlap_ratio,
                     FfnKind ffn_kind, std::int64_t ffn_hidden) {
  if (num_heads <= 0 || channels % num_heads != 0)
    throw ConfigError("channels " + std::to_string(channels) + " not divisible by heads " + std::to_string(num_heads));
  OcabParams p;
  p.num_heads = num_heads;
  p.window = window;
  p.overlap_window = overlap_window_size(window, overlap_ratio);
  p.norm1 = init::layer_norm(channels);
  p.q_proj = init::linear(rng, channels, channels);
  p.kv_proj = init::linear(rng, channels, 2 * channels);
  p.out_proj = init::linear(rng, channels, channels);
  const auto span = window + p.overlap_window - 1;
  p.rel_pos_bias = init::trunc_normal({num_heads, span * span}, rng);
  p.norm2 = init::layer_norm(channels);
  p.ffn = init_ffn(rng, ffn_kind, channels, ffn_hidden);
  return p;
}

void register_params(ParamRegistry& reg, const std::string& prefix, const OcabParams& p) {
  register_params(reg, prefix + ".norm1", p.norm1);
  register_params(reg, prefix + ".q_proj", p.q_proj);
  register_params(reg, prefix + ".kv_proj", p.kv_proj);
  register_params(reg, prefix + ".out_proj", p.out_proj);
  reg.add(prefix + ".rel_pos_bias", p.rel_pos_bias);
  register_params(reg, prefix + ".norm2", p.norm2);
  register_params(reg, prefix + ".ffn", p.ffn);
}

Tensor unfold_overlapping(const Tensor& x, std::int64_t window, std::int64_t overlap_window) {
  if (x.rank() != 4) throw ShapeError("unfold_overlapping expects NCHW");
  const auto b = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), M = window, Mo = overlap_window;
  if (M <= 0 || H % M != 0 || W % M != 0)
    throw ShapeError("unfold_overlapping: " + shape_str(x.shape()) + " not divisible by window " + std::to_string(M));
  if (Mo < M || (Mo - M) % 2 != 0) throw ShapeError("overlap window must exceed window by an even margin");
  const auto pad = (Mo - M) / 2, nh = H / M, nw = W / M;
  auto map = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(b * nh * nw * Mo * Mo * C));
  std::int64_t f = 0;
  for (std::int64_t n = 0; n < b; ++n)
    for (std::int64_t wy = 0; wy < nh; ++wy)
      for (std::int64_t wx = 0; wx < nw; ++wx)
        for (std::int64_t ky = 0; ky < Mo; ++ky)
          for (std::int64_t kx = 0; kx < Mo; ++kx) {
            const auto iy = wy * M - pad + ky, ix = wx * M - pad + kx;
            const bool inside = iy >= 0 && iy < H && ix >= 0 && ix < W;
            for (std::int64_t c = 0; c < C; ++c) (*map)[f++] = inside ? ((n * C + c) * H + iy) * W + ix : -1;
          }
  auto src = x.data();
  std::vector<double> y(map->size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = (*map)[i] >= 0 ? src[(*map)[i]] : 0.0;
  return make_op_result("unfold_overlapping", {b * nh * nw, Mo * Mo, C}, std::move(y), {x},
                        [x, map](std::span<const double> g, std::span<const double>) {
                          auto gx = autograd::grad_sink(x);
                          if (gx.empty()) return;
                          for (std::size_t i = 0; i < g.size(); ++i)
                            if ((*map)[i] >= 0) gx[(*map)[i]] += g[i];
                        });
}

std::vector<std::int64_t> rel_bias_lookup(std::int64_t window, std::int64_t overlap_window) {
  const auto M = window, Mo = overlap_window, span = M + Mo - 1;
  std::vector<std::int64_t> idx(static_cast<std::size_t>(M * M * Mo * Mo));
  // Key cell k sits at spatial offset k - (Mo-M)/2 from the window origin, so
  // the shifted offset (k - pad) - q + pad + M - 1 = k - q + M - 1 is >= 0.
  for (std::int64_t qy = 0; qy < M; ++qy)
    for (std::int64_t qx = 0; qx < M; ++qx)
      for (std::int64_t ky = 0; ky < Mo; ++ky)
        for (std::int64_t kx = 0; kx < Mo; ++kx) {
          const auto dy = ky - qy + M - 1, dx = kx - qx + M - 1;
          idx[static_cast<std::size_t>(((qy * M + qx) * Mo + ky) * Mo + kx)] = dy * span + dx;
        }
  return idx;
}

namespace {
// [nw, T, C] -> [nw, heads, T, C/heads]
Tensor split_heads(const Tensor& t, std::int64_t heads) {
  const auto nw = t.dim(0), T = t.dim(1), C = t.dim(2);
  return permute(reshape(t, {nw, T, heads, C / heads}), {0, 2, 1, 3});
}
}  // namespace

Tensor windowed_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::int64_t num_heads, const Tensor& bias) {
  const auto nw = q.dim(0), Mq = q.dim(1), C = q.dim(2);
  if (k.shape() != v.shape() || k.dim(0) != nw || k.dim(2) != C) throw ShapeError("windowed_attention: q/k/v mismatch");
  if (C % num_heads != 0) throw ShapeError("windowed_attention: channels not divisible by heads");
  const auto head_dim = C / num_heads;
  auto qh = split_heads(q, num_heads), kh = split_heads(k, num_heads), vh = split_heads(v, num_heads);
  auto logits = scale(matmul(qh, transpose_last2(kh)), 1.0 / std::sqrt(static_cast<double>(head_dim)));
  if (bias.defined()) logits = add(logits, bias);
  auto attn = softmax_lastdim(logits);
  auto out = matmul(attn, vh);  // [nw, heads, Mq, hd]
  return reshape(permute(out, {0, 2, 1, 3}), {nw, Mq, C});
}

Tensor ocab_attention_branch(const Tensor& tokens, std::int64_t h, std::int64_t w, const OcabParams& p) {
  const auto b = tokens.dim(0), C = tokens.dim(2), M = p.window, Mo = p.overlap_window;
  auto normed = layer_norm(tokens, p.norm1);
  auto q = window_partition(from_tokens(linear(normed, p.q_proj), h, w), M);
  auto kv = unfold_overlapping(from_tokens(linear(normed, p.kv_proj), h, w), M, Mo);
  auto k = narrow(kv, -1, 0, C);
  auto v = narrow(kv, -1, C, C);
  auto bias = reshape(index_select(p.rel_pos_bias, 1, rel_bias_lookup(M, Mo)), {p.num_heads, M * M, Mo * Mo});
  auto attn = windowed_attention(q, k, v, p.num_heads, bias);
  auto merged = to_tokens(window_reverse(attn, M, b, h, w));
  return linear(merged, p.out_proj);
}

Tensor ocab_block_tokens(const Tensor& tokens, std::int64_t h, std::int64_t w, const OcabParams& p) {
  auto r = add(tokens, ocab_attention_branch(tokens, h, w, p));
  return add(r, ffn_tokens(layer_norm(r, p.norm2), h, w, p.ffn));
}

Tensor ocab_attention(const Tensor& x, const OcabParams& p) {
  if (x.rank() != 4) throw ShapeError("ocab_attention expects NCHW");
  const auto h = x.dim(2), w = x.dim(3);
  return from_tokens(ocab_block_tokens(to_tokens(x), h, w, p), h, w);
}

}  // namespace contrast
