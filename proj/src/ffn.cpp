#include "contrast/ffn.hpp"

#include <algorithm>

#include "contrast/ops.hpp"

namespace contrast {

SgfnParams init_sgfn(Rng& rng, std::int64_t channels, std::int64_t hidden) {
  if (hidden % 2 != 0) throw ConfigError("SGFN hidden width must be even, got " + std::to_string(hidden));
  SgfnParams p;
  p.fc1 = init::linear(rng, channels, hidden);
  p.dwconv = init::conv2d(rng, hidden / 2, hidden / 2, 3, hidden / 2);
  p.fc2 = init::linear(rng, hidden / 2, channels);
  return p;
}

MlpParams init_mlp(Rng& rng, std::int64_t channels, std::int64_t hidden) {
  return {init::linear(rng, channels, hidden), init::linear(rng, hidden, channels)};
}

FeedForwardParams init_ffn(Rng& rng, FfnKind kind, std::int64_t channels, std::int64_t hidden) {
  FeedForwardParams p;
  p.kind = kind;
  if (kind == FfnKind::sgfn)
    p.sgfn = init_sgfn(rng, channels, hidden);
  else
    p.mlp = init_mlp(rng, channels, hidden);
  return p;
}

CabParams init_cab(Rng& rng, std::int64_t channels) {
  const auto mid = std::max<std::int64_t>(1, channels / kCabCompressRatio);
  const auto sq = std::max<std::int64_t>(1, channels / kCabSqueezeFactor);
  CabParams p;
  p.conv1 = init::conv2d(rng, channels, mid, 3);
  p.conv2 = init::conv2d(rng, mid, channels, 3);
  p.squeeze = init::conv2d(rng, channels, sq, 1);
  p.excite = init::conv2d(rng, sq, channels, 1);
  return p;
}

void register_params(ParamRegistry& reg, const std::string& prefix, const FeedForwardParams& p) {
  if (p.kind == FfnKind::sgfn) {
    register_params(reg, prefix + ".fc1", p.sgfn.fc1);
    register_params(reg, prefix + ".dwconv", p.sgfn.dwconv);
    register_params(reg, prefix + ".fc2", p.sgfn.fc2);
  } else {
    register_params(reg, prefix + ".fc1", p.mlp.fc1);
    register_params(reg, prefix + ".fc2", p.mlp.fc2);
  }
}

void register_params(ParamRegistry& reg, const std::string& prefix, const CabParams& p) {
  register_params(reg, prefix + ".conv1", p.conv1);
  register_params(reg, prefix + ".conv2", p.conv2);
  register_params(reg, prefix + ".squeeze", p.squeeze);
  register_params(reg, prefix + ".excite", p.excite);
}

Tensor sgfn_tokens(const Tensor& tokens, std::int64_t h, std::int64_t w, const SgfnParams& p) {
  auto hidden = gelu(linear(tokens, p.fc1));
  const auto half = hidden.dim(-1) / 2;
  auto x1 = narrow(hidden, -1, 0, half);
  auto x2 = narrow(hidden, -1, half, half);
  auto gate = to_tokens(conv2d(from_tokens(x2, h, w), p.dwconv));
  return linear(mul(x1, gate), p.fc2);
}

Tensor mlp_tokens(const Tensor& tokens, const MlpParams& p) { return linear(gelu(linear(tokens, p.fc1)), p.fc2); }

Tensor ffn_tokens(const Tensor& tokens, std::int64_t h, std::int64_t w, const FeedForwardParams& p) {
  return p.kind == FfnKind::sgfn ? sgfn_tokens(tokens, h, w, p.sgfn) : mlp_tokens(tokens, p.mlp);
}

Tensor sgfn_forward(const Tensor& x, const SgfnParams& p) {
  if (x.rank() != 4) throw ShapeError("sgfn_forward expects NCHW");
  const auto h = x.dim(2), w = x.dim(3);
  return from_tokens(sgfn_tokens(to_tokens(x), h, w, p), h, w);
}

Tensor cab_forward(const Tensor& x, const CabParams& p) {
  auto f = conv2d(gelu(conv2d(x, p.conv1)), p.conv2);
  auto pooled = mean(f, {2, 3}, true);
  auto attn = sigmoid(conv2d(relu(conv2d(pooled, p.squeeze)), p.excite));
  return mul(f, attn);
}

}  // namespace contrast
