#include "contrast/ssm.hpp"

#include <cmath>

#include "contrast/kernels.hpp"
#include "contrast/ops.hpp"

namespace contrast {

std::int64_t scan_position(ScanDirection dir, std::int64_t t, std::int64_t h, std::int64_t w) {
  const auto L = h * w;
  switch (dir) {
    case ScanDirection::row_forward: return t;
    case ScanDirection::row_backward: return L - 1 - t;
    case ScanDirection::col_forward: return (t % h) * w + t / h;
    case ScanDirection::col_backward: {
      const auto r = L - 1 - t;
      return (r % h) * w + r / h;
    }
  }
  return t;
}

Ss2dParams init_ss2d(Rng& rng, const Ss2dDims& d, const SsmInitConstants& k) {
  Ss2dParams p;
  p.in_proj = init::linear(rng, d.channels, d.inner);
  if (d.gated) p.gate_proj = init::linear(rng, d.channels, d.inner);
  p.dwconv = init::conv2d(rng, d.inner, d.inner, 3, d.inner);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (auto& dir : p.directions) {
    dir.dt_rank = d.dt_rank;
    dir.x_proj = init::linear(rng, d.inner, d.dt_rank + 2 * d.state, false);
    dir.delta_proj = init::linear(rng, d.dt_rank, d.inner, true);
    // softplus(bias) log-uniform in [dt_min, dt_max]
    auto bias = dir.delta_proj.bias.mutable_data();
    for (auto& b : bias) {
      double dt = std::exp(unif(rng) * (std::log(k.dt_max) - std::log(k.dt_min)) + std::log(k.dt_min));
      dt = std::max(dt, k.dt_floor);
      b = dt + std::log(-std::expm1(-dt));
    }
    std::vector<double> a_log(static_cast<std::size_t>(d.inner * d.state));
    for (std::int64_t c = 0; c < d.inner; ++c)
      for (std::int64_t s = 0; s < d.state; ++s) a_log[c * d.state + s] = std::log(static_cast<double>(s + 1));
    dir.A_log = Tensor({d.inner, d.state}, std::move(a_log), true);
    dir.D_skip = Tensor::full({d.inner}, k.d_skip, true);
  }
  p.out_norm = init::layer_norm(d.inner);
  p.out_proj = init::linear(rng, d.inner, d.channels);
  return p;
}

void register_params(ParamRegistry& reg, const std::string& prefix, const Ss2dParams& p) {
  register_params(reg, prefix + ".in_proj", p.in_proj);
  if (p.gated()) register_params(reg, prefix + ".gate_proj", p.gate_proj);
  register_params(reg, prefix + ".dwconv", p.dwconv);
  for (std::size_t d = 0; d < p.directions.size(); ++d) {
    const auto& dir = p.directions[d];
    const auto pre = prefix + ".dir" + std::to_string(d);
    reg.add(pre + ".A_log", dir.A_log);
    reg.add(pre + ".D", dir.D_skip);
    register_params(reg, pre + ".x_proj", dir.x_proj);
    register_params(reg, pre + ".delta_proj", dir.delta_proj);
  }
  register_params(reg, prefix + ".out_norm", p.out_norm);
  register_params(reg, prefix + ".out_proj", p.out_proj);
}

void register_params(ParamRegistry& reg, const std::string& prefix, const VssBlockParams& p) {
  register_params(reg, prefix + ".norm1", p.norm1);
  register_params(reg, prefix + ".ss2d", p.ss2d);
  if (p.cab) register_params(reg, prefix + ".cab", *p.cab);
  register_params(reg, prefix + ".norm2", p.norm2);
  register_params(reg, prefix + ".ffn", p.ffn);
}

Tensor selective_scan(const Tensor& u, const Tensor& delta, const Tensor& A, const Tensor& B, const Tensor& C,
                      const Tensor& D) {
  if (u.rank() != 3) throw ShapeError("selective_scan: u must be [b, L, C], got " + shape_str(u.shape()));
  kernels::ScanDims d{u.dim(0), u.dim(1), u.dim(2), A.rank() == 2 ? A.dim(1) : 0};
  if (delta.shape() != u.shape()) throw ShapeError("selective_scan: delta shape " + shape_str(delta.shape()));
  if (A.shape() != Shape{d.channels, d.state}) throw ShapeError("selective_scan: A shape " + shape_str(A.shape()));
  const Shape bc{d.batch, d.length, d.state};
  if (B.shape() != bc || C.shape() != bc) throw ShapeError("selective_scan: B/C must be " + shape_str(bc));
  if (D.shape() != Shape{d.channels}) throw ShapeError("selective_scan: D shape " + shape_str(D.shape()));

  std::vector<double> y(static_cast<std::size_t>(u.numel()));
  auto states = std::make_shared<std::vector<double>>(static_cast<std::size_t>(u.numel() * d.state));
  kernels::ScanForwardArgs fa{u.data().data(), delta.data().data(), A.data().data(), B.data().data(),
                              C.data().data(), D.data().data(), y.data(), states->data()};
  kernels::selective_scan_forward(d, fa);

  return make_op_result(
      "selective_scan", u.shape(), std::move(y), {u, delta, A, B, C, D},
      [d, u, delta, A, B, C, D, states](std::span<const double> gy, std::span<const double>) {
        std::vector<double> gu(u.data().size()), gdelta(gu.size()), gA(A.data().size()), gB(B.data().size()),
            gC(C.data().size()), gD(D.data().size());
        kernels::ScanBackwardArgs ba{u.data().data(), delta.data().data(), A.data().data(), B.data().data(),
                                     C.data().data(), D.data().data(), states->data(), gy.data(),
                                     gu.data(), gdelta.data(), gA.data(), gB.data(), gC.data(), gD.data()};
        kernels::selective_scan_backward(d, ba);
        auto put = [](const Tensor& t, const std::vector<double>& g) {
          auto sink = autograd::grad_sink(t);
          for (std::size_t i = 0; i < sink.size(); ++i) sink[i] += g[i];
        };
        put(u, gu);
        put(delta, gdelta);
        put(A, gA);
        put(B, gB);
        put(C, gC);
        put(D, gD);
      });
}

Tensor cross_scan(const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("cross_scan expects NCHW");
  const auto b = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), L = H * W;
  auto map = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(b * 4 * L * C));
  for (std::int64_t n = 0; n < b; ++n)
    for (std::int64_t d = 0; d < 4; ++d)
      for (std::int64_t t = 0; t < L; ++t) {
        const auto pos = scan_position(kScanDirections[d], t, H, W);
        for (std::int64_t c = 0; c < C; ++c) (*map)[((n * 4 + d) * L + t) * C + c] = (n * C + c) * L + pos;
      }
  auto src = x.data();
  std::vector<double> y(map->size());
  for (std::size_t f = 0; f < y.size(); ++f) y[f] = src[(*map)[f]];
  return make_op_result("cross_scan", {b, 4, L, C}, std::move(y), {x}, [x, map](std::span<const double> g, std::span<const double>) {
    auto gx = autograd::grad_sink(x);
    if (gx.empty()) return;
    for (std::size_t f = 0; f < g.size(); ++f) gx[(*map)[f]] += g[f];
  });
}

Tensor cross_merge(const Tensor& y, std::int64_t h, std::int64_t w) {
  if (y.rank() != 4 || y.dim(1) != 4 || y.dim(2) != h * w)
    throw ShapeError("cross_merge expects [b, 4, h*w, C], got " + shape_str(y.shape()));
  const auto b = y.dim(0), C = y.dim(3), L = h * w;
  auto map = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(y.numel()));
  for (std::int64_t n = 0; n < b; ++n)
    for (std::int64_t d = 0; d < 4; ++d)
      for (std::int64_t t = 0; t < L; ++t) {
        const auto pos = scan_position(kScanDirections[d], t, h, w);
        for (std::int64_t c = 0; c < C; ++c) (*map)[((n * 4 + d) * L + t) * C + c] = (n * C + c) * L + pos;
      }
  auto src = y.data();
  std::vector<double> out(static_cast<std::size_t>(b * C * L), 0.0);
  // Accumulate direction by direction so every output sums d = 0, 1, 2, 3.
  for (std::size_t f = 0; f < src.size(); ++f) out[(*map)[f]] += src[f];
  return make_op_result("cross_merge", {b, C, h, w}, std::move(out), {y}, [y, map](std::span<const double> g, std::span<const double>) {
    auto gy = autograd::grad_sink(y);
    if (gy.empty()) return;
    for (std::size_t f = 0; f < gy.size(); ++f) gy[f] += g[(*map)[f]];
  });
}

Tensor ss2d_tokens(const Tensor& tokens, std::int64_t h, std::int64_t w, const Ss2dParams& p) {
  const auto b = tokens.dim(0), L = tokens.dim(1);
  auto v = linear(tokens, p.in_proj);
  const auto inner = v.dim(-1);
  auto conv = silu(conv2d(from_tokens(v, h, w), p.dwconv));
  auto xs = cross_scan(conv);
  std::vector<Tensor> ys;
  ys.reserve(4);
  for (std::int64_t d = 0; d < 4; ++d) {
    const auto& dp = p.directions[static_cast<std::size_t>(d)];
    const auto S = dp.A_log.dim(1), R = dp.dt_rank;
    auto seq = reshape(narrow(xs, 1, d, 1), {b, L, inner});
    auto proj = linear(seq, dp.x_proj);
    auto dt_low = narrow(proj, -1, 0, R);
    auto Bm = narrow(proj, -1, R, S);
    auto Cm = narrow(proj, -1, R + S, S);
    auto delta = softplus(linear(dt_low, dp.delta_proj));
    auto A = neg(exp(dp.A_log));
    auto y = selective_scan(seq, delta, A, Bm, Cm, dp.D_skip);
    ys.push_back(reshape(y, {b, 1, L, inner}));
  }
  auto merged = to_tokens(cross_merge(concat(ys, 1), h, w));
  auto out = layer_norm(merged, p.out_norm);
  if (p.gated()) out = mul(out, silu(linear(tokens, p.gate_proj)));
  return linear(out, p.out_proj);
}

Tensor ss2d_forward(const Tensor& x, const Ss2dParams& p) {
  if (x.rank() != 4) throw ShapeError("ss2d_forward expects NCHW");
  const auto h = x.dim(2), w = x.dim(3);
  return from_tokens(ss2d_tokens(to_tokens(x), h, w, p), h, w);
}

Tensor vss_block_tokens(const Tensor& tokens, std::int64_t h, std::int64_t w, const VssBlockParams& p) {
  auto normed = layer_norm(tokens, p.norm1);
  auto r = add(tokens, ss2d_tokens(normed, h, w, p.ss2d));
  if (p.cab) r = add(r, scale(to_tokens(cab_forward(from_tokens(normed, h, w), *p.cab)), kCabScale));
  return add(r, ffn_tokens(layer_norm(r, p.norm2), h, w, p.ffn));
}

Tensor vss_block(const Tensor& x, const VssBlockParams& p) {
  if (x.rank() != 4) throw ShapeError("vss_block expects NCHW");
  const auto h = x.dim(2), w = x.dim(3);
  return from_tokens(vss_block_tokens(to_tokens(x), h, w, p), h, w);
}

}  // namespace contrast
