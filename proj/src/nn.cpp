#include "contrast/nn.hpp"

#include <cmath>

#include "contrast/kernels.hpp"
#include "contrast/ops.hpp"

namespace contrast {

void ParamRegistry::add(std::string name, const Tensor& t) {
  if (!t.defined()) return;
  if (find(name)) throw ContractError("duplicate parameter name " + name);
  entries_.emplace_back(std::move(name), t);
}

std::int64_t ParamRegistry::total_numel() const {
  std::int64_t n = 0;
  for (const auto& [_, t] : entries_) n += t.numel();
  return n;
}

const Tensor* ParamRegistry::find(const std::string& name) const {
  for (const auto& [k, t] : entries_)
    if (k == name) return &t;
  return nullptr;
}

void register_params(ParamRegistry& reg, const std::string& prefix, const Conv2dParams& p) {
  reg.add(prefix + ".weight", p.weight);
  reg.add(prefix + ".bias", p.bias);
}

void register_params(ParamRegistry& reg, const std::string& prefix, const LinearParams& p) {
  reg.add(prefix + ".weight", p.weight);
  reg.add(prefix + ".bias", p.bias);
}

void register_params(ParamRegistry& reg, const std::string& prefix, const LayerNormParams& p) {
  reg.add(prefix + ".gamma", p.gamma);
  reg.add(prefix + ".beta", p.beta);
}

Tensor conv2d(const Tensor& x, const Conv2dParams& p) {
  if (x.rank() != 4) throw ShapeError("conv2d expects NCHW input, got " + shape_str(x.shape()));
  if (p.weight.rank() != 4) throw ShapeError("conv2d weight must be rank 4");
  kernels::Conv2dGeometry g;
  g.batch = x.dim(0);
  g.in_channels = x.dim(1);
  g.in_h = x.dim(2);
  g.in_w = x.dim(3);
  g.out_channels = p.weight.dim(0);
  g.kernel_h = p.weight.dim(2);
  g.kernel_w = p.weight.dim(3);
  g.stride = p.stride;
  g.padding = p.padding;
  g.groups = p.groups;
  if (g.groups <= 0 || g.out_channels % g.groups != 0 || g.in_channels % g.groups != 0)
    throw ShapeError("conv2d groups must divide channel counts");
  if (p.weight.dim(1) * g.groups != g.in_channels)
    throw ShapeError("conv2d channel mismatch: input " + std::to_string(g.in_channels) + " vs weight " +
                     shape_str(p.weight.shape()) + " groups " + std::to_string(g.groups));
  if (p.bias.defined() && (p.bias.rank() != 1 || p.bias.dim(0) != g.out_channels))
    throw ShapeError("conv2d bias extent mismatch");
  if (g.in_h + 2 * g.padding < g.kernel_h || g.in_w + 2 * g.padding < g.kernel_w || g.stride <= 0)
    throw ShapeError("conv2d input smaller than kernel");
  const Shape out_shape{g.batch, g.out_channels, g.out_h(), g.out_w()};
  std::vector<double> y(static_cast<std::size_t>(shape_numel(out_shape)));
  kernels::conv2d_forward(g, x.data().data(), p.weight.data().data(), p.bias.defined() ? p.bias.data().data() : nullptr,
                          y.data());
  Tensor w = p.weight, b = p.bias;
  return make_op_result("conv2d", out_shape, std::move(y), {x, w, b}, [g, x, w, b](std::span<const double> gy, std::span<const double>) {
    auto gx = autograd::grad_sink(x);
    auto gw = autograd::grad_sink(w);
    auto gb = autograd::grad_sink(b);
    if (!gx.empty()) kernels::conv2d_backward_input(g, gy.data(), w.data().data(), gx.data());
    if (!gw.empty() || !gb.empty()) {
      std::vector<double> scratch_w;
      double* wptr = gw.data();
      if (gw.empty()) {
        scratch_w.assign(static_cast<std::size_t>(w.numel()), 0.0);
        wptr = scratch_w.data();
      }
      kernels::conv2d_backward_weight(g, x.data().data(), gy.data(), wptr, gb.empty() ? nullptr : gb.data());
    }
  });
}

Tensor linear(const Tensor& x, const LinearParams& p) {
  const auto in_f = p.weight.dim(1), out_f = p.weight.dim(0);
  if (x.dim(-1) != in_f)
    throw ShapeError("linear: input " + shape_str(x.shape()) + " vs weight " + shape_str(p.weight.shape()));
  if (p.bias.defined() && p.bias.numel() != out_f) throw ShapeError("linear bias extent mismatch");
  const auto rows = x.numel() / in_f;
  Shape out_shape = x.shape();
  out_shape.back() = out_f;
  std::vector<double> y(static_cast<std::size_t>(rows * out_f));
  kernels::gemm(false, true, rows, out_f, in_f, x.data().data(), p.weight.data().data(), y.data(), false);
  if (p.bias.defined()) {
    auto bv = p.bias.data();
    for (std::int64_t r = 0; r < rows; ++r)
      for (std::int64_t o = 0; o < out_f; ++o) y[r * out_f + o] += bv[o];
  }
  Tensor w = p.weight, b = p.bias;
  return make_op_result("linear", out_shape, std::move(y), {x, w, b},
                        [x, w, b, rows, in_f, out_f](std::span<const double> gy, std::span<const double>) {
                          auto gx = autograd::grad_sink(x);
                          auto gw = autograd::grad_sink(w);
                          auto gb = autograd::grad_sink(b);
                          if (!gx.empty()) kernels::gemm(false, false, rows, in_f, out_f, gy.data(), w.data().data(), gx.data(), true);
                          if (!gw.empty()) kernels::gemm(true, false, out_f, in_f, rows, gy.data(), x.data().data(), gw.data(), true);
                          if (!gb.empty())
                            for (std::int64_t r = 0; r < rows; ++r)
                              for (std::int64_t o = 0; o < out_f; ++o) gb[o] += gy[r * out_f + o];
                        });
}

Tensor layer_norm(const Tensor& x, const LayerNormParams& p) {
  const auto C = x.dim(-1);
  if (p.gamma.numel() != C || p.beta.numel() != C)
    throw ShapeError("layer_norm: channel extent " + std::to_string(C) + " vs gamma " + shape_str(p.gamma.shape()));
  const auto rows = x.numel() / C;
  auto xv = x.data(), gv = p.gamma.data(), bv = p.beta.data();
  std::vector<double> y(xv.size());
  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  auto rstd = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows));
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * C;
    double mu = 0.0;
    for (std::int64_t c = 0; c < C; ++c) mu += xr[c];
    mu /= static_cast<double>(C);
    double var = 0.0;
    for (std::int64_t c = 0; c < C; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= static_cast<double>(C);
    const double rs = 1.0 / std::sqrt(var + p.epsilon);
    (*rstd)[r] = rs;
    for (std::int64_t c = 0; c < C; ++c) {
      const double xh = (xr[c] - mu) * rs;
      (*xhat)[r * C + c] = xh;
      y[r * C + c] = xh * gv[c] + bv[c];
    }
  }
  Tensor gamma = p.gamma, beta = p.beta;
  return make_op_result("layer_norm", x.shape(), std::move(y), {x, gamma, beta},
                        [x, gamma, beta, xhat, rstd, rows, C](std::span<const double> gy, std::span<const double>) {
                          auto gx = autograd::grad_sink(x);
                          auto gg = autograd::grad_sink(gamma);
                          auto gb = autograd::grad_sink(beta);
                          auto gv = gamma.data();
                          for (std::int64_t r = 0; r < rows; ++r) {
                            double m1 = 0.0, m2 = 0.0;
                            for (std::int64_t c = 0; c < C; ++c) {
                              const double g = gy[r * C + c];
                              const double xh = (*xhat)[r * C + c];
                              if (!gg.empty()) gg[c] += g * xh;
                              if (!gb.empty()) gb[c] += g;
                              const double gxh = g * gv[c];
                              m1 += gxh;
                              m2 += gxh * xh;
                            }
                            if (gx.empty()) continue;
                            m1 /= static_cast<double>(C);
                            m2 /= static_cast<double>(C);
                            for (std::int64_t c = 0; c < C; ++c) {
                              const double gxh = gy[r * C + c] * gv[c];
                              gx[r * C + c] += (*rstd)[r] * (gxh - m1 - (*xhat)[r * C + c] * m2);
                            }
                          }
                        });
}

namespace {

// Builds a pure gather op with out[f] = in[map[f]] (map entries unique).
Tensor gather_op(std::string_view name, const Tensor& x, Shape out_shape, std::shared_ptr<std::vector<std::int64_t>> map) {
  auto src = x.data();
  std::vector<double> y(map->size());
  for (std::size_t f = 0; f < y.size(); ++f) y[f] = (*map)[f] >= 0 ? src[(*map)[f]] : 0.0;
  return make_op_result(name, std::move(out_shape), std::move(y), {x}, [x, map](std::span<const double> g, std::span<const double>) {
    auto gx = autograd::grad_sink(x);
    if (gx.empty()) return;
    for (std::size_t f = 0; f < g.size(); ++f)
      if ((*map)[f] >= 0) gx[(*map)[f]] += g[f];
  });
}

}  // namespace

Tensor pixel_shuffle(const Tensor& x, std::int64_t r) {
  if (x.rank() != 4) throw ShapeError("pixel_shuffle expects NCHW");
  if (r <= 0 || x.dim(1) % (r * r) != 0)
    throw ShapeError("pixel_shuffle: channels " + std::to_string(x.dim(1)) + " not divisible by r^2");
  const auto b = x.dim(0), C = x.dim(1) / (r * r), H = x.dim(2), W = x.dim(3);
  auto map = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(x.numel()));
  for (std::int64_t n = 0; n < b; ++n)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t oy = 0; oy < H * r; ++oy)
        for (std::int64_t ox = 0; ox < W * r; ++ox) {
          const auto in_c = c * r * r + (oy % r) * r + (ox % r);
          (*map)[((n * C + c) * H * r + oy) * W * r + ox] = ((n * C * r * r + in_c) * H + oy / r) * W + ox / r;
        }
  return gather_op("pixel_shuffle", x, {b, C, H * r, W * r}, map);
}

Tensor pixel_unshuffle(const Tensor& x, std::int64_t r) {
  if (x.rank() != 4) throw ShapeError("pixel_unshuffle expects NCHW");
  if (r <= 0 || x.dim(2) % r != 0 || x.dim(3) % r != 0) throw ShapeError("pixel_unshuffle: extents not divisible by r");
  const auto b = x.dim(0), C = x.dim(1), H = x.dim(2) / r, W = x.dim(3) / r;
  auto map = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(x.numel()));
  for (std::int64_t n = 0; n < b; ++n)
    for (std::int64_t oc = 0; oc < C * r * r; ++oc)
      for (std::int64_t y = 0; y < H; ++y)
        for (std::int64_t xx = 0; xx < W; ++xx) {
          const auto c = oc / (r * r), i = (oc % (r * r)) / r, j = oc % r;
          (*map)[((n * C * r * r + oc) * H + y) * W + xx] = ((n * C + c) * H * r + y * r + i) * W * r + xx * r + j;
        }
  return gather_op("pixel_unshuffle", x, {b, C * r * r, H, W}, map);
}

Tensor window_partition(const Tensor& x, std::int64_t window) {
  if (x.rank() != 4) throw ShapeError("window_partition expects NCHW");
  const auto b = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), M = window;
  if (M <= 0 || H % M != 0 || W % M != 0)
    throw ShapeError("window_partition: " + shape_str(x.shape()) + " not divisible by window " + std::to_string(M));
  const auto nh = H / M, nw = W / M;
  auto map = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(x.numel()));
  std::int64_t f = 0;
  for (std::int64_t n = 0; n < b; ++n)
    for (std::int64_t wy = 0; wy < nh; ++wy)
      for (std::int64_t wx = 0; wx < nw; ++wx)
        for (std::int64_t iy = 0; iy < M; ++iy)
          for (std::int64_t ix = 0; ix < M; ++ix)
            for (std::int64_t c = 0; c < C; ++c)
              (*map)[f++] = ((n * C + c) * H + wy * M + iy) * W + wx * M + ix;
  return gather_op("window_partition", x, {b * nh * nw, M * M, C}, map);
}

Tensor window_reverse(const Tensor& windows, std::int64_t window, std::int64_t batch, std::int64_t h, std::int64_t w) {
  const auto M = window;
  if (M <= 0 || h % M != 0 || w % M != 0) throw ShapeError("window_reverse: extents not divisible by window");
  const auto nh = h / M, nw = w / M;
  if (windows.rank() != 3 || windows.dim(0) != batch * nh * nw || windows.dim(1) != M * M)
    throw ShapeError("window_reverse: unexpected window tensor " + shape_str(windows.shape()));
  const auto C = windows.dim(2);
  auto map = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(windows.numel()));
  for (std::int64_t n = 0; n < batch; ++n)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t xx = 0; xx < w; ++xx) {
          const auto win = (n * nh + y / M) * nw + xx / M;
          const auto tok = (y % M) * M + xx % M;
          (*map)[((n * C + c) * h + y) * w + xx] = (win * M * M + tok) * C + c;
        }
  return gather_op("window_reverse", windows, {batch, C, h, w}, map);
}

namespace init {

double trunc_normal_sample(Rng& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (;;) {
    double v = dist(rng);
    if (std::abs(v) <= 2.0 * stddev) return v;
  }
}

Tensor trunc_normal(Shape shape, Rng& rng, double stddev) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& e : v) e = trunc_normal_sample(rng, stddev);
  return Tensor(std::move(shape), std::move(v), true);
}

Conv2dParams conv2d(Rng& rng, std::int64_t in_c, std::int64_t out_c, std::int64_t kernel, std::int64_t groups, bool bias) {
  if (in_c % groups != 0 || out_c % groups != 0) throw ConfigError("conv groups must divide channels");
  Conv2dParams p;
  p.weight = trunc_normal({out_c, in_c / groups, kernel, kernel}, rng);
  if (bias) p.bias = Tensor::zeros({out_c}, true);
  p.padding = kernel / 2;
  p.groups = groups;
  return p;
}

LinearParams linear(Rng& rng, std::int64_t in_f, std::int64_t out_f, bool bias) {
  LinearParams p;
  p.weight = trunc_normal({out_f, in_f}, rng);
  if (bias) p.bias = Tensor::zeros({out_f}, true);
  return p;
}

LayerNormParams layer_norm(std::int64_t channels, double epsilon) {
  return {Tensor::full({channels}, 1.0, true), Tensor::zeros({channels}, true), epsilon};
}

}  // namespace init

}  // namespace contrast
