#include "contrast/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>
#include <numeric>

#include "contrast/kernels.hpp"

namespace contrast {
namespace {

using Index = std::vector<std::int64_t>;

std::vector<std::int64_t> strides_of(const Shape& s) {
  std::vector<std::int64_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
  return st;
}

int normalize_axis(int axis, int rank) {
  int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) throw ShapeError("axis " + std::to_string(axis) + " invalid for rank " + std::to_string(rank));
  return a;
}

// For every flat index of `out`, the flat index of the broadcast source `in`.
Index broadcast_map(const Shape& in, const Shape& out) {
  const auto n = shape_numel(out);
  Index map(static_cast<std::size_t>(n));
  const int ro = static_cast<int>(out.size()), ri = static_cast<int>(in.size());
  std::vector<std::int64_t> in_st(static_cast<std::size_t>(ro), 0);
  auto st = strides_of(in);
  for (int i = 0; i < ri; ++i)
    if (in[i] != 1) in_st[static_cast<std::size_t>(ro - ri + i)] = st[i];
  std::vector<std::int64_t> idx(static_cast<std::size_t>(ro), 0);
  std::int64_t off = 0;
  for (std::int64_t f = 0; f < n; ++f) {
    map[static_cast<std::size_t>(f)] = off;
    for (int d = ro - 1; d >= 0; --d) {
      if (++idx[d] < out[d]) {
        off += in_st[d];
        break;
      }
      off -= in_st[d] * (out[d] - 1);
      idx[d] = 0;
    }
  }
  return map;
}

template <class F, class DF>
Tensor unary(std::string_view name, const Tensor& a, F f, DF df) {
  auto x = a.data();
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return make_op_result(name, a.shape(), std::move(y), {a}, [a, df](std::span<const double> g, std::span<const double> out) {
    auto ga = autograd::grad_sink(a);
    if (ga.empty()) return;
    auto x = a.data();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(x[i], out[i]);
  });
}

enum class Bin { add, sub, mul };

Tensor binary(Bin op, const Tensor& a, const Tensor& b) {
  if (!a.defined() || !b.defined()) throw ContractError("binary op on undefined tensor");
  const char* name = op == Bin::add ? "add" : op == Bin::sub ? "sub" : "mul";
  Shape out_shape = broadcast_shapes(a.shape(), b.shape());
  const bool same_a = a.shape() == out_shape, same_b = b.shape() == out_shape;
  auto ma = std::make_shared<Index>(same_a ? Index{} : broadcast_map(a.shape(), out_shape));
  auto mb = std::make_shared<Index>(same_b ? Index{} : broadcast_map(b.shape(), out_shape));
  const auto n = static_cast<std::size_t>(shape_numel(out_shape));
  auto xa = a.data(), xb = b.data();
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double va = xa[same_a ? i : static_cast<std::size_t>((*ma)[i])];
    double vb = xb[same_b ? i : static_cast<std::size_t>((*mb)[i])];
    y[i] = op == Bin::add ? va + vb : op == Bin::sub ? va - vb : va * vb;
  }
  return make_op_result(name, out_shape, std::move(y), {a, b},
                        [op, a, b, ma, mb, same_a, same_b](std::span<const double> g, std::span<const double>) {
                          auto ga = autograd::grad_sink(a);
                          auto gb = autograd::grad_sink(b);
                          auto xa = a.data(), xb = b.data();
                          for (std::size_t i = 0; i < g.size(); ++i) {
                            auto ia = same_a ? i : static_cast<std::size_t>((*ma)[i]);
                            auto ib = same_b ? i : static_cast<std::size_t>((*mb)[i]);
                            if (!ga.empty()) ga[ia] += op == Bin::mul ? g[i] * xb[ib] : g[i];
                            if (!gb.empty()) gb[ib] += op == Bin::mul ? g[i] * xa[ia] : op == Bin::sub ? -g[i] : g[i];
                          }
                        });
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const auto r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    std::int64_t ea = i < r - a.size() ? 1 : a[i - (r - a.size())];
    std::int64_t eb = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (ea != eb && ea != 1 && eb != 1)
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    out[i] = std::max(ea, eb);
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(Bin::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(Bin::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(Bin::mul, a, b); }

Tensor neg(const Tensor& a) {
  return unary("neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor exp(const Tensor& a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor softplus(const Tensor& a) {
  return unary(
      "softplus", a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) { return sigmoid_scalar(x); });
}

Tensor silu(const Tensor& a) {
  return unary(
      "silu", a, [](double x) { return x * sigmoid_scalar(x); },
      [](double x, double) {
        double s = sigmoid_scalar(x);
        return s + x * s * (1.0 - s);
      });
}

Tensor gelu(const Tensor& a) {
  return unary(
      "gelu", a, [](double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); },
      [](double x, double) {
        double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
        double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
        return cdf + x * pdf;
      });
}

Tensor sigmoid(const Tensor& a) {
  return unary("sigmoid", a, sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
  return unary("relu", a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary(
      "leaky_relu", a, [slope](double x) { return x > 0 ? x : slope * x; },
      [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

Tensor abs(const Tensor& a) {
  return unary(
      "abs", a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0 ? 1.0 : x < 0 ? -1.0 : 0.0; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary("scale", a, [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary("add_scalar", a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b) {
  auto need_b = [&] {
    if (!b.defined()) throw ContractError("binary elementwise op requires two operands");
  };
  switch (op) {
    case ElementwiseOp::add: need_b(); return add(a, b);
    case ElementwiseOp::sub: need_b(); return sub(a, b);
    case ElementwiseOp::mul: need_b(); return mul(a, b);
    case ElementwiseOp::neg: return neg(a);
    case ElementwiseOp::exp: return exp(a);
    case ElementwiseOp::softplus: return softplus(a);
    case ElementwiseOp::silu: return silu(a);
    case ElementwiseOp::gelu: return gelu(a);
  }
  throw ContractError("unknown elementwise op");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) throw ShapeError("matmul needs rank >= 2 operands");
  const auto m = a.dim(-2), k = a.dim(-1), k2 = b.dim(-2), n = b.dim(-1);
  if (k != k2) throw ShapeError("matmul inner extent mismatch: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Shape lead_a(a.shape().begin(), a.shape().end() - 2), lead_b(b.shape().begin(), b.shape().end() - 2);
  Shape lead = broadcast_shapes(lead_a, lead_b);
  Shape lead_or1 = lead.empty() ? Shape{1} : lead;
  auto ma = std::make_shared<Index>(broadcast_map(lead_a.empty() ? Shape{1} : lead_a, lead_or1));
  auto mb = std::make_shared<Index>(broadcast_map(lead_b.empty() ? Shape{1} : lead_b, lead_or1));
  const auto batches = static_cast<std::int64_t>(ma->size());
  Shape out_shape = lead;
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<double> y(static_cast<std::size_t>(batches * m * n));
  auto xa = a.data(), xb = b.data();
  for (std::int64_t bi = 0; bi < batches; ++bi)
    kernels::gemm(false, false, m, n, k, xa.data() + (*ma)[bi] * m * k, xb.data() + (*mb)[bi] * k * n,
                  y.data() + bi * m * n, false);
  return make_op_result("matmul", out_shape, std::move(y), {a, b},
                        [a, b, ma, mb, m, n, k, batches](std::span<const double> g, std::span<const double>) {
                          auto ga = autograd::grad_sink(a);
                          auto gb = autograd::grad_sink(b);
                          auto xa = a.data(), xb = b.data();
                          for (std::int64_t bi = 0; bi < batches; ++bi) {
                            const double* gy = g.data() + bi * m * n;
                            if (!ga.empty())
                              kernels::gemm(false, true, m, k, n, gy, xb.data() + (*mb)[bi] * k * n,
                                            ga.data() + (*ma)[bi] * m * k, true);
                            if (!gb.empty())
                              kernels::gemm(true, false, k, n, m, xa.data() + (*ma)[bi] * m * k, gy,
                                            gb.data() + (*mb)[bi] * k * n, true);
                          }
                        });
}

Tensor reduce(ReduceOp op, const Tensor& a, std::vector<int> axes, bool keepdim) {
  const int r = a.rank();
  std::vector<bool> reduced(static_cast<std::size_t>(r), axes.empty());
  for (int ax : axes) {
    int na = normalize_axis(ax, r);
    if (reduced[na]) throw ShapeError("duplicate reduction axis");
    reduced[na] = true;
  }
  Shape kept_shape;   // keepdim layout
  Shape out_shape;
  for (int i = 0; i < r; ++i) {
    kept_shape.push_back(reduced[i] ? 1 : a.shape()[i]);
    if (!reduced[i]) out_shape.push_back(a.shape()[i]);
  }
  if (keepdim) out_shape = kept_shape;
  if (out_shape.empty()) out_shape = {1};
  // map input flat index -> output flat index, via broadcasting the output back.
  auto map = std::make_shared<Index>(broadcast_map(kept_shape, a.shape()));
  const auto n_out = static_cast<std::size_t>(shape_numel(kept_shape));
  const std::int64_t count = a.numel() / static_cast<std::int64_t>(n_out);
  auto x = a.data();
  std::vector<double> y(n_out, op == ReduceOp::max ? -std::numeric_limits<double>::infinity() : 0.0);
  auto argmax = std::make_shared<Index>(op == ReduceOp::max ? n_out : 0, -1);
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto o = static_cast<std::size_t>((*map)[i]);
    if (op == ReduceOp::max) {
      if ((*argmax)[o] < 0 || x[i] > y[o]) {
        y[o] = x[i];
        (*argmax)[o] = static_cast<std::int64_t>(i);
      }
    } else {
      y[o] += x[i];
    }
  }
  if (op == ReduceOp::mean)
    for (auto& v : y) v /= static_cast<double>(count);
  const char* name = op == ReduceOp::sum ? "sum" : op == ReduceOp::mean ? "mean" : "max";
  return make_op_result(name, out_shape, std::move(y), {a},
                        [a, op, map, argmax, count](std::span<const double> g, std::span<const double>) {
                          auto ga = autograd::grad_sink(a);
                          if (ga.empty()) return;
                          if (op == ReduceOp::max) {
                            for (std::size_t o = 0; o < g.size(); ++o) ga[(*argmax)[o]] += g[o];
                            return;
                          }
                          const double f = op == ReduceOp::mean ? 1.0 / static_cast<double>(count) : 1.0;
                          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[(*map)[i]] * f;
                        });
}

Tensor sum(const Tensor& a, std::vector<int> axes, bool keepdim) { return reduce(ReduceOp::sum, a, std::move(axes), keepdim); }
Tensor mean(const Tensor& a, std::vector<int> axes, bool keepdim) { return reduce(ReduceOp::mean, a, std::move(axes), keepdim); }

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw ShapeError("cannot reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
  auto x = a.data();
  return make_op_result("reshape", std::move(shape), std::vector<double>(x.begin(), x.end()), {a},
                        [a](std::span<const double> g, std::span<const double>) {
                          auto ga = autograd::grad_sink(a);
                          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
                        });
}

Tensor permute(const Tensor& a, const std::vector<int>& perm) {
  const int r = a.rank();
  if (static_cast<int>(perm.size()) != r) throw ShapeError("permutation rank mismatch");
  std::vector<bool> seen(static_cast<std::size_t>(r), false);
  Shape out_shape(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) {
    int p = normalize_axis(perm[i], r);
    if (seen[p]) throw ShapeError("invalid permutation");
    seen[p] = true;
    out_shape[i] = a.shape()[p];
  }
  auto in_st = strides_of(a.shape());
  // source offset for each output flat index
  auto map = std::make_shared<Index>(static_cast<std::size_t>(a.numel()));
  std::vector<std::int64_t> idx(static_cast<std::size_t>(r), 0);
  std::int64_t off = 0;
  for (std::size_t f = 0; f < map->size(); ++f) {
    (*map)[f] = off;
    for (int d = r - 1; d >= 0; --d) {
      const auto st = in_st[normalize_axis(perm[d], r)];
      if (++idx[d] < out_shape[d]) {
        off += st;
        break;
      }
      off -= st * (out_shape[d] - 1);
      idx[d] = 0;
    }
  }
  auto x = a.data();
  std::vector<double> y(map->size());
  for (std::size_t f = 0; f < y.size(); ++f) y[f] = x[(*map)[f]];
  return make_op_result("permute", out_shape, std::move(y), {a}, [a, map](std::span<const double> g, std::span<const double>) {
    auto ga = autograd::grad_sink(a);
    if (ga.empty()) return;
    for (std::size_t f = 0; f < g.size(); ++f) ga[(*map)[f]] += g[f];
  });
}

Tensor transpose_last2(const Tensor& a) {
  std::vector<int> perm(static_cast<std::size_t>(a.rank()));
  std::iota(perm.begin(), perm.end(), 0);
  if (perm.size() < 2) throw ShapeError("transpose needs rank >= 2");
  std::swap(perm[perm.size() - 1], perm[perm.size() - 2]);
  return permute(a, perm);
}

namespace {
// outer x extent x inner decomposition around one axis.
struct AxisSplit {
  std::int64_t outer = 1, extent = 1, inner = 1;
};
AxisSplit split_at(const Shape& s, int axis) {
  AxisSplit r;
  for (int i = 0; i < axis; ++i) r.outer *= s[i];
  r.extent = s[axis];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}
}  // namespace

Tensor narrow(const Tensor& a, int axis, std::int64_t start, std::int64_t length) {
  const int ax = normalize_axis(axis, a.rank());
  auto sp = split_at(a.shape(), ax);
  if (start < 0 || length <= 0 || start + length > sp.extent)
    throw ShapeError("narrow range out of bounds for " + shape_str(a.shape()));
  Shape out_shape = a.shape();
  out_shape[ax] = length;
  auto x = a.data();
  std::vector<double> y(static_cast<std::size_t>(sp.outer * length * sp.inner));
  for (std::int64_t o = 0; o < sp.outer; ++o)
    std::copy_n(x.begin() + (o * sp.extent + start) * sp.inner, length * sp.inner, y.begin() + o * length * sp.inner);
  return make_op_result("narrow", out_shape, std::move(y), {a},
                        [a, sp, start, length](std::span<const double> g, std::span<const double>) {
                          auto ga = autograd::grad_sink(a);
                          if (ga.empty()) return;
                          for (std::int64_t o = 0; o < sp.outer; ++o)
                            for (std::int64_t i = 0; i < length * sp.inner; ++i)
                              ga[(o * sp.extent + start) * sp.inner + i] += g[o * length * sp.inner + i];
                        });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  const int ax = normalize_axis(axis, parts[0].rank());
  Shape out_shape = parts[0].shape();
  out_shape[ax] = 0;
  for (const auto& p : parts) {
    if (p.rank() != parts[0].rank()) throw ShapeError("concat rank mismatch");
    for (int i = 0; i < p.rank(); ++i)
      if (i != ax && p.shape()[i] != parts[0].shape()[i]) throw ShapeError("concat extent mismatch");
    out_shape[ax] += p.shape()[ax];
  }
  auto total = split_at(out_shape, ax);
  std::vector<double> y(static_cast<std::size_t>(shape_numel(out_shape)));
  std::int64_t offset = 0;
  auto offsets = std::make_shared<std::vector<std::int64_t>>();
  for (const auto& p : parts) {
    auto sp = split_at(p.shape(), ax);
    auto x = p.data();
    for (std::int64_t o = 0; o < sp.outer; ++o)
      std::copy_n(x.begin() + o * sp.extent * sp.inner, sp.extent * sp.inner,
                  y.begin() + (o * total.extent + offset) * total.inner);
    offsets->push_back(offset);
    offset += sp.extent;
  }
  return make_op_result("concat", out_shape, std::move(y), parts,
                        [parts, offsets, total, ax](std::span<const double> g, std::span<const double>) {
                          for (std::size_t k = 0; k < parts.size(); ++k) {
                            auto gp = autograd::grad_sink(parts[k]);
                            if (gp.empty()) continue;
                            auto sp = split_at(parts[k].shape(), ax);
                            for (std::int64_t o = 0; o < sp.outer; ++o)
                              for (std::int64_t i = 0; i < sp.extent * sp.inner; ++i)
                                gp[o * sp.extent * sp.inner + i] += g[(o * total.extent + (*offsets)[k]) * total.inner + i];
                          }
                        });
}

Tensor index_select(const Tensor& a, int axis, const std::vector<std::int64_t>& indices) {
  const int ax = normalize_axis(axis, a.rank());
  auto sp = split_at(a.shape(), ax);
  for (auto i : indices)
    if (i < 0 || i >= sp.extent) throw ShapeError("index_select index out of range");
  if (indices.empty()) throw ShapeError("index_select with no indices");
  Shape out_shape = a.shape();
  const auto n_idx = static_cast<std::int64_t>(indices.size());
  out_shape[ax] = n_idx;
  auto x = a.data();
  std::vector<double> y(static_cast<std::size_t>(sp.outer * n_idx * sp.inner));
  for (std::int64_t o = 0; o < sp.outer; ++o)
    for (std::int64_t j = 0; j < n_idx; ++j)
      std::copy_n(x.begin() + (o * sp.extent + indices[j]) * sp.inner, sp.inner, y.begin() + (o * n_idx + j) * sp.inner);
  auto idx = std::make_shared<std::vector<std::int64_t>>(indices);
  return make_op_result("index_select", out_shape, std::move(y), {a},
                        [a, sp, idx](std::span<const double> g, std::span<const double>) {
                          auto ga = autograd::grad_sink(a);
                          if (ga.empty()) return;
                          const auto n_idx = static_cast<std::int64_t>(idx->size());
                          for (std::int64_t o = 0; o < sp.outer; ++o)
                            for (std::int64_t j = 0; j < n_idx; ++j)
                              for (std::int64_t i = 0; i < sp.inner; ++i)
                                ga[(o * sp.extent + (*idx)[j]) * sp.inner + i] += g[(o * n_idx + j) * sp.inner + i];
                        });
}

Tensor softmax_lastdim(const Tensor& a) {
  const auto n = a.dim(-1);
  const auto rows = a.numel() / n;
  auto x = a.data();
  std::vector<double> y(x.size());
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * n;
    double* yr = y.data() + r * n;
    double mx = *std::max_element(xr, xr + n);
    double s = 0.0;
    for (std::int64_t j = 0; j < n; ++j) s += (yr[j] = std::exp(xr[j] - mx));
    for (std::int64_t j = 0; j < n; ++j) yr[j] /= s;
  }
  return make_op_result("softmax", a.shape(), std::move(y), {a}, [a, n, rows](std::span<const double> g, std::span<const double> y) {
    auto ga = autograd::grad_sink(a);
    if (ga.empty()) return;
    for (std::int64_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::int64_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
      for (std::int64_t j = 0; j < n; ++j) ga[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
    }
  });
}

namespace {
std::int64_t reflect_index(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  const auto period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}
}  // namespace

Tensor pad_reflect_bottom_right(const Tensor& x, std::int64_t pad_h, std::int64_t pad_w) {
  if (x.rank() != 4) throw ShapeError("pad_reflect expects NCHW");
  if (pad_h < 0 || pad_w < 0) throw ShapeError("negative padding");
  if (pad_h == 0 && pad_w == 0) return x;
  const auto planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto oh = h + pad_h, ow = w + pad_w;
  auto map = std::make_shared<Index>(static_cast<std::size_t>(planes * oh * ow));
  auto src = x.data();
  std::vector<double> y(map->size());
  for (std::int64_t p = 0; p < planes; ++p)
    for (std::int64_t i = 0; i < oh; ++i)
      for (std::int64_t j = 0; j < ow; ++j) {
        auto f = (p * oh + i) * ow + j;
        (*map)[f] = (p * h + reflect_index(i, h)) * w + reflect_index(j, w);
        y[f] = src[(*map)[f]];
      }
  return make_op_result("pad_reflect", {x.dim(0), x.dim(1), oh, ow}, std::move(y), {x},
                        [x, map](std::span<const double> g, std::span<const double>) {
                          auto gx = autograd::grad_sink(x);
                          if (gx.empty()) return;
                          for (std::size_t f = 0; f < g.size(); ++f) gx[(*map)[f]] += g[f];
                        });
}

Tensor crop_top_left(const Tensor& x, std::int64_t h, std::int64_t w) {
  if (x.rank() != 4) throw ShapeError("crop expects NCHW");
  Tensor out = x;
  if (h != x.dim(2)) out = narrow(out, 2, 0, h);
  if (w != x.dim(3)) out = narrow(out, 3, 0, w);
  return out;
}

Tensor to_tokens(const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("to_tokens expects NCHW, got " + shape_str(x.shape()));
  return reshape(permute(x, {0, 2, 3, 1}), {x.dim(0), x.dim(2) * x.dim(3), x.dim(1)});
}

Tensor from_tokens(const Tensor& tokens, std::int64_t h, std::int64_t w) {
  if (tokens.rank() != 3 || tokens.dim(1) != h * w)
    throw ShapeError("from_tokens: " + shape_str(tokens.shape()) + " does not hold " + std::to_string(h) + "x" +
                     std::to_string(w) + " tokens");
  return permute(reshape(tokens, {tokens.dim(0), h, w, tokens.dim(2)}), {0, 3, 1, 2});
}

}  // namespace contrast
