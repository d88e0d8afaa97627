#include <algorithm>
#include <cmath>
#include <vector>

#include <omp.h>

#include "contrast/kernels.hpp"

namespace contrast::kernels::parallel {

void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, const double* a,
          const double* b, double* c, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    if (!accumulate) std::fill(ci, ci + n, 0.0);
    if (trans_b) {
      // B stored [n, k]: each output is a contiguous dot product.
      for (std::int64_t j = 0; j < n; ++j) {
        const double* bj = b + j * k;
        double s = 0.0;
        if (trans_a) {
          for (std::int64_t p = 0; p < k; ++p) s += a[p * m + i] * bj[p];
        } else {
          const double* ai = a + i * k;
          for (std::int64_t p = 0; p < k; ++p) s += ai[p] * bj[p];
        }
        ci[j] += s;
      }
    } else {
      for (std::int64_t p = 0; p < k; ++p) {
        const double av = trans_a ? a[p * m + i] : a[i * k + p];
        if (av == 0.0) continue;
        const double* bp = b + p * n;
        for (std::int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
      }
    }
  }
}

namespace {

// Output columns [lo, hi) whose input column ox*stride - pad + kx is in range.
inline void valid_range(std::int64_t out, std::int64_t in, std::int64_t stride, std::int64_t pad, std::int64_t k,
                        std::int64_t& lo, std::int64_t& hi) {
  // smallest o with o*stride - pad + k >= 0
  std::int64_t need = pad - k;
  lo = need <= 0 ? 0 : (need + stride - 1) / stride;
  // largest o with o*stride - pad + k <= in - 1
  std::int64_t top = in - 1 + pad - k;
  hi = top < 0 ? 0 : std::min(out, top / stride + 1);
  if (lo > hi) lo = hi;
}

}  // namespace

void conv2d_forward(const Conv2dGeometry& g, const double* x, const double* w, const double* bias, double* y) {
  const auto oh = g.out_h(), ow = g.out_w();
  const auto icpg = g.in_channels / g.groups, ocpg = g.out_channels / g.groups;
#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t n = 0; n < g.batch; ++n)
    for (std::int64_t oc = 0; oc < g.out_channels; ++oc) {
      const auto grp = oc / ocpg;
      double* yp = y + (n * g.out_channels + oc) * oh * ow;
      std::fill(yp, yp + oh * ow, bias ? bias[oc] : 0.0);
      for (std::int64_t icl = 0; icl < icpg; ++icl) {
        const double* xp = x + (n * g.in_channels + grp * icpg + icl) * g.in_h * g.in_w;
        for (std::int64_t ky = 0; ky < g.kernel_h; ++ky)
          for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
            const double wv = w[((oc * icpg + icl) * g.kernel_h + ky) * g.kernel_w + kx];
            std::int64_t lo, hi;
            valid_range(ow, g.in_w, g.stride, g.padding, kx, lo, hi);
            for (std::int64_t oy = 0; oy < oh; ++oy) {
              const auto iy = oy * g.stride - g.padding + ky;
              if (iy < 0 || iy >= g.in_h) continue;
              const double* xr = xp + iy * g.in_w;
              const auto shift = kx - g.padding;
              double* yr = yp + oy * ow;
              for (std::int64_t ox = lo; ox < hi; ++ox) yr[ox] += wv * xr[ox * g.stride + shift];
            }
          }
      }
    }
}

void conv2d_backward_input(const Conv2dGeometry& g, const double* grad_y, const double* w, double* grad_x) {
  const auto oh = g.out_h(), ow = g.out_w();
  const auto icpg = g.in_channels / g.groups, ocpg = g.out_channels / g.groups;
#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t n = 0; n < g.batch; ++n)
    for (std::int64_t ic = 0; ic < g.in_channels; ++ic) {
      const auto grp = ic / icpg, icl = ic % icpg;
      double* gx = grad_x + (n * g.in_channels + ic) * g.in_h * g.in_w;
      for (std::int64_t ocl = 0; ocl < ocpg; ++ocl) {
        const auto oc = grp * ocpg + ocl;
        const double* gy = grad_y + (n * g.out_channels + oc) * oh * ow;
        for (std::int64_t ky = 0; ky < g.kernel_h; ++ky)
          for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
            const double wv = w[((oc * icpg + icl) * g.kernel_h + ky) * g.kernel_w + kx];
            std::int64_t lo, hi;
            valid_range(ow, g.in_w, g.stride, g.padding, kx, lo, hi);
            for (std::int64_t oy = 0; oy < oh; ++oy) {
              const auto iy = oy * g.stride - g.padding + ky;
              if (iy < 0 || iy >= g.in_h) continue;
              double* gxr = gx + iy * g.in_w;
              const auto shift = kx - g.padding;
              const double* gyr = gy + oy * ow;
              for (std::int64_t ox = lo; ox < hi; ++ox) gxr[ox * g.stride + shift] += wv * gyr[ox];
            }
          }
      }
    }
}

void conv2d_backward_weight(const Conv2dGeometry& g, const double* x, const double* grad_y, double* grad_w,
                            double* grad_b) {
  const auto oh = g.out_h(), ow = g.out_w();
  const auto icpg = g.in_channels / g.groups, ocpg = g.out_channels / g.groups;
#pragma omp parallel for schedule(static)
  for (std::int64_t oc = 0; oc < g.out_channels; ++oc) {
    const auto grp = oc / ocpg;
    for (std::int64_t n = 0; n < g.batch; ++n) {
      const double* gy = grad_y + (n * g.out_channels + oc) * oh * ow;
      if (grad_b) {
        double s = 0.0;
        for (std::int64_t i = 0; i < oh * ow; ++i) s += gy[i];
        grad_b[oc] += s;
      }
      for (std::int64_t icl = 0; icl < icpg; ++icl) {
        const double* xp = x + (n * g.in_channels + grp * icpg + icl) * g.in_h * g.in_w;
        for (std::int64_t ky = 0; ky < g.kernel_h; ++ky)
          for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
            std::int64_t lo, hi;
            valid_range(ow, g.in_w, g.stride, g.padding, kx, lo, hi);
            double s = 0.0;
            for (std::int64_t oy = 0; oy < oh; ++oy) {
              const auto iy = oy * g.stride - g.padding + ky;
              if (iy < 0 || iy >= g.in_h) continue;
              const double* xr = xp + iy * g.in_w;
              const auto shift = kx - g.padding;
              const double* gyr = gy + oy * ow;
              for (std::int64_t ox = lo; ox < hi; ++ox) s += gyr[ox] * xr[ox * g.stride + shift];
            }
            grad_w[((oc * icpg + icl) * g.kernel_h + ky) * g.kernel_w + kx] += s;
          }
      }
    }
  }
}

void selective_scan_forward(const ScanDims& d, const ScanForwardArgs& a) {
  const auto L = d.length, C = d.channels, S = d.state;
  // Split channels only as far as needed to occupy every thread; wide tiles
  // keep each time step a contiguous read.
  const std::int64_t threads = omp_get_max_threads();
  const auto per_batch = std::min(C, (threads + d.batch - 1) / d.batch);
  const auto tile = (C + per_batch - 1) / per_batch;
  const auto tiles = (C + tile - 1) / tile;
#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t b = 0; b < d.batch; ++b)
    for (std::int64_t ti = 0; ti < tiles; ++ti) {
      const auto c0 = ti * tile, c1 = std::min(C, c0 + tile);
      std::vector<double> h(static_cast<std::size_t>((c1 - c0) * S), 0.0);
      for (std::int64_t t = 0; t < L; ++t) {
        const auto row = b * L + t;
        const double* Bt = a.Bm + row * S;
        const double* Ct = a.Cm + row * S;
        for (std::int64_t c = c0; c < c1; ++c) {
          const double u = a.u[row * C + c];
          const double dt = a.delta[row * C + c];
          double* hc = h.data() + (c - c0) * S;
          double y = a.D[c] * u;
          for (std::int64_t s = 0; s < S; ++s) {
            hc[s] = std::exp(dt * a.A[c * S + s]) * hc[s] + dt * Bt[s] * u;
            y += Ct[s] * hc[s];
          }
          if (a.states) std::copy(hc, hc + S, a.states + (row * C + c) * S);
          a.y[row * C + c] = y;
        }
      }
    }
}

void selective_scan_backward(const ScanDims& d, const ScanBackwardArgs& a) {
  const auto L = d.length, C = d.channels, S = d.state, Bn = d.batch;
  // Per-(batch, channel) partials for the quantities shared across channels
  // or batch; reduced afterwards in a fixed order.
  std::vector<double> part_A(static_cast<std::size_t>(Bn * C * S), 0.0);
  std::vector<double> part_D(static_cast<std::size_t>(Bn * C), 0.0);
  std::vector<double> part_B(static_cast<std::size_t>(Bn * C * L * S), 0.0);
  std::vector<double> part_C(static_cast<std::size_t>(Bn * C * L * S), 0.0);

#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t b = 0; b < Bn; ++b)
    for (std::int64_t c = 0; c < C; ++c) {
      const auto bc = b * C + c;
      double gD = 0.0;
      for (std::int64_t t = 0; t < L; ++t) {
        const auto row = b * L + t;
        const double gy = a.grad_y[row * C + c];
        gD += gy * a.u[row * C + c];
        a.grad_u[row * C + c] = gy * a.D[c];
        a.grad_delta[row * C + c] = 0.0;
      }
      part_D[bc] = gD;
      double* pB = part_B.data() + bc * L * S;
      double* pC = part_C.data() + bc * L * S;
      for (std::int64_t s = 0; s < S; ++s) {
        const double A = a.A[c * S + s];
        double gA = 0.0, carry = 0.0;
        for (std::int64_t t = L - 1; t >= 0; --t) {
          const auto row = b * L + t;
          const double gy = a.grad_y[row * C + c];
          const double u = a.u[row * C + c];
          const double dt = a.delta[row * C + c];
          const double h = a.states[(row * C + c) * S + s];
          const double h_prev = t > 0 ? a.states[((row - 1) * C + c) * S + s] : 0.0;
          const double decay = std::exp(dt * A);
          const double Bv = a.Bm[row * S + s];
          const double gh = gy * a.Cm[row * S + s] + carry;
          pC[t * S + s] = gy * h;
          a.grad_delta[row * C + c] += gh * (A * decay * h_prev + Bv * u);
          gA += gh * dt * decay * h_prev;
          pB[t * S + s] = gh * dt * u;
          a.grad_u[row * C + c] += gh * dt * Bv;
          carry = gh * decay;
        }
        part_A[bc * S + s] = gA;
      }
    }

  for (std::int64_t c = 0; c < C; ++c) {
    for (std::int64_t s = 0; s < S; ++s) {
      double acc = 0.0;
      for (std::int64_t b = 0; b < Bn; ++b) acc += part_A[(b * C + c) * S + s];
      a.grad_A[c * S + s] = acc;
    }
    double acc = 0.0;
    for (std::int64_t b = 0; b < Bn; ++b) acc += part_D[b * C + c];
    a.grad_D[c] = acc;
  }
#pragma omp parallel for schedule(static)
  for (std::int64_t b = 0; b < Bn; ++b)
    for (std::int64_t i = 0; i < L * S; ++i) {
      double sb = 0.0, sc = 0.0;
      for (std::int64_t c = 0; c < C; ++c) {
        sb += part_B[(b * C + c) * L * S + i];
        sc += part_C[(b * C + c) * L * S + i];
      }
      a.grad_B[b * L * S + i] = sb;
      a.grad_C[b * L * S + i] = sc;
    }
}

void selective_scan_forward_logdepth(const ScanDims& d, const ScanForwardArgs& a) {
  const auto L = d.length, C = d.channels, S = d.state;
#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t b = 0; b < d.batch; ++b)
    for (std::int64_t c = 0; c < C; ++c) {
      std::vector<double> mul(static_cast<std::size_t>(L)), add(static_cast<std::size_t>(L));
      std::vector<double> next_mul(mul.size()), next_add(add.size());
      std::vector<double> y(static_cast<std::size_t>(L));
      for (std::int64_t t = 0; t < L; ++t) {
        const auto row = b * L + t;
        y[t] = a.D[c] * a.u[row * C + c];
      }
      for (std::int64_t s = 0; s < S; ++s) {
        for (std::int64_t t = 0; t < L; ++t) {
          const auto row = b * L + t;
          const double dt = a.delta[row * C + c];
          mul[t] = std::exp(dt * a.A[c * S + s]);
          add[t] = dt * a.Bm[row * S + s] * a.u[row * C + c];
        }
        // Inclusive scan under (m1, a1) then (m2, a2) = (m1 m2, m2 a1 + a2).
        for (std::int64_t offset = 1; offset < L; offset *= 2) {
          for (std::int64_t t = 0; t < L; ++t) {
            if (t >= offset) {
              next_mul[t] = mul[t] * mul[t - offset];
              next_add[t] = mul[t] * add[t - offset] + add[t];
            } else {
              next_mul[t] = mul[t];
              next_add[t] = add[t];
            }
          }
          std::swap(mul, next_mul);
          std::swap(add, next_add);
        }
        for (std::int64_t t = 0; t < L; ++t) {
          const auto row = b * L + t;
          y[t] += a.Cm[row * S + s] * add[t];
          if (a.states) a.states[(row * C + c) * S + s] = add[t];
        }
      }
      for (std::int64_t t = 0; t < L; ++t) a.y[(b * L + t) * C + c] = y[t];
    }
}

}  // namespace contrast::kernels::parallel
