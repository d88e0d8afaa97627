// Reference loop nests. Written for clarity, not speed; every parallel
// kernel is tested against these.

#include <cmath>
#include <vector>

#include "contrast/kernels.hpp"

namespace contrast::kernels::serial {

void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, const double* a,
          const double* b, double* c, bool accumulate) {
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::int64_t p = 0; p < k; ++p) {
        double av = trans_a ? a[p * m + i] : a[i * k + p];
        double bv = trans_b ? b[j * k + p] : b[p * n + j];
        s += av * bv;
      }
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

void conv2d_forward(const Conv2dGeometry& g, const double* x, const double* w, const double* bias, double* y) {
  const auto oh = g.out_h(), ow = g.out_w();
  const auto icpg = g.in_channels / g.groups, ocpg = g.out_channels / g.groups;
  for (std::int64_t n = 0; n < g.batch; ++n)
    for (std::int64_t oc = 0; oc < g.out_channels; ++oc) {
      const auto grp = oc / ocpg;
      for (std::int64_t oy = 0; oy < oh; ++oy)
        for (std::int64_t ox = 0; ox < ow; ++ox) {
          double s = bias ? bias[oc] : 0.0;
          for (std::int64_t icl = 0; icl < icpg; ++icl) {
            const auto ic = grp * icpg + icl;
            for (std::int64_t ky = 0; ky < g.kernel_h; ++ky) {
              const auto iy = oy * g.stride - g.padding + ky;
              if (iy < 0 || iy >= g.in_h) continue;
              for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
                const auto ix = ox * g.stride - g.padding + kx;
                if (ix < 0 || ix >= g.in_w) continue;
                s += x[((n * g.in_channels + ic) * g.in_h + iy) * g.in_w + ix] *
                     w[((oc * icpg + icl) * g.kernel_h + ky) * g.kernel_w + kx];
              }
            }
          }
          y[((n * g.out_channels + oc) * oh + oy) * ow + ox] = s;
        }
    }
}

void conv2d_backward_input(const Conv2dGeometry& g, const double* grad_y, const double* w, double* grad_x) {
  const auto oh = g.out_h(), ow = g.out_w();
  const auto icpg = g.in_channels / g.groups, ocpg = g.out_channels / g.groups;
  for (std::int64_t n = 0; n < g.batch; ++n)
    for (std::int64_t oc = 0; oc < g.out_channels; ++oc) {
      const auto grp = oc / ocpg;
      for (std::int64_t oy = 0; oy < oh; ++oy)
        for (std::int64_t ox = 0; ox < ow; ++ox) {
          const double gy = grad_y[((n * g.out_channels + oc) * oh + oy) * ow + ox];
          for (std::int64_t icl = 0; icl < icpg; ++icl) {
            const auto ic = grp * icpg + icl;
            for (std::int64_t ky = 0; ky < g.kernel_h; ++ky) {
              const auto iy = oy * g.stride - g.padding + ky;
              if (iy < 0 || iy >= g.in_h) continue;
              for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
                const auto ix = ox * g.stride - g.padding + kx;
                if (ix < 0 || ix >= g.in_w) continue;
                grad_x[((n * g.in_channels + ic) * g.in_h + iy) * g.in_w + ix] +=
                    gy * w[((oc * icpg + icl) * g.kernel_h + ky) * g.kernel_w + kx];
              }
            }
          }
        }
    }
}

void conv2d_backward_weight(const Conv2dGeometry& g, const double* x, const double* grad_y, double* grad_w,
                            double* grad_b) {
  const auto oh = g.out_h(), ow = g.out_w();
  const auto icpg = g.in_channels / g.groups, ocpg = g.out_channels / g.groups;
  for (std::int64_t n = 0; n < g.batch; ++n)
    for (std::int64_t oc = 0; oc < g.out_channels; ++oc) {
      const auto grp = oc / ocpg;
      for (std::int64_t oy = 0; oy < oh; ++oy)
        for (std::int64_t ox = 0; ox < ow; ++ox) {
          const double gy = grad_y[((n * g.out_channels + oc) * oh + oy) * ow + ox];
          if (grad_b) grad_b[oc] += gy;
          for (std::int64_t icl = 0; icl < icpg; ++icl) {
            const auto ic = grp * icpg + icl;
            for (std::int64_t ky = 0; ky < g.kernel_h; ++ky) {
              const auto iy = oy * g.stride - g.padding + ky;
              if (iy < 0 || iy >= g.in_h) continue;
              for (std::int64_t kx = 0; kx < g.kernel_w; ++kx) {
                const auto ix = ox * g.stride - g.padding + kx;
                if (ix < 0 || ix >= g.in_w) continue;
                grad_w[((oc * icpg + icl) * g.kernel_h + ky) * g.kernel_w + kx] +=
                    gy * x[((n * g.in_channels + ic) * g.in_h + iy) * g.in_w + ix];
              }
            }
          }
        }
    }
}

void selective_scan_forward(const ScanDims& d, const ScanForwardArgs& a) {
  const auto L = d.length, C = d.channels, S = d.state;
  std::vector<double> h(static_cast<std::size_t>(C * S));
  for (std::int64_t b = 0; b < d.batch; ++b) {
    std::fill(h.begin(), h.end(), 0.0);
    for (std::int64_t t = 0; t < L; ++t) {
      const auto row = b * L + t;
      for (std::int64_t c = 0; c < C; ++c) {
        const double u = a.u[row * C + c];
        const double dt = a.delta[row * C + c];
        double y = a.D[c] * u;
        for (std::int64_t s = 0; s < S; ++s) {
          double& hs = h[static_cast<std::size_t>(c * S + s)];
          hs = std::exp(dt * a.A[c * S + s]) * hs + dt * a.Bm[row * S + s] * u;
          y += a.Cm[row * S + s] * hs;
          if (a.states) a.states[(row * C + c) * S + s] = hs;
        }
        a.y[row * C + c] = y;
      }
    }
  }
}

void selective_scan_backward(const ScanDims& d, const ScanBackwardArgs& a) {
  const auto L = d.length, C = d.channels, S = d.state;
  const auto n_seq = d.batch * L;
  std::fill(a.grad_u, a.grad_u + n_seq * C, 0.0);
  std::fill(a.grad_delta, a.grad_delta + n_seq * C, 0.0);
  std::fill(a.grad_A, a.grad_A + C * S, 0.0);
  std::fill(a.grad_B, a.grad_B + n_seq * S, 0.0);
  std::fill(a.grad_C, a.grad_C + n_seq * S, 0.0);
  std::fill(a.grad_D, a.grad_D + C, 0.0);

  for (std::int64_t b = 0; b < d.batch; ++b)
    for (std::int64_t c = 0; c < C; ++c) {
      for (std::int64_t t = 0; t < L; ++t) {
        const auto row = b * L + t;
        const double gy = a.grad_y[row * C + c];
        a.grad_D[c] += gy * a.u[row * C + c];
        a.grad_u[row * C + c] += gy * a.D[c];
      }
      for (std::int64_t s = 0; s < S; ++s) {
        const double A = a.A[c * S + s];
        double carry = 0.0;  // d loss / d h_{t+1} pushed back through exp(delta_{t+1} A)
        for (std::int64_t t = L - 1; t >= 0; --t) {
          const auto row = b * L + t;
          const double gy = a.grad_y[row * C + c];
          const double u = a.u[row * C + c];
          const double dt = a.delta[row * C + c];
          const double h = a.states[(row * C + c) * S + s];
          const double h_prev = t > 0 ? a.states[((row - 1) * C + c) * S + s] : 0.0;
          const double decay = std::exp(dt * A);
          const double gh = gy * a.Cm[row * S + s] + carry;
          a.grad_C[row * S + s] += gy * h;
          a.grad_delta[row * C + c] += gh * (A * decay * h_prev + a.Bm[row * S + s] * u);
          a.grad_A[c * S + s] += gh * dt * decay * h_prev;
          a.grad_B[row * S + s] += gh * dt * u;
          a.grad_u[row * C + c] += gh * dt * a.Bm[row * S + s];
          carry = gh * decay;
        }
      }
    }
}

}  // namespace contrast::kernels::serial
