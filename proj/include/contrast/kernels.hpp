#pragma once

// Numeric hot loops behind the differentiable ops.
//
// Every kernel exists twice: `serial::` is the straightforward reference
// loop nest, `parallel::` is the cache-friendlier OpenMP version used by
// default. Parallel kernels partition work over output elements only and
// keep a fixed accumulation order, so their results do not depend on the
// thread count. The two backends agree to rounding, not bitwise.

#include <cstdint>

namespace contrast::kernels {

enum class Backend { serial, parallel };

void set_backend(Backend backend);
Backend backend();
const char* backend_name(Backend backend);
int max_threads();

// RAII backend override for tests and benchmarks.
class BackendScope {
 public:
  explicit BackendScope(Backend b) : previous_(backend()) { set_backend(b); }
  ~BackendScope() { set_backend(previous_); }
  BackendScope(const BackendScope&) = delete;
  BackendScope& operator=(const BackendScope&) = delete;

 private:
  Backend previous_;
};

struct Conv2dGeometry {
  std::int64_t batch = 1;
  std::int64_t in_channels = 1;
  std::int64_t in_h = 1;
  std::int64_t in_w = 1;
  std::int64_t out_channels = 1;
  std::int64_t kernel_h = 1;
  std::int64_t kernel_w = 1;
  std::int64_t stride = 1;
  std::int64_t padding = 0;
  std::int64_t groups = 1;

  std::int64_t out_h() const { return (in_h + 2 * padding - kernel_h) / stride + 1; }
  std::int64_t out_w() const { return (in_w + 2 * padding - kernel_w) / stride + 1; }
};

struct ScanDims {
  std::int64_t batch = 1;
  std::int64_t length = 1;
  std::int64_t channels = 1;
  std::int64_t state = 1;
};

// Row-major pointers. Shapes, with S = state, L = length, C = channels, B = batch:
//   u, delta, y: [B, L, C]; A: [C, S]; Bm, Cm: [B, L, S]; D: [C];
//   states: [B, L, C, S] (hidden state after each step, kept for backward).
struct ScanForwardArgs {
  const double* u;
  const double* delta;
  const double* A;
  const double* Bm;
  const double* Cm;
  const double* D;
  double* y;
  double* states;  // may be null when no backward pass is needed
};

// Gradients are written (not accumulated); buffers must be sized like
// their primal counterparts.
struct ScanBackwardArgs {
  const double* u;
  const double* delta;
  const double* A;
  const double* Bm;
  const double* Cm;
  const double* D;
  const double* states;
  const double* grad_y;
  double* grad_u;
  double* grad_delta;
  double* grad_A;
  double* grad_B;
  double* grad_C;
  double* grad_D;
};

#define CONTRAST_KERNEL_DECLS                                                                                      \
  /* C[m,n] (+)= op(A)[m,k] * op(B)[k,n]; op transposes when the flag is set. */                                  \
  void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, const double* a,           \
            const double* b, double* c, bool accumulate);                                                          \
  void conv2d_forward(const Conv2dGeometry& g, const double* x, const double* w, const double* bias, double* y);  \
  /* grad_x is accumulated into. */                                                                                \
  void conv2d_backward_input(const Conv2dGeometry& g, const double* grad_y, const double* w, double* grad_x);     \
  /* grad_w / grad_b are accumulated into; grad_b may be null. */                                                  \
  void conv2d_backward_weight(const Conv2dGeometry& g, const double* x, const double* grad_y, double* grad_w,     \
                              double* grad_b);                                                                     \
  void selective_scan_forward(const ScanDims& d, const ScanForwardArgs& a);                                       \
  void selective_scan_backward(const ScanDims& d, const ScanBackwardArgs& a);

namespace serial {
CONTRAST_KERNEL_DECLS
}  // namespace serial

namespace parallel {
CONTRAST_KERNEL_DECLS

// Forward-only scan evaluated as a log-depth (Hillis-Steele) prefix over
// the affine maps h -> a_t * h + b_t. Cross-checks the sequential loop.
void selective_scan_forward_logdepth(const ScanDims& d, const ScanForwardArgs& a);
}  // namespace parallel

// Dispatch to the active backend.
CONTRAST_KERNEL_DECLS

#undef CONTRAST_KERNEL_DECLS

}  // namespace contrast::kernels
