#include <atomic>

#include "contrast/kernels.hpp"

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace contrast::kernels {
namespace {
std::atomic<Backend> g_backend{Backend::parallel};
}

void set_backend(Backend b) { g_backend.store(b); }
Backend backend() { return g_backend.load(); }

const char* backend_name(Backend b) { return b == Backend::serial ? "serial" : "parallel"; }

int max_threads() {
#if defined(_OPENMP)
  return omp_get_max_threads();
#else
  return 1;
#endif
}

#define CONTRAST_DISPATCH(name, ...) \
  (backend() == Backend::serial ? serial::name(__VA_ARGS__) : parallel::name(__VA_ARGS__))

void gemm(bool trans_a, bool trans_b, std::int64_t m, std::int64_t n, std::int64_t k, const double* a,
          const double* b, double* c, bool accumulate) {
  CONTRAST_DISPATCH(gemm, trans_a, trans_b, m, n, k, a, b, c, accumulate);
}

void conv2d_forward(const Conv2dGeometry& g, const double* x, const double* w, const double* bias, double* y) {
  CONTRAST_DISPATCH(conv2d_forward, g, x, w, bias, y);
}

void conv2d_backward_input(const Conv2dGeometry& g, const double* grad_y, const double* w, double* grad_x) {
  CONTRAST_DISPATCH(conv2d_backward_input, g, grad_y, w, grad_x);
}

void conv2d_backward_weight(const Conv2dGeometry& g, const double* x, const double* grad_y, double* grad_w,
                            double* grad_b) {
  CONTRAST_DISPATCH(conv2d_backward_weight, g, x, grad_y, grad_w, grad_b);
}

void selective_scan_forward(const ScanDims& d, const ScanForwardArgs& a) {
  CONTRAST_DISPATCH(selective_scan_forward, d, a);
}

void selective_scan_backward(const ScanDims& d, const ScanBackwardArgs& a) {
  CONTRAST_DISPATCH(selective_scan_backward, d, a);
}

#undef CONTRAST_DISPATCH

}  // namespace contrast::kernels
