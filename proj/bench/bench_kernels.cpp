// Serial reference vs OpenMP kernels on representative sizes.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "contrast/kernels.hpp"

namespace k = contrast::kernels;

namespace {

std::vector<double> filled(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

template <bool Parallel>
void BM_gemm(benchmark::State& st) {
  const auto n = st.range(0);
  const auto a = filled(static_cast<std::size_t>(n * n), 1), b = filled(static_cast<std::size_t>(n * n), 2);
  std::vector<double> c(static_cast<std::size_t>(n * n));
  for (auto _ : st) {
    if constexpr (Parallel)
      k::parallel::gemm(false, false, n, n, n, a.data(), b.data(), c.data(), false);
    else
      k::serial::gemm(false, false, n, n, n, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  st.SetItemsProcessed(st.iterations() * n * n * n);
}

// 3x3 conv, C -> C, on a 64x64 map
template <bool Parallel>
void BM_conv3x3(benchmark::State& st) {
  k::Conv2dGeometry g;
  g.in_channels = g.out_channels = st.range(0);
  g.in_h = g.in_w = 64;
  g.kernel_h = g.kernel_w = 3;
  g.padding = 1;
  const auto x = filled(static_cast<std::size_t>(g.in_channels * 64 * 64), 3);
  const auto w = filled(static_cast<std::size_t>(g.out_channels * g.in_channels * 9), 4);
  const auto b = filled(static_cast<std::size_t>(g.out_channels), 5);
  std::vector<double> y(static_cast<std::size_t>(g.out_channels * 64 * 64));
  for (auto _ : st) {
    if constexpr (Parallel)
      k::parallel::conv2d_forward(g, x.data(), w.data(), b.data(), y.data());
    else
      k::serial::conv2d_forward(g, x.data(), w.data(), b.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
  st.SetItemsProcessed(st.iterations() * g.out_channels * g.in_channels * 9 * 64 * 64);
}

// 4 directions of a 32x32 map folded into the batch
template <bool Parallel>
void BM_scan(benchmark::State& st) {
  const k::ScanDims d{4, 1024, st.range(0), 1};
  const auto n = static_cast<std::size_t>(d.batch * d.length * d.channels);
  const auto ns = static_cast<std::size_t>(d.batch * d.length * d.state);
  const auto u = filled(n, 6), Bm = filled(ns, 8), Cm = filled(ns, 9), D = filled(static_cast<std::size_t>(d.channels), 10);
  auto delta = filled(n, 7);
  for (auto& v : delta) v = 0.05 * (v + 1.0);
  std::vector<double> A(static_cast<std::size_t>(d.channels * d.state), -1.0), y(n), states(n * d.state);
  const k::ScanForwardArgs args{u.data(), delta.data(), A.data(), Bm.data(), Cm.data(), D.data(), y.data(), states.data()};
  for (auto _ : st) {
    if constexpr (Parallel)
      k::parallel::selective_scan_forward(d, args);
    else
      k::serial::selective_scan_forward(d, args);
    benchmark::DoNotOptimize(y.data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(n));
}

}  // namespace

BENCHMARK(BM_gemm<false>)->Name("gemm/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_gemm<true>)->Name("gemm/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_conv3x3<false>)->Name("conv3x3/serial")->Arg(16)->Arg(64);
BENCHMARK(BM_conv3x3<true>)->Name("conv3x3/parallel")->Arg(16)->Arg(64);
BENCHMARK(BM_scan<false>)->Name("scan/serial")->Arg(60)->Arg(210);
BENCHMARK(BM_scan<true>)->Name("scan/parallel")->Arg(60)->Arg(210);

BENCHMARK_MAIN();
