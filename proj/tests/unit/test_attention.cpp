#include <doctest.h>

#include <algorithm>
#include <set>

#include "contrast/attention.hpp"
#include "contrast/ops.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace contrast;
using testing::random_tensor;
namespace naive = testing::naive;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

ParamRegistry registry(const OcabParams& p) {
  ParamRegistry r;
  register_params(r, "o", p);
  return r;
}

}  // namespace

TEST_CASE("overlap window size") {
  CHECK(overlap_window_size(32, 0.5) == 48);
  CHECK(overlap_window_size(16, 0.5) == 24);
  CHECK(overlap_window_size(4, 0.5) == 6);
  CHECK(overlap_window_size(2, 0.5) == 4);
  CHECK(overlap_window_size(8, 0.0) == 8);
  CHECK_THROWS_AS(overlap_window_size(8, 1.0), ConfigError);
  CHECK_THROWS_AS(overlap_window_size(8, -0.1), ConfigError);
}

TEST_CASE("unfold without overlap equals window partition") {
  std::mt19937_64 rng(1);
  auto x = random_tensor({2, 3, 4, 6}, rng, -1, 1, false);
  CHECK(values(unfold_overlapping(x, 2, 2)) == values(window_partition(x, 2)));
}

TEST_CASE("unfold: corner patch carries a zero border, patches are slices of the padded map") {
  std::vector<double> v(16);
  for (int i = 0; i < 16; ++i) v[i] = i + 1;
  Tensor x({1, 1, 4, 4}, v);
  auto u = unfold_overlapping(x, 2, 4);
  CHECK(u.shape() == Shape{4, 16, 1});
  const auto all = values(u);
  const std::vector<double> top_left(all.begin(), all.begin() + 16);
  CHECK(top_left == std::vector<double>{0, 0, 0, 0, 0, 1, 2, 3, 0, 5, 6, 7, 0, 9, 10, 11});
  // padded 6x6 map, window (wy, wx) sees rows 2wy .. 2wy+3
  auto padded = [&](int r, int c) { return (r < 1 || r > 4 || c < 1 || c > 4) ? 0.0 : v[(r - 1) * 4 + (c - 1)]; };
  for (int wy = 0; wy < 2; ++wy)
    for (int wx = 0; wx < 2; ++wx)
      for (int ky = 0; ky < 4; ++ky)
        for (int kx = 0; kx < 4; ++kx) CHECK(all[(wy * 2 + wx) * 16 + ky * 4 + kx] == padded(2 * wy + ky, 2 * wx + kx));
}

TEST_CASE("relative bias lookup") {
  CHECK(rel_bias_lookup(1, 1) == std::vector<std::int64_t>{0});
  const std::int64_t M = 2, Mo = 4, span = M + Mo - 1;
  const auto idx = rel_bias_lookup(M, Mo);
  CHECK(idx.size() == static_cast<std::size_t>(M * M * Mo * Mo));
  std::set<std::int64_t> seen;
  for (auto i : idx) {
    CHECK(i >= 0);
    CHECK(i < span * span);
    seen.insert(i);
  }
  auto at = [&](int qy, int qx, int ky, int kx) { return idx[((qy * M + qx) * Mo + ky) * Mo + kx]; };
  // translating query and key together keeps the index
  for (int ky = 0; ky + 1 < Mo; ++ky)
    for (int kx = 0; kx + 1 < Mo; ++kx) {
      CHECK(at(0, 0, ky, kx) == at(1, 1, ky + 1, kx + 1));
      CHECK(at(0, 1, ky, kx) == at(1, 1, ky + 1, kx));
    }
  // different offsets give different indices
  CHECK(at(0, 0, 0, 0) != at(0, 0, 0, 1));
  CHECK(at(0, 0, 0, 0) != at(0, 0, 1, 0));
}

TEST_CASE("windowed attention: uniform weights average V, rows are convex combinations") {
  std::mt19937_64 rng(2);
  auto q = Tensor::zeros({1, 3, 4});
  auto k = random_tensor({1, 5, 4}, rng, -1, 1, false), v = random_tensor({1, 5, 4}, rng, -1, 1, false);
  auto out = windowed_attention(q, k, v, 2, Tensor());
  for (std::int64_t c = 0; c < 4; ++c) {
    double m = 0;
    for (std::int64_t j = 0; j < 5; ++j) m += v.at({0, j, c}) / 5;
    for (std::int64_t i = 0; i < 3; ++i) CHECK(out.at({0, i, c}) == doctest::Approx(m).epsilon(1e-12));
  }
  auto q2 = random_tensor({1, 3, 4}, rng, -3, 3, false);
  auto o2 = windowed_attention(q2, k, v, 2, Tensor());
  for (std::int64_t c = 0; c < 4; ++c) {
    double lo = 1e9, hi = -1e9;
    for (std::int64_t j = 0; j < 5; ++j) {
      lo = std::min(lo, v.at({0, j, c}));
      hi = std::max(hi, v.at({0, j, c}));
    }
    for (std::int64_t i = 0; i < 3; ++i) {
      CHECK(o2.at({0, i, c}) >= lo - 1e-12);
      CHECK(o2.at({0, i, c}) <= hi + 1e-12);
    }
  }
}

TEST_CASE("windowed attention is invariant to permuting keys with values") {
  std::mt19937_64 rng(3);
  auto q = random_tensor({2, 4, 6}, rng, -1, 1, false), k = random_tensor({2, 5, 6}, rng, -1, 1, false),
       v = random_tensor({2, 5, 6}, rng, -1, 1, false);
  const std::vector<std::int64_t> perm{3, 0, 4, 1, 2};
  auto a = windowed_attention(q, k, v, 3, Tensor());
  auto b = windowed_attention(q, index_select(k, 1, perm), index_select(v, 1, perm), 3, Tensor());
  CHECK(testing::max_abs_diff(a.data(), b.data()) < 1e-14);
}

TEST_CASE("single token with zero overlap: attention returns out_proj of V") {
  std::mt19937_64 rng(4);
  auto p = init_ocab(rng, 4, 2, 1, 0.0, FfnKind::sgfn, 8);
  testing::randomize(registry(p), rng);
  auto x = random_tensor({1, 1, 4}, rng, -1, 1, false);
  const auto n1 = naive::layer_norm(naive::vec(x), 1, p.norm1);
  const auto kv = naive::linear(n1, 1, p.kv_proj);
  const std::vector<double> vrow(kv.begin() + 4, kv.end());
  CHECK(testing::max_abs_diff(naive::linear(vrow, 1, p.out_proj), ocab_attention_branch(x, 1, 1, p).data()) < 1e-14);
}

TEST_CASE("ocab matches the per-window oracle") {
  std::mt19937_64 rng(5);
  for (auto [h, w, C, heads] : {std::tuple{4, 4, 4, 2}, {6, 4, 6, 3}, {4, 2, 2, 1}}) {
    auto p = init_ocab(rng, C, heads, 2, 0.5, FfnKind::sgfn, 2 * C);
    testing::randomize(registry(p), rng);
    auto x = random_tensor({1, C, h, w}, rng, -1, 1, false);
    const auto tokens = naive::to_tokens(naive::vec(x), 1, C, h, w);
    const auto ref = naive::from_tokens(naive::ocab_block(tokens, 1, h, w, p), 1, C, h, w);
    CHECK(testing::max_abs_diff(ref, ocab_attention(x, p).data()) < 1e-10);
  }
  // desk-scale geometry M=4, Mo=6 with an MLP feed-forward
  auto p = init_ocab(rng, 4, 2, 4, 0.5, FfnKind::mlp, 8);
  CHECK(p.overlap_window == 6);
  testing::randomize(registry(p), rng);
  auto x = random_tensor({1, 4, 8, 4}, rng, -1, 1, false);
  const auto ref = naive::from_tokens(naive::ocab_block(naive::to_tokens(naive::vec(x), 1, 4, 8, 4), 1, 8, 4, p), 1, 4, 8, 4);
  CHECK(testing::max_abs_diff(ref, ocab_attention(x, p).data()) < 1e-10);
}

TEST_CASE("zero overlap reduces to plain window attention") {
  std::mt19937_64 rng(6);
  auto p = init_ocab(rng, 4, 2, 2, 0.0, FfnKind::sgfn, 8);
  testing::randomize(registry(p), rng);
  auto x = random_tensor({2, 16, 4}, rng, -1, 1, false);
  const auto ref = naive::plain_window_attention_branch(naive::vec(x), 2, 4, 4, p);
  CHECK(testing::max_abs_diff(ref, ocab_attention_branch(x, 4, 4, p).data()) < 1e-10);
}

TEST_CASE("ocab gradient") {
  std::mt19937_64 rng(7);
  auto p = init_ocab(rng, 4, 2, 2, 0.5, FfnKind::sgfn, 8);
  auto reg = registry(p);
  testing::randomize(reg, rng);
  auto x = random_tensor({1, 4, 4, 2}, rng);
  auto inputs = testing::tensors_of(reg);
  inputs.push_back(x);
  CHECK(testing::gradcheck(testing::weighted_sum([=] { return ocab_attention(x, p); }), inputs).max_rel_error < 1e-4);
}

TEST_CASE("ocab rejects mismatched heads and extents") {
  std::mt19937_64 rng(8);
  CHECK_THROWS_AS(init_ocab(rng, 6, 4, 2, 0.5, FfnKind::sgfn, 12), ConfigError);
  auto p = init_ocab(rng, 4, 2, 2, 0.5, FfnKind::sgfn, 8);
  CHECK_THROWS_AS(ocab_attention(Tensor::zeros({1, 4, 3, 4}), p), ShapeError);
}
