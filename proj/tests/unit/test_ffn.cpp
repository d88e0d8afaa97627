#include <doctest.h>

#include "contrast/ffn.hpp"
#include "contrast/ops.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace contrast;
using testing::random_tensor;
namespace naive = testing::naive;

namespace {

ParamRegistry registry(const FeedForwardParams& p) {
  ParamRegistry r;
  register_params(r, "f", p);
  return r;
}

}  // namespace

TEST_CASE("sgfn with a dead gate path outputs the fc2 bias") {
  std::mt19937_64 rng(1);
  FeedForwardParams f = init_ffn(rng, FfnKind::sgfn, 4, 8);
  testing::randomize(registry(f), rng, -1, 1);
  for (auto* t : {&f.sgfn.dwconv.weight, &f.sgfn.dwconv.bias})
    for (auto& v : t->mutable_data()) v = 0.0;
  auto x = random_tensor({1, 4, 3, 3}, rng, -1, 1, false);
  auto y = sgfn_forward(x, f.sgfn);
  CHECK(y.shape() == x.shape());
  for (std::int64_t c = 0; c < 4; ++c)
    for (std::int64_t q = 0; q < 9; ++q) CHECK(y.data()[c * 9 + q] == doctest::Approx(f.sgfn.fc2.bias.data()[c]));
}

TEST_CASE("sgfn and mlp match the loop oracles") {
  std::mt19937_64 rng(2);
  for (auto kind : {FfnKind::sgfn, FfnKind::mlp}) {
    auto f = init_ffn(rng, kind, 6, 12);
    testing::randomize(registry(f), rng, -1, 1);
    auto t = random_tensor({2, 15, 6}, rng, -1, 1, false);
    CHECK(testing::max_abs_diff(naive::ffn(naive::vec(t), 2, 5, 3, f), ffn_tokens(t, 5, 3, f).data()) < 1e-12);
  }
}

TEST_CASE("sgfn hidden width must be even") {
  std::mt19937_64 rng(3);
  CHECK_THROWS_AS(init_sgfn(rng, 4, 7), ConfigError);
}

TEST_CASE("cab matches the loop oracle and keeps its shape") {
  std::mt19937_64 rng(4);
  auto p = init_cab(rng, 30);
  ParamRegistry reg;
  register_params(reg, "c", p);
  testing::randomize(reg, rng, -0.3, 0.3);
  CHECK(p.conv1.out_channels() == 10);
  CHECK(p.squeeze.out_channels() == 1);
  auto x = random_tensor({1, 30, 4, 3}, rng, -1, 1, false);
  auto y = cab_forward(x, p);
  CHECK(y.shape() == x.shape());
  CHECK(testing::max_abs_diff(naive::cab(naive::vec(x), 1, 4, 3, p), y.data()) < 1e-12);
}

TEST_CASE("sgfn gradient") {
  std::mt19937_64 rng(5);
  auto f = init_ffn(rng, FfnKind::sgfn, 4, 8);
  auto reg = registry(f);
  testing::randomize(reg, rng);
  auto x = random_tensor({1, 4, 3, 2}, rng);
  auto inputs = testing::tensors_of(reg);
  inputs.push_back(x);
  CHECK(testing::gradcheck(testing::weighted_sum([=] { return sgfn_forward(x, f.sgfn); }), inputs).max_rel_error < 1e-4);
}
