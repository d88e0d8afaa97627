#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "contrast/nn.hpp"
#include "contrast/ops.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace contrast;
using testing::random_tensor;
namespace naive = testing::naive;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

Conv2dParams conv_from(Tensor w, Tensor b, std::int64_t pad, std::int64_t groups = 1) {
  Conv2dParams p;
  p.weight = std::move(w);
  p.bias = std::move(b);
  p.padding = pad;
  p.groups = groups;
  return p;
}

}  // namespace

TEST_CASE("conv2d: 1x1 identity kernel") {
  std::mt19937_64 rng(1);
  auto x = random_tensor({1, 3, 4, 5}, rng, -1, 1, false);
  Tensor w = Tensor::zeros({3, 3, 1, 1});
  for (int c = 0; c < 3; ++c) w.mutable_data()[c * 3 + c] = 1.0;
  CHECK(values(conv2d(x, conv_from(w, Tensor::zeros({3}), 0))) == values(x));
}

TEST_CASE("conv2d: all-ones 3x3 on a constant image") {
  auto x = Tensor::full({1, 1, 5, 5}, 0.25);
  auto y = conv2d(x, conv_from(Tensor::full({1, 1, 3, 3}, 1.0), Tensor(), 1));
  CHECK(y.at({0, 0, 2, 2}) == doctest::Approx(9 * 0.25));
  CHECK(y.at({0, 0, 0, 0}) == doctest::Approx(4 * 0.25));  // zero padding at the corner
}

TEST_CASE("conv2d matches the direct loop oracle") {
  std::mt19937_64 rng(2);
  for (auto [cin, cout, groups, stride, pad] :
       {std::tuple{2, 3, 1, 1, 1}, {4, 6, 2, 1, 1}, {3, 3, 3, 1, 1}, {2, 4, 1, 2, 0}, {2, 2, 1, 2, 2}}) {
    auto p = init::conv2d(rng, cin, cout, 3, groups);
    p.stride = stride;
    p.padding = pad;
    testing::randomize([&] { ParamRegistry r; register_params(r, "c", p); return r; }(), rng, -1, 1);
    auto x = random_tensor({1, cin, 5, 5}, rng, -1, 1, false);
    const auto ref = naive::conv2d(naive::vec(x), 1, 5, 5, p);
    CHECK(testing::max_abs_diff(ref, conv2d(x, p).data()) < 1e-12);
  }
}

TEST_CASE("depthwise conv equals independent per-channel convs") {
  std::mt19937_64 rng(3);
  auto p = init::conv2d(rng, 3, 3, 3, 3);
  p.padding = 1;
  auto x = random_tensor({1, 3, 4, 4}, rng, -1, 1, false);
  auto y = conv2d(x, p);
  for (std::int64_t c = 0; c < 3; ++c) {
    auto xc = narrow(x, 1, c, 1);
    auto single = conv_from(narrow(p.weight, 0, c, 1), narrow(p.bias, 0, c, 1), 1);
    CHECK(testing::max_abs_diff(conv2d(xc, single).data(), narrow(y, 1, c, 1).data()) < 1e-14);
  }
}

TEST_CASE("conv2d shape errors") {
  std::mt19937_64 rng(4);
  auto p = init::conv2d(rng, 3, 4, 3);
  CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 2, 5, 5}), p), ShapeError);
  CHECK_THROWS_AS(conv2d(Tensor::zeros({2, 5, 5}), p), ShapeError);
  CHECK_THROWS_AS(init::conv2d(rng, 3, 4, 3, 2), ConfigError);
}

TEST_CASE("linear") {
  std::mt19937_64 rng(5);
  LinearParams p;
  p.weight = Tensor::zeros({3, 3});
  for (int i = 0; i < 3; ++i) p.weight.mutable_data()[i * 4] = 1.0;
  p.bias = Tensor::zeros({3});
  auto x = random_tensor({2, 3}, rng, -1, 1, false);
  CHECK(values(linear(x, p)) == values(x));
  LinearParams z{Tensor::zeros({2, 3}), Tensor({2}, {0.5, -1.5})};
  CHECK(values(linear(x, z)) == std::vector<double>{0.5, -1.5, 0.5, -1.5});
  auto q = init::linear(rng, 6, 4);
  auto xi = random_tensor({2, 5, 6}, rng, -1, 1, false);
  CHECK(testing::max_abs_diff(naive::linear(naive::vec(xi), 10, q), linear(xi, q).data()) < 1e-12);
  CHECK(linear(xi, q).shape() == Shape{2, 5, 4});
}

TEST_CASE("layer norm") {
  auto p = init::layer_norm(4);
  p.beta = Tensor({4}, {1, 2, 3, 4});
  CHECK(values(layer_norm(Tensor::full({1, 4}, 3.0), p)) == std::vector<double>{1, 2, 3, 4});
  auto q = init::layer_norm(2);
  auto y = layer_norm(Tensor({1, 2}, {1, -1}), q);
  CHECK(y.data()[0] == doctest::Approx(1 / std::sqrt(1 + 1e-6)).epsilon(1e-12));
  CHECK(y.data()[1] == doctest::Approx(-1 / std::sqrt(1 + 1e-6)).epsilon(1e-12));

  std::mt19937_64 rng(6);
  auto r = init::layer_norm(64);
  r.gamma = random_tensor({64}, rng, 0.5, 1.5, false);
  r.beta = random_tensor({64}, rng, -1, 1, false);
  auto x = random_tensor({1, 64}, rng, -5, 5, false);
  auto out = values(layer_norm(x, r));
  double mean_out = 0, mean_beta = 0;
  for (int i = 0; i < 64; ++i) {
    mean_out += out[i] / 64;
    mean_beta += r.beta.data()[i] / 64;
  }
  // with gamma and beta removed the row is standardized
  auto plain = values(layer_norm(x, init::layer_norm(64)));
  double m = 0, v = 0;
  for (double e : plain) m += e / 64;
  for (double e : plain) v += (e - m) * (e - m) / 64;
  CHECK(std::abs(m) < 1e-12);
  CHECK(v == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(std::abs(mean_out - mean_beta) < 0.5);
  CHECK(testing::max_abs_diff(naive::layer_norm(naive::vec(x), 1, r), out) < 1e-12);
}

TEST_CASE("pixel shuffle layout") {
  auto y = pixel_shuffle(Tensor({1, 4, 1, 1}, {1, 2, 3, 4}), 2);
  CHECK(y.shape() == Shape{1, 1, 2, 2});
  CHECK(values(y) == std::vector<double>{1, 2, 3, 4});
  std::mt19937_64 rng(7);
  auto x = random_tensor({2, 18, 3, 2}, rng, -1, 1, false);
  CHECK(values(pixel_shuffle(x, 1)) == values(x));
  auto s = pixel_shuffle(x, 3);
  CHECK(s.shape() == Shape{2, 2, 9, 6});
  CHECK(values(pixel_unshuffle(s, 3)) == values(x));
  auto a = values(x), b = values(s);
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  CHECK(a == b);
  CHECK_THROWS_AS(pixel_shuffle(Tensor::zeros({1, 3, 2, 2}), 2), ShapeError);
}

TEST_CASE("window partition") {
  std::vector<double> v(16);
  for (int i = 0; i < 16; ++i) v[i] = i;
  Tensor x({1, 1, 4, 4}, v);
  auto w = window_partition(x, 2);
  CHECK(w.shape() == Shape{4, 4, 1});
  CHECK(values(narrow(w, 0, 0, 1)) == std::vector<double>{0, 1, 4, 5});
  CHECK(values(narrow(w, 0, 1, 1)) == std::vector<double>{2, 3, 6, 7});
  CHECK(values(window_partition(x, 4)) == v);
  std::mt19937_64 rng(8);
  auto r = random_tensor({2, 3, 6, 4}, rng, -1, 1, false);
  CHECK(values(window_reverse(window_partition(r, 2), 2, 2, 6, 4)) == values(r));
  CHECK_THROWS_AS(window_partition(r, 4), ShapeError);
}

TEST_CASE("truncated normal init") {
  std::mt19937_64 a(42), b(42);
  CHECK(values(init::trunc_normal({50}, a)) == values(init::trunc_normal({50}, b)));
  std::mt19937_64 rng(1);
  const int n = 100000;
  double sum = 0, sq = 0, mx = 0;
  for (int i = 0; i < n; ++i) {
    const double d = init::trunc_normal_sample(rng);
    sum += d;
    sq += d * d;
    mx = std::max(mx, std::abs(d));
  }
  const double mean = sum / n, sd = std::sqrt(sq / n);
  CHECK(std::abs(mean) < 3 * 0.02 / std::sqrt(double(n)));
  CHECK(mx <= 0.04);
  // truncation at 2 sigma shrinks the standard deviation to about 0.88 sigma
  CHECK(sd == doctest::Approx(0.02 * 0.8796).epsilon(0.01));
}

TEST_CASE("parameter registry") {
  ParamRegistry r;
  r.add("a", Tensor::zeros({2, 3}));
  r.add("b", Tensor::zeros({4}));
  CHECK(r.total_numel() == 10);
  CHECK(r.find("b") != nullptr);
  CHECK(r.find("c") == nullptr);
  CHECK_THROWS_AS(r.add("a", Tensor::zeros({1})), ContractError);
}
