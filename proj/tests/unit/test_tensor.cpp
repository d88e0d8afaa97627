#include <doctest.h>

#include <cmath>

#include "contrast/ops.hpp"
#include "contrast/tensor.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace contrast;
using testing::random_tensor;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_CASE("tensor construction and accessors") {
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.rank() == 2);
  CHECK(t.dim(-1) == 3);
  CHECK(t.numel() == 6);
  CHECK(t.at({1, 2}) == 6);
  CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor::zeros({0, 2}), ShapeError);
  CHECK_THROWS_AS(t.at({2, 0}), ShapeError);
  CHECK_THROWS_AS(t.item(), ContractError);
  CHECK(Tensor::scalar(4.5).item() == 4.5);
}

TEST_CASE("copies alias storage, detach copies values") {
  Tensor a = Tensor::zeros({3});
  Tensor b = a;
  b.mutable_data()[1] = 7.0;
  CHECK(a.data()[1] == 7.0);
  Tensor c = a.detach();
  c.mutable_data()[1] = 1.0;
  CHECK(a.data()[1] == 7.0);
}

TEST_CASE("broadcasting") {
  CHECK(broadcast_shapes({2, 3, 4}, {3, 1}) == Shape{2, 3, 4});
  CHECK(broadcast_shapes({1}, {5}) == Shape{5});
  CHECK_THROWS_AS(broadcast_shapes({2, 3}, {4}), ShapeError);
  Tensor a({2, 2}, {1, 2, 3, 4}), b({2}, {10, 20});
  CHECK(values(add(a, b)) == std::vector<double>{11, 22, 13, 24});
  CHECK(values(mul(a, Tensor({2, 1}, {2, 3}))) == std::vector<double>{2, 4, 9, 12});
}

TEST_CASE("matmul matches the triple loop") {
  std::mt19937_64 rng(3);
  auto a = random_tensor({5, 7}, rng, -1, 1, false), b = random_tensor({7, 4}, rng, -1, 1, false);
  const auto ref = testing::naive::matmul(testing::naive::vec(a), testing::naive::vec(b), 5, 7, 4);
  CHECK(testing::max_abs_diff(ref, matmul(a, b).data()) < 1e-12);
  auto batched = matmul(random_tensor({3, 5, 7}, rng, -1, 1, false), b);
  CHECK(batched.shape() == Shape{3, 5, 4});
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
}

TEST_CASE("reductions") {
  Tensor x({2, 3}, {1, 5, 5, -1, 2, 0});
  CHECK(sum(x).item() == 12);
  CHECK(values(sum(x, {1})) == std::vector<double>{11, 1});
  CHECK(values(mean(x, {0}, true)) == std::vector<double>{0, 3.5, 2.5});
  CHECK(mean(x, {0}, true).shape() == Shape{1, 3});
  CHECK(values(reduce(ReduceOp::max, x, {1})) == std::vector<double>{5, 2});
}

TEST_CASE("max routes its gradient to the first tie") {
  Tensor x({4}, {3, 7, 7, 1}, true);
  autograd::backward(reduce(ReduceOp::max, x));
  autograd::clear_graph();
  CHECK(values(Tensor({4}, {x.grad().begin(), x.grad().end()})) == std::vector<double>{0, 1, 0, 0});
}

TEST_CASE("shape ops") {
  Tensor x({2, 3}, {0, 1, 2, 3, 4, 5});
  CHECK(values(transpose_last2(x)) == std::vector<double>{0, 3, 1, 4, 2, 5});
  CHECK(values(narrow(x, 1, 1, 2)) == std::vector<double>{1, 2, 4, 5});
  CHECK(values(concat({x, x}, 0)).size() == 12);
  CHECK(values(index_select(x, 1, {2, 2, 0})) == std::vector<double>{2, 2, 0, 5, 5, 3});
  CHECK_THROWS_AS(reshape(x, {4, 2}), ShapeError);
  CHECK_THROWS_AS(permute(x, {0, 0}), ShapeError);
  CHECK_THROWS_AS(narrow(x, 1, 2, 2), ShapeError);
}

TEST_CASE("softmax is stable and normalized") {
  Tensor x({2, 3}, {1000, 1001, 1002, -5, -5, -5});
  auto s = softmax_lastdim(x);
  for (int r = 0; r < 2; ++r) {
    double total = 0;
    for (int c = 0; c < 3; ++c) total += s.at({r, c});
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(s.at({1, 0}) == doctest::Approx(1.0 / 3));
  CHECK(std::isfinite(s.at({0, 2})));
}

TEST_CASE("elementwise closed forms") {
  Tensor x({3}, {-1, 0, 2});
  CHECK(values(relu(x)) == std::vector<double>{0, 0, 2});
  CHECK(values(leaky_relu(x, 0.1))[0] == doctest::Approx(-0.1));
  CHECK(values(gelu(x))[2] == doctest::Approx(2 * 0.5 * (1 + std::erf(2 / std::sqrt(2.0)))));
  CHECK(values(softplus(x))[1] == doctest::Approx(std::log(2.0)));
  CHECK(values(silu(x))[1] == 0.0);
}

TEST_CASE("abs subgradient is zero at zero") {
  Tensor x({3}, {-2, 0, 3}, true);
  autograd::backward(sum(contrast::abs(x)));
  autograd::clear_graph();
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{-1, 0, 1});
}

TEST_CASE("reflect padding and crop") {
  Tensor x({1, 1, 2, 3}, {1, 2, 3, 4, 5, 6});
  auto p = pad_reflect_bottom_right(x, 1, 2);
  CHECK(p.shape() == Shape{1, 1, 3, 5});
  // bottom row reflects row 0 about row 1; columns reflect about col 2
  CHECK(values(p) == std::vector<double>{1, 2, 3, 2, 1, 4, 5, 6, 5, 4, 1, 2, 3, 2, 1});
  CHECK(values(crop_top_left(p, 2, 3)) == values(x));
}

TEST_CASE("backward contract errors") {
  Tensor x({2}, {1, 2}, true);
  CHECK_THROWS_AS(autograd::backward(mul(x, x)), ContractError);
  autograd::clear_graph();
  CHECK_THROWS_AS(autograd::backward(sum(Tensor({2}, {1, 2}))), ContractError);
  CHECK_THROWS_AS(autograd::backward(Tensor()), ContractError);
  CHECK_THROWS_AS(add(x, Tensor()), ContractError);
}

TEST_CASE("gradients accumulate on leaves across backward calls") {
  Tensor x({1}, {3}, true);
  autograd::backward(mul(x, x));
  autograd::clear_graph();
  autograd::backward(mul(x, x));
  autograd::clear_graph();
  CHECK(x.grad()[0] == doctest::Approx(12.0));
}

TEST_CASE("shared subexpressions sum their gradient paths") {
  Tensor x({1}, {2}, true);
  auto y = mul(x, x);
  autograd::backward(sum(add(y, mul(y, x))));  // x^2 + x^3
  autograd::clear_graph();
  CHECK(x.grad()[0] == doctest::Approx(2 * 2 + 3 * 4));
}

TEST_CASE("no-grad guard records nothing") {
  Tensor x({2}, {1, 2}, true);
  autograd::clear_graph();
  {
    autograd::NoGradGuard g;
    auto y = mul(x, x);
    CHECK_FALSE(y.requires_grad());
    CHECK(autograd::graph_size() == 0);
  }
  CHECK(autograd::grad_enabled());
  auto z = mul(x, x);
  CHECK(autograd::graph_size() == 1);
  autograd::clear_graph();
}

TEST_CASE("primitive gradchecks") {
  std::mt19937_64 rng(8);
  auto a = random_tensor({2, 3}, rng), b = random_tensor({3, 2}, rng);
  auto r = testing::gradcheck(testing::weighted_sum([=] { return matmul(exp(a), softplus(b)); }), {a, b});
  CHECK(r.max_rel_error < 1e-4);
  auto c = random_tensor({2, 4}, rng);
  r = testing::gradcheck(testing::weighted_sum([=] { return softmax_lastdim(mul(c, c)); }), {c});
  CHECK(r.max_rel_error < 1e-4);
}
