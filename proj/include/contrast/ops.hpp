#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "contrast/tensor.hpp"

namespace contrast {

enum class ElementwiseOp { add, sub, mul, neg, exp, softplus, silu, gelu };
enum class ReduceOp { sum, mean, max };

// Right-aligned broadcast of two shapes; throws ShapeError when incompatible.
Shape broadcast_shapes(const Shape& a, const Shape& b);

// Unary ops ignore `b`; binary ops require it.
Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b = {});

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor silu(const Tensor& a);
// Exact erf form: x * Phi(x).
Tensor gelu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope = 0.01);
// Subgradient 0 at 0.
Tensor abs(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);

// Batched contraction over the last two axes; leading axes broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);

// Reduces `axes` (negative allowed). Empty `axes` reduces everything.
// Max routes its gradient to the first maximal element in row-major order.
Tensor reduce(ReduceOp op, const Tensor& a, std::vector<int> axes = {}, bool keepdim = false);
Tensor sum(const Tensor& a, std::vector<int> axes = {}, bool keepdim = false);
Tensor mean(const Tensor& a, std::vector<int> axes = {}, bool keepdim = false);

Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<int>& perm);
Tensor transpose_last2(const Tensor& a);
// Slice [start, start + length) of `axis`.
Tensor narrow(const Tensor& a, int axis, std::int64_t start, std::int64_t length);
Tensor concat(const std::vector<Tensor>& parts, int axis);
// Gathers entries of `axis` by index; gradient scatter-adds.
Tensor index_select(const Tensor& a, int axis, const std::vector<std::int64_t>& indices);

// Numerically stable softmax over the last axis.
Tensor softmax_lastdim(const Tensor& a);

// NCHW utilities.
Tensor pad_reflect_bottom_right(const Tensor& x, std::int64_t pad_h, std::int64_t pad_w);
Tensor crop_top_left(const Tensor& x, std::int64_t h, std::int64_t w);
// (b, C, H, W) -> (b, H*W, C) and back.
Tensor to_tokens(const Tensor& x);
Tensor from_tokens(const Tensor& tokens, std::int64_t h, std::int64_t w);

}  // namespace contrast
