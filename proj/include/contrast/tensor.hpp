#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "contrast/errors.hpp"

namespace contrast {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool is_leaf = true;
};

}  // namespace detail

/// Dense row-major array of doubles with optional gradient tracking.
///
/// A Tensor is a cheap handle; copies alias the same storage. Values are
/// treated as immutable once an op has consumed them. Only leaves
/// (parameters, inputs) are mutated, by the optimizer or by
/// finite-difference probes.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  int rank() const;
  // Negative axes count from the back.
  std::int64_t dim(int axis) const;
  std::int64_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::int64_t> index) const;

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  // Allocates a zero gradient buffer on first use.
  std::span<double> mutable_grad();
  void zero_grad();

  // Value copy detached from any graph.
  Tensor detach() const;

  const void* id() const noexcept { return impl_.get(); }
  const std::shared_ptr<detail::TensorImpl>& impl() const noexcept { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  friend Tensor make_op_result(std::string_view, Shape, std::vector<double>, const std::vector<Tensor>&,
                               std::function<void(std::span<const double>, std::span<const double>)>);

  std::shared_ptr<detail::TensorImpl> impl_;
};

namespace autograd {

// grad_out, out_data
using BackwardFn = std::function<void(std::span<const double>, std::span<const double>)>;

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Number of nodes recorded on this thread's graph.
std::size_t graph_size();
// Drops every recorded node. Leaf gradients are kept.
void clear_graph();
// Names of recorded ops in recording order (diagnostics and tests).
std::vector<std::string> graph_ops();

// Reverse sweep over the recorded graph from a scalar loss. Leaf gradients
// accumulate across calls; intermediate gradients are recomputed.
void backward(const Tensor& loss);

// Gradient buffer of `t` to accumulate into, or an empty span when `t` does
// not track gradients.
std::span<double> grad_sink(const Tensor& t);

}  // namespace autograd

// Builds the output of a primitive op. Records a graph node when gradient
// mode is on and some input requires grad.
Tensor make_op_result(std::string_view op, Shape shape, std::vector<double> data,
                      const std::vector<Tensor>& inputs, autograd::BackwardFn backward);

}  // namespace contrast
