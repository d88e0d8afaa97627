#include "contrast/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace contrast {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) {
    if (e <= 0) throw ShapeError("non-positive extent in shape " + shape_str(shape));
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  auto n = shape_numel(shape);
  if (static_cast<std::int64_t>(data.size()) != n) {
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
  }
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

namespace {
const detail::TensorImpl& checked(const std::shared_ptr<detail::TensorImpl>& p) {
  if (!p) throw ContractError("use of undefined tensor");
  return *p;
}
}  // namespace

const Shape& Tensor::shape() const { return checked(impl_).shape; }
int Tensor::rank() const { return static_cast<int>(checked(impl_).shape.size()); }

std::int64_t Tensor::dim(int axis) const {
  int r = rank();
  int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
  return impl_->shape[static_cast<std::size_t>(a)];
}

std::int64_t Tensor::numel() const { return static_cast<std::int64_t>(checked(impl_).data.size()); }
std::span<const double> Tensor::data() const { return checked(impl_).data; }

std::span<double> Tensor::mutable_data() {
  checked(impl_);
  return impl_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::int64_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw ShapeError("index rank mismatch for " + shape_str(s));
  std::int64_t off = 0;
  std::size_t i = 0;
  for (auto v : index) {
    if (v < 0 || v >= s[i]) throw ShapeError("index out of range for " + shape_str(s));
    off = off * s[i] + v;
    ++i;
  }
  return impl_->data[static_cast<std::size_t>(off)];
}

bool Tensor::requires_grad() const { return checked(impl_).requires_grad; }

void Tensor::set_requires_grad(bool value) {
  checked(impl_);
  if (!impl_->is_leaf) throw ContractError("requires_grad can only be toggled on leaf tensors");
  impl_->requires_grad = value;
}

bool Tensor::is_leaf() const { return checked(impl_).is_leaf; }
bool Tensor::has_grad() const { return !checked(impl_).grad.empty(); }
std::span<const double> Tensor::grad() const { return checked(impl_).grad; }

std::span<double> Tensor::mutable_grad() {
  checked(impl_);
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  checked(impl_);
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return Tensor(shape(), impl_->data, false); }

namespace autograd {
namespace {

struct Node {
  std::string_view op;
  std::shared_ptr<detail::TensorImpl> output;
  std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
  BackwardFn fn;
};

struct Graph {
  std::vector<Node> nodes;
  bool enabled = true;
};

Graph& graph() {
  thread_local Graph g;
  return g;
}

}  // namespace

bool grad_enabled() { return graph().enabled; }

NoGradGuard::NoGradGuard() : previous_(graph().enabled) { graph().enabled = false; }
NoGradGuard::~NoGradGuard() { graph().enabled = previous_; }

std::size_t graph_size() { return graph().nodes.size(); }
void clear_graph() { graph().nodes.clear(); }

std::vector<std::string> graph_ops() {
  std::vector<std::string> out;
  for (const auto& n : graph().nodes) out.emplace_back(n.op);
  return out;
}

std::span<double> grad_sink(const Tensor& t) {
  if (!t.defined() || !t.impl()->requires_grad) return {};
  auto& impl = *t.impl();
  if (impl.grad.empty()) impl.grad.assign(impl.data.size(), 0.0);
  return impl.grad;
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw ContractError("backward on undefined tensor");
  if (loss.numel() != 1) throw ContractError("backward requires a scalar loss, got " + shape_str(loss.shape()));
  if (!loss.requires_grad()) throw ContractError("backward on a tensor that does not require grad");

  auto& nodes = graph().nodes;
  const auto& target = loss.impl();
  auto it = std::find_if(nodes.rbegin(), nodes.rend(), [&](const Node& n) { return n.output == target; });
  if (it == nodes.rend() && !target->is_leaf) throw ContractError("loss is not on the current graph");

  for (auto& n : nodes) n.output->grad.assign(n.output->data.size(), 0.0);
  if (target->grad.empty()) target->grad.assign(1, 0.0);
  target->grad[0] += 1.0;

  for (; it != nodes.rend(); ++it) {
    const auto& out = *it->output;
    bool nonzero = std::any_of(out.grad.begin(), out.grad.end(), [](double g) { return g != 0.0; });
    if (!nonzero) continue;
    it->fn(out.grad, out.data);
  }
}

}  // namespace autograd

Tensor make_op_result(std::string_view op, Shape shape, std::vector<double> data, const std::vector<Tensor>& inputs,
                      autograd::BackwardFn backward) {
  Tensor out(std::move(shape), std::move(data), false);
  if (!autograd::grad_enabled()) return out;
  bool track = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.defined() && t.requires_grad(); });
  if (!track) return out;
  out.impl_->requires_grad = true;
  out.impl_->is_leaf = false;
  autograd::Node node{op, out.impl_, {}, std::move(backward)};
  node.inputs.reserve(inputs.size());
  for (const auto& t : inputs)
    if (t.defined()) node.inputs.push_back(t.impl());
  autograd::graph().nodes.push_back(std::move(node));
  return out;
}

}  // namespace contrast
