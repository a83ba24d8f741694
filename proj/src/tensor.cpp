#include "nbsa/tensor.hpp"

#include <cmath>
#include <sstream>

namespace nbsa {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) {
    if (d <= 0) throw ValidationError("non-positive dimension in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(Shape shape) {
  auto impl = std::make_shared<detail::TensorImpl>();
  int64_t n = shape_numel(shape);
  impl->shape = std::move(shape);
  impl->data.assign(static_cast<size_t>(n), 0.0);
  return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, double value) {
  Tensor t = zeros(std::move(shape));
  for (auto& v : t.impl()->data) v = value;
  return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values) {
  int64_t n = shape_numel(shape);
  if (n != static_cast<int64_t>(values.size()))
    throw ValidationError("data length " + std::to_string(values.size()) +
                          " does not match shape " + shape_str(shape));
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  return Tensor(std::move(impl));
}

double Tensor::value() const {
  if (size() != 1) throw ValidationError("value() on non-scalar tensor " + shape_str(shape()));
  return impl_->data[0];
}

Tensor Tensor::detached_clone() const {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

Tape::~Tape() {
  for (auto& node : nodes_) {
    for (auto& in : node.inputs) {
      if (in->tape == this) {
        in->tape = nullptr;
        in->node = -1;
      }
    }
    if (node.output->tape == this) {
      node.output->tape = nullptr;
      node.output->node = -1;
    }
  }
}

void Tape::watch(Tensor& t) {
  if (!t.defined()) throw ValidationError("watch() on undefined tensor");
  auto impl = t.impl();
  if (impl->tape == this) return;
  if (impl->tape != nullptr) throw ValidationError("tensor already attached to another tape");
  impl->requires_grad = true;
  impl->tape = this;
  impl->node = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{"leaf", {}, impl, nullptr});
}

int Tape::record(const char* op, const std::vector<Tensor>& inputs, const Tensor& output,
                 std::function<void()> backward) {
  Node node;
  node.op = op;
  node.inputs.reserve(inputs.size());
  for (const auto& in : inputs) node.inputs.push_back(in.impl());
  node.output = output.impl();
  node.backward = std::move(backward);
  node.output->tape = this;
  node.output->node = static_cast<int>(nodes_.size());
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) throw ValidationError("backward() requires a scalar loss, got " + shape_str(loss.shape()));
  if (!detail::taped(loss) || loss.impl()->tape != this)
    throw ValidationError("backward() loss is not recorded on this tape");
  for (auto& node : nodes_) node.output->grad.assign(node.output->data.size(), 0.0);
  loss.impl()->grad[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->backward) it->backward();
  }
}

Tape::NodeInfo Tape::node_info(int id) const {
  const Node& n = nodes_.at(static_cast<size_t>(id));
  NodeInfo info;
  info.op = n.op;
  for (const auto& in : n.inputs) info.inputs.push_back(in->tape == this ? in->node : -1);
  info.output = n.output->node;
  return info;
}

namespace detail {

Tape* tape_of(std::initializer_list<Tensor> ts) {
  Tape* tape = nullptr;
  for (const auto& t : ts) {
    if (!t.defined() || t.impl()->tape == nullptr) continue;
    if (tape == nullptr) {
      tape = t.impl()->tape;
    } else if (tape != t.impl()->tape) {
      throw ValidationError("operands belong to different tapes");
    }
  }
  return tape;
}

std::vector<double>& grad_buf(const std::shared_ptr<TensorImpl>& impl) {
  if (impl->grad.empty()) impl->grad.assign(impl->data.size(), 0.0);
  return impl->grad;
}

void check_finite(const Tensor& t, const char* op) {
  for (double v : t.values()) {
    if (!std::isfinite(v))
      throw std::runtime_error(std::string(op) + " produced a non-finite value");
  }
}

}  // namespace detail

}  // namespace nbsa
