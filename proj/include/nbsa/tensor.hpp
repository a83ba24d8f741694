#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "nbsa/error.hpp"

namespace nbsa {

using Shape = std::vector<int>;

class Tape;

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until backward needs it
  bool requires_grad = false;
  Tape* tape = nullptr;  // non-owning; reset when the tape dies
  int node = -1;         // id within the tape, -1 when detached
};

}  // namespace detail

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense row-major tensor of doubles. Value-semantic handle: copies share
// storage. Data is written only at construction time (or on optimizer
// leaves between graphs); ops never mutate their inputs.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from_data(Shape shape, std::vector<double> values);
  static Tensor scalar(double value) { return from_data({1}, {value}); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(impl_->shape.size()); }
  int64_t size() const { return static_cast<int64_t>(impl_->data.size()); }

  const double* data() const { return impl_->data.data(); }
  double* data() { return impl_->data.data(); }
  const std::vector<double>& values() const { return impl_->data; }

  double value() const;  // scalar tensors only

  bool requires_grad() const { return impl_->requires_grad; }
  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  const std::vector<double>& grad() const { return impl_->grad; }
  void zero_grad() { impl_->grad.assign(impl_->data.size(), 0.0); }

  // Fresh tensor with the same shape/data and no tape attachment.
  Tensor detached_clone() const;

  std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
  friend class Tape;
};

// Reverse-mode tape. Nodes are appended in execution order, which is a
// topological order by construction; backward replays them in exact reverse
// order, so gradient accumulation is deterministic. One tape per forward
// pass; never shared across threads.
class Tape {
 public:
  Tape() = default;
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a leaf whose gradient should be populated by backward().
  void watch(Tensor& t);

  // Records one op. `backward` must accumulate into the grads of the taped
  // inputs using the output's grad. Modules may call this directly to define
  // fused ops. Returns the node id.
  int record(const char* op, const std::vector<Tensor>& inputs, const Tensor& output,
             std::function<void()> backward);

  // Populates grads of every watched tensor reachable from `loss`.
  // `loss` must be a scalar recorded on this tape.
  void backward(const Tensor& loss);

  int num_nodes() const { return static_cast<int>(nodes_.size()); }

  struct NodeInfo {
    std::string op;
    std::vector<int> inputs;  // node ids; -1 for constants off the tape
    int output = -1;
  };
  NodeInfo node_info(int id) const;

 private:
  struct Node {
    const char* op;
    std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
    std::shared_ptr<detail::TensorImpl> output;
    std::function<void()> backward;
  };
  std::vector<Node> nodes_;
};

namespace detail {

// True when the tensor participates in some tape.
inline bool taped(const Tensor& t) { return t.defined() && t.impl()->tape != nullptr; }

// The common tape of the given tensors (nullptr if none is taped). Throws if
// two inputs live on different tapes.
Tape* tape_of(std::initializer_list<Tensor> ts);

// Gradient buffer of a tensor, allocated (zeroed) on first use.
std::vector<double>& grad_buf(const std::shared_ptr<TensorImpl>& impl);

// Throws if any value is non-finite; `op` names the producing operation.
void check_finite(const Tensor& t, const char* op);

}  // namespace detail

}  // namespace nbsa
