#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ppu/error.hpp"

namespace ppu {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace detail {
struct TensorStorage {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool is_leaf = true;
};
}  // namespace detail

// Dense row-major float64 tensor with an optional gradient buffer.
//
// Tensor is a shared handle: copies alias the same storage. Use clone() for a
// deep copy and detach() for a copy that does not participate in gradients.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    Tensor t;
    t.d_ = std::make_shared<detail::TensorStorage>();
    t.d_->value.assign(shape_numel(shape), 0.0);
    t.d_->shape = std::move(shape);
    t.d_->requires_grad = requires_grad;
    return t;
  }

  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false) {
    if (values.size() != shape_numel(shape)) {
      throw DimensionError("tensor data length " + std::to_string(values.size()) +
                           " does not match shape " + shape_str(shape));
    }
    Tensor t;
    t.d_ = std::make_shared<detail::TensorStorage>();
    t.d_->shape = std::move(shape);
    t.d_->value = std::move(values);
    t.d_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  bool defined() const { return d_ != nullptr; }

  const Shape& shape() const { return d_->shape; }
  std::size_t rank() const { return d_->shape.size(); }
  std::size_t numel() const { return d_->value.size(); }
  std::size_t dim(std::size_t i) const { return d_->shape.at(i); }
  std::size_t rows() const { return d_->shape.at(0); }
  // Size of the last axis.
  std::size_t cols() const { return d_->shape.back(); }
  // Product of all axes but the last.
  std::size_t flat_rows() const { return cols() == 0 ? 0 : numel() / cols(); }

  std::span<double> data() { return d_->value; }
  std::span<const double> data() const { return d_->value; }

  double& operator[](std::size_t i) { return d_->value[i]; }
  double operator[](std::size_t i) const { return d_->value[i]; }
  double& at(std::size_t r, std::size_t c) { return d_->value[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const {
    return d_->value[r * cols() + c];
  }

  std::span<const double> row(std::size_t r) const {
    return data().subspan(r * cols(), cols());
  }

  double item() const {
    if (numel() != 1) {
      throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    }
    return d_->value[0];
  }

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool on) { d_->requires_grad = on; }
  bool is_leaf() const { return d_->is_leaf; }

  bool has_grad() const { return !d_->grad.empty(); }

  // Gradient buffer, allocated (zero-filled) on first access. Writable
  // through const handles so backward closures can accumulate into it.
  std::span<double> grad() const {
    if (d_->grad.empty()) d_->grad.assign(d_->value.size(), 0.0);
    return d_->grad;
  }

  void zero_grad() const {
    if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
  }

  Tensor clone() const {
    Tensor t = from(shape(), d_->value, requires_grad());
    t.d_->grad = d_->grad;
    return t;
  }

  Tensor detach() const { return from(shape(), d_->value, false); }

  bool same_storage(const Tensor& other) const { return d_ == other.d_; }

 private:
  friend class Tape;
  std::shared_ptr<detail::TensorStorage> d_;
};

// Records executed differentiable ops so backward() can replay them in
// reverse. A non-recording tape evaluates ops without keeping any history.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  // True when an op over `inputs` must be recorded.
  bool wants(std::initializer_list<const Tensor*> inputs) const {
    if (!recording_) return false;
    for (const Tensor* t : inputs) {
      if (t->defined() && t->requires_grad()) return true;
    }
    return false;
  }

  // Registers `output` as produced by an op whose gradient propagation is
  // `backward`. The closure reads output.grad() and accumulates into inputs.
  void record(Tensor output, std::function<void()> backward) {
    output.d_->requires_grad = true;
    output.d_->is_leaf = false;
    nodes_.push_back({std::move(output), std::move(backward)});
  }

  // Populates d(loss)/d(t) for every requires_grad tensor reachable from
  // `loss`. Leaf gradients accumulate across calls; intermediate gradients
  // are reset on every call.
  void backward(Tensor loss) {
    if (!loss.defined() || loss.numel() != 1) {
      throw DimensionError("backward() requires a scalar loss");
    }
    for (auto& node : nodes_) node.output.zero_grad();
    if (!loss.requires_grad()) return;
    loss.grad()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (!it->output.has_grad()) continue;
      it->backward();
    }
  }

  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Tensor output;
    std::function<void()> backward;
  };
  bool recording_;
  std::vector<Node> nodes_;
};

}  // namespace ppu
