#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sigte/errors.hpp"

namespace sigte {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// Dense row-major array of doubles with an optional gradient buffer.
//
// A Tensor is a handle: copies share storage, so a parameter referenced from
// several places in a graph accumulates all of its gradients in one buffer.
// Use clone() for an independent deep copy.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, bool requires_grad = false)
      : impl_(std::make_shared<Storage>()) {
    for (auto extent : shape) {
      if (extent == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
    }
    impl_->data.assign(shape_size(shape), 0.0);
    impl_->shape = std::move(shape);
    impl_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
      : Tensor(std::move(shape), requires_grad) {
    if (values.size() != impl_->data.size()) {
      throw DimensionError("tensor of shape " + shape_string(impl_->shape) + " needs " +
                           std::to_string(impl_->data.size()) + " values, got " +
                           std::to_string(values.size()));
    }
    impl_->data = std::move(values);
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return Tensor(Shape{}, {value}, requires_grad);
  }

  static Tensor vector(std::vector<double> values, bool requires_grad = false) {
    const std::size_t n = values.size();
    return Tensor(Shape{n}, std::move(values), requires_grad);
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false) {
    return Tensor(Shape{rows, cols}, std::move(values), requires_grad);
  }

  static Tensor full(Shape shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
    return t;
  }

  bool defined() const noexcept { return impl_ != nullptr; }
  explicit operator bool() const noexcept { return defined(); }

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t size() const { return impl_->data.size(); }
  std::size_t rows() const { return rank() == 2 ? impl_->shape[0] : 1; }
  std::size_t cols() const { return rank() == 0 ? 1 : impl_->shape.back(); }

  std::span<double> data() { return impl_->data; }
  std::span<const double> data() const { return impl_->data; }
  std::vector<double> values() const { return impl_->data; }

  double& operator[](std::size_t i) { return impl_->data[i]; }
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double& at(std::size_t r, std::size_t c) { return impl_->data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return impl_->data[r * cols() + c]; }

  double item() const {
    if (size() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
    return impl_->data[0];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool flag) const { impl_->requires_grad = flag; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }

  // Gradient buffer, allocated (zero-filled) on first access. The gradient
  // slot belongs to the shared storage, so this is available through const
  // handles (backward closures hold const copies).
  std::span<double> mutable_grad() const {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
    return impl_->grad;
  }

  void zero_grad() const { std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0); }
  void clear_grad() const { impl_->grad.clear(); }

  Tensor clone() const {
    Tensor copy(impl_->shape, impl_->data, impl_->requires_grad);
    return copy;
  }

  // Same storage object (not value equality).
  bool same(const Tensor& other) const noexcept { return impl_ == other.impl_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> impl_;
};

// Backward-rule corruption used by the gradient checker's self test.
enum class Fault { none, matmul_grad };

// Records primitive applications in execution order, so the recorded list
// is already topologically sorted: every input of entry k is a leaf or the
// output of an earlier entry. Ops only record when the tape is enabled and
// at least one input requires a gradient.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  explicit Tape(bool enabled = true) : enabled_(enabled) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool enabled() const noexcept { return enabled_; }
  std::size_t size() const noexcept { return entries_.size(); }
  const char* op_name(std::size_t i) const { return entries_.at(i).op; }

  void inject_fault(Fault fault) { fault_ = fault; }
  Fault fault() const noexcept { return fault_; }

  // True when an op over these inputs must record (and its output must
  // require a gradient).
  bool tracks(std::initializer_list<const Tensor*> inputs) const {
    if (!enabled_) return false;
    return std::any_of(inputs.begin(), inputs.end(),
                       [](const Tensor* t) { return t->defined() && t->requires_grad(); });
  }

  void record(const char* op, std::vector<Tensor> inputs, Tensor output, BackwardFn backward) {
    entries_.push_back(Entry{op, std::move(inputs), std::move(output), std::move(backward)});
  }

  // Reverse replay from a scalar loss. Gradients accumulate (+=) into every
  // tensor that requires one, so leaves used on several paths receive the
  // sum. Each entry is visited exactly once.
  void backward(Tensor& loss) {
    if (!loss.defined() || loss.size() != 1) {
      throw ContractError("backward needs a scalar loss, got shape " +
                          (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
    }
    if (!loss.requires_grad()) {
      throw ContractError("backward: loss does not depend on any tensor requiring a gradient");
    }
    loss.mutable_grad()[0] += 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      if (!it->output.has_grad()) continue;
      it->backward();
    }
  }

  void clear() { entries_.clear(); }

 private:
  struct Entry {
    const char* op;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };
  std::vector<Entry> entries_;
  bool enabled_;
  Fault fault_ = Fault::none;
};

inline void backward_pass(Tensor& loss, Tape& tape) { tape.backward(loss); }

}  // namespace sigte
