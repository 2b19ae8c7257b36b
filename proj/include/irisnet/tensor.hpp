#pragma once

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <initializer_list>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "irisnet/errors.hpp"

namespace irisnet {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index shape_numel(const Shape& shape) {
  Index n = 1;
  for (Index e : shape) n *= e;
  return n;
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

template <typename Scalar>
class Tape;

/// Dense N-d array of reals, row-major, with an optional gradient buffer.
///
/// Copies are cheap handles onto the same storage, mirroring how activations
/// and parameters are shared between a model and the tape that recorded them.
/// Use clone() for an independent deep copy. Rank-0 tensors hold one value.
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<RowMatrix>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix>;

  Tensor() : impl_(std::make_shared<Impl>()) {
    impl_->data = Array::Zero(1);
  }

  explicit Tensor(Shape shape, Scalar fill = Scalar(0)) : impl_(std::make_shared<Impl>()) {
    check_shape(shape);
    impl_->data = Array::Constant(shape_numel(shape), fill);
    impl_->shape = std::move(shape);
  }

  Tensor(Shape shape, Array data) : impl_(std::make_shared<Impl>()) {
    check_shape(shape);
    if (shape_numel(shape) != data.size()) {
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_string(shape));
    }
    impl_->data = std::move(data);
    impl_->shape = std::move(shape);
  }

  Tensor(Shape shape, std::initializer_list<Scalar> values)
      : Tensor(std::move(shape), Array(Eigen::Map<const Array>(values.begin(), Index(values.size())))) {}

  static Tensor scalar(Scalar value) { return Tensor(Shape{}, Array::Constant(1, value)); }
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), Scalar(0)); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), Scalar(1)); }

  const Shape& shape() const { return impl_->shape; }
  Index rank() const { return Index(impl_->shape.size()); }
  Index dim(Index axis) const { return impl_->shape.at(std::size_t(axis)); }
  Index numel() const { return impl_->data.size(); }

  const Array& data() const { return impl_->data; }
  /// Mutable access for parameter updates and loaders. Ops never call this
  /// on their inputs.
  Array& mutable_data() { return impl_->data; }

  Scalar item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
    return impl_->data[0];
  }
  Scalar operator[](Index i) const { return impl_->data[i]; }

  /// Rank-2 view; throws for other ranks.
  ConstMatrixMap matrix() const {
    if (rank() != 2) throw DimensionError("matrix view needs rank 2, got " + shape_string(shape()));
    return ConstMatrixMap(impl_->data.data(), dim(0), dim(1));
  }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    impl_->requires_grad = on;
    return *this;
  }

  bool has_grad() const { return impl_->grad.size() == impl_->data.size(); }
  const Array& grad() const {
    if (!has_grad()) throw StateError("tensor " + shape_string(shape()) + " has no gradient");
    return impl_->grad;
  }
  Array& mutable_grad() {
    if (!has_grad()) impl_->grad = Array::Zero(numel());
    return impl_->grad;
  }
  void zero_grad() { impl_->grad.resize(0); }

  /// Adds `g` into the gradient buffer when this tensor participates in
  /// differentiation. Used by backward rules.
  template <typename Derived>
  void accumulate_grad(const Eigen::ArrayBase<Derived>& g) const {
    if (!impl_->requires_grad) return;
    if (impl_->grad.size() != impl_->data.size()) {
      impl_->grad = g;
    } else {
      impl_->grad += g;
    }
  }

  /// Independent copy of the values, detached from any tape.
  Tensor clone() const { return Tensor(shape(), Array(data())); }

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape(), data().template cast<Other>().eval());
  }

 private:
  struct Impl {
    Shape shape;
    Array data;
    Array grad;
    bool requires_grad = false;
  };

  static void check_shape(const Shape& shape) {
    for (Index e : shape) {
      if (e <= 0) throw DimensionError("non-positive extent in shape " + shape_string(shape));
    }
  }

  std::shared_ptr<Impl> impl_;
};

/// Records differentiable operations of one forward pass.
///
/// Constructing a Tape makes it the active recorder for its scalar type on the
/// calling thread until it is destroyed (tapes nest LIFO). A tape supports a
/// single backward() call; afterwards it is consumed.
template <typename Scalar>
class Tape {
 public:
  using Array = typename Tensor<Scalar>::Array;
  using BackwardFn = std::function<void(const Array& grad_out)>;

  Tape() : previous_(current_) { current_ = this; }
  ~Tape() { current_ = previous_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return current_; }

  void record(const Tensor<Scalar>& output, BackwardFn fn) {
    if (consumed_) throw StateError("recording onto a consumed tape");
    entries_.push_back(Entry{output, std::move(fn)});
  }

  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }

  void backward(const Tensor<Scalar>& loss) {
    if (consumed_) throw StateError("backward called twice on the same tape");
    if (loss.numel() != 1) {
      throw ContractError("backward needs a scalar loss, got shape " + shape_string(loss.shape()));
    }
    if (!loss.requires_grad()) throw ContractError("loss does not depend on any differentiable tensor");
    loss.accumulate_grad(Array::Ones(1));
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      if (!it->output.has_grad()) continue;
      it->fn(it->output.grad());
    }
    entries_.clear();
    consumed_ = true;
  }

 private:
  struct Entry {
    Tensor<Scalar> output;
    BackwardFn fn;
  };

  std::vector<Entry> entries_;
  bool consumed_ = false;
  Tape* previous_;
  static inline thread_local Tape* current_ = nullptr;
};

/// Runs backward on the tape active on this thread.
template <typename Scalar>
void backward(const Tensor<Scalar>& loss) {
  Tape<Scalar>* tape = Tape<Scalar>::active();
  if (!tape) throw StateError("backward called with no active tape");
  tape->backward(loss);
}

namespace detail {

/// Connects `out` to the active tape when any input is differentiable.
template <typename Scalar, typename Fn>
void record(Tensor<Scalar>& out, std::initializer_list<const Tensor<Scalar>*> inputs, Fn&& fn) {
  Tape<Scalar>* tape = Tape<Scalar>::active();
  if (!tape) return;
  bool any = false;
  for (const auto* t : inputs) any = any || t->requires_grad();
  if (!any) return;
  out.set_requires_grad(true);
  tape->record(out, std::forward<Fn>(fn));
}

template <typename Scalar>
void ensure_finite(const Tensor<Scalar>& t, const char* op) {
  if (!t.data().allFinite()) throw NumericError(std::string(op) + " produced a non-finite value");
}

}  // namespace detail

}  // namespace irisnet
