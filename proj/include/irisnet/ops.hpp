#pragma once

#include <algorithm>
#include <cmath>

#include "irisnet/tensor.hpp"

namespace irisnet {

namespace detail {

enum class Broadcast { Same, Scalar, Channel };

// Supported broadcasts: identical shapes, a single-element operand, or a
// rank-1 operand of length C against the channel axis (axis 1) of the other.
inline Broadcast broadcast_kind(const Shape& big, const Shape& small) {
  if (big == small) return Broadcast::Same;
  if (shape_numel(small) == 1) return Broadcast::Scalar;
  if (small.size() == 1 && big.size() >= 2 && big[1] == small[0]) return Broadcast::Channel;
  throw DimensionError("cannot broadcast " + shape_string(small) + " to " + shape_string(big));
}

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  if (a == b) return a;
  if (shape_numel(b) == 1) return a;
  if (shape_numel(a) == 1) return b;
  if (b.size() == 1 && a.size() >= 2 && a[1] == b[0]) return a;
  if (a.size() == 1 && b.size() >= 2 && b[1] == a[0]) return b;
  throw DimensionError("incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

inline Index inner_extent(const Shape& shape) {
  Index inner = 1;
  for (std::size_t i = 2; i < shape.size(); ++i) inner *= shape[i];
  return inner;
}

template <typename Scalar>
typename Tensor<Scalar>::Array expand(const Tensor<Scalar>& t, const Shape& target) {
  using Array = typename Tensor<Scalar>::Array;
  const Index n = shape_numel(target);
  switch (broadcast_kind(target, t.shape())) {
    case Broadcast::Same:
      return t.data();
    case Broadcast::Scalar:
      return Array::Constant(n, t.data()[0]);
    case Broadcast::Channel: {
      const Index channels = target[1];
      const Index inner = inner_extent(target);
      Array out(n);
      for (Index i = 0; i < n; ++i) out[i] = t.data()[(i / inner) % channels];
      return out;
    }
  }
  return {};
}

// Adjoint of expand(): sums a full-size gradient back onto the operand shape.
template <typename Scalar>
typename Tensor<Scalar>::Array reduce_to(const typename Tensor<Scalar>::Array& g, const Shape& full,
                                         const Shape& operand) {
  using Array = typename Tensor<Scalar>::Array;
  switch (broadcast_kind(full, operand)) {
    case Broadcast::Same:
      return g;
    case Broadcast::Scalar:
      return Array::Constant(1, g.sum());
    case Broadcast::Channel: {
      const Index channels = full[1];
      const Index inner = inner_extent(full);
      Array out = Array::Zero(channels);
      for (Index i = 0; i < g.size(); ++i) out[(i / inner) % channels] += g[i];
      return out;
    }
  }
  return {};
}

}  // namespace detail

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  const Shape shape = detail::broadcast_shape(a.shape(), b.shape());
  Tensor<Scalar> out(shape, (detail::expand(a, shape) + detail::expand(b, shape)).eval());
  detail::ensure_finite(out, "add");
  detail::record(out, {&a, &b}, [a, b, shape](const auto& g) {
    a.accumulate_grad(detail::reduce_to<Scalar>(g, shape, a.shape()));
    b.accumulate_grad(detail::reduce_to<Scalar>(g, shape, b.shape()));
  });
  return out;
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  const Shape shape = detail::broadcast_shape(a.shape(), b.shape());
  Tensor<Scalar> out(shape, (detail::expand(a, shape) - detail::expand(b, shape)).eval());
  detail::ensure_finite(out, "sub");
  detail::record(out, {&a, &b}, [a, b, shape](const auto& g) {
    a.accumulate_grad(detail::reduce_to<Scalar>(g, shape, a.shape()));
    b.accumulate_grad(detail::reduce_to<Scalar>((-g).eval(), shape, b.shape()));
  });
  return out;
}

template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  const Shape shape = detail::broadcast_shape(a.shape(), b.shape());
  auto ea = detail::expand(a, shape);
  auto eb = detail::expand(b, shape);
  Tensor<Scalar> out(shape, (ea * eb).eval());
  detail::ensure_finite(out, "mul");
  detail::record(out, {&a, &b}, [a, b, shape, ea = std::move(ea), eb = std::move(eb)](const auto& g) {
    if (a.requires_grad()) a.accumulate_grad(detail::reduce_to<Scalar>((g * eb).eval(), shape, a.shape()));
    if (b.requires_grad()) b.accumulate_grad(detail::reduce_to<Scalar>((g * ea).eval(), shape, b.shape()));
  });
  return out;
}

template <typename Scalar>
Tensor<Scalar> div(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  const Shape shape = detail::broadcast_shape(a.shape(), b.shape());
  auto ea = detail::expand(a, shape);
  auto eb = detail::expand(b, shape);
  Tensor<Scalar> out(shape, (ea / eb).eval());
  detail::ensure_finite(out, "div");
  detail::record(out, {&a, &b}, [a, b, shape, ea = std::move(ea), eb = std::move(eb)](const auto& g) {
    if (a.requires_grad()) a.accumulate_grad(detail::reduce_to<Scalar>((g / eb).eval(), shape, a.shape()));
    if (b.requires_grad()) {
      b.accumulate_grad(detail::reduce_to<Scalar>((-g * ea / (eb * eb)).eval(), shape, b.shape()));
    }
  });
  return out;
}

/// a * s for a constant s.
template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar s) {
  Tensor<Scalar> out(a.shape(), (a.data() * s).eval());
  detail::ensure_finite(out, "scale");
  detail::record(out, {&a}, [a, s](const auto& g) { a.accumulate_grad(g * s); });
  return out;
}

/// a + s for a constant s.
template <typename Scalar>
Tensor<Scalar> shift(const Tensor<Scalar>& a, Scalar s) {
  Tensor<Scalar> out(a.shape(), (a.data() + s).eval());
  detail::ensure_finite(out, "shift");
  detail::record(out, {&a}, [a](const auto& g) { a.accumulate_grad(g); });
  return out;
}

template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return add(a, b); }
template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return sub(a, b); }
template <typename Scalar>
Tensor<Scalar> operator*(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return mul(a, b); }
template <typename Scalar>
Tensor<Scalar> operator/(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return div(a, b); }
template <typename Scalar>
Tensor<Scalar> operator*(const Tensor<Scalar>& a, Scalar s) { return scale(a, s); }
template <typename Scalar>
Tensor<Scalar> operator*(Scalar s, const Tensor<Scalar>& a) { return scale(a, s); }
template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, Scalar s) { return shift(a, s); }
template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a, Scalar s) { return shift(a, -s); }
template <typename Scalar>
Tensor<Scalar> operator-(Scalar s, const Tensor<Scalar>& a) { return shift(scale(a, Scalar(-1)), s); }
template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a) { return scale(a, Scalar(-1)); }

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& a) {
  Tensor<Scalar> out(a.shape(), a.data().max(Scalar(0)).eval());
  detail::record(out, {&a}, [a](const auto& g) {
    a.accumulate_grad((a.data() > Scalar(0)).select(g, Scalar(0)));
  });
  return out;
}

template <typename Scalar>
Tensor<Scalar> sqrt(const Tensor<Scalar>& a) {
  Tensor<Scalar> out(a.shape(), a.data().sqrt().eval());
  detail::ensure_finite(out, "sqrt");
  detail::record(out, {&a}, [a, y = out.data()](const auto& g) {
    a.accumulate_grad(g / (Scalar(2) * y));
  });
  return out;
}

template <typename Scalar>
Tensor<Scalar> square(const Tensor<Scalar>& a) {
  return mul(a, a);
}

/// Clamps into [lo, hi]; the gradient passes only where the input is inside.
template <typename Scalar>
Tensor<Scalar> clamp(const Tensor<Scalar>& a, Scalar lo, Scalar hi) {
  Tensor<Scalar> out(a.shape(), a.data().max(lo).min(hi).eval());
  detail::record(out, {&a}, [a, lo, hi](const auto& g) {
    a.accumulate_grad((a.data() >= lo && a.data() <= hi).select(g, Scalar(0)));
  });
  return out;
}

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& a) {
  Tensor<Scalar> out = Tensor<Scalar>::scalar(a.data().sum());
  detail::ensure_finite(out, "sum");
  detail::record(out, {&a}, [a](const auto& g) {
    a.accumulate_grad(Tensor<Scalar>::Array::Constant(a.numel(), g[0]));
  });
  return out;
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& a) {
  const Scalar n = Scalar(a.numel());
  Tensor<Scalar> out = Tensor<Scalar>::scalar(a.data().sum() / n);
  detail::ensure_finite(out, "mean");
  detail::record(out, {&a}, [a, n](const auto& g) {
    a.accumulate_grad(Tensor<Scalar>::Array::Constant(a.numel(), g[0] / n));
  });
  return out;
}

/// [m x k] * [k x n] -> [m x n].
template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul of " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
  using Map = typename Tensor<Scalar>::MatrixMap;
  using ConstMap = typename Tensor<Scalar>::ConstMatrixMap;
  const Index m = a.dim(0), n = b.dim(1);
  Tensor<Scalar> out({m, n});
  Map(out.mutable_data().data(), m, n).noalias() = a.matrix() * b.matrix();
  detail::ensure_finite(out, "matmul");
  detail::record(out, {&a, &b}, [a, b, m, n](const auto& g) {
    ConstMap dc(g.data(), m, n);
    if (a.requires_grad()) {
      typename Tensor<Scalar>::Array ga(a.numel());
      Map(ga.data(), a.dim(0), a.dim(1)).noalias() = dc * b.matrix().transpose();
      a.accumulate_grad(ga);
    }
    if (b.requires_grad()) {
      typename Tensor<Scalar>::Array gb(b.numel());
      Map(gb.data(), b.dim(0), b.dim(1)).noalias() = a.matrix().transpose() * dc;
      b.accumulate_grad(gb);
    }
  });
  return out;
}

/// Same values under a new shape of equal element count.
template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("cannot reshape " + shape_string(a.shape()) + " to " + shape_string(shape));
  }
  Tensor<Scalar> out(std::move(shape), a.data());
  detail::record(out, {&a}, [a](const auto& g) { a.accumulate_grad(g); });
  return out;
}

/// [N x ...] -> [N x rest].
template <typename Scalar>
Tensor<Scalar> flatten(const Tensor<Scalar>& a) {
  return reshape(a, Shape{a.dim(0), a.numel() / a.dim(0)});
}

}  // namespace irisnet
