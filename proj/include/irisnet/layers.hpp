#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "irisnet/ops.hpp"

namespace irisnet {

enum class PoolKind { Max, Eap };

inline std::string_view to_string(PoolKind kind) { return kind == PoolKind::Max ? "max" : "eap"; }

inline PoolKind parse_pool_kind(std::string_view s) {
  if (s == "max") return PoolKind::Max;
  if (s == "eap") return PoolKind::Eap;
  throw ConfigError("unknown pooling kind '" + std::string(s) + "' (expected max|eap)");
}

/// Square pooling window. Eap (energy aware pooling) takes the window mean,
/// Max the window maximum.
struct PoolSpec {
  PoolKind kind = PoolKind::Max;
  int kernel = 2;
  int stride = 2;
};

namespace detail {

inline void require_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank) {
    throw DimensionError(std::string(what) + " expects rank " + std::to_string(rank) + ", got " +
                         shape_string(s));
  }
}

// Output extent of a strided window sweep; the sweep must tile exactly.
inline Index conv_extent(Index in, Index kernel, int stride, int padding, const char* axis) {
  const Index span = in + 2 * padding - kernel;
  if (span < 0 || span % stride != 0) {
    throw ConfigError(std::string("conv2d: non-integral output ") + axis + " for input " + std::to_string(in) +
                      ", kernel " + std::to_string(kernel) + ", stride " + std::to_string(stride) +
                      ", padding " + std::to_string(padding));
  }
  return span / stride + 1;
}

struct ConvGeometry {
  Index n, cin, h, w, cout, kh, kw, ho, wo;
  int stride, padding;
  Index patch() const { return cin * kh * kw; }
  Index plane() const { return ho * wo; }
};

// Column buffer for samples [n0, n0+nb): rows are (c, ky, kx), columns are
// (sample, oy, ox). Out-of-image taps read zero.
template <typename Scalar>
void im2col(const Scalar* x, const ConvGeometry& g, Index n0, Index nb,
            typename Tensor<Scalar>::RowMatrix& col) {
  const Index cols = nb * g.plane();
  col.resize(g.patch(), cols);
  for (Index c = 0; c < g.cin; ++c) {
    for (Index ky = 0; ky < g.kh; ++ky) {
      for (Index kx = 0; kx < g.kw; ++kx) {
        Scalar* row = col.data() + ((c * g.kh + ky) * g.kw + kx) * cols;
        for (Index s = 0; s < nb; ++s) {
          const Scalar* src = x + ((n0 + s) * g.cin + c) * g.h * g.w;
          for (Index oy = 0; oy < g.ho; ++oy) {
            const Index iy = oy * g.stride + ky - g.padding;
            Scalar* dst = row + s * g.plane() + oy * g.wo;
            if (iy < 0 || iy >= g.h) {
              std::fill(dst, dst + g.wo, Scalar(0));
              continue;
            }
            for (Index ox = 0; ox < g.wo; ++ox) {
              const Index ix = ox * g.stride + kx - g.padding;
              dst[ox] = (ix < 0 || ix >= g.w) ? Scalar(0) : src[iy * g.w + ix];
            }
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im(const typename Tensor<Scalar>::RowMatrix& col, const ConvGeometry& g, Index n0, Index nb,
            Scalar* dx) {
  const Index cols = nb * g.plane();
  for (Index c = 0; c < g.cin; ++c) {
    for (Index ky = 0; ky < g.kh; ++ky) {
      for (Index kx = 0; kx < g.kw; ++kx) {
        const Scalar* row = col.data() + ((c * g.kh + ky) * g.kw + kx) * cols;
        for (Index s = 0; s < nb; ++s) {
          Scalar* dst = dx + ((n0 + s) * g.cin + c) * g.h * g.w;
          for (Index oy = 0; oy < g.ho; ++oy) {
            const Index iy = oy * g.stride + ky - g.padding;
            if (iy < 0 || iy >= g.h) continue;
            const Scalar* src = row + s * g.plane() + oy * g.wo;
            for (Index ox = 0; ox < g.wo; ++ox) {
              const Index ix = ox * g.stride + kx - g.padding;
              if (ix >= 0 && ix < g.w) dst[iy * g.w + ix] += src[ox];
            }
          }
        }
      }
    }
  }
}

// Samples per im2col chunk, bounding the column buffer to ~16M entries.
inline Index conv_chunk(const ConvGeometry& g) {
  const Index per_sample = std::max<Index>(1, g.patch() * g.plane());
  return std::clamp<Index>((Index(1) << 24) / per_sample, 1, g.n);
}

}  // namespace detail

/// 2-D cross-correlation with zero padding.
/// x: [N x Cin x H x W], weight: [Cout x Cin x kH x kW], bias: [Cout].
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& weight, const Tensor<Scalar>& bias, int stride,
                      int padding) {
  detail::require_rank(x.shape(), 4, "conv2d input");
  detail::require_rank(weight.shape(), 4, "conv2d kernel");
  if (weight.dim(1) != x.dim(1)) {
    throw DimensionError("conv2d kernel " + shape_string(weight.shape()) + " does not match input " +
                         shape_string(x.shape()));
  }
  if (bias.rank() != 1 || bias.dim(0) != weight.dim(0)) {
    throw DimensionError("conv2d bias " + shape_string(bias.shape()) + " does not match kernel " +
                         shape_string(weight.shape()));
  }
  if (stride < 1 || padding < 0) throw ConfigError("conv2d needs stride >= 1 and padding >= 0");

  using RowMatrix = typename Tensor<Scalar>::RowMatrix;
  using ConstMap = typename Tensor<Scalar>::ConstMatrixMap;
  detail::ConvGeometry geo{x.dim(0), x.dim(1), x.dim(2), x.dim(3), weight.dim(0), weight.dim(2), weight.dim(3),
                           0,        0,        stride,   padding};
  geo.ho = detail::conv_extent(geo.h, geo.kh, stride, padding, "height");
  geo.wo = detail::conv_extent(geo.w, geo.kw, stride, padding, "width");

  Tensor<Scalar> out({geo.n, geo.cout, geo.ho, geo.wo});
  const Index chunk = detail::conv_chunk(geo);
  const Index plane = geo.plane();
  ConstMap kernel(weight.data().data(), geo.cout, geo.patch());
  RowMatrix col, res;
  for (Index n0 = 0; n0 < geo.n; n0 += chunk) {
    const Index nb = std::min(chunk, geo.n - n0);
    detail::im2col(x.data().data(), geo, n0, nb, col);
    res.noalias() = kernel * col;
    for (Index s = 0; s < nb; ++s) {
      for (Index co = 0; co < geo.cout; ++co) {
        Scalar* dst = out.mutable_data().data() + ((n0 + s) * geo.cout + co) * plane;
        const Scalar* src = res.data() + co * res.cols() + s * plane;
        const Scalar b = bias.data()[co];
        for (Index p = 0; p < plane; ++p) dst[p] = src[p] + b;
      }
    }
  }
  detail::ensure_finite(out, "conv2d");

  detail::record(out, {&x, &weight, &bias}, [x, weight, bias, geo, chunk](const auto& g) {
    const Index plane = geo.plane();
    ConstMap kernel(weight.data().data(), geo.cout, geo.patch());
    RowMatrix col, gy, dcol;
    RowMatrix dkernel = RowMatrix::Zero(geo.cout, geo.patch());
    typename Tensor<Scalar>::Array dbias = Tensor<Scalar>::Array::Zero(geo.cout);
    typename Tensor<Scalar>::Array dx;
    if (x.requires_grad()) dx = Tensor<Scalar>::Array::Zero(x.numel());
    for (Index n0 = 0; n0 < geo.n; n0 += chunk) {
      const Index nb = std::min(chunk, geo.n - n0);
      gy.resize(geo.cout, nb * plane);
      for (Index s = 0; s < nb; ++s) {
        for (Index co = 0; co < geo.cout; ++co) {
          const Scalar* src = g.data() + ((n0 + s) * geo.cout + co) * plane;
          std::copy(src, src + plane, gy.data() + co * gy.cols() + s * plane);
        }
      }
      dbias += gy.rowwise().sum().array();
      if (weight.requires_grad()) {
        detail::im2col(x.data().data(), geo, n0, nb, col);
        dkernel.noalias() += gy * col.transpose();
      }
      if (x.requires_grad()) {
        dcol.noalias() = kernel.transpose() * gy;
        detail::col2im<Scalar>(dcol, geo, n0, nb, dx.data());
      }
    }
    if (x.requires_grad()) x.accumulate_grad(dx);
    if (weight.requires_grad()) {
      weight.accumulate_grad(Eigen::Map<const typename Tensor<Scalar>::Array>(dkernel.data(), dkernel.size()));
    }
    bias.accumulate_grad(dbias);
  });
  return out;
}

/// Per-channel batch normalization over every axis except axis 1.
/// Training mode normalizes with biased batch statistics and folds them into
/// the running estimates (the running variance uses the unbiased estimate).
template <typename Scalar>
Tensor<Scalar> batch_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma, const Tensor<Scalar>& beta,
                          Tensor<Scalar>& running_mean, Tensor<Scalar>& running_var, bool training,
                          Scalar momentum, Scalar eps) {
  using Array = typename Tensor<Scalar>::Array;
  if (x.rank() < 2) throw DimensionError("batch_norm expects rank >= 2, got " + shape_string(x.shape()));
  const Index n = x.dim(0), c = x.dim(1), inner = detail::inner_extent(x.shape());
  for (const Tensor<Scalar>* v : std::initializer_list<const Tensor<Scalar>*>{&gamma, &beta, &running_mean, &running_var}) {
    if (v->rank() != 1 || v->dim(0) != c) {
      throw DimensionError("batch_norm parameter " + shape_string(v->shape()) + " does not match input " +
                           shape_string(x.shape()));
    }
  }
  const Index count = n * inner;
  if (training && count < 2) {
    throw DegenerateBatchError("batch_norm in training mode needs at least 2 values per channel, got " +
                               std::to_string(count));
  }

  const Scalar* px = x.data().data();
  Array mu(c), var(c);
  if (training) {
    for (Index ch = 0; ch < c; ++ch) {
      Scalar s = 0;
      for (Index b = 0; b < n; ++b) {
        const Scalar* p = px + (b * c + ch) * inner;
        for (Index i = 0; i < inner; ++i) s += p[i];
      }
      mu[ch] = s / Scalar(count);
      Scalar v = 0;
      for (Index b = 0; b < n; ++b) {
        const Scalar* p = px + (b * c + ch) * inner;
        for (Index i = 0; i < inner; ++i) v += (p[i] - mu[ch]) * (p[i] - mu[ch]);
      }
      var[ch] = v / Scalar(count);
    }
    running_mean.mutable_data() = (Scalar(1) - momentum) * running_mean.data() + momentum * mu;
    running_var.mutable_data() =
        (Scalar(1) - momentum) * running_var.data() + momentum * var * (Scalar(count) / Scalar(count - 1));
  } else {
    mu = running_mean.data();
    var = running_var.data();
  }
  Array inv_std = (var + eps).rsqrt();

  Array xhat(x.numel());
  Tensor<Scalar> out(x.shape());
  Scalar* py = out.mutable_data().data();
  for (Index b = 0; b < n; ++b) {
    for (Index ch = 0; ch < c; ++ch) {
      const Index off = (b * c + ch) * inner;
      const Scalar gm = gamma.data()[ch], bt = beta.data()[ch];
      for (Index i = 0; i < inner; ++i) {
        const Scalar h = (px[off + i] - mu[ch]) * inv_std[ch];
        xhat[off + i] = h;
        py[off + i] = gm * h + bt;
      }
    }
  }
  detail::ensure_finite(out, "batch_norm");

  detail::record(out, {&x, &gamma, &beta},
                 [x, gamma, beta, training, n, c, inner, count, xhat = std::move(xhat),
                  inv_std = std::move(inv_std)](const auto& g) {
                   Array dgamma = Array::Zero(c), dbeta = Array::Zero(c);
                   for (Index b = 0; b < n; ++b) {
                     for (Index ch = 0; ch < c; ++ch) {
                       const Index off = (b * c + ch) * inner;
                       for (Index i = 0; i < inner; ++i) {
                         dgamma[ch] += g[off + i] * xhat[off + i];
                         dbeta[ch] += g[off + i];
                       }
                     }
                   }
                   if (x.requires_grad()) {
                     Array dx(x.numel());
                     for (Index b = 0; b < n; ++b) {
                       for (Index ch = 0; ch < c; ++ch) {
                         const Index off = (b * c + ch) * inner;
                         const Scalar scale = gamma.data()[ch] * inv_std[ch];
                         if (training) {
                           const Scalar mean_dy = dbeta[ch] / Scalar(count);
                           const Scalar mean_dy_xhat = dgamma[ch] / Scalar(count);
                           for (Index i = 0; i < inner; ++i) {
                             dx[off + i] = scale * (g[off + i] - mean_dy - xhat[off + i] * mean_dy_xhat);
                           }
                         } else {
                           for (Index i = 0; i < inner; ++i) dx[off + i] = scale * g[off + i];
                         }
                       }
                     }
                     x.accumulate_grad(dx);
                   }
                   gamma.accumulate_grad(dgamma);
                   beta.accumulate_grad(dbeta);
                 });
  return out;
}

/// Max or energy-aware (mean) pooling over k x k windows with stride s;
/// partial windows at the border are dropped. Max ties go to the first
/// element in row-major order.
template <typename Scalar>
Tensor<Scalar> pool2d(const Tensor<Scalar>& x, const PoolSpec& spec) {
  detail::require_rank(x.shape(), 4, "pool2d input");
  if (spec.kernel < 1 || spec.stride < 1) throw ConfigError("pool2d needs kernel >= 1 and stride >= 1");
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index k = spec.kernel, s = spec.stride;
  if (k > h || k > w) {
    throw ConfigError("pool2d kernel " + std::to_string(k) + " exceeds input " + shape_string(x.shape()));
  }
  const Index ho = (h - k) / s + 1, wo = (w - k) / s + 1;
  Tensor<Scalar> out({n, c, ho, wo});
  const Scalar* px = x.data().data();
  Scalar* py = out.mutable_data().data();
  std::vector<Index> argmax;
  if (spec.kind == PoolKind::Max) argmax.resize(std::size_t(out.numel()));
  const Scalar area = Scalar(k * k);
  const Scalar inv_area = Scalar(1) / area;

  for (Index plane = 0; plane < n * c; ++plane) {
    const Scalar* src = px + plane * h * w;
    for (Index oy = 0; oy < ho; ++oy) {
      for (Index ox = 0; ox < wo; ++ox) {
        const Index o = (plane * ho + oy) * wo + ox;
        if (spec.kind == PoolKind::Max) {
          Index best = (oy * s) * w + ox * s;
          for (Index ky = 0; ky < k; ++ky) {
            for (Index kx = 0; kx < k; ++kx) {
              const Index idx = (oy * s + ky) * w + ox * s + kx;
              if (src[idx] > src[best]) best = idx;
            }
          }
          py[o] = src[best];
          argmax[std::size_t(o)] = plane * h * w + best;
        } else {
          Scalar acc = 0;
          for (Index ky = 0; ky < k; ++ky) {
            for (Index kx = 0; kx < k; ++kx) acc += src[(oy * s + ky) * w + ox * s + kx];
          }
          py[o] = acc / area;
        }
      }
    }
  }

  detail::record(out, {&x}, [x, spec, n, c, h, w, ho, wo, inv_area, argmax = std::move(argmax)](const auto& g) {
    typename Tensor<Scalar>::Array dx = Tensor<Scalar>::Array::Zero(x.numel());
    if (spec.kind == PoolKind::Max) {
      for (Index o = 0; o < g.size(); ++o) dx[argmax[std::size_t(o)]] += g[o];
    } else {
      const Index k = spec.kernel, s = spec.stride;
      for (Index plane = 0; plane < n * c; ++plane) {
        for (Index oy = 0; oy < ho; ++oy) {
          for (Index ox = 0; ox < wo; ++ox) {
            const Scalar v = g[(plane * ho + oy) * wo + ox] * inv_area;
            for (Index ky = 0; ky < k; ++ky) {
              for (Index kx = 0; kx < k; ++kx) dx[plane * h * w + (oy * s + ky) * w + ox * s + kx] += v;
            }
          }
        }
      }
    }
    x.accumulate_grad(dx);
  });
  return out;
}

namespace detail {

// Source offset in [N, C*r*r, H, W] for output position (n, c, y, x) of the
// shuffled [N, C, H*r, W*r] tensor.
inline Index shuffle_source(Index n, Index c, Index y, Index x, Index r, Index cin, Index h, Index w) {
  const Index ch = c * r * r + r * (y % r) + (x % r);
  return ((n * cin + ch) * h + y / r) * w + x / r;
}

}  // namespace detail

/// Sub-pixel rearrangement [N, C*r^2, H, W] -> [N, C, H*r, W*r]:
/// out(n, c, y, x) = in(n, c*r^2 + r*(y mod r) + (x mod r), y/r, x/r).
template <typename Scalar>
Tensor<Scalar> pixel_shuffle(const Tensor<Scalar>& x, int r) {
  detail::require_rank(x.shape(), 4, "pixel_shuffle input");
  if (r < 1) throw ConfigError("pixel_shuffle factor must be >= 1");
  const Index n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (cin % (Index(r) * r) != 0) {
    throw ConfigError("pixel_shuffle: " + std::to_string(cin) + " channels not divisible by " +
                      std::to_string(r * r));
  }
  const Index cout = cin / (r * r), ho = h * r, wo = w * r;
  std::vector<Index> src(std::size_t(x.numel()));
  Index o = 0;
  for (Index b = 0; b < n; ++b)
    for (Index c = 0; c < cout; ++c)
      for (Index y = 0; y < ho; ++y)
        for (Index xx = 0; xx < wo; ++xx) src[std::size_t(o++)] = detail::shuffle_source(b, c, y, xx, r, cin, h, w);

  typename Tensor<Scalar>::Array data(x.numel());
  for (Index i = 0; i < data.size(); ++i) data[i] = x.data()[src[std::size_t(i)]];
  Tensor<Scalar> out({n, cout, ho, wo}, std::move(data));
  detail::record(out, {&x}, [x, src = std::move(src)](const auto& g) {
    typename Tensor<Scalar>::Array dx(x.numel());
    for (Index i = 0; i < g.size(); ++i) dx[src[std::size_t(i)]] = g[i];
    x.accumulate_grad(dx);
  });
  return out;
}

/// Inverse of pixel_shuffle: [N, C, H*r, W*r] -> [N, C*r^2, H, W].
template <typename Scalar>
Tensor<Scalar> pixel_unshuffle(const Tensor<Scalar>& x, int r) {
  detail::require_rank(x.shape(), 4, "pixel_unshuffle input");
  if (r < 1) throw ConfigError("pixel_unshuffle factor must be >= 1");
  const Index n = x.dim(0), c = x.dim(1), hh = x.dim(2), ww = x.dim(3);
  if (hh % r != 0 || ww % r != 0) {
    throw ConfigError("pixel_unshuffle: extents of " + shape_string(x.shape()) + " not divisible by " +
                      std::to_string(r));
  }
  const Index cout = c * r * r, h = hh / r, w = ww / r;
  // dst[i] is where input element i lands.
  std::vector<Index> dst(std::size_t(x.numel()));
  Index i = 0;
  for (Index b = 0; b < n; ++b)
    for (Index ch = 0; ch < c; ++ch)
      for (Index y = 0; y < hh; ++y)
        for (Index xx = 0; xx < ww; ++xx) dst[std::size_t(i++)] = detail::shuffle_source(b, ch, y, xx, r, cout, h, w);

  typename Tensor<Scalar>::Array data(x.numel());
  for (Index j = 0; j < data.size(); ++j) data[dst[std::size_t(j)]] = x.data()[j];
  Tensor<Scalar> out({n, cout, h, w}, std::move(data));
  detail::record(out, {&x}, [x, dst = std::move(dst)](const auto& g) {
    typename Tensor<Scalar>::Array dx(x.numel());
    for (Index j = 0; j < dx.size(); ++j) dx[j] = g[dst[std::size_t(j)]];
    x.accumulate_grad(dx);
  });
  return out;
}

/// Texture energy layer: per-channel mean over the full spatial extent,
/// [N, C, H, W] -> [N, C].
template <typename Scalar>
Tensor<Scalar> texture_energy(const Tensor<Scalar>& x) {
  detail::require_rank(x.shape(), 4, "texture_energy input");
  const Index n = x.dim(0), c = x.dim(1), area = x.dim(2) * x.dim(3);
  Tensor<Scalar> out({n, c});
  const Scalar* px = x.data().data();
  for (Index p = 0; p < n * c; ++p) {
    Scalar acc = 0;
    for (Index i = 0; i < area; ++i) acc += px[p * area + i];
    out.mutable_data()[p] = acc / Scalar(area);
  }
  detail::record(out, {&x}, [x, n, c, area](const auto& g) {
    typename Tensor<Scalar>::Array dx(x.numel());
    for (Index p = 0; p < n * c; ++p) dx.segment(p * area, area).setConstant(g[p] / Scalar(area));
    x.accumulate_grad(dx);
  });
  return out;
}

/// Affine map x [N x in] * weight [in x out] + bias [out].
template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& x, const Tensor<Scalar>& weight, const Tensor<Scalar>& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(0)) {
    throw DimensionError("linear: input " + shape_string(x.shape()) + " does not match weight " +
                         shape_string(weight.shape()));
  }
  return add(matmul(x, weight), bias);
}

namespace detail {

template <typename Scalar>
typename Tensor<Scalar>::RowMatrix softmax_rows(const typename Tensor<Scalar>::ConstMatrixMap& z) {
  typename Tensor<Scalar>::RowMatrix p = (z.colwise() - z.rowwise().maxCoeff()).array().exp().matrix();
  p.array().colwise() /= p.rowwise().sum().array();
  return p;
}

}  // namespace detail

/// Row-wise softmax of [N x K].
template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& x) {
  detail::require_rank(x.shape(), 2, "softmax input");
  const Index n = x.dim(0), k = x.dim(1);
  auto p = detail::softmax_rows<Scalar>(x.matrix());
  Tensor<Scalar> out({n, k}, Eigen::Map<const typename Tensor<Scalar>::Array>(p.data(), p.size()));
  detail::record(out, {&x}, [x, y = out.data(), n, k](const auto& g) {
    typename Tensor<Scalar>::Array dx(x.numel());
    for (Index r = 0; r < n; ++r) {
      const auto gr = g.segment(r * k, k);
      const auto yr = y.segment(r * k, k);
      dx.segment(r * k, k) = yr * (gr - (gr * yr).sum());
    }
    x.accumulate_grad(dx);
  });
  return out;
}

/// Row-wise log-softmax of [N x K], stabilized by subtracting the row max.
template <typename Scalar>
Tensor<Scalar> log_softmax(const Tensor<Scalar>& x) {
  detail::require_rank(x.shape(), 2, "log_softmax input");
  const Index n = x.dim(0), k = x.dim(1);
  const auto z = x.matrix();
  typename Tensor<Scalar>::RowMatrix shifted = z.colwise() - z.rowwise().maxCoeff();
  typename Tensor<Scalar>::RowMatrix lsm =
      shifted.colwise() - shifted.array().exp().rowwise().sum().log().matrix();
  Tensor<Scalar> out({n, k}, Eigen::Map<const typename Tensor<Scalar>::Array>(lsm.data(), lsm.size()));
  detail::ensure_finite(out, "log_softmax");
  detail::record(out, {&x}, [x, y = out.data(), n, k](const auto& g) {
    typename Tensor<Scalar>::Array dx(x.numel());
    for (Index r = 0; r < n; ++r) {
      const auto gr = g.segment(r * k, k);
      dx.segment(r * k, k) = gr - y.segment(r * k, k).exp() * gr.sum();
    }
    x.accumulate_grad(dx);
  });
  return out;
}

/// Kaiming-uniform (fan-in, ReLU gain) initial values.
template <typename Scalar, typename Rng>
Tensor<Scalar> kaiming_uniform(Shape shape, Index fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / double(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<Scalar> t(std::move(shape));
  for (Index i = 0; i < t.numel(); ++i) t.mutable_data()[i] = Scalar(dist(rng));
  return t;
}

template <typename Scalar>
struct Conv2d {
  Tensor<Scalar> weight;
  Tensor<Scalar> bias;
  int stride = 1;
  int padding = 0;

  template <typename Rng>
  static Conv2d create(Index in_channels, Index out_channels, Index kernel, int stride, int padding, Rng& rng) {
    Conv2d layer;
    layer.weight = kaiming_uniform<Scalar>({out_channels, in_channels, kernel, kernel},
                                           in_channels * kernel * kernel, rng);
    layer.bias = Tensor<Scalar>::zeros({out_channels});
    layer.weight.set_requires_grad(true);
    layer.bias.set_requires_grad(true);
    layer.stride = stride;
    layer.padding = padding;
    return layer;
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x) const { return conv2d(x, weight, bias, stride, padding); }
  Index param_count() const { return weight.numel() + bias.numel(); }
};

template <typename Scalar>
struct BatchNorm {
  Tensor<Scalar> gamma;
  Tensor<Scalar> beta;
  Tensor<Scalar> running_mean;
  Tensor<Scalar> running_var;
  Scalar eps = Scalar(1e-5);
  Scalar momentum = Scalar(0.1);
  bool training = true;

  static BatchNorm create(Index channels) {
    BatchNorm layer;
    layer.gamma = Tensor<Scalar>::ones({channels});
    layer.beta = Tensor<Scalar>::zeros({channels});
    layer.running_mean = Tensor<Scalar>::zeros({channels});
    layer.running_var = Tensor<Scalar>::ones({channels});
    layer.gamma.set_requires_grad(true);
    layer.beta.set_requires_grad(true);
    return layer;
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x) {
    return batch_norm(x, gamma, beta, running_mean, running_var, training, momentum, eps);
  }
  /// Learnable values only; running statistics are buffers.
  Index param_count() const { return gamma.numel() + beta.numel(); }
};

template <typename Scalar>
struct Linear {
  Tensor<Scalar> weight;  // [in x out]
  Tensor<Scalar> bias;    // [out]

  template <typename Rng>
  static Linear create(Index in, Index out, Rng& rng) {
    Linear layer;
    layer.weight = kaiming_uniform<Scalar>({in, out}, in, rng);
    layer.bias = Tensor<Scalar>::zeros({out});
    layer.weight.set_requires_grad(true);
    layer.bias.set_requires_grad(true);
    return layer;
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x) const { return linear(x, weight, bias); }
  Index param_count() const { return weight.numel() + bias.numel(); }
};

}  // namespace irisnet
