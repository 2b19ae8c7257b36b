#pragma once

#include <cmath>
#include <span>
#include <string>

#include "irisnet/layers.hpp"

namespace irisnet {

/// Windowed SSIM parameters. Defaults are the usual 11x11 Gaussian window
/// with sigma 1.5 on images in [0, 1].
struct SsimConfig {
  int window = 11;
  double sigma = 1.5;
  double dynamic_range = 1.0;

  double c1() const { return (0.01 * dynamic_range) * (0.01 * dynamic_range); }
  double c2() const { return (0.03 * dynamic_range) * (0.03 * dynamic_range); }

  void validate() const {
    if (window < 3 || window % 2 == 0) {
      throw ConfigError("SSIM window must be odd and >= 3, got " + std::to_string(window));
    }
    if (!(sigma > 0.0) || !(dynamic_range > 0.0)) throw ConfigError("SSIM sigma and range must be positive");
  }
};

/// Normalized 2-D Gaussian as a [1 x 1 x w x w] kernel.
template <typename Scalar>
Tensor<Scalar> gaussian_window(const SsimConfig& cfg) {
  cfg.validate();
  const int w = cfg.window;
  const double centre = (w - 1) / 2.0;
  Eigen::ArrayXd g(w);
  for (int i = 0; i < w; ++i) g[i] = std::exp(-(i - centre) * (i - centre) / (2.0 * cfg.sigma * cfg.sigma));
  g /= g.sum();
  Tensor<Scalar> k({1, 1, w, w});
  for (int y = 0; y < w; ++y)
    for (int x = 0; x < w; ++x) k.mutable_data()[y * w + x] = Scalar(g[y] * g[x]);
  return k;
}

namespace detail {

template <typename Scalar>
Tensor<Scalar> as_image_batch(const Tensor<Scalar>& t) {
  if (t.rank() == 2) return reshape(t, Shape{1, 1, t.dim(0), t.dim(1)});
  if (t.rank() == 4 && t.dim(1) == 1) return t;
  throw DimensionError("SSIM expects [H x W] or [N x 1 x H x W], got " + shape_string(t.shape()));
}

}  // namespace detail

/// Mean structural similarity over all valid (unpadded) window positions,
/// averaged across the batch. Differentiable in both arguments.
template <typename Scalar>
Tensor<Scalar> ssim(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const SsimConfig& cfg = {}) {
  if (a.shape() != b.shape()) {
    throw DimensionError("SSIM operands differ: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  cfg.validate();
  const Tensor<Scalar> x = detail::as_image_batch(a);
  const Tensor<Scalar> y = detail::as_image_batch(b);
  if (x.dim(2) < cfg.window || x.dim(3) < cfg.window) {
    throw ConfigError("image " + shape_string(a.shape()) + " is smaller than the SSIM window " +
                      std::to_string(cfg.window));
  }
  const Tensor<Scalar> kernel = gaussian_window<Scalar>(cfg);
  const Tensor<Scalar> zero = Tensor<Scalar>::zeros({1});
  auto blur = [&](const Tensor<Scalar>& t) { return conv2d(t, kernel, zero, 1, 0); };
  const Scalar c1 = Scalar(cfg.c1()), c2 = Scalar(cfg.c2());

  const auto mu_x = blur(x);
  const auto mu_y = blur(y);
  const auto mu_xx = mu_x * mu_x;
  const auto mu_yy = mu_y * mu_y;
  const auto mu_xy = mu_x * mu_y;
  const auto var_x = blur(x * x) - mu_xx;
  const auto var_y = blur(y * y) - mu_yy;
  const auto cov = blur(x * y) - mu_xy;

  const auto luminance = (mu_xy * Scalar(2)) + c1;
  const auto structure = (cov * Scalar(2)) + c2;
  const auto luminance_norm = (mu_xx + mu_yy) + c1;
  const auto structure_norm = (var_x + var_y) + c2;
  return mean((luminance * structure) / (luminance_norm * structure_norm));
}

/// 1 - SSIM(original, reconstruction), with the reconstruction clamped to
/// [0, 1] first.
template <typename Scalar>
Tensor<Scalar> reconstruction_loss(const Tensor<Scalar>& original, const Tensor<Scalar>& reconstruction,
                                   const SsimConfig& cfg = {}) {
  return Scalar(1) - ssim(original, clamp(reconstruction, Scalar(0), Scalar(1)), cfg);
}

/// Mean negative log-likelihood of `labels` under row-wise softmax(logits).
template <typename Scalar>
Tensor<Scalar> cross_entropy(const Tensor<Scalar>& logits, std::span<const int> labels) {
  detail::require_rank(logits.shape(), 2, "cross_entropy logits");
  const Index n = logits.dim(0), k = logits.dim(1);
  if (Index(labels.size()) != n) {
    throw ContractError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                        " rows");
  }
  for (int label : labels) {
    if (label < 0 || label >= k) {
      throw ContractError("cross_entropy: label " + std::to_string(label) + " outside [0, " + std::to_string(k) +
                          ")");
    }
  }
  auto p = detail::softmax_rows<Scalar>(logits.matrix());
  const auto z = logits.matrix();
  Scalar total = 0;
  for (Index r = 0; r < n; ++r) {
    const Scalar m = z.row(r).maxCoeff();
    const Scalar lse = m + std::log((z.row(r).array() - m).exp().sum());
    total += lse - z(r, labels[std::size_t(r)]);
  }
  Tensor<Scalar> out = Tensor<Scalar>::scalar(total / Scalar(n));
  detail::ensure_finite(out, "cross_entropy");
  std::vector<int> owned(labels.begin(), labels.end());
  detail::record(out, {&logits}, [logits, p = std::move(p), owned = std::move(owned), n](const auto& g) {
    typename Tensor<Scalar>::RowMatrix d = p;
    for (Index r = 0; r < n; ++r) d(r, owned[std::size_t(r)]) -= Scalar(1);
    d *= g[0] / Scalar(n);
    logits.accumulate_grad(Eigen::Map<const typename Tensor<Scalar>::Array>(d.data(), d.size()));
  });
  return out;
}

}  // namespace irisnet
