#pragma once

// Naive-loop reference implementations used as test oracles. They share no
// code with the library beyond the Tensor container.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "irisnet/layers.hpp"
#include "irisnet/matching.hpp"

namespace oracle {

using irisnet::Index;
using irisnet::Tensor;

template <typename S>
Tensor<S> random_tensor(irisnet::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor<S> t(std::move(shape));
  for (Index i = 0; i < t.numel(); ++i) t.mutable_data()[i] = S(d(rng));
  return t;
}

inline double at4(const Tensor<double>& t, Index n, Index c, Index y, Index x) {
  return t.data()[((n * t.dim(1) + c) * t.dim(2) + y) * t.dim(3) + x];
}

inline Tensor<double> conv2d(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b, int stride,
                             int pad) {
  const Index n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const Index cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const Index ho = (h + 2 * pad - kh) / stride + 1, wo = (wd + 2 * pad - kw) / stride + 1;
  Tensor<double> out({n, cout, ho, wo});
  for (Index bi = 0; bi < n; ++bi)
    for (Index co = 0; co < cout; ++co)
      for (Index oy = 0; oy < ho; ++oy)
        for (Index ox = 0; ox < wo; ++ox) {
          double acc = b.data()[co];
          for (Index ci = 0; ci < cin; ++ci)
            for (Index ky = 0; ky < kh; ++ky)
              for (Index kx = 0; kx < kw; ++kx) {
                const Index iy = oy * stride + ky - pad, ix = ox * stride + kx - pad;
                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                acc += at4(x, bi, ci, iy, ix) * at4(w, co, ci, ky, kx);
              }
          out.mutable_data()[((bi * cout + co) * ho + oy) * wo + ox] = acc;
        }
  return out;
}

struct BnResult {
  Tensor<double> out;
  std::vector<double> running_mean;
  std::vector<double> running_var;
};

/// Training-mode batch norm on [N, C, H, W] with running-stat update.
inline BnResult batch_norm_train(const Tensor<double>& x, const Tensor<double>& gamma, const Tensor<double>& beta,
                                 std::vector<double> rm, std::vector<double> rv, double momentum, double eps) {
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<double> out(x.shape());
  const double count = double(n * h * w);
  for (Index ch = 0; ch < c; ++ch) {
    double mean = 0;
    for (Index b = 0; b < n; ++b)
      for (Index y = 0; y < h; ++y)
        for (Index xx = 0; xx < w; ++xx) mean += at4(x, b, ch, y, xx);
    mean /= count;
    double var = 0;
    for (Index b = 0; b < n; ++b)
      for (Index y = 0; y < h; ++y)
        for (Index xx = 0; xx < w; ++xx) var += (at4(x, b, ch, y, xx) - mean) * (at4(x, b, ch, y, xx) - mean);
    var /= count;
    for (Index b = 0; b < n; ++b)
      for (Index y = 0; y < h; ++y)
        for (Index xx = 0; xx < w; ++xx) {
          const Index i = ((b * c + ch) * h + y) * w + xx;
          out.mutable_data()[i] = (x.data()[i] - mean) / std::sqrt(var + eps) * gamma.data()[ch] + beta.data()[ch];
        }
    rm[std::size_t(ch)] = (1 - momentum) * rm[std::size_t(ch)] + momentum * mean;
    rv[std::size_t(ch)] = (1 - momentum) * rv[std::size_t(ch)] + momentum * var * count / (count - 1);
  }
  return {out, rm, rv};
}

inline Tensor<double> batch_norm_eval(const Tensor<double>& x, const Tensor<double>& gamma,
                                      const Tensor<double>& beta, const std::vector<double>& rm,
                                      const std::vector<double>& rv, double eps) {
  const Index c = x.dim(1), inner = x.dim(2) * x.dim(3);
  Tensor<double> out(x.shape());
  for (Index i = 0; i < x.numel(); ++i) {
    const std::size_t ch = std::size_t((i / inner) % c);
    out.mutable_data()[i] =
        (x.data()[i] - rm[ch]) / std::sqrt(rv[ch] + eps) * gamma.data()[Index(ch)] + beta.data()[Index(ch)];
  }
  return out;
}

/// Max (first maximum wins) or mean pooling; same scalar type as the input
/// so results compare exactly.
template <typename S>
Tensor<S> pool(const Tensor<S>& x, bool max, Index k, Index s) {
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index ho = (h - k) / s + 1, wo = (w - k) / s + 1;
  Tensor<S> out({n, c, ho, wo});
  for (Index b = 0; b < n; ++b)
    for (Index ch = 0; ch < c; ++ch)
      for (Index oy = 0; oy < ho; ++oy)
        for (Index ox = 0; ox < wo; ++ox) {
          S best = -std::numeric_limits<S>::infinity();
          S acc = 0;
          for (Index ky = 0; ky < k; ++ky)
            for (Index kx = 0; kx < k; ++kx) {
              const S v = x.data()[((b * c + ch) * h + oy * s + ky) * w + ox * s + kx];
              best = std::max(best, v);
              acc += v;
            }
          out.mutable_data()[((b * c + ch) * ho + oy) * wo + ox] = max ? best : acc / S(k * k);
        }
  return out;
}

template <typename S>
Tensor<S> pixel_shuffle(const Tensor<S>& x, Index r) {
  const Index n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3), cout = cin / (r * r);
  Tensor<S> out({n, cout, h * r, w * r});
  for (Index b = 0; b < n; ++b)
    for (Index ch = 0; ch < cin; ++ch)
      for (Index y = 0; y < h; ++y)
        for (Index xx = 0; xx < w; ++xx) {
          // Input channel ch carries sub-pixel (dy, dx) of output channel ch / r^2.
          const Index co = ch / (r * r), dy = (ch % (r * r)) / r, dx = ch % r;
          out.mutable_data()[((b * cout + co) * h * r + y * r + dy) * w * r + xx * r + dx] =
              x.data()[((b * cin + ch) * h + y) * w + xx];
        }
  return out;
}

template <typename S>
Tensor<S> texture_energy(const Tensor<S>& x) {
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<S> out({n, c});
  for (Index b = 0; b < n; ++b)
    for (Index ch = 0; ch < c; ++ch) {
      S acc = 0;
      for (Index y = 0; y < h; ++y)
        for (Index xx = 0; xx < w; ++xx) acc += x.data()[((b * c + ch) * h + y) * w + xx];
      out.mutable_data()[b * c + ch] = acc / S(h * w);
    }
  return out;
}

/// Direct windowed SSIM in double over valid positions of an [H x W] pair.
inline double ssim(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, int window, double sigma, double range) {
  Eigen::VectorXd g(window);
  for (int i = 0; i < window; ++i) {
    const double d = i - (window - 1) / 2.0;
    g[i] = std::exp(-d * d / (2 * sigma * sigma));
  }
  g /= g.sum();
  const double c1 = (0.01 * range) * (0.01 * range), c2 = (0.03 * range) * (0.03 * range);
  double total = 0;
  int count = 0;
  for (Index y = 0; y + window <= a.rows(); ++y)
    for (Index x = 0; x + window <= a.cols(); ++x) {
      double ma = 0, mb = 0;
      for (int i = 0; i < window; ++i)
        for (int j = 0; j < window; ++j) {
          ma += g[i] * g[j] * a(y + i, x + j);
          mb += g[i] * g[j] * b(y + i, x + j);
        }
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < window; ++i)
        for (int j = 0; j < window; ++j) {
          const double da = a(y + i, x + j) - ma, db = b(y + i, x + j) - mb;
          va += g[i] * g[j] * da * da;
          vb += g[i] * g[j] * db * db;
          cov += g[i] * g[j] * da * db;
        }
      total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return total / count;
}

/// Exhaustive DET sweep: each distinct score is a threshold, counted
/// directly without sorting tricks.
struct SweepPoint {
  double threshold, far, frr;
};

inline std::vector<SweepPoint> det_sweep(const irisnet::ScoreSet& s) {
  std::vector<double> t = s.genuine;
  t.insert(t.end(), s.imposter.begin(), s.imposter.end());
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  std::vector<SweepPoint> pts{{-std::numeric_limits<double>::infinity(), 0.0, 1.0}};
  for (double th : t) {
    double fa = 0, fr = 0;
    for (double v : s.imposter) fa += v <= th;
    for (double v : s.genuine) fr += v > th;
    pts.push_back({th, fa / double(s.imposter.size()), fr / double(s.genuine.size())});
  }
  return pts;
}

inline double trapezoid_auc(const std::vector<SweepPoint>& pts) {
  double auc = 0;
  for (std::size_t i = 1; i < pts.size(); ++i) auc += (pts[i].far - pts[i - 1].far) * (pts[i].frr + pts[i - 1].frr) / 2;
  return auc;
}

/// Discrete crossing: the sweep point with the smallest |FAR - FRR|,
/// reported as the mean of the two rates.
inline double discrete_eer(const std::vector<SweepPoint>& pts) {
  double best = 2, eer = 0;
  for (const auto& p : pts) {
    if (std::abs(p.far - p.frr) < best) {
      best = std::abs(p.far - p.frr);
      eer = (p.far + p.frr) / 2;
    }
  }
  return eer;
}

/// All-pairs verification scoring.
inline irisnet::ScoreSet brute_force_verification(const std::vector<irisnet::Signature>& gallery,
                                                  const std::vector<irisnet::Probe>& probes) {
  irisnet::ScoreSet out;
  for (const auto& p : probes) {
    double best = std::numeric_limits<double>::infinity();
    const Eigen::VectorXd pv = p.signature.values.cast<double>();
    for (const auto& g : gallery) {
      if (g.class_id != p.claimed_class) continue;
      const Eigen::VectorXd gv = g.values.cast<double>();
      best = std::min(best, (pv / pv.norm() - gv / gv.norm()).norm());
    }
    (p.signature.class_id == p.claimed_class ? out.genuine : out.imposter).push_back(best);
  }
  return out;
}

}  // namespace oracle
