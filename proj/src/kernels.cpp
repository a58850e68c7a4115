#include "onebev/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "onebev/errors.hpp"

namespace onebev::kernels {

namespace {

std::size_t last_dim(const Tensor& t) { return t.rank() == 0 ? 1 : t.shape().back(); }

void require_rank3(const Tensor& t, const char* op) {
  require(t.rank() == 3, std::string(op) + ": expected [H, W, C], got " + shape_str(t.shape()));
}

}  // namespace

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require(x.rank() >= 1, "linear: x must have rank >= 1");
  require(w.rank() == 2 && w.dim(0) == x.shape().back(),
          "linear: weight " + shape_str(w.shape()) + " does not match input " + shape_str(x.shape()));
  const std::size_t in = w.dim(0);
  const std::size_t out = w.dim(1);
  require(b.empty() || b.shape() == Shape{out}, "linear: bias must be [out]");
  const std::size_t rows = x.size() / in;
  Shape ys = x.shape();
  ys.back() = out;
  Tensor y(ys);
  for (std::size_t r = 0; r < rows; ++r) {
    double* yr = y.ptr() + r * out;
    if (!b.empty()) std::copy(b.ptr(), b.ptr() + out, yr);
    const double* xr = x.ptr() + r * in;
    for (std::size_t i = 0; i < in; ++i) {
      const double xv = xr[i];
      if (xv == 0.0) continue;
      const double* wr = w.ptr() + i * out;
      for (std::size_t o = 0; o < out; ++o) yr[o] += xv * wr[o];
    }
  }
  return y;
}

LinearGrads linear_backward(const Tensor& x, const Tensor& w, bool has_bias, const Tensor& grad_y) {
  const std::size_t in = w.dim(0);
  const std::size_t out = w.dim(1);
  const std::size_t rows = x.size() / in;
  LinearGrads g{Tensor(x.shape()), Tensor(w.shape()), has_bias ? Tensor({out}) : Tensor()};
  for (std::size_t r = 0; r < rows; ++r) {
    const double* gr = grad_y.ptr() + r * out;
    const double* xr = x.ptr() + r * in;
    double* dxr = g.dx.ptr() + r * in;
    for (std::size_t i = 0; i < in; ++i) {
      const double* wr = w.ptr() + i * out;
      double* dwr = g.dw.ptr() + i * out;
      double acc = 0.0;
      const double xv = xr[i];
      for (std::size_t o = 0; o < out; ++o) {
        acc += gr[o] * wr[o];
        dwr[o] += xv * gr[o];
      }
      dxr[i] = acc;
    }
    if (has_bias)
      for (std::size_t o = 0; o < out; ++o) g.db[o] += gr[o];
  }
  return g;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

namespace {

template <typename Fn>
Tensor map(const Tensor& x, Fn fn) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fn(x[i]);
  return y;
}

template <typename Fn>
Tensor map_grad(const Tensor& x, const Tensor& gy, Fn dfn) {
  Tensor g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = gy[i] * dfn(x[i]);
  return g;
}

}  // namespace

Tensor sigmoid(const Tensor& x) { return map(x, [](double v) { return sigmoid(v); }); }
Tensor silu(const Tensor& x) { return map(x, [](double v) { return v * sigmoid(v); }); }
Tensor softplus(const Tensor& x) { return map(x, [](double v) { return softplus(v); }); }

Tensor sigmoid_backward(const Tensor& x, const Tensor& gy) {
  return map_grad(x, gy, [](double v) {
    const double s = sigmoid(v);
    return s * (1.0 - s);
  });
}

Tensor silu_backward(const Tensor& x, const Tensor& gy) {
  return map_grad(x, gy, [](double v) {
    const double s = sigmoid(v);
    return s * (1.0 + v * (1.0 - s));
  });
}

Tensor softplus_backward(const Tensor& x, const Tensor& gy) {
  return map_grad(x, gy, [](double v) { return sigmoid(v); });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t c = last_dim(x);
  require(gamma.shape() == Shape{c} && beta.shape() == Shape{c}, "layer_norm: gamma and beta must be [C]");
  Tensor y(x.shape());
  for (std::size_t r = 0; r < x.size() / c; ++r) {
    const double* xr = x.ptr() + r * c;
    double mean = 0.0;
    for (std::size_t i = 0; i < c; ++i) mean += xr[i];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t i = 0; i < c; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < c; ++i) y[r * c + i] = (xr[i] - mean) * inv * gamma[i] + beta[i];
  }
  return y;
}

LayerNormGrads layer_norm_backward(const Tensor& x, const Tensor& gamma, double eps, const Tensor& gy) {
  const std::size_t c = last_dim(x);
  LayerNormGrads g{Tensor(x.shape()), Tensor({c}), Tensor({c})};
  std::vector<double> xhat(c);
  std::vector<double> dxhat(c);
  for (std::size_t r = 0; r < x.size() / c; ++r) {
    const double* xr = x.ptr() + r * c;
    const double* gr = gy.ptr() + r * c;
    double mean = 0.0;
    for (std::size_t i = 0; i < c; ++i) mean += xr[i];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t i = 0; i < c; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + eps);
    double mean_dxhat = 0.0;
    double mean_dxhat_xhat = 0.0;
    for (std::size_t i = 0; i < c; ++i) {
      xhat[i] = (xr[i] - mean) * inv;
      dxhat[i] = gr[i] * gamma[i];
      g.dgamma[i] += gr[i] * xhat[i];
      g.dbeta[i] += gr[i];
      mean_dxhat += dxhat[i];
      mean_dxhat_xhat += dxhat[i] * xhat[i];
    }
    mean_dxhat /= static_cast<double>(c);
    mean_dxhat_xhat /= static_cast<double>(c);
    for (std::size_t i = 0; i < c; ++i) g.dx[r * c + i] = inv * (dxhat[i] - mean_dxhat - xhat[i] * mean_dxhat_xhat);
  }
  return g;
}

namespace {

struct Bilinear {
  std::size_t x0, x1, y0, y1;
  double fx, fy;
  bool y_clamped;
};

Bilinear locate(double u, double v, std::size_t h, std::size_t w) {
  require(std::isfinite(u) && std::isfinite(v), "bilinear_sample: non-finite coordinate");
  Bilinear b{};
  const double x = u * static_cast<double>(w) - 0.5;
  const double xf = std::floor(x);
  b.fx = x - xf;
  const auto wi = static_cast<long long>(w);
  long long xi = static_cast<long long>(xf) % wi;
  if (xi < 0) xi += wi;
  b.x0 = static_cast<std::size_t>(xi);
  b.x1 = (b.x0 + 1) % w;

  double y = v * static_cast<double>(h) - 0.5;
  const double ymax = static_cast<double>(h - 1);
  b.y_clamped = y < 0.0 || y > ymax;
  y = std::clamp(y, 0.0, ymax);
  const double yf = std::floor(y);
  b.y0 = static_cast<std::size_t>(yf);
  b.y1 = std::min(b.y0 + 1, h - 1);
  b.fy = y - yf;
  return b;
}

}  // namespace

Tensor bilinear_sample(const Tensor& feature, const Tensor& coords) {
  require_rank3(feature, "bilinear_sample");
  require(feature.size() > 0, "bilinear_sample: empty feature map");
  require(coords.rank() >= 1 && coords.shape().back() == 2, "bilinear_sample: coords must be [..., 2]");
  const std::size_t h = feature.dim(0), w = feature.dim(1), c = feature.dim(2);
  const std::size_t m = coords.size() / 2;
  Tensor y({m, c});
  for (std::size_t i = 0; i < m; ++i) {
    const Bilinear b = locate(coords[2 * i], coords[2 * i + 1], h, w);
    const double w00 = (1 - b.fx) * (1 - b.fy), w01 = b.fx * (1 - b.fy), w10 = (1 - b.fx) * b.fy, w11 = b.fx * b.fy;
    const double* f00 = feature.ptr() + (b.y0 * w + b.x0) * c;
    const double* f01 = feature.ptr() + (b.y0 * w + b.x1) * c;
    const double* f10 = feature.ptr() + (b.y1 * w + b.x0) * c;
    const double* f11 = feature.ptr() + (b.y1 * w + b.x1) * c;
    double* yi = y.ptr() + i * c;
    for (std::size_t k = 0; k < c; ++k) yi[k] = w00 * f00[k] + w01 * f01[k] + w10 * f10[k] + w11 * f11[k];
  }
  return y;
}

SampleGrads bilinear_sample_backward(const Tensor& feature, const Tensor& coords, const Tensor& gy) {
  const std::size_t h = feature.dim(0), w = feature.dim(1), c = feature.dim(2);
  const std::size_t m = coords.size() / 2;
  SampleGrads g{Tensor(feature.shape()), Tensor(coords.shape())};
  for (std::size_t i = 0; i < m; ++i) {
    const Bilinear b = locate(coords[2 * i], coords[2 * i + 1], h, w);
    const double w00 = (1 - b.fx) * (1 - b.fy), w01 = b.fx * (1 - b.fy), w10 = (1 - b.fx) * b.fy, w11 = b.fx * b.fy;
    const std::size_t o00 = (b.y0 * w + b.x0) * c, o01 = (b.y0 * w + b.x1) * c;
    const std::size_t o10 = (b.y1 * w + b.x0) * c, o11 = (b.y1 * w + b.x1) * c;
    const double* gi = gy.ptr() + i * c;
    double dx = 0.0, dy = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      const double gk = gi[k];
      g.dfeature[o00 + k] += w00 * gk;
      g.dfeature[o01 + k] += w01 * gk;
      g.dfeature[o10 + k] += w10 * gk;
      g.dfeature[o11 + k] += w11 * gk;
      const double f00 = feature[o00 + k], f01 = feature[o01 + k], f10 = feature[o10 + k], f11 = feature[o11 + k];
      dx += gk * ((1 - b.fy) * (f01 - f00) + b.fy * (f11 - f10));
      dy += gk * ((1 - b.fx) * (f10 - f00) + b.fx * (f11 - f01));
    }
    g.dcoords[2 * i] = dx * static_cast<double>(w);
    g.dcoords[2 * i + 1] = b.y_clamped ? 0.0 : dy * static_cast<double>(h);
  }
  return g;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> perm) {
  require(x.rank() == 2, "gather_rows: expected [R, C], got " + shape_str(x.shape()));
  const std::size_t c = x.dim(1);
  Tensor y({perm.size(), c});
  for (std::size_t i = 0; i < perm.size(); ++i) {
    require(perm[i] < x.dim(0), "gather_rows: index out of range");
    std::copy_n(x.ptr() + perm[i] * c, c, y.ptr() + i * c);
  }
  return y;
}

Tensor gather_rows_backward(std::span<const std::size_t> perm, std::size_t rows, const Tensor& gy) {
  const std::size_t c = gy.dim(1);
  Tensor dx({rows, c});
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t k = 0; k < c; ++k) dx[perm[i] * c + k] += gy[i * c + k];
  return dx;
}

Tensor aggregate(const Tensor& samples, std::size_t query_h, std::size_t query_w) {
  require(samples.rank() == 4 && samples.dim(0) == query_h * query_w,
          "aggregate: expected [Hq * Wq, L, D, C], got " + shape_str(samples.shape()));
  const std::size_t l = samples.dim(1), d = samples.dim(2), c = samples.dim(3);
  Tensor a({l * query_h, d * query_w, c});
  const std::size_t row_stride = d * query_w * c;
  for (std::size_t qh = 0; qh < query_h; ++qh)
    for (std::size_t qw = 0; qw < query_w; ++qw)
      for (std::size_t j = 0; j < l; ++j)
        for (std::size_t k = 0; k < d; ++k) {
          const double* src = samples.ptr() + (((qh * query_w + qw) * l + j) * d + k) * c;
          double* dst = a.ptr() + (qh * l + j) * row_stride + (qw * d + k) * c;
          std::copy_n(src, c, dst);
        }
  return a;
}

Tensor disaggregate(const Tensor& grid, std::size_t locs, std::size_t points) {
  require_rank3(grid, "disaggregate");
  require(locs >= 1 && points >= 1 && grid.dim(0) % locs == 0 && grid.dim(1) % points == 0,
          "disaggregate: grid not divisible into L x D blocks");
  const std::size_t qh_n = grid.dim(0) / locs, qw_n = grid.dim(1) / points, c = grid.dim(2);
  Tensor p({qh_n * qw_n, locs, points, c});
  const std::size_t row_stride = grid.dim(1) * c;
  for (std::size_t qh = 0; qh < qh_n; ++qh)
    for (std::size_t qw = 0; qw < qw_n; ++qw)
      for (std::size_t j = 0; j < locs; ++j)
        for (std::size_t k = 0; k < points; ++k) {
          const double* src = grid.ptr() + (qh * locs + j) * row_stride + (qw * points + k) * c;
          std::copy_n(src, c, p.ptr() + (((qh * qw_n + qw) * locs + j) * points + k) * c);
        }
  return p;
}

Tensor patch_unfold(const Tensor& x, std::size_t ph, std::size_t pw) {
  require_rank3(x, "patch_unfold");
  require(ph >= 1 && pw >= 1 && x.dim(0) % ph == 0 && x.dim(1) % pw == 0,
          "patch_unfold: " + shape_str(x.shape()) + " is not divisible into " + std::to_string(ph) + "x" +
              std::to_string(pw) + " patches");
  const std::size_t gh = x.dim(0) / ph, gw = x.dim(1) / pw, c = x.dim(2);
  Tensor out({gh * gw, ph * pw * c});
  for (std::size_t i = 0; i < gh; ++i)
    for (std::size_t j = 0; j < gw; ++j)
      for (std::size_t r = 0; r < ph; ++r)
        std::copy_n(x.ptr() + ((i * ph + r) * x.dim(1) + j * pw) * c, pw * c,
                    out.ptr() + (i * gw + j) * ph * pw * c + r * pw * c);
  return out;
}

Tensor patch_fold(const Tensor& patches, const Shape& image_shape, std::size_t ph, std::size_t pw) {
  require(image_shape.size() == 3 && image_shape[0] % ph == 0 && image_shape[1] % pw == 0, "patch_fold: bad shape");
  const std::size_t gh = image_shape[0] / ph, gw = image_shape[1] / pw, c = image_shape[2];
  require(patches.shape() == Shape{gh * gw, ph * pw * c}, "patch_fold: patch tensor shape mismatch");
  Tensor x(image_shape);
  for (std::size_t i = 0; i < gh; ++i)
    for (std::size_t j = 0; j < gw; ++j)
      for (std::size_t r = 0; r < ph; ++r)
        std::copy_n(patches.ptr() + (i * gw + j) * ph * pw * c + r * pw * c, pw * c,
                    x.ptr() + ((i * ph + r) * image_shape[1] + j * pw) * c);
  return x;
}

Tensor upsample_nearest(const Tensor& x, std::size_t fh, std::size_t fw) {
  require_rank3(x, "upsample_nearest");
  require(fh >= 1 && fw >= 1, "upsample_nearest: factors must be >= 1");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  Tensor y({h * fh, w * fw, c});
  for (std::size_t i = 0; i < h * fh; ++i)
    for (std::size_t j = 0; j < w * fw; ++j) std::copy_n(x.ptr() + ((i / fh) * w + j / fw) * c, c, y.ptr() + (i * w * fw + j) * c);
  return y;
}

Tensor upsample_nearest_backward(const Tensor& gy, std::size_t fh, std::size_t fw) {
  const std::size_t h = gy.dim(0) / fh, w = gy.dim(1) / fw, c = gy.dim(2);
  Tensor dx({h, w, c});
  for (std::size_t i = 0; i < h * fh; ++i)
    for (std::size_t j = 0; j < w * fw; ++j)
      for (std::size_t k = 0; k < c; ++k) dx[((i / fh) * w + j / fw) * c + k] += gy[(i * w * fw + j) * c + k];
  return dx;
}

namespace {

struct FocalTerms {
  std::size_t rows = 0;
  std::size_t k = 0;
  std::size_t counted = 0;
};

FocalTerms check_focal(const Tensor& logits, std::span<const int> targets, std::span<const double> alpha,
                       int ignore_index) {
  require(logits.rank() >= 1, "focal_loss: logits must be [..., K]");
  FocalTerms f;
  f.k = logits.shape().back();
  f.rows = logits.size() / f.k;
  require(targets.size() == f.rows, "focal_loss: one target per logits row expected");
  require(alpha.size() == f.k, "focal_loss: alpha must have K entries");
  for (const int t : targets) {
    if (t == ignore_index) continue;
    require(t >= 0 && static_cast<std::size_t>(t) < f.k, "focal_loss: target " + std::to_string(t) + " out of range");
    ++f.counted;
  }
  require(f.counted > 0, "focal_loss: every position is ignored");
  return f;
}

// Softmax of one row into p; returns log p[target].
double softmax_row(const double* z, std::size_t k, int target, std::vector<double>& p) {
  const double mx = *std::max_element(z, z + k);
  double sum = 0.0;
  for (std::size_t j = 0; j < k; ++j) sum += std::exp(z[j] - mx);
  const double lse = mx + std::log(sum);
  for (std::size_t j = 0; j < k; ++j) p[j] = std::exp(z[j] - lse);
  return z[target] - lse;
}

// 1 - p_y computed as the sum of the other probabilities.
double complement(const std::vector<double>& p, int target) {
  double s = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j)
    if (static_cast<int>(j) != target) s += p[j];
  return s;
}

}  // namespace

double focal_loss(const Tensor& logits, std::span<const int> targets, double gamma, std::span<const double> alpha,
                  int ignore_index) {
  const FocalTerms f = check_focal(logits, targets, alpha, ignore_index);
  std::vector<double> p(f.k);
  double total = 0.0;
  for (std::size_t r = 0; r < f.rows; ++r) {
    const int t = targets[r];
    if (t == ignore_index) continue;
    const double logp = softmax_row(logits.ptr() + r * f.k, f.k, t, p);
    const double q = complement(p, t);
    const double mod = gamma == 0.0 ? 1.0 : std::pow(q, gamma);
    total += -alpha[static_cast<std::size_t>(t)] * mod * logp;
  }
  return total / static_cast<double>(f.counted);
}

Tensor focal_loss_backward(const Tensor& logits, std::span<const int> targets, double gamma,
                           std::span<const double> alpha, int ignore_index) {
  const FocalTerms f = check_focal(logits, targets, alpha, ignore_index);
  std::vector<double> p(f.k);
  Tensor g(logits.shape());
  const double scale = 1.0 / static_cast<double>(f.counted);
  for (std::size_t r = 0; r < f.rows; ++r) {
    const int t = targets[r];
    if (t == ignore_index) continue;
    const double logp = softmax_row(logits.ptr() + r * f.k, f.k, t, p);
    const double q = complement(p, t);
    // dL/dz_j = -alpha (delta_tj - p_j) [q^gamma - gamma q^(gamma-1) p_t log p_t]
    double factor;
    if (gamma == 0.0) {
      factor = 1.0;
    } else if (q == 0.0) {
      factor = 0.0;
    } else {
      factor = std::pow(q, gamma) - gamma * std::pow(q, gamma - 1.0) * p[static_cast<std::size_t>(t)] * logp;
    }
    const double coef = -alpha[static_cast<std::size_t>(t)] * factor * scale;
    for (std::size_t j = 0; j < f.k; ++j) {
      const double indicator = static_cast<int>(j) == t ? 1.0 : 0.0;
      g[r * f.k + j] = coef * (indicator - p[j]);
    }
  }
  return g;
}

}  // namespace onebev::kernels
