#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "onebev/tensor.hpp"

// Forward and backward kernels on plain tensors. The autograd layer wires
// these together; tests call them directly.
namespace onebev::kernels {

/// y = x w + b along the last axis. x [..., in], w [in, out], b [out] or empty.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
struct LinearGrads {
  Tensor dx, dw, db;
};
LinearGrads linear_backward(const Tensor& x, const Tensor& w, bool has_bias, const Tensor& grad_y);

double sigmoid(double x);
double softplus(double x);
Tensor sigmoid(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor softplus(const Tensor& x);
/// Elementwise derivatives evaluated at x, multiplied by grad_y.
Tensor sigmoid_backward(const Tensor& x, const Tensor& grad_y);
Tensor silu_backward(const Tensor& x, const Tensor& grad_y);
Tensor softplus_backward(const Tensor& x, const Tensor& grad_y);

/// Normalizes over the last axis, then scales by gamma and shifts by beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);
struct LayerNormGrads {
  Tensor dx, dgamma, dbeta;
};
LayerNormGrads layer_norm_backward(const Tensor& x, const Tensor& gamma, double eps, const Tensor& grad_y);

/// Samples feature [H, W, C] at coords [M, 2] given as (u, v) in [0, 1]^2,
/// u along the width. Pixel centers sit at ((k + 0.5) / W, (j + 0.5) / H).
/// The width axis wraps around; the height axis clamps to the border rows.
Tensor bilinear_sample(const Tensor& feature, const Tensor& coords);
struct SampleGrads {
  Tensor dfeature, dcoords;
};
SampleGrads bilinear_sample_backward(const Tensor& feature, const Tensor& coords, const Tensor& grad_y);

/// y[i] = x[index[i]] over the first axis of a rank-2 tensor. Indices may
/// repeat; the backward pass scatter-adds.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index);
Tensor gather_rows_backward(std::span<const std::size_t> index, std::size_t rows, const Tensor& grad_y);

/// P [Hq * Wq, L, D, C] -> A [L * Hq, D * Wq, C], query (qh, qw) occupying the
/// block of rows qh * L .. qh * L + L - 1 and columns qw * D .. qw * D + D - 1.
Tensor aggregate(const Tensor& samples, std::size_t query_h, std::size_t query_w);
Tensor disaggregate(const Tensor& grid, std::size_t locs, std::size_t points);

/// x [H, W, C] -> [(H / ph) * (W / pw), ph * pw * C], one row per
/// non-overlapping patch in row-major patch order, patch contents row-major.
Tensor patch_unfold(const Tensor& x, std::size_t ph, std::size_t pw);
Tensor patch_fold(const Tensor& patches, const Shape& image_shape, std::size_t ph, std::size_t pw);

/// x [H, W, C] -> [H * fh, W * fw, C] by pixel replication.
Tensor upsample_nearest(const Tensor& x, std::size_t fh, std::size_t fw);
Tensor upsample_nearest_backward(const Tensor& grad_y, std::size_t fh, std::size_t fw);

/// Mean over non-ignored rows of -alpha_y (1 - p_y)^gamma log p_y with
/// p = softmax(logits [M, K]). Targets equal to `ignore_index` are skipped.
double focal_loss(const Tensor& logits, std::span<const int> targets, double gamma, std::span<const double> alpha,
                  int ignore_index = 255);
Tensor focal_loss_backward(const Tensor& logits, std::span<const int> targets, double gamma,
                           std::span<const double> alpha, int ignore_index = 255);

}  // namespace onebev::kernels
