#pragma once

#include <array>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "onebev/scan.hpp"
#include "onebev/tensor.hpp"

namespace onebev {

struct Node;

/// Handle to a value in a reverse-mode graph. Results of operations keep
/// their inputs alive; calling backward() on a scalar result accumulates
/// gradients into every reachable Var created with requires_grad.
class Var {
 public:
  Var() = default;
  static Var constant(Tensor value);
  static Var parameter(Tensor value);

  const Tensor& value() const;
  Tensor& mutable_value();
  const Tensor& grad() const;
  bool requires_grad() const;
  const Shape& shape() const { return value().shape(); }
  void zero_grad();
  bool defined() const { return node_ != nullptr; }

  std::shared_ptr<Node> node_;
};

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Tensor& grad_out)> backward_fn;

  void accumulate(const Tensor& g);
};

/// While alive, operations on this thread record no graph and keep no
/// intermediate state, as for inference.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Seeds d(root)/d(root) = 1; root must hold a single element.
void backward(const Var& root);

// Differentiable operations.
Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var reshape(const Var& x, Shape shape);
/// x * w + b with w, b of shape [C] broadcast over the leading axes of x [..., C].
Var channel_affine(const Var& x, const Var& w, const Var& b);
Var linear(const Var& x, const Var& w, const Var& b);
Var linear(const Var& x, const Var& w);
Var sigmoid(const Var& x);
Var silu(const Var& x);
Var softplus(const Var& x);
/// -exp(x), used to keep state-matrix diagonals negative.
Var neg_exp(const Var& x);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var bilinear_sample(const Var& feature, const Var& coords);
Var gather_rows(const Var& x, std::vector<std::size_t> perm);
Var aggregate(const Var& samples, std::size_t query_h, std::size_t query_w);
Var patch_unfold(const Var& x, std::size_t ph, std::size_t pw);
Var upsample_nearest(const Var& x, std::size_t fh, std::size_t fw);
Var sum(const Var& x);
/// sum(x * weights) for a constant weight tensor.
Var weighted_sum(const Var& x, const Tensor& weights);
Var focal_loss(const Var& logits, std::vector<int> targets, double gamma, std::vector<double> alpha,
               int ignore_index = 255);
Var selective_scan_core(const Var& u, const Var& delta, const Var& a, const Var& b, const Var& c, const Var& d,
                        const ScanOptions& options = {});

/// Learned parameters of one directional selective scan over C channels with
/// an N-dimensional diagonal state. The step size is softplus(u * dt_weight +
/// dt_bias), so it is input dependent and always positive.
struct ScanParams {
  Var a_log;      // [C, N], state diagonal is -exp(a_log)
  Var w_in;       // [C, N], b_t = u_t w_in
  Var w_out;      // [C, N], c_t = u_t w_out
  Var dt_weight;  // [C]
  Var dt_bias;    // [C]
  Var skip;       // [C]

  static ScanParams init(std::size_t channels, std::size_t state_dim, std::mt19937_64& rng, double out_scale = 0.1);
  std::size_t channels() const { return a_log.shape().at(0); }
  std::size_t state_dim() const { return a_log.shape().at(1); }
  std::vector<Var> vars() const { return {a_log, w_in, w_out, dt_weight, dt_bias, skip}; }
};

/// Selective scan of x [T, C].
Var selective_scan(const Var& x, const ScanParams& p, const ScanOptions& options = {});

/// Flattening orders used by ss2d: row-major forward, row-major backward,
/// column-major forward, column-major backward. order[i] is the row-major
/// position visited at step i.
std::array<std::vector<std::size_t>, 4> ss2d_orders(std::size_t height, std::size_t width);

/// Four directional scans over x [H, W, C], un-flattened and summed.
Var ss2d(const Var& x, const std::array<ScanParams, 4>& params, const ScanOptions& options = {});

}  // namespace onebev
