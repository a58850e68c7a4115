#include "onebev/autograd.hpp"

#include <cmath>
#include <unordered_set>

#include "onebev/errors.hpp"
#include "onebev/kernels.hpp"

namespace onebev {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

void Node::accumulate(const Tensor& g) {
  if (grad.empty() && !value.empty()) {
    grad = g;
  } else {
    grad.add_(g);
  }
}

Var Var::constant(Tensor value) {
  Var v;
  v.node_ = std::make_shared<Node>();
  v.node_->value = std::move(value);
  return v;
}

Var Var::parameter(Tensor value) {
  Var v = constant(std::move(value));
  v.node_->requires_grad = true;
  return v;
}

const Tensor& Var::value() const {
  require(node_ != nullptr, "var: undefined");
  return node_->value;
}

Tensor& Var::mutable_value() {
  require(node_ != nullptr, "var: undefined");
  return node_->value;
}

const Tensor& Var::grad() const {
  require(node_ != nullptr, "var: undefined");
  if (node_->grad.empty()) node_->grad = Tensor(node_->value.shape());
  return node_->grad;
}

bool Var::requires_grad() const { return node_ && node_->requires_grad; }

void Var::zero_grad() {
  if (node_) node_->grad = Tensor();
}

void backward(const Var& root) {
  require(root.value().size() == 1, "backward: root must be a scalar");
  if (!root.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node_.get(), 0}};
  visited.insert(root.node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node_->accumulate(Tensor(root.value().shape(), 1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(n->grad);
  }
}

namespace {

using NodePtr = std::shared_ptr<Node>;

Var make_result(Tensor value, std::initializer_list<Var> inputs, std::function<void(const Tensor&)> fn) {
  Var out = Var::constant(std::move(value));
  bool any = false;
  if (!g_grad_enabled) return out;
  for (const auto& in : inputs) {
    if (in.requires_grad()) any = true;
  }
  if (!any) return out;
  out.node_->requires_grad = true;
  for (const auto& in : inputs) out.node_->parents.push_back(in.node_);
  out.node_->backward_fn = std::move(fn);
  return out;
}

void push(const NodePtr& n, const Tensor& g) {
  if (n->requires_grad) n->accumulate(g);
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require(a.shape() == b.shape(), "add: shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor y = a.value();
  y.add_(b.value());
  NodePtr na = a.node_, nb = b.node_;
  return make_result(std::move(y), {a, b}, [na, nb](const Tensor& g) {
    push(na, g);
    push(nb, g);
  });
}

Var mul(const Var& a, const Var& b) {
  require(a.shape() == b.shape(), "mul: shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor y(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] * b.value()[i];
  NodePtr na = a.node_, nb = b.node_;
  return make_result(std::move(y), {a, b}, [na, nb](const Tensor& g) {
    Tensor ga(g.shape()), gb(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] = g[i] * nb->value[i];
      gb[i] = g[i] * na->value[i];
    }
    push(na, ga);
    push(nb, gb);
  });
}

Var scale(const Var& a, double s) {
  Tensor y = a.value();
  for (auto& v : y.data()) v *= s;
  NodePtr na = a.node_;
  return make_result(std::move(y), {a}, [na, s](const Tensor& g) {
    Tensor ga = g;
    for (auto& v : ga.data()) v *= s;
    push(na, ga);
  });
}

Var reshape(const Var& x, Shape shape) {
  NodePtr nx = x.node_;
  return make_result(x.value().reshaped(std::move(shape)), {x},
                     [nx](const Tensor& g) { push(nx, g.reshaped(nx->value.shape())); });
}

Var channel_affine(const Var& x, const Var& w, const Var& b) {
  const std::size_t c = x.shape().back();
  require(w.shape() == Shape{c} && b.shape() == Shape{c}, "channel_affine: w and b must be [C]");
  Tensor y(x.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.value()[i] * w.value()[i % c] + b.value()[i % c];
  NodePtr nx = x.node_, nw = w.node_, nb = b.node_;
  return make_result(std::move(y), {x, w, b}, [nx, nw, nb, c](const Tensor& g) {
    Tensor gx(g.shape()), gw({c}), gb({c});
    for (std::size_t i = 0; i < g.size(); ++i) {
      gx[i] = g[i] * nw->value[i % c];
      gw[i % c] += g[i] * nx->value[i];
      gb[i % c] += g[i];
    }
    push(nx, gx);
    push(nw, gw);
    push(nb, gb);
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  Tensor y = kernels::linear(x.value(), w.value(), b.value());
  NodePtr nx = x.node_, nw = w.node_, nb = b.node_;
  return make_result(std::move(y), {x, w, b}, [nx, nw, nb](const Tensor& g) {
    auto grads = kernels::linear_backward(nx->value, nw->value, true, g);
    push(nx, grads.dx);
    push(nw, grads.dw);
    push(nb, grads.db);
  });
}

Var linear(const Var& x, const Var& w) {
  Tensor y = kernels::linear(x.value(), w.value(), Tensor());
  NodePtr nx = x.node_, nw = w.node_;
  return make_result(std::move(y), {x, w}, [nx, nw](const Tensor& g) {
    auto grads = kernels::linear_backward(nx->value, nw->value, false, g);
    push(nx, grads.dx);
    push(nw, grads.dw);
  });
}

Var sigmoid(const Var& x) {
  NodePtr nx = x.node_;
  return make_result(kernels::sigmoid(x.value()), {x},
                     [nx](const Tensor& g) { push(nx, kernels::sigmoid_backward(nx->value, g)); });
}

Var silu(const Var& x) {
  NodePtr nx = x.node_;
  return make_result(kernels::silu(x.value()), {x},
                     [nx](const Tensor& g) { push(nx, kernels::silu_backward(nx->value, g)); });
}

Var softplus(const Var& x) {
  NodePtr nx = x.node_;
  return make_result(kernels::softplus(x.value()), {x},
                     [nx](const Tensor& g) { push(nx, kernels::softplus_backward(nx->value, g)); });
}

Var neg_exp(const Var& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = -std::exp(x.value()[i]);
  NodePtr nx = x.node_;
  return make_result(std::move(y), {x}, [nx](const Tensor& g) {
    Tensor gx(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] = -g[i] * std::exp(nx->value[i]);
    push(nx, gx);
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  NodePtr nx = x.node_, ng = gamma.node_, nb = beta.node_;
  return make_result(kernels::layer_norm(x.value(), gamma.value(), beta.value(), eps), {x, gamma, beta},
                     [nx, ng, nb, eps](const Tensor& g) {
                       auto grads = kernels::layer_norm_backward(nx->value, ng->value, eps, g);
                       push(nx, grads.dx);
                       push(ng, grads.dgamma);
                       push(nb, grads.dbeta);
                     });
}

Var bilinear_sample(const Var& feature, const Var& coords) {
  NodePtr nf = feature.node_, nc = coords.node_;
  return make_result(kernels::bilinear_sample(feature.value(), coords.value()), {feature, coords},
                     [nf, nc](const Tensor& g) {
                       auto grads = kernels::bilinear_sample_backward(nf->value, nc->value, g);
                       push(nf, grads.dfeature);
                       push(nc, grads.dcoords);
                     });
}

Var gather_rows(const Var& x, std::vector<std::size_t> perm) {
  Tensor y = kernels::gather_rows(x.value(), perm);
  NodePtr nx = x.node_;
  return make_result(std::move(y), {x},
                     [nx, perm = std::move(perm)](const Tensor& g) {
                       push(nx, kernels::gather_rows_backward(perm, nx->value.dim(0), g));
                     });
}

Var aggregate(const Var& samples, std::size_t query_h, std::size_t query_w) {
  NodePtr ns = samples.node_;
  const std::size_t locs = samples.shape().at(1), points = samples.shape().at(2);
  return make_result(kernels::aggregate(samples.value(), query_h, query_w), {samples},
                     [ns, locs, points](const Tensor& g) { push(ns, kernels::disaggregate(g, locs, points)); });
}

Var patch_unfold(const Var& x, std::size_t ph, std::size_t pw) {
  NodePtr nx = x.node_;
  return make_result(kernels::patch_unfold(x.value(), ph, pw), {x},
                     [nx, ph, pw](const Tensor& g) { push(nx, kernels::patch_fold(g, nx->value.shape(), ph, pw)); });
}

Var upsample_nearest(const Var& x, std::size_t fh, std::size_t fw) {
  NodePtr nx = x.node_;
  return make_result(kernels::upsample_nearest(x.value(), fh, fw), {x},
                     [nx, fh, fw](const Tensor& g) { push(nx, kernels::upsample_nearest_backward(g, fh, fw)); });
}

Var sum(const Var& x) {
  double s = 0.0;
  for (const double v : x.value().data()) s += v;
  NodePtr nx = x.node_;
  return make_result(Tensor({1}, s), {x}, [nx](const Tensor& g) { push(nx, Tensor(nx->value.shape(), g[0])); });
}

Var weighted_sum(const Var& x, const Tensor& weights) {
  require(weights.shape() == x.shape(), "weighted_sum: weights must match x");
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += x.value()[i] * weights[i];
  NodePtr nx = x.node_;
  return make_result(Tensor({1}, s), {x}, [nx, weights](const Tensor& g) {
    Tensor gx = weights;
    for (auto& v : gx.data()) v *= g[0];
    push(nx, gx);
  });
}

Var focal_loss(const Var& logits, std::vector<int> targets, double gamma, std::vector<double> alpha, int ignore_index) {
  const double loss = kernels::focal_loss(logits.value(), targets, gamma, alpha, ignore_index);
  NodePtr nl = logits.node_;
  return make_result(Tensor({1}, loss), {logits},
                     [nl, targets = std::move(targets), gamma, alpha = std::move(alpha), ignore_index](const Tensor& g) {
                       Tensor gl = kernels::focal_loss_backward(nl->value, targets, gamma, alpha, ignore_index);
                       for (auto& v : gl.data()) v *= g[0];
                       push(nl, gl);
                     });
}

Var selective_scan_core(const Var& u, const Var& delta, const Var& a, const Var& b, const Var& c, const Var& d,
                        const ScanOptions& options) {
  const bool needs_grad = g_grad_enabled && (u.requires_grad() || delta.requires_grad() || a.requires_grad() || b.requires_grad() ||
                          c.requires_grad() || d.requires_grad());
  ScanOptions opts = options;
  opts.keep_states = needs_grad;
  ScanResult r = selective_scan_forward({u.value(), delta.value(), a.value(), b.value(), c.value(), d.value()}, opts);
  auto states = std::make_shared<Tensor>(std::move(r.states));
  NodePtr nu = u.node_, ndt = delta.node_, na = a.node_, nb = b.node_, nc = c.node_, nd = d.node_;
  return make_result(std::move(r.y), {u, delta, a, b, c, d}, [=](const Tensor& g) {
    ScanGrads sg = selective_scan_backward({nu->value, ndt->value, na->value, nb->value, nc->value, nd->value}, *states, g);
    push(nu, sg.du);
    push(ndt, sg.ddelta);
    push(na, sg.da);
    push(nb, sg.db);
    push(nc, sg.dc);
    push(nd, sg.dd);
  });
}

ScanParams ScanParams::init(std::size_t channels, std::size_t state_dim, std::mt19937_64& rng, double out_scale) {
  require(channels >= 1 && state_dim >= 1, "scan params: channels and state_dim must be >= 1");
  ScanParams p;
  Tensor a_log({channels, state_dim});
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t n = 0; n < state_dim; ++n) a_log[c * state_dim + n] = std::log(static_cast<double>(n + 1));
  p.a_log = Var::parameter(std::move(a_log));
  const double s = 1.0 / std::sqrt(static_cast<double>(channels));
  p.w_in = Var::parameter(Tensor::randn({channels, state_dim}, rng, s));
  p.w_out = Var::parameter(Tensor::randn({channels, state_dim}, rng, s * out_scale));
  p.dt_weight = Var::parameter(Tensor::randn({channels}, rng, 0.1));
  // Step sizes start log-uniform in [1e-3, 1e-1]; the bias is their inverse softplus.
  Tensor dt_bias({channels});
  std::uniform_real_distribution<double> logdt(std::log(1e-3), std::log(1e-1));
  for (auto& v : dt_bias.data()) {
    const double dt = std::exp(logdt(rng));
    v = dt + std::log(-std::expm1(-dt));
  }
  p.dt_bias = Var::parameter(std::move(dt_bias));
  p.skip = Var::parameter(Tensor({channels}, 0.25));
  return p;
}

Var selective_scan(const Var& x, const ScanParams& p, const ScanOptions& options) {
  require(x.value().rank() == 2 && x.shape()[1] == p.channels(),
          "selective_scan: x " + shape_str(x.shape()) + " does not match " + std::to_string(p.channels()) + " channels");
  const Var delta = softplus(channel_affine(x, p.dt_weight, p.dt_bias));
  const Var b = linear(x, p.w_in);
  const Var c = linear(x, p.w_out);
  const Var a = neg_exp(p.a_log);
  return selective_scan_core(x, delta, a, b, c, p.skip, options);
}

std::array<std::vector<std::size_t>, 4> ss2d_orders(std::size_t height, std::size_t width) {
  const std::size_t n = height * width;
  std::array<std::vector<std::size_t>, 4> orders;
  for (auto& o : orders) o.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    orders[0][i] = i;
    orders[1][i] = n - 1 - i;
  }
  std::size_t k = 0;
  for (std::size_t col = 0; col < width; ++col)
    for (std::size_t row = 0; row < height; ++row) orders[2][k++] = row * width + col;
  for (std::size_t i = 0; i < n; ++i) orders[3][i] = orders[2][n - 1 - i];
  return orders;
}

Var ss2d(const Var& x, const std::array<ScanParams, 4>& params, const ScanOptions& options) {
  require(x.value().rank() == 3 && x.shape()[0] >= 1 && x.shape()[1] >= 1, "ss2d: expected [H, W, C]");
  const std::size_t h = x.shape()[0], w = x.shape()[1], c = x.shape()[2];
  const Var seq = reshape(x, {h * w, c});
  const auto orders = ss2d_orders(h, w);
  Var total;
  for (std::size_t dir = 0; dir < 4; ++dir) {
    std::vector<std::size_t> inverse(h * w);
    for (std::size_t i = 0; i < h * w; ++i) inverse[orders[dir][i]] = i;
    const Var scanned = selective_scan(gather_rows(seq, orders[dir]), params[dir], options);
    const Var restored = gather_rows(scanned, std::move(inverse));
    total = dir == 0 ? restored : add(total, restored);
  }
  return reshape(total, {h, w, c});
}

}  // namespace onebev
