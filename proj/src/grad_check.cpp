#include "onebev/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "onebev/errors.hpp"

namespace onebev {

namespace {

void record(GradCheckResult& r, std::size_t input, std::size_t index, double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
  const double err = std::abs(analytic - numeric) / denom;
  ++r.checked;
  if (err > r.max_rel_error || !std::isfinite(err)) {
    r.max_rel_error = std::isfinite(err) ? err : std::numeric_limits<double>::infinity();
    r.worst_input = input;
    r.worst_index = index;
    r.analytic = analytic;
    r.numeric = numeric;
  }
}

}  // namespace

GradCheckResult grad_check(const DiffFn& fn, const std::vector<Tensor>& inputs, double eps, std::uint64_t seed) {
  require(eps > 0.0, "grad_check: eps must be positive");
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(Var::parameter(t));
  const Var out = fn(vars);
  std::mt19937_64 rng(seed);
  const Tensor weights = Tensor::uniform(out.shape(), rng, -1.0, 1.0);
  backward(weighted_sum(out, weights));

  auto evaluate = [&](std::size_t which, std::size_t index, double value) {
    std::vector<Var> probe;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      Tensor t = inputs[i];
      if (i == which) t[index] = value;
      probe.push_back(Var::constant(std::move(t)));
    }
    return weighted_sum(fn(probe), weights).value()[0];
  };

  GradCheckResult result;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor& analytic = vars[i].grad();
    for (std::size_t k = 0; k < inputs[i].size(); ++k) {
      const double x = inputs[i][k];
      const double numeric = (evaluate(i, k, x + eps) - evaluate(i, k, x - eps)) / (2.0 * eps);
      record(result, i, k, analytic[k], numeric);
    }
  }
  return result;
}

GradCheckResult grad_check_params(const std::function<Var()>& loss_fn, std::span<Var> params, double eps) {
  require(eps > 0.0, "grad_check: eps must be positive");
  for (auto& p : params) p.zero_grad();
  backward(loss_fn());
  std::vector<Tensor> analytic;
  for (const auto& p : params) analytic.push_back(p.grad());

  GradCheckResult result;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& value = params[i].mutable_value();
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double x = value[k];
      value[k] = x + eps;
      const double up = loss_fn().value()[0];
      value[k] = x - eps;
      const double down = loss_fn().value()[0];
      value[k] = x;
      record(result, i, k, analytic[i][k], (up - down) / (2.0 * eps));
    }
  }
  return result;
}

}  // namespace onebev
