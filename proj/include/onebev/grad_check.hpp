#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "onebev/autograd.hpp"

namespace onebev {

using DiffFn = std::function<Var(std::span<const Var>)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

/// Compares the tape gradient of sum(fn(inputs) * R), R uniform in [-1, 1]
/// from `seed`, against central differences with step `eps`. The error per
/// coordinate is |a - n| / max(|a|, |n|, 1e-3); the floor keeps near-zero
/// gradients from being judged on rounding noise alone.
GradCheckResult grad_check(const DiffFn& fn, const std::vector<Tensor>& inputs, double eps = 1e-5,
                           std::uint64_t seed = 0);

/// Same, for parameters captured by `loss_fn` (a scalar-valued closure). Each
/// parameter's value is perturbed in place and restored.
GradCheckResult grad_check_params(const std::function<Var()>& loss_fn, std::span<Var> params, double eps = 1e-5);

}  // namespace onebev
