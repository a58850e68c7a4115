#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "onebev/grad_check.hpp"
#include "onebev/mvt.hpp"

namespace onebev {

struct NamedCheck {
  std::string name;
  GradCheckResult result;
};

/// Built-in checks for every differentiable operation, the composite MVT
/// layer and a full desk-sized model, on randomized shapes that include axes
/// of size one.
std::vector<NamedCheck> run_gradient_suite(std::uint64_t seed, double eps = 1e-5);

/// Composite checks of the first MVT layer and of the whole model built from
/// `cfg`, with every parameter perturbed away from its initial value.
std::vector<NamedCheck> model_gradient_checks(const MvtConfig& cfg, std::uint64_t seed, double eps = 1e-5);

inline constexpr double kGradTolerance = 1e-4;

}  // namespace onebev
