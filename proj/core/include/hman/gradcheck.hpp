#pragma once

// Central finite-difference checks of every differentiable path, with all
// stochastic noise held fixed between evaluations.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hman/tensor.hpp"

namespace hman {

struct GradCheckOptions {
  std::uint64_t noise_seed = 0;
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
  // Test hook: perturbs one analytic gradient entry of every check.
  bool corrupt = false;
};

struct GradCheckResult {
  std::string name;
  std::size_t elements = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  bool passed = false;
};

struct GradCheckCase {
  std::string name;
  // Builds fresh leaf inputs; the loss closure must be deterministic in them.
  std::function<std::vector<Tensor>(std::uint64_t seed)> make_inputs;
  std::function<Tensor(const std::vector<Tensor>& inputs, std::uint64_t seed)> loss;
};

// Compares backward() against central differences for every input element.
GradCheckResult check_gradients(const GradCheckCase& c, const GradCheckOptions& options);

// The built-in suite covering tensor ops, stochastic units, attention, the
// cell in each operation and the full model.
std::vector<GradCheckCase> default_grad_checks();

std::vector<GradCheckResult> run_grad_checks(const GradCheckOptions& options);

}  // namespace hman
