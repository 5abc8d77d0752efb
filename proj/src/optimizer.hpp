#pragma once

#include "types.hpp"

#include <functional>
#include <string>

namespace blpnp {

struct OptimizerSettings {
  double grad_tol = 1e-8;  // on the gradient infinity norm
  int max_iter = 500;
  double step_tol = 0.0;   // stop when the accepted step's infinity norm falls below this; 0 disables
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_line_search = 40;
  double first_step = 0.1;  // infinity-norm length of the first trial step

  void validate() const;
};

/// Returns f(x) and writes the gradient when `grad` is non-null. Non-finite
/// values are treated as +infinity by the line search.
using Objective = std::function<double(const Vector& x, Vector* grad)>;

struct OptimResult {
  Vector x;
  double value = 0.0;
  Vector gradient;
  int iterations = 0;   // accepted quasi-Newton steps
  int evaluations = 0;  // (value, gradient) pairs
  bool converged = false;
  std::string status;
};

/// BFGS with a strong-Wolfe line search. A line-search failure returns the
/// best point found with converged = false.
OptimResult minimize_bfgs(const Objective& f, const Vector& x0, const OptimizerSettings& settings);

}  // namespace blpnp
