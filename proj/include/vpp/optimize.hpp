#pragma once

#include <Eigen/Core>
#include <functional>
#include <string>
#include <vector>

namespace vpp {

// Limited-memory BFGS with backtracking line search (Armijo sufficient
// decrease). Deterministic; accepted iterates never increase the objective.

struct MinimizeOptions {
  int memory = 10;            // stored curvature pairs
  double grad_tol = 1e-6;     // stop when |g|_2 <= grad_tol
  int max_iterations = 500;
  double armijo_c = 1e-4;     // sufficient-decrease coefficient
  double backtrack = 0.5;     // step shrink factor
  int max_line_search = 60;   // trials per iteration
};

struct MinimizeResult {
  Eigen::VectorXd x;
  double value = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;          // gradient tolerance reached
  std::string stop_reason;         // gradient_tolerance | max_iterations | line_search_failure
  std::vector<double> trace;       // objective value at init and after each accepted step
};

// Evaluates the objective and writes the gradient (resized by the callee's
// caller to x.size()).
using ObjectiveFn = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

// NumericalError if the objective is not finite at x0.
MinimizeResult minimize(const ObjectiveFn& objective, const Eigen::VectorXd& x0,
                        const MinimizeOptions& options = {});

}  // namespace vpp
