#include "vpp/optimize.hpp"

#include <cmath>
#include <deque>

#include "vpp/errors.hpp"

namespace vpp {

namespace {

struct CurvaturePair {
  Eigen::VectorXd s;
  Eigen::VectorXd y;
  double rho = 0.0;
};

// two-loop recursion: d = -H g with the implicit inverse-Hessian estimate
Eigen::VectorXd lbfgs_direction(const std::deque<CurvaturePair>& history,
                                const Eigen::VectorXd& grad) {
  Eigen::VectorXd q = grad;
  std::vector<double> alpha(history.size());
  for (std::size_t i = history.size(); i-- > 0;) {
    alpha[i] = history[i].rho * history[i].s.dot(q);
    q -= alpha[i] * history[i].y;
  }
  if (!history.empty()) {
    const CurvaturePair& last = history.back();
    q *= last.s.dot(last.y) / last.y.squaredNorm();
  }
  for (std::size_t i = 0; i < history.size(); ++i) {
    const double beta = history[i].rho * history[i].y.dot(q);
    q += (alpha[i] - beta) * history[i].s;
  }
  return -q;
}

}  // namespace

MinimizeResult minimize(const ObjectiveFn& objective, const Eigen::VectorXd& x0,
                        const MinimizeOptions& options) {
  MinimizeResult result;
  result.x = x0;

  Eigen::VectorXd grad(x0.size());
  double value = objective(result.x, grad);
  if (!std::isfinite(value)) {
    throw NumericalError("objective is not finite at the starting point");
  }
  result.trace.push_back(value);

  std::deque<CurvaturePair> history;
  result.stop_reason = "max_iterations";

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    result.grad_norm = grad.norm();
    if (result.grad_norm <= options.grad_tol) {
      result.converged = true;
      result.stop_reason = "gradient_tolerance";
      break;
    }

    Eigen::VectorXd direction = lbfgs_direction(history, grad);
    double directional = grad.dot(direction);
    if (!(directional < 0.0)) {
      // not a descent direction (stale curvature); fall back to steepest descent
      history.clear();
      direction = -grad;
      directional = -grad.squaredNorm();
    }

    // backtracking line search, Armijo sufficient decrease
    double step = history.empty() ? std::min(1.0, 1.0 / result.grad_norm) : 1.0;
    Eigen::VectorXd x_new;
    Eigen::VectorXd grad_new(grad.size());
    double value_new = value;
    bool accepted = false;
    for (int trial = 0; trial < options.max_line_search; ++trial) {
      x_new = result.x + step * direction;
      if (x_new == result.x) break;  // step no longer representable
      value_new = objective(x_new, grad_new);
      if (std::isfinite(value_new) &&
          value_new <= value + options.armijo_c * step * directional) {
        accepted = true;
        break;
      }
      step *= options.backtrack;
      if (step < 1e-20) break;
    }
    if (!accepted) {
      result.stop_reason = "line_search_failure";
      break;
    }

    CurvaturePair pair;
    pair.s = x_new - result.x;
    pair.y = grad_new - grad;
    const double sy = pair.s.dot(pair.y);
    if (sy > 1e-10 * pair.s.norm() * pair.y.norm()) {
      pair.rho = 1.0 / sy;
      history.push_back(std::move(pair));
      if (static_cast<int>(history.size()) > options.memory) history.pop_front();
    }

    result.x = std::move(x_new);
    value = value_new;
    grad = grad_new;
    result.iterations = iter + 1;
    result.trace.push_back(value);
  }

  result.value = value;
  result.grad_norm = grad.norm();
  if (!result.converged && result.grad_norm <= options.grad_tol) {
    result.converged = true;
    result.stop_reason = "gradient_tolerance";
  }
  return result;
}

}  // namespace vpp
