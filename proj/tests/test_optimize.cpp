#include <doctest.h>

#include <cmath>
#include <limits>

#include "vpp/errors.hpp"
#include "vpp/optimize.hpp"

using namespace vpp;

TEST_CASE("minimize: recovers the minimizer of a convex quadratic") {
  // f(x) = 0.5 (x - a)' D (x - a) with known diagonal curvature
  Eigen::VectorXd target(10), curvature(10);
  for (int i = 0; i < 10; ++i) {
    target(i) = std::sin(1.7 * i) * 3.0;
    curvature(i) = 0.5 + i;
  }
  const ObjectiveFn objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
    grad = curvature.cwiseProduct(x - target);
    return 0.5 * (x - target).dot(grad);
  };

  MinimizeOptions options;
  options.grad_tol = 1e-10;
  const MinimizeResult result = minimize(objective, Eigen::VectorXd::Zero(10), options);
  CHECK(result.iterations <= 50);
  CHECK((result.x - target).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(result.converged);
}

TEST_CASE("minimize: returns immediately when already at tolerance") {
  const ObjectiveFn objective = [](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
    grad = 2.0 * x;
    return x.squaredNorm();
  };
  const MinimizeResult result = minimize(objective, Eigen::VectorXd::Zero(4));
  CHECK(result.iterations == 0);
  CHECK(result.x.cwiseAbs().maxCoeff() == 0.0);
  CHECK(result.converged);
  CHECK(result.stop_reason == "gradient_tolerance");
}

TEST_CASE("minimize: Rosenbrock from the classic start") {
  const ObjectiveFn rosenbrock = [](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
    const double a = x(0), b = x(1);
    grad.resize(2);
    grad(0) = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
    grad(1) = 200.0 * (b - a * a);
    return (1.0 - a) * (1.0 - a) + 100.0 * (b - a * a) * (b - a * a);
  };

  MinimizeOptions options;
  options.grad_tol = 1e-9;
  const MinimizeResult result =
      minimize(rosenbrock, Eigen::Vector2d(-1.2, 1.0), options);
  CHECK(std::abs(result.x(0) - 1.0) < 1e-6);
  CHECK(std::abs(result.x(1) - 1.0) < 1e-6);

  // accepted iterations never increase the objective
  for (std::size_t i = 1; i < result.trace.size(); ++i) {
    CHECK(result.trace[i] <= result.trace[i - 1] + 1e-15);
  }
}

TEST_CASE("minimize: non-finite start is an error") {
  const ObjectiveFn objective = [](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
    grad = Eigen::VectorXd::Ones(x.size());
    return std::numeric_limits<double>::infinity();
  };
  CHECK_THROWS_AS(minimize(objective, Eigen::VectorXd::Zero(2)), NumericalError);
}

TEST_CASE("minimize: line-search failure stops cleanly at the best point") {
  // finite at the start, infinite on every later evaluation: nothing accepts
  const Eigen::Vector2d start(0.25, -0.5);
  int calls = 0;
  const ObjectiveFn objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
    grad = Eigen::VectorXd::Ones(x.size());
    return calls++ == 0 ? 1.0 : std::numeric_limits<double>::infinity();
  };
  const MinimizeResult result = minimize(objective, start);
  CHECK(result.stop_reason == "line_search_failure");
  CHECK(result.x == start);
  CHECK(result.value == 1.0);
}
