#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace vpp {

// The classical dispersion-only simulation: place m points in a box to
// minimize summed inverse squared distances, local optima found by
// coordinate descent from random restarts.
struct EnergyConfig {
  int num_points = 3;
  Eigen::VectorXd lower = Eigen::Vector2d(0.0, 0.0);
  Eigen::VectorXd upper = Eigen::Vector2d(1.0, 1.0);
  int restarts = 10;
  int max_sweeps = 1000;
  double tol = 1e-8;  // stop when a full sweep improves by less than this
  std::uint64_t seed = 1;

  void validate() const;
  int dim() const { return static_cast<int>(lower.size()); }
};

// sum over unordered pairs of 1 / |p_i - p_j|^2; +inf on coincident points.
double energy(const Eigen::MatrixXd& points);

struct EnergyRun {
  Eigen::MatrixXd points;  // columns are points
  double energy = 0.0;
  int sweeps = 0;
};

// One run per restart, each a coordinate-descent fixed point (golden-section
// line search per coordinate, clamped to the box); sorted best-first.
std::vector<EnergyRun> minimize_energy(const EnergyConfig& config);

}  // namespace vpp
