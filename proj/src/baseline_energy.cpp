#include "vpp/baseline_energy.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "vpp/errors.hpp"
#include "vpp/rng.hpp"

namespace vpp {

void EnergyConfig::validate() const {
  if (num_points < 2) throw ConfigError("energy minimization needs at least 2 points");
  if (restarts < 1) throw ConfigError("at least one restart is required");
  if (lower.size() != upper.size() || lower.size() == 0) {
    throw ConfigError("box bounds must have matching nonzero dimension");
  }
  for (int c = 0; c < lower.size(); ++c) {
    if (!(lower(c) < upper(c))) throw ConfigError("box bounds must satisfy lower < upper");
  }
  if (max_sweeps < 1 || tol <= 0.0) throw ConfigError("descent schedule must be positive");
}

double energy(const Eigen::MatrixXd& points) {
  const int m = static_cast<int>(points.cols());
  double total = 0.0;
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      const double d2 = (points.col(i) - points.col(j)).squaredNorm();
      if (d2 == 0.0) return std::numeric_limits<double>::infinity();
      total += 1.0 / d2;
    }
  }
  return total;
}

namespace {

// energy restricted to moving coordinate `coord` of point `index`
double slice_energy(const Eigen::MatrixXd& points, int index, int coord, double v) {
  double total = 0.0;
  for (int j = 0; j < points.cols(); ++j) {
    if (j == index) continue;
    double d2 = 0.0;
    for (int c = 0; c < points.rows(); ++c) {
      const double diff = (c == coord ? v : points(c, index)) - points(c, j);
      d2 += diff * diff;
    }
    if (d2 == 0.0) return std::numeric_limits<double>::infinity();
    total += 1.0 / d2;
  }
  return total;
}

double golden_section(const std::function<double(double)>& f, double lo, double hi,
                      double tol) {
  const double inv_phi = 0.6180339887498948482;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

std::vector<EnergyRun> minimize_energy(const EnergyConfig& config) {
  config.validate();
  const int dim = config.dim();
  const int m = config.num_points;

  std::vector<EnergyRun> runs;
  runs.reserve(static_cast<std::size_t>(config.restarts));

  for (int restart = 0; restart < config.restarts; ++restart) {
    Rng rng(split_seed(config.seed, static_cast<std::uint64_t>(restart)));
    Eigen::MatrixXd points(dim, m);
    do {
      for (int i = 0; i < m; ++i) {
        for (int c = 0; c < dim; ++c) {
          points(c, i) = rng.uniform(config.lower(c), config.upper(c));
        }
      }
    } while (!std::isfinite(energy(points)));

    EnergyRun run;
    double current = energy(points);
    int sweeps = 0;
    for (; sweeps < config.max_sweeps; ++sweeps) {
      const double before = current;
      for (int i = 0; i < m; ++i) {
        for (int c = 0; c < dim; ++c) {
          const double best = golden_section(
              [&](double v) { return slice_energy(points, i, c, v); }, config.lower(c),
              config.upper(c), config.tol);
          const double candidate = slice_energy(points, i, c, best);
          if (candidate < slice_energy(points, i, c, points(c, i))) {
            points(c, i) = best;
          }
        }
      }
      current = energy(points);
      if (before - current < config.tol) break;
    }
    run.points = points;
    run.energy = current;
    run.sweeps = sweeps + 1;
    runs.push_back(std::move(run));
  }

  std::sort(runs.begin(), runs.end(),
            [](const EnergyRun& a, const EnergyRun& b) { return a.energy < b.energy; });
  return runs;
}

}  // namespace vpp
