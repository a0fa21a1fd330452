#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "vpp/corpus.hpp"
#include "vpp/inference.hpp"
#include "vpp/pointprocess.hpp"
#include "vpp/rng.hpp"

namespace vpp::test {

// Deterministic universe with distinct, well-spread formants. Symbol names
// are zero-padded so index order coincides with lexicographic order.
inline VowelTable synthetic_table(int n) {
  VowelTable table;
  table.mean_formants.resize(2, n);
  for (int i = 0; i < n; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "v%02d", i);
    table.symbols.emplace_back(buf);
    table.mean_formants(0, i) = 280.0 + 37.0 * i + 11.0 * ((i * i) % 7);
    table.mean_formants(1, i) = 900.0 + 83.0 * ((i * 5) % (n > 0 ? n : 1)) + 13.0 * i;
  }
  preprocess_features(table);
  return table;
}

inline TrainedModel tabular_model(Family family, const Eigen::MatrixXd& embeddings,
                                  double log_temperature = 0.0) {
  ModelConfig config;
  config.family = family;
  config.embedding.kind = EmbeddingKind::Tabular;
  config.embedding.r = static_cast<int>(embeddings.rows());
  config.embedding.n_vowels = static_cast<int>(embeddings.cols());

  const ParamLayout layout = model_layout(config);
  Eigen::VectorXd params = Eigen::VectorXd::Zero(layout.total);
  params.head(embeddings.size()) =
      Eigen::Map<const Eigen::VectorXd>(embeddings.data(), embeddings.size());
  if (config.trains_temperature()) {
    params(layout.at("log_T").offset) = log_temperature;
  }
  return make_model(config, params, synthetic_table(static_cast<int>(embeddings.cols())));
}

// BPP with the given unary potentials exactly (r = 1, e_i = phi_i >= 0).
inline TrainedModel phi_bpp(const Eigen::VectorXd& phis) {
  return tabular_model(Family::BPP, phis.transpose());
}

inline TrainedModel random_tabular(Family family, int n, int r, Rng& rng,
                                   double scale = 1.0, double log_temperature = 0.0) {
  Eigen::MatrixXd e(r, n);
  for (int c = 0; c < n; ++c) {
    for (int row = 0; row < r; ++row) e(row, c) = scale * rng.normal();
  }
  return tabular_model(family, e, log_temperature);
}

// BPP sharing the MPP's unary potentials (drops the log_T segment)
inline TrainedModel unary_proposal(const TrainedModel& mpp) {
  ModelConfig config = mpp.config;
  config.family = Family::BPP;
  const int emb_total = embedding_layout(config.embedding).total;
  TrainedModel proposal = make_model(config, mpp.params.head(emb_total), mpp.table);
  return proposal;
}

template <class F>
Eigen::VectorXd central_difference(const F& f, const Eigen::VectorXd& x, double h = 1e-5) {
  Eigen::VectorXd grad(x.size());
  Eigen::VectorXd probe = x;
  for (int i = 0; i < x.size(); ++i) {
    probe(i) = x(i) + h;
    const double hi = f(probe);
    probe(i) = x(i) - h;
    const double lo = f(probe);
    probe(i) = x(i);
    grad(i) = (hi - lo) / (2.0 * h);
  }
  return grad;
}

// per-coordinate relative error; coordinates below 1 compare absolutely, the
// most central differencing at h = 1e-5 can resolve
inline double max_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double worst = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    const double scale = std::max({1.0, std::abs(a(i)), std::abs(b(i))});
    worst = std::max(worst, std::abs(a(i) - b(i)) / scale);
  }
  return worst;
}

inline double tv_distance(const std::vector<std::uint64_t>& samples,
                          const ExactDistribution& exact) {
  std::vector<double> counts(exact.log_prob.size(), 0.0);
  for (std::uint64_t mask : samples) counts[mask] += 1.0;
  double tv = 0.0;
  for (std::size_t mask = 0; mask < counts.size(); ++mask) {
    tv += std::abs(counts[mask] / static_cast<double>(samples.size()) -
                   exact.prob(static_cast<std::uint32_t>(mask)));
  }
  return 0.5 * tv;
}

// inverse-CDF draw from an enumerated distribution
struct ExactSampler {
  std::vector<double> cumulative;
  explicit ExactSampler(const ExactDistribution& dist) {
    cumulative.reserve(dist.log_prob.size());
    double total = 0.0;
    for (std::size_t mask = 0; mask < dist.log_prob.size(); ++mask) {
      total += dist.prob(static_cast<std::uint32_t>(mask));
      cumulative.push_back(total);
    }
  }
  std::uint64_t operator()(Rng& rng) const {
    const double u = rng.uniform() * cumulative.back();
    return static_cast<std::uint64_t>(
        std::lower_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
  }
};

inline std::vector<Inventory> masks_to_inventories(const std::vector<std::uint64_t>& masks,
                                                   const std::string& prefix) {
  std::vector<Inventory> out;
  out.reserve(masks.size());
  for (std::size_t i = 0; i < masks.size(); ++i) {
    out.push_back({prefix + std::to_string(i), mask_to_subset(masks[i])});
  }
  return out;
}

}  // namespace vpp::test
