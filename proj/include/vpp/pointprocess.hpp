#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "vpp/corpus.hpp"
#include "vpp/embedding.hpp"

namespace vpp {

enum class Family { BPP, MPP, DPP };

// Unary potential phi(v): Norm is |e(v)|; Mixture is sum_l e(v)_l, the
// Gaussian-mixture density at x(v) (Prototype embeddings only).
enum class PotentialKind { Norm, Mixture };

struct ModelConfig {
  Family family = Family::BPP;
  EmbeddingConfig embedding;
  PotentialKind potential = PotentialKind::Norm;

  void validate() const;
  bool has_metric_space() const { return embedding.has_metric_space(); }
  bool trains_temperature() const { return family == Family::MPP; }
};

// Full trainable vector: embedding segments, plus "log_T" for the MPP.
ParamLayout model_layout(const ModelConfig& config);

// A model with its parameterization frozen and per-vowel quantities cached.
// Immutable after rebuild_cache(); scoring from many threads is safe.
struct TrainedModel {
  ModelConfig config;
  Eigen::VectorXd params;
  VowelTable table;
  // Companion BPP of the same embedding family (MPP only): importance
  // sampling proposal for partition estimates. Empty when absent.
  Eigen::VectorXd proposal_params;

  // cache
  Eigen::MatrixXd embeddings;  // r x N, column i = e(v_i)
  Eigen::MatrixXd metric;      // k x N when a metric space exists, else 0x0
  Eigen::VectorXd phi_values;  // N
  Eigen::MatrixXd kernel;      // N x N Gram matrix L = E^T E (DPP)
  Eigen::MatrixXd log_psi;     // N x N pair potentials in log domain (MPP)
  double temperature = 1.0;    // exp(log_T) (MPP)
  double log_normalizer = 0.0; // BPP: sum log(1+phi); DPP: logdet(L+I)

  int universe_size() const { return table.size(); }
  void rebuild_cache();
  bool has_proposal() const { return proposal_params.size() > 0; }
  // The companion proposal as a scoreable BPP model.
  TrainedModel proposal_model() const;
};

TrainedModel make_model(const ModelConfig& config, const Eigen::VectorXd& params,
                        const VowelTable& table);

// The vectors whose pairwise distances feed psi: the metric points for a
// prototype MPP (dispersion lives in the interpretable space), the embedding
// vectors otherwise.
const Eigen::MatrixXd& pair_points(const TrainedModel& model);

double phi(const TrainedModel& model, int i);

// psi(i, j) = exp(-1 / (T |p_i - p_j|^2)) in (0, 1); exactly 0 at coincident
// points (the repulsion limit), approaching 1 as the points separate.
double psi(const TrainedModel& model, int i, int j);

double bpp_log_unnormalized(const TrainedModel& model, const std::vector<int>& subset);
double bpp_log_prob(const TrainedModel& model, const std::vector<int>& subset);
double bpp_marginal(const TrainedModel& model, int i);  // phi / (1 + phi)

// sum_{i in V} log phi_i + sum_{i<j in V} log psi(i, j)
double mpp_log_unnormalized(const TrainedModel& model, const std::vector<int>& subset);

// logdet L_V - logdet(L + I); -inf when L_V is numerically singular
// (linearly dependent embeddings, e.g. |V| > r).
double dpp_log_prob(const TrainedModel& model, const std::vector<int>& subset);

// Family dispatch of the unnormalized log score (BPP/MPP products, det L_V).
double log_unnormalized(const TrainedModel& model, const std::vector<int>& subset);

// Normalized log-probability. The MPP requires a log-partition estimate
// (ConfigError when missing); BPP/DPP normalize exactly.
double log_prob(const TrainedModel& model, const std::vector<int>& subset,
                std::optional<double> mpp_log_partition = std::nullopt);

std::string family_name(Family f);
std::string embedding_kind_name(EmbeddingKind k);
std::string potential_kind_name(PotentialKind p);
Family family_from_name(const std::string& s);
EmbeddingKind embedding_kind_from_name(const std::string& s);
PotentialKind potential_kind_from_name(const std::string& s);

}  // namespace vpp
