#include "vpp/pointprocess.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <cmath>
#include <limits>

#include "vpp/errors.hpp"

namespace vpp {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

void ModelConfig::validate() const {
  embedding.validate();
  if (potential == PotentialKind::Mixture && embedding.kind != EmbeddingKind::Prototype) {
    throw ConfigError("mixture-density potential requires a prototype embedding");
  }
  if (family == Family::DPP && potential == PotentialKind::Mixture) {
    throw ConfigError("the DPP takes its potentials from the kernel, not a mixture density");
  }
}

ParamLayout model_layout(const ModelConfig& config) {
  config.validate();
  ParamLayout layout = embedding_layout(config.embedding);
  if (config.trains_temperature()) layout.append("log_T", 1, 1);
  return layout;
}

void TrainedModel::rebuild_cache() {
  config.validate();
  const ParamLayout layout = model_layout(config);
  if (params.size() != layout.total) {
    throw ConfigError("parameter vector does not match the model layout");
  }
  const int n = table.size();

  embeddings = embed_all(config.embedding, params, table);
  metric = config.has_metric_space()
               ? metric_points_all(config.embedding, params, table)
               : Eigen::MatrixXd();

  phi_values.resize(n);
  for (int i = 0; i < n; ++i) {
    phi_values(i) = config.potential == PotentialKind::Mixture
                        ? embeddings.col(i).sum()
                        : embeddings.col(i).norm();
  }

  temperature = config.trains_temperature()
                    ? std::exp(param_block(layout, params, "log_T")(0, 0))
                    : 1.0;

  kernel.resize(0, 0);
  log_psi.resize(0, 0);
  log_normalizer = 0.0;

  switch (config.family) {
    case Family::BPP:
      log_normalizer = phi_values.array().log1p().sum();
      break;
    case Family::MPP: {
      const Eigen::MatrixXd& points = pair_points(*this);
      log_psi = Eigen::MatrixXd::Zero(n, n);
      for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
          const double d2 = (points.col(i) - points.col(j)).squaredNorm();
          const double v = d2 > 0.0 ? -1.0 / (temperature * d2) : kNegInf;
          log_psi(i, j) = v;
          log_psi(j, i) = v;
        }
      }
      break;
    }
    case Family::DPP: {
      kernel.noalias() = embeddings.transpose() * embeddings;
      // logdet(L + I) via Cholesky; L + I is symmetric positive definite
      Eigen::MatrixXd lplusi = kernel;
      lplusi.diagonal().array() += 1.0;
      Eigen::LLT<Eigen::MatrixXd> llt(lplusi);
      if (llt.info() != Eigen::Success) {
        throw NumericalError("Cholesky of L + I failed");
      }
      log_normalizer = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
      break;
    }
  }
}

TrainedModel TrainedModel::proposal_model() const {
  if (!has_proposal()) throw ConfigError("model has no companion proposal");
  TrainedModel bpp;
  bpp.config = config;
  bpp.config.family = Family::BPP;
  bpp.params = proposal_params;
  bpp.table = table;
  bpp.rebuild_cache();
  return bpp;
}

TrainedModel make_model(const ModelConfig& config, const Eigen::VectorXd& params,
                        const VowelTable& table) {
  TrainedModel model;
  model.config = config;
  model.params = params;
  model.table = table;
  model.rebuild_cache();
  return model;
}

const Eigen::MatrixXd& pair_points(const TrainedModel& model) {
  const bool prototype_mpp = model.config.family == Family::MPP &&
                             model.config.embedding.kind == EmbeddingKind::Prototype;
  return prototype_mpp ? model.metric : model.embeddings;
}

double phi(const TrainedModel& model, int i) { return model.phi_values(i); }

double psi(const TrainedModel& model, int i, int j) {
  if (i == j) throw ConfigError("psi needs two distinct vowels");
  if (model.log_psi.size() > 0) return std::exp(model.log_psi(i, j));
  const Eigen::MatrixXd& points = pair_points(model);
  const double d2 = (points.col(i) - points.col(j)).squaredNorm();
  return d2 > 0.0 ? std::exp(-1.0 / (model.temperature * d2)) : 0.0;
}

double bpp_log_unnormalized(const TrainedModel& model, const std::vector<int>& subset) {
  double score = 0.0;
  for (int i : subset) score += std::log(model.phi_values(i));
  return score;
}

double bpp_log_prob(const TrainedModel& model, const std::vector<int>& subset) {
  return bpp_log_unnormalized(model, subset) - model.log_normalizer;
}

double bpp_marginal(const TrainedModel& model, int i) {
  const double p = model.phi_values(i);
  return p / (1.0 + p);
}

double mpp_log_unnormalized(const TrainedModel& model, const std::vector<int>& subset) {
  double score = bpp_log_unnormalized(model, subset);
  const std::size_t m = subset.size();
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = a + 1; b < m; ++b) {
      score += model.log_psi(subset[a], subset[b]);
    }
  }
  return score;
}

namespace {

// logdet of the Gram matrix E_V^T E_V through a rank-revealing QR of the
// selected columns; -inf when the columns are linearly dependent.
double gram_log_det(const Eigen::MatrixXd& embeddings, const std::vector<int>& subset) {
  const int m = static_cast<int>(subset.size());
  if (m == 0) return 0.0;  // det of the empty minor is 1 by convention
  if (m > embeddings.rows()) return kNegInf;

  Eigen::MatrixXd sub(embeddings.rows(), m);
  for (int c = 0; c < m; ++c) sub.col(c) = embeddings.col(subset[static_cast<std::size_t>(c)]);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sub);
  if (qr.rank() < m) return kNegInf;
  double log_det = 0.0;
  for (int i = 0; i < m; ++i) {
    log_det += 2.0 * std::log(std::abs(qr.matrixR()(i, i)));
  }
  return log_det;
}

}  // namespace

double dpp_log_prob(const TrainedModel& model, const std::vector<int>& subset) {
  return gram_log_det(model.embeddings, subset) - model.log_normalizer;
}

double log_unnormalized(const TrainedModel& model, const std::vector<int>& subset) {
  switch (model.config.family) {
    case Family::BPP:
      return bpp_log_unnormalized(model, subset);
    case Family::MPP:
      return mpp_log_unnormalized(model, subset);
    case Family::DPP:
      return gram_log_det(model.embeddings, subset);
  }
  throw ConfigError("unknown model family");
}

double log_prob(const TrainedModel& model, const std::vector<int>& subset,
                std::optional<double> mpp_log_partition) {
  switch (model.config.family) {
    case Family::BPP:
      return bpp_log_prob(model, subset);
    case Family::DPP:
      return dpp_log_prob(model, subset);
    case Family::MPP:
      if (!mpp_log_partition.has_value()) {
        throw ConfigError("MPP log-probability needs a log-partition estimate");
      }
      return mpp_log_unnormalized(model, subset) - *mpp_log_partition;
  }
  throw ConfigError("unknown model family");
}

std::string family_name(Family f) {
  switch (f) {
    case Family::BPP: return "bpp";
    case Family::MPP: return "mpp";
    case Family::DPP: return "dpp";
  }
  throw ConfigError("unknown model family");
}

std::string embedding_kind_name(EmbeddingKind k) {
  switch (k) {
    case EmbeddingKind::Tabular: return "tabular";
    case EmbeddingKind::Neural: return "neural";
    case EmbeddingKind::Interpretable: return "interpretable";
    case EmbeddingKind::Prototype: return "prototype";
  }
  throw ConfigError("unknown embedding kind");
}

std::string potential_kind_name(PotentialKind p) {
  return p == PotentialKind::Norm ? "norm" : "mixture";
}

Family family_from_name(const std::string& s) {
  if (s == "bpp") return Family::BPP;
  if (s == "mpp") return Family::MPP;
  if (s == "dpp") return Family::DPP;
  throw ConfigError("unknown model family: " + s);
}

EmbeddingKind embedding_kind_from_name(const std::string& s) {
  if (s == "tabular") return EmbeddingKind::Tabular;
  if (s == "neural") return EmbeddingKind::Neural;
  if (s == "interpretable") return EmbeddingKind::Interpretable;
  if (s == "prototype") return EmbeddingKind::Prototype;
  throw ConfigError("unknown embedding kind: " + s);
}

PotentialKind potential_kind_from_name(const std::string& s) {
  if (s == "norm") return PotentialKind::Norm;
  if (s == "mixture") return PotentialKind::Mixture;
  throw ConfigError("unknown potential kind: " + s);
}

}  // namespace vpp
