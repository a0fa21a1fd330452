#include "vpp/training.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <set>
#include <thread>

#include "vpp/errors.hpp"
#include "vpp/inference.hpp"
#include "vpp/rng.hpp"

namespace vpp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kPosInf = std::numeric_limits<double>::infinity();

// seed streams fanned out from a fit/search master seed
enum SeedStream : std::uint64_t {
  kInitStream = 0,
  kSurrogateStream = 1,
  kCompanionStream = 2,
  kMetricStream = 7,
  kGridStream = 1000,
  kGridEvalStream = 2000,
  kFoldStream = 100,
  kFoldEvalStream = 200,
};

}  // namespace

std::string metric_name(Metric m) {
  switch (m) {
    case Metric::XEnt: return "xent";
    case Metric::Cloze1: return "cloze1";
    case Metric::Cloze01: return "cloze01";
    case Metric::Cloze012: return "cloze012";
  }
  throw ConfigError("unknown metric");
}

Metric metric_from_name(const std::string& s) {
  if (s == "xent") return Metric::XEnt;
  if (s == "cloze1") return Metric::Cloze1;
  if (s == "cloze01") return Metric::Cloze01;
  if (s == "cloze012") return Metric::Cloze012;
  throw ConfigError("unknown metric: " + s);
}

bool metric_lower_is_better(Metric m) { return m == Metric::XEnt; }

void TrainConfig::validate() const {
  model.validate();
  if (lambda < 0.0) throw ConfigError("L2 coefficient must be nonnegative");
  if (optimizer.grad_tol <= 0.0 || optimizer.max_iterations <= 0 || optimizer.memory <= 0) {
    throw ConfigError("optimizer tolerances must be positive");
  }
  if (mpp_surrogate_samples <= 0) throw ConfigError("surrogate sample count must be positive");
}

NllObjective::NllObjective(const TrainConfig& config, const VowelTable& table,
                           std::vector<Inventory> train, Eigen::VectorXd proposal_params)
    : config_(config), table_(table), train_(std::move(train)) {
  config_.validate();
  layout_ = model_layout(config_.model);
  if (config_.model.family != Family::MPP) return;

  // Fixed importance sample set for the log-partition surrogate (common
  // random numbers; the objective stays deterministic and smooth in theta).
  const int n = table_.size();
  if (n > 64) throw DataError("MPP training supports at most 64 vowels");
  Rng rng(split_seed(config_.seed, kSurrogateStream));
  const long long s_count = config_.mpp_surrogate_samples;
  surrogate_subsets_.reserve(static_cast<std::size_t>(s_count));
  surrogate_proposal_scores_.reserve(static_cast<std::size_t>(s_count));

  if (proposal_params.size() > 0) {
    ModelConfig proposal_config = config_.model;
    proposal_config.family = Family::BPP;
    const TrainedModel proposal = make_model(proposal_config, proposal_params, table_);
    proposal_log_partition_ = proposal.log_normalizer;
    for (long long s = 0; s < s_count; ++s) {
      surrogate_subsets_.push_back(mask_to_subset(sample_bpp(proposal, rng)));
      surrogate_proposal_scores_.push_back(
          bpp_log_unnormalized(proposal, surrogate_subsets_.back()));
    }
  } else {
    // uniform-phi proposal: each vowel a fair coin, score 0 for every subset
    proposal_log_partition_ = n * std::log(2.0);
    for (long long s = 0; s < s_count; ++s) {
      std::uint64_t mask = 0;
      for (int i = 0; i < n; ++i) {
        if (rng.uniform() < 0.5) mask |= (std::uint64_t{1} << i);
      }
      surrogate_subsets_.push_back(mask_to_subset(mask));
      surrogate_proposal_scores_.push_back(0.0);
    }
  }
}

double NllObjective::operator()(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const {
  if (theta.size() != layout_.total) throw ConfigError("parameter vector has wrong size");
  grad.setZero(layout_.total);

  const EmbeddingConfig& emb = config_.model.embedding;
  const int emb_total = embedding_layout(emb).total;
  const Eigen::VectorXd theta_emb = theta.head(emb_total);
  const int n = table_.size();
  const double n_lang = static_cast<double>(train_.size());

  const Eigen::MatrixXd E = embed_all(emb, theta_emb, table_);
  const bool prototype_mpp = config_.model.family == Family::MPP &&
                             emb.kind == EmbeddingKind::Prototype;
  const Eigen::MatrixXd X =
      prototype_mpp ? metric_points_all(emb, theta_emb, table_) : Eigen::MatrixXd();
  const Eigen::MatrixXd& pair_pts = prototype_mpp ? X : E;

  Eigen::VectorXd phi(n);
  for (int i = 0; i < n; ++i) {
    phi(i) = config_.model.potential == PotentialKind::Mixture ? E.col(i).sum()
                                                               : E.col(i).norm();
  }

  double value = config_.lambda * theta.squaredNorm();
  Eigen::MatrixXd grad_e = Eigen::MatrixXd::Zero(E.rows(), n);
  Eigen::MatrixXd grad_x =
      prototype_mpp ? Eigen::MatrixXd::Zero(X.rows(), n) : Eigen::MatrixXd();
  double grad_log_t = 0.0;

  infeasible_reason_.clear();
  auto fail = [&](const std::string& why) -> double {
    infeasible_reason_ = why;
    grad.setZero();
    return kPosInf;
  };
  auto offending = [&](const Inventory& inv, const char* why) {
    return fail("training inventory " + inv.language_id + " has zero probability (" + why +
                ")");
  };

  switch (config_.model.family) {
    case Family::BPP: {
      Eigen::VectorXd counts = Eigen::VectorXd::Zero(n);
      for (const auto& inv : train_) {
        for (int i : inv.vowels) {
          if (!(phi(i) > 0.0)) return offending(inv, "zero unary potential");
          counts(i) += 1.0;
        }
      }
      const double log_z = phi.array().log1p().sum();
      for (int i = 0; i < n; ++i) {
        if (counts(i) > 0.0) value -= counts(i) * std::log(phi(i));
      }
      value += n_lang * log_z;
      // d value / d phi_i, then through the potential into the embedding
      for (int i = 0; i < n; ++i) {
        double dphi = n_lang / (1.0 + phi(i));
        if (counts(i) > 0.0) dphi -= counts(i) / phi(i);
        if (config_.model.potential == PotentialKind::Mixture) {
          grad_e.col(i).array() += dphi;
        } else if (phi(i) > 0.0) {
          grad_e.col(i) += dphi / phi(i) * E.col(i);
        }
      }
      break;
    }

    case Family::MPP: {
      const double log_t = theta(layout_.at("log_T").offset);
      const double temperature = std::exp(log_t);

      // pairwise squared distances and log psi over the pair points
      Eigen::MatrixXd sq_dist(n, n);
      Eigen::MatrixXd log_psi(n, n);
      for (int i = 0; i < n; ++i) {
        sq_dist(i, i) = 0.0;
        log_psi(i, i) = 0.0;
        for (int j = i + 1; j < n; ++j) {
          const double d2 = (pair_pts.col(i) - pair_pts.col(j)).squaredNorm();
          sq_dist(i, j) = sq_dist(j, i) = d2;
          const double lp = d2 > 0.0 ? -1.0 / (temperature * d2) : kNegInf;
          log_psi(i, j) = log_psi(j, i) = lp;
        }
      }
      Eigen::VectorXd log_phi(n);
      for (int i = 0; i < n; ++i) log_phi(i) = std::log(phi(i));

      auto score_of = [&](const std::vector<int>& subset) {
        double s = 0.0;
        for (std::size_t a = 0; a < subset.size(); ++a) {
          s += log_phi(subset[a]);
          for (std::size_t b = a + 1; b < subset.size(); ++b) {
            s += log_psi(subset[a], subset[b]);
          }
        }
        return s;
      };

      // coefficients of log phi_i and log psi_ij in the objective
      Eigen::VectorXd phi_coeff = Eigen::VectorXd::Zero(n);
      Eigen::MatrixXd pair_coeff = Eigen::MatrixXd::Zero(n, n);

      for (const auto& inv : train_) {
        const double s = score_of(inv.vowels);
        if (s == kNegInf) return offending(inv, "zero unary or pair potential");
        value -= s;
        for (std::size_t a = 0; a < inv.vowels.size(); ++a) {
          phi_coeff(inv.vowels[a]) -= 1.0;
          for (std::size_t b = a + 1; b < inv.vowels.size(); ++b) {
            pair_coeff(inv.vowels[a], inv.vowels[b]) -= 1.0;
          }
        }
      }

      // surrogate log partition and its softmax-weighted gradient
      const std::size_t s_count = surrogate_subsets_.size();
      std::vector<double> log_w(s_count);
      for (std::size_t s = 0; s < s_count; ++s) {
        log_w[s] = score_of(surrogate_subsets_[s]) - surrogate_proposal_scores_[s];
      }
      const double lse = logsumexp(log_w);
      if (!std::isfinite(lse)) {
        return fail("importance surrogate collapsed: every sample has zero weight");
      }
      const double log_z_tilde =
          proposal_log_partition_ + lse - std::log(static_cast<double>(s_count));
      value += n_lang * log_z_tilde;

      for (std::size_t s = 0; s < s_count; ++s) {
        const double w = std::exp(log_w[s] - lse);  // softmax weight
        if (w == 0.0) continue;
        const double c = n_lang * w;
        const std::vector<int>& subset = surrogate_subsets_[s];
        for (std::size_t a = 0; a < subset.size(); ++a) {
          phi_coeff(subset[a]) += c;
          for (std::size_t b = a + 1; b < subset.size(); ++b) {
            pair_coeff(subset[a], subset[b]) += c;
          }
        }
      }

      // log phi terms into the embedding gradient
      for (int i = 0; i < n; ++i) {
        if (phi_coeff(i) == 0.0) continue;
        if (config_.model.potential == PotentialKind::Mixture) {
          grad_e.col(i).array() += phi_coeff(i) / phi(i);
        } else {
          grad_e.col(i) += phi_coeff(i) / (phi(i) * phi(i)) * E.col(i);
        }
      }
      // log psi terms: d log psi / d d2 = 1 / (T d2^2); d log psi / d log T = -log psi
      Eigen::MatrixXd& grad_pts = prototype_mpp ? grad_x : grad_e;
      for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
          const double c = pair_coeff(i, j);
          if (c == 0.0) continue;
          const double d2 = sq_dist(i, j);
          const double dd2 = c / (temperature * d2 * d2);
          const Eigen::VectorXd diff = 2.0 * dd2 * (pair_pts.col(i) - pair_pts.col(j));
          grad_pts.col(i) += diff;
          grad_pts.col(j) -= diff;
          grad_log_t += c * (-log_psi(i, j));
        }
      }
      grad(layout_.at("log_T").offset) += grad_log_t;
      break;
    }

    case Family::DPP: {
      for (const auto& inv : train_) {
        const int m = static_cast<int>(inv.vowels.size());
        Eigen::MatrixXd sub(E.rows(), m);
        for (int c = 0; c < m; ++c) sub.col(c) = E.col(inv.vowels[static_cast<std::size_t>(c)]);
        const Eigen::MatrixXd gram = sub.transpose() * sub;
        Eigen::LLT<Eigen::MatrixXd> llt(gram);
        if (llt.info() != Eigen::Success) {
          return offending(inv, "linearly dependent embeddings, det L_V = 0");
        }
        const Eigen::MatrixXd chol_l = llt.matrixL();
        value -= 2.0 * chol_l.diagonal().array().log().sum();
        // d logdet(G)/dE_V = 2 E_V G^{-1}
        const Eigen::MatrixXd gram_inv =
            llt.solve(Eigen::MatrixXd::Identity(m, m));
        const Eigen::MatrixXd g = 2.0 * sub * gram_inv;
        for (int c = 0; c < m; ++c) {
          grad_e.col(inv.vowels[static_cast<std::size_t>(c)]) -= g.col(c);
        }
      }
      // normalizer logdet(L + I), d/dE = 2 E (L + I)^{-1}
      Eigen::MatrixXd lplusi = E.transpose() * E;
      lplusi.diagonal().array() += 1.0;
      Eigen::LLT<Eigen::MatrixXd> llt(lplusi);
      if (llt.info() != Eigen::Success) throw NumericalError("Cholesky of L + I failed");
      const Eigen::MatrixXd chol_l = llt.matrixL();
      value += n_lang * 2.0 * chol_l.diagonal().array().log().sum();
      grad_e.noalias() += n_lang * 2.0 * E * llt.solve(Eigen::MatrixXd::Identity(n, n));
      break;
    }
  }

  if (!std::isfinite(value)) return fail("non-finite objective value");

  // chain the per-vowel embedding gradients through to the parameters
  auto grad_emb = grad.head(emb_total);
  const Eigen::VectorXd empty;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd ge = grad_e.col(i);
    const Eigen::VectorXd gx = prototype_mpp ? Eigen::VectorXd(grad_x.col(i)) : empty;
    const bool ge_zero = ge.isZero(0.0);
    const bool gx_zero = gx.size() == 0 || gx.isZero(0.0);
    if (ge_zero && gx_zero) continue;
    embedding_backward(emb, theta_emb, table_.features.col(i), i, ge,
                       gx_zero ? empty : gx, grad_emb);
  }
  grad += 2.0 * config_.lambda * theta;
  return value;
}

std::pair<double, Eigen::VectorXd> nll_objective(const TrainConfig& config,
                                                 const Eigen::VectorXd& params,
                                                 const VowelTable& table,
                                                 const std::vector<Inventory>& train) {
  NllObjective objective(config, table, train);
  Eigen::VectorXd grad;
  const double value = objective(params, grad);
  if (!std::isfinite(value)) throw DataError(objective.infeasible_reason());
  return {value, grad};
}

namespace {

std::vector<int> distinct_training_vowels(const std::vector<Inventory>& train) {
  std::set<int> seen;
  for (const auto& inv : train) seen.insert(inv.vowels.begin(), inv.vowels.end());
  return {seen.begin(), seen.end()};
}

}  // namespace

Eigen::VectorXd init_model_params(const TrainConfig& config, const VowelTable& table,
                                  const std::vector<Inventory>& train) {
  const ParamLayout layout = model_layout(config.model);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(layout.total);
  Rng rng(split_seed(config.seed, kInitStream));
  InitStyle style;
  if (config.model.family == Family::DPP &&
      config.model.embedding.kind == EmbeddingKind::Neural) {
    // near-linear tanh layers at init would leave every Gram minor of more
    // than k+1 embeddings singular; wider weights and live biases break that
    style.weight_scale = 0.5;
    style.bias_scale = 0.5;
  }
  theta.head(embedding_layout(config.model.embedding).total) = init_embedding_params(
      config.model.embedding, table, distinct_training_vowels(train), rng, style);
  // log_T starts at 0 (T = 1) when present
  return theta;
}

TrainedModel fit(const TrainConfig& config, const std::vector<Inventory>& train,
                 const VowelTable& table, std::vector<double>* objective_trace) {
  config.validate();
  if (config.model.embedding.uses_features() && table.features.size() == 0) {
    throw DataError("vowel table has no features; run preprocessing first");
  }

  std::size_t max_inventory = 0;
  for (const auto& inv : train) {
    max_inventory = std::max(max_inventory, inv.vowels.size());
    for (int v : inv.vowels) {
      if (v < 0 || v >= table.size()) {
        throw DataError("inventory " + inv.language_id + " references a vowel outside the table");
      }
    }
  }
  if (config.model.family == Family::DPP &&
      config.model.embedding.kind == EmbeddingKind::Interpretable &&
      max_inventory > static_cast<std::size_t>(config.model.embedding.k)) {
    throw ConfigError(
        "interpretable DPP assigns probability 0 to inventories larger than k = " +
        std::to_string(config.model.embedding.k) + " (largest attested: " +
        std::to_string(max_inventory) + ")");
  }

  Eigen::VectorXd proposal;
  if (config.model.family == Family::MPP) {
    TrainConfig companion = config;
    companion.model.family = Family::BPP;
    companion.seed = split_seed(config.seed, kCompanionStream);
    const TrainedModel proposal_model = fit(companion, train, table);
    proposal = proposal_model.params;
  }

  NllObjective objective(config, table, train, proposal);
  const Eigen::VectorXd theta0 = init_model_params(config, table, train);
  {
    // surface zero-probability training inventories as a data error up front
    Eigen::VectorXd probe_grad;
    if (!std::isfinite(objective(theta0, probe_grad))) {
      throw DataError(objective.infeasible_reason());
    }
  }
  const MinimizeResult result =
      minimize([&](const Eigen::VectorXd& x, Eigen::VectorXd& g) { return objective(x, g); },
               theta0, config.optimizer);
  if (objective_trace) *objective_trace = result.trace;

  TrainedModel model = make_model(config.model, result.x, table);
  model.proposal_params = proposal;
  return model;
}

double evaluate_metric(const TrainedModel& model, const std::vector<Inventory>& data,
                       Metric metric, std::uint64_t seed) {
  switch (metric) {
    case Metric::XEnt: {
      std::optional<MppEvalConfig> mpp;
      if (model.config.family == Family::MPP) {
        mpp = MppEvalConfig{100000, split_seed(seed, kMetricStream)};
      }
      return cross_entropy(model, data, mpp).mean_nats;
    }
    case Metric::Cloze1:
    case Metric::Cloze01:
    case Metric::Cloze012: {
      const ClozeVariant variant = metric == Metric::Cloze1     ? ClozeVariant::One
                                   : metric == Metric::Cloze01 ? ClozeVariant::ZeroOne
                                                               : ClozeVariant::ZeroOneTwo;
      const auto instances =
          make_cloze_instances(data, variant, split_seed(seed, kMetricStream));
      return cloze_accuracy(model, instances);
    }
  }
  throw ConfigError("unknown metric");
}

namespace {

void parallel_for(int count, int jobs, const std::function<void(int)>& body) {
  jobs = std::max(1, std::min(jobs, count));
  if (jobs <= 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(jobs));
  for (int w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) body(i);
    });
  }
  for (auto& t : workers) t.join();
}

// lower metric wins for x-ent, higher for cloze; ties prefer small r then d
bool improves(Metric metric, double candidate, const TrainConfig& cand_cfg, double best,
              const TrainConfig& best_cfg, bool have_best) {
  if (!have_best) return true;
  const double a = metric_lower_is_better(metric) ? candidate : -candidate;
  const double b = metric_lower_is_better(metric) ? best : -best;
  if (a != b) return a < b;
  if (cand_cfg.model.embedding.r != best_cfg.model.embedding.r) {
    return cand_cfg.model.embedding.r < best_cfg.model.embedding.r;
  }
  return cand_cfg.model.embedding.d < best_cfg.model.embedding.d;
}

}  // namespace

GridSearchResult grid_search(const std::vector<TrainConfig>& grid,
                             const std::vector<Inventory>& train,
                             const std::vector<Inventory>& dev, const VowelTable& table,
                             Metric metric, std::uint64_t seed, int jobs) {
  if (grid.empty()) throw ConfigError("hyperparameter grid is empty");

  std::vector<GridOutcome> outcomes(grid.size());
  std::vector<std::shared_ptr<TrainedModel>> models(grid.size());

  parallel_for(static_cast<int>(grid.size()), jobs, [&](int idx) {
    GridOutcome& out = outcomes[static_cast<std::size_t>(idx)];
    out.config = grid[static_cast<std::size_t>(idx)];
    out.config.seed = split_seed(seed, kGridStream + static_cast<std::uint64_t>(idx));
    try {
      auto model = std::make_shared<TrainedModel>(fit(out.config, train, table));
      out.dev_metric = evaluate_metric(
          *model, dev, metric, split_seed(seed, kGridEvalStream + static_cast<std::uint64_t>(idx)));
      if (metric_lower_is_better(metric) && !std::isfinite(out.dev_metric)) {
        out.error = "infinite dev metric";
        return;
      }
      models[static_cast<std::size_t>(idx)] = std::move(model);
      out.ok = true;
    } catch (const std::exception& e) {
      out.error = e.what();
    }
  });

  GridSearchResult result;
  result.outcomes = outcomes;
  bool have_best = false;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (!outcomes[i].ok) continue;
    if (improves(metric, outcomes[i].dev_metric, outcomes[i].config, result.best_dev_metric,
                 result.best_config, have_best)) {
      result.best_config = outcomes[i].config;
      result.best_dev_metric = outcomes[i].dev_metric;
      result.best_model = models[i];
      have_best = true;
    }
  }
  if (!have_best) {
    std::string detail;
    for (const auto& out : outcomes) {
      detail += "\n  " + family_name(out.config.model.family) + "/" +
                embedding_kind_name(out.config.model.embedding.kind) + ": " + out.error;
    }
    throw DataError("every grid point failed:" + detail);
  }
  return result;
}

CvReport cross_validate(const std::vector<Inventory>& corpus, const VowelTable& table,
                        const std::vector<TrainConfig>& grid, int num_folds,
                        std::uint64_t seed, Metric metric, int jobs) {
  if (num_folds < 3) {
    throw DataError("cross-validation needs at least 3 folds (train/dev/test)");
  }
  const FoldAssignment folds = make_folds(corpus, num_folds, split_seed(seed, 0));

  CvReport report;
  report.metric = metric;
  report.num_folds = num_folds;
  report.seed = seed;
  double total = 0.0;
  for (int t = 0; t < num_folds; ++t) {
    const int dev_fold = folds.dev_fold(t);
    std::vector<Inventory> train, dev, test;
    for (const auto& inv : corpus) {
      const int f = folds.fold_of_language.at(inv.language_id);
      if (f == t) {
        test.push_back(inv);
      } else if (f == dev_fold) {
        dev.push_back(inv);
      } else {
        train.push_back(inv);
      }
    }

    const GridSearchResult search =
        grid_search(grid, train, dev, table, metric,
                    split_seed(seed, kFoldStream + static_cast<std::uint64_t>(t)), jobs);

    FoldReport row;
    row.fold = t;
    row.selected = search.best_config;
    row.dev_metric = search.best_dev_metric;
    row.test_metric =
        evaluate_metric(*search.best_model, test, metric,
                        split_seed(seed, kFoldEvalStream + static_cast<std::uint64_t>(t)));
    total += row.test_metric;
    report.folds.push_back(std::move(row));
  }
  report.mean_test_metric = total / static_cast<double>(num_folds);
  return report;
}

}  // namespace vpp
