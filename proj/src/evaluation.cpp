#include "vpp/evaluation.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "vpp/errors.hpp"
#include "vpp/rng.hpp"

namespace vpp {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kPosInf = std::numeric_limits<double>::infinity();
}

std::string cloze_variant_name(ClozeVariant v) {
  switch (v) {
    case ClozeVariant::One: return "1";
    case ClozeVariant::ZeroOne: return "01";
    case ClozeVariant::ZeroOneTwo: return "012";
  }
  throw ConfigError("unknown cloze variant");
}

ClozeVariant cloze_variant_from_name(const std::string& s) {
  if (s == "1") return ClozeVariant::One;
  if (s == "01") return ClozeVariant::ZeroOne;
  if (s == "012") return ClozeVariant::ZeroOneTwo;
  throw ConfigError("unknown cloze variant: " + s + " (expected 1, 01 or 012)");
}

std::vector<int> cloze_allowed_sizes(ClozeVariant v) {
  switch (v) {
    case ClozeVariant::One: return {1};
    case ClozeVariant::ZeroOne: return {0, 1};
    case ClozeVariant::ZeroOneTwo: return {0, 1, 2};
  }
  throw ConfigError("unknown cloze variant");
}

CrossEntropyReport cross_entropy(const TrainedModel& model,
                                 const std::vector<Inventory>& test,
                                 std::optional<MppEvalConfig> mpp_config) {
  CrossEntropyReport report;
  std::optional<double> log_partition;
  if (model.config.family == Family::MPP) {
    if (!mpp_config.has_value()) {
      throw ConfigError("MPP cross-entropy needs an importance-sampling config");
    }
    TrainedModel proposal;
    if (model.has_proposal()) {
      proposal = model.proposal_model();
    } else {
      // uniform-phi fallback: tabular BPP with every phi = 1
      ModelConfig cfg;
      cfg.family = Family::BPP;
      cfg.embedding.kind = EmbeddingKind::Tabular;
      cfg.embedding.r = 1;
      cfg.embedding.n_vowels = model.universe_size();
      proposal = make_model(
          cfg, Eigen::VectorXd::Ones(model.universe_size()), model.table);
    }
    const LogPartitionEstimate est =
        estimate_log_partition(model, proposal, mpp_config->n_samples, mpp_config->seed);
    log_partition = est.log_partition;
    report.mpp_samples_used = mpp_config->n_samples;
  }

  double total = 0.0;
  for (const auto& inv : test) {
    const double lp = log_prob(model, inv.vowels, log_partition);
    report.per_language.emplace_back(inv.language_id, -lp);
    if (lp == kNegInf) {
      report.infinite_languages.push_back(inv.language_id);
    } else {
      total += -lp;
    }
  }
  if (test.empty()) throw DataError("cross-entropy needs at least one test language");
  report.mean_nats = report.infinite_languages.empty()
                         ? total / static_cast<double>(test.size())
                         : kPosInf;
  return report;
}

std::vector<ClozeInstance> make_cloze_instances(const std::vector<Inventory>& test,
                                                ClozeVariant variant, std::uint64_t seed,
                                                int repetitions,
                                                std::vector<std::string>* warnings) {
  if (repetitions < 1) throw ConfigError("cloze repetitions must be at least 1");
  const std::vector<int> sizes = cloze_allowed_sizes(variant);
  Rng rng(seed);
  std::vector<ClozeInstance> instances;

  for (int rep = 0; rep < repetitions; ++rep) {
    for (const auto& inv : test) {
      const int deletion = sizes[rng.uniform_index(sizes.size())];
      if (static_cast<std::size_t>(deletion) > inv.vowels.size()) {
        if (warnings) {
          warnings->push_back("skipping " + inv.language_id + ": inventory of " +
                              std::to_string(inv.vowels.size()) +
                              " is smaller than a deletion of " + std::to_string(deletion));
        }
        continue;
      }
      // uniform subset of the drawn size: partial Fisher-Yates over a copy
      std::vector<int> pool = inv.vowels;
      ClozeInstance inst;
      inst.language_id = inv.language_id;
      inst.variant = variant;
      for (int h = 0; h < deletion; ++h) {
        const std::size_t j = h + rng.uniform_index(pool.size() - h);
        std::swap(pool[static_cast<std::size_t>(h)], pool[j]);
        inst.hidden.push_back(pool[static_cast<std::size_t>(h)]);
      }
      inst.observed.assign(pool.begin() + deletion, pool.end());
      std::sort(inst.observed.begin(), inst.observed.end());
      std::sort(inst.hidden.begin(), inst.hidden.end());
      instances.push_back(std::move(inst));
    }
  }
  return instances;
}

namespace {

std::vector<std::string> symbol_tuple(const TrainedModel& model, const std::vector<int>& set) {
  std::vector<std::string> out;
  for (int i : set) out.push_back(model.table.symbols[i]);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::vector<int> cloze_predict(const TrainedModel& model, const std::vector<int>& observed,
                               ClozeVariant variant) {
  const int n = model.universe_size();
  std::vector<bool> in_observed(static_cast<std::size_t>(n), false);
  for (int i : observed) {
    if (i < 0 || i >= n) throw DataError("observed vowel outside the universe");
    in_observed[static_cast<std::size_t>(i)] = true;
  }
  std::vector<int> remaining;
  for (int i = 0; i < n; ++i) {
    if (!in_observed[static_cast<std::size_t>(i)]) remaining.push_back(i);
  }

  std::vector<int> base = observed;
  std::sort(base.begin(), base.end());

  std::vector<int> best;
  double best_score = kNegInf;
  bool have_best = false;
  auto consider = [&](const std::vector<int>& addition) {
    std::vector<int> candidate = base;
    candidate.insert(candidate.end(), addition.begin(), addition.end());
    std::sort(candidate.begin(), candidate.end());
    const double score = log_unnormalized(model, candidate);
    if (!have_best || score > best_score ||
        (score == best_score &&
         symbol_tuple(model, addition) < symbol_tuple(model, best))) {
      best = addition;
      best_score = score;
      have_best = true;
    }
  };

  for (int size : cloze_allowed_sizes(variant)) {
    if (size == 0) {
      consider({});
    } else if (size == 1) {
      for (int i : remaining) consider({i});
    } else if (size == 2) {
      for (std::size_t a = 0; a < remaining.size(); ++a) {
        for (std::size_t b = a + 1; b < remaining.size(); ++b) {
          consider({remaining[a], remaining[b]});
        }
      }
    } else {
      throw ConfigError("cloze deletions larger than 2 are not supported");
    }
  }
  if (!have_best) {
    throw DataError("no cloze candidate exists (universe exhausted by the observed set)");
  }
  std::sort(best.begin(), best.end());
  return best;
}

double cloze_accuracy(const TrainedModel& model, const std::vector<ClozeInstance>& instances) {
  if (instances.empty()) throw DataError("cloze accuracy needs at least one instance");
  long long correct = 0;
  for (const auto& inst : instances) {
    if (cloze_predict(model, inst.observed, inst.variant) == inst.hidden) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(instances.size());
}

ProcrustesResult procrustes_align(const Eigen::MatrixXd& source, const Eigen::MatrixXd& target,
                                  bool allow_reflection) {
  if (source.cols() != target.cols() || source.rows() != target.rows()) {
    throw DataError("point sets must have matching shapes");
  }
  const int count = static_cast<int>(source.cols());
  const int dim = static_cast<int>(source.rows());
  if (count < 2) throw DataError("alignment needs at least 2 points");

  const Eigen::VectorXd source_mean = source.rowwise().mean();
  const Eigen::VectorXd target_mean = target.rowwise().mean();
  const Eigen::MatrixXd x = source.colwise() - source_mean;
  const Eigen::MatrixXd y = target.colwise() - target_mean;

  const double x_norm2 = x.squaredNorm();
  if (x_norm2 <= 0.0) throw DataError("degenerate source: all points identical");

  // cross-covariance; R is the orthogonal polar factor (det +1 unless
  // reflections are allowed), s the optimal uniform scale
  const Eigen::MatrixXd cov = y * x.transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::VectorXd d = Eigen::VectorXd::Ones(dim);
  if (!allow_reflection &&
      (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) {
    d(dim - 1) = -1.0;
  }
  ProcrustesResult result;
  result.rotation = svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
  const double trace = (svd.singularValues().array() * d.array()).sum();
  result.scale = trace / x_norm2;
  if (!(result.scale > 0.0)) {
    throw NumericalError("optimal scale is not positive; point sets are adversarial");
  }
  result.translation = target_mean - result.scale * result.rotation * source_mean;
  result.residual =
      (result.scale * result.rotation * x - y).squaredNorm();
  return result;
}

std::string export_metric_space(const TrainedModel& model, int grid_nx, int grid_ny,
                                bool allow_reflection) {
  if (!model.config.has_metric_space()) {
    throw ConfigError("metric-space export needs an interpretable or prototype embedding");
  }
  if (model.config.embedding.k != 2) {
    throw ConfigError("metric-space export is two-dimensional");
  }
  if (grid_nx < 2 || grid_ny < 2) throw ConfigError("grid needs at least 2 nodes per axis");

  const Eigen::MatrixXd& blue_vowels = model.table.features;  // 2 x N
  const Eigen::MatrixXd& red_vowels = model.metric;           // 2 x N

  const ProcrustesResult fit = procrustes_align(red_vowels, blue_vowels, allow_reflection);

  // grid over the bounding box of the vowels, 5% margin
  const Eigen::Vector2d lo = blue_vowels.rowwise().minCoeff();
  const Eigen::Vector2d hi = blue_vowels.rowwise().maxCoeff();
  const Eigen::Vector2d margin = 0.05 * (hi - lo);

  const EmbeddingConfig& emb = model.config.embedding;
  const int emb_total = embedding_layout(emb).total;
  const Eigen::VectorXd theta_emb = model.params.head(emb_total);

  std::ostringstream out;
  out.precision(12);
  out << "kind\tlabel\tblue_x\tblue_y\tred_x\tred_y\taligned_x\taligned_y\n";
  auto emit = [&](const std::string& kind, const std::string& label,
                  const Eigen::Vector2d& blue) {
    const Eigen::Vector2d red =
        emb.kind == EmbeddingKind::Prototype
            ? Eigen::Vector2d(prototype_metric_point(emb, theta_emb, blue))
            : Eigen::Vector2d(neural_forward(emb, theta_emb, blue));
    const Eigen::Vector2d aligned = fit.scale * fit.rotation * red + fit.translation;
    out << kind << '\t' << label << '\t' << blue(0) << '\t' << blue(1) << '\t' << red(0)
        << '\t' << red(1) << '\t' << aligned(0) << '\t' << aligned(1) << '\n';
  };

  for (int ix = 0; ix < grid_nx; ++ix) {
    for (int iy = 0; iy < grid_ny; ++iy) {
      Eigen::Vector2d blue;
      blue(0) = (lo(0) - margin(0)) +
                (hi(0) - lo(0) + 2.0 * margin(0)) * ix / static_cast<double>(grid_nx - 1);
      blue(1) = (lo(1) - margin(1)) +
                (hi(1) - lo(1) + 2.0 * margin(1)) * iy / static_cast<double>(grid_ny - 1);
      emit("grid", std::to_string(ix) + "," + std::to_string(iy), blue);
    }
  }
  for (int i = 0; i < model.universe_size(); ++i) {
    emit("vowel", model.table.symbols[i], blue_vowels.col(i));
  }
  return out.str();
}

}  // namespace vpp
