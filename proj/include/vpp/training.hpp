#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "vpp/corpus.hpp"
#include "vpp/evaluation.hpp"
#include "vpp/optimize.hpp"
#include "vpp/pointprocess.hpp"

namespace vpp {

enum class Metric { XEnt, Cloze1, Cloze01, Cloze012 };

std::string metric_name(Metric m);
Metric metric_from_name(const std::string& s);
bool metric_lower_is_better(Metric m);

struct TrainConfig {
  ModelConfig model;
  double lambda = 0.0;  // L2 coefficient on the whole parameter vector
  MinimizeOptions optimizer;
  long long mpp_surrogate_samples = 10000;
  std::uint64_t seed = 1;

  void validate() const;
};

// Penalized negative log-likelihood with its analytic gradient:
//   F(theta) = -sum_languages log p(V | theta) + lambda |theta|^2.
// For the MPP, log Z is replaced by an importance-sampling surrogate over a
// sample set drawn once at construction (common random numbers), so F is
// deterministic and smooth; the gradient is the exact gradient of the
// surrogate. The proposal is the supplied companion BPP parameter vector, or
// the uniform-phi BPP when none is given.
class NllObjective {
 public:
  NllObjective(const TrainConfig& config, const VowelTable& table,
               std::vector<Inventory> train,
               Eigen::VectorXd proposal_params = Eigen::VectorXd());

  // Returns +inf (and records why, see infeasible_reason) instead of raising
  // when some training inventory has probability 0 at theta, so that line
  // searches can back off rather than abort.
  double operator()(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const;
  int dim() const { return layout_.total; }
  const ParamLayout& layout() const { return layout_; }
  const std::string& infeasible_reason() const { return infeasible_reason_; }

 private:
  TrainConfig config_;
  VowelTable table_;
  std::vector<Inventory> train_;
  ParamLayout layout_;
  mutable std::string infeasible_reason_;
  // MPP surrogate state, fixed at construction
  std::vector<std::vector<int>> surrogate_subsets_;
  std::vector<double> surrogate_proposal_scores_;  // proposal log-unnormalized per sample
  double proposal_log_partition_ = 0.0;
};

// One-shot evaluation of the objective/gradient pair (surrogate state derived
// from config.seed, so repeated calls agree).
std::pair<double, Eigen::VectorXd> nll_objective(const TrainConfig& config,
                                                 const Eigen::VectorXd& params,
                                                 const VowelTable& table,
                                                 const std::vector<Inventory>& train);

Eigen::VectorXd init_model_params(const TrainConfig& config, const VowelTable& table,
                                  const std::vector<Inventory>& train);

// Initialize, minimize, build the cache. MPP fits train the companion BPP of
// the same embedding family first and keep it as the stored proposal.
// Deterministic given (config, seed, data ordering).
TrainedModel fit(const TrainConfig& config, const std::vector<Inventory>& train,
                 const VowelTable& table, std::vector<double>* objective_trace = nullptr);

double evaluate_metric(const TrainedModel& model, const std::vector<Inventory>& data,
                       Metric metric, std::uint64_t seed);

struct GridOutcome {
  TrainConfig config;
  double dev_metric = 0.0;
  bool ok = false;
  std::string error;
};

struct GridSearchResult {
  TrainConfig best_config;
  std::shared_ptr<TrainedModel> best_model;
  double best_dev_metric = 0.0;
  std::vector<GridOutcome> outcomes;
};

// Trains one model per grid point and keeps the best dev metric (lower
// cross-entropy / higher cloze accuracy); ties prefer smaller r, then smaller
// d. Failing points are recorded and skipped; all points failing is an error.
GridSearchResult grid_search(const std::vector<TrainConfig>& grid,
                             const std::vector<Inventory>& train,
                             const std::vector<Inventory>& dev, const VowelTable& table,
                             Metric metric, std::uint64_t seed, int jobs = 1);

struct FoldReport {
  int fold = 0;
  TrainConfig selected;
  double dev_metric = 0.0;
  double test_metric = 0.0;
};

struct CvReport {
  Metric metric = Metric::XEnt;
  int num_folds = 0;
  std::uint64_t seed = 0;
  std::vector<FoldReport> folds;
  double mean_test_metric = 0.0;
};

// Per test fold: dev = next fold, train = the rest; grid_search on
// train/dev; the test fold is only touched by the final evaluation.
CvReport cross_validate(const std::vector<Inventory>& corpus, const VowelTable& table,
                        const std::vector<TrainConfig>& grid, int num_folds,
                        std::uint64_t seed, Metric metric, int jobs = 1);

}  // namespace vpp
