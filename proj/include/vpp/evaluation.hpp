#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vpp/inference.hpp"
#include "vpp/pointprocess.hpp"

namespace vpp {

// Deletion-size sets: exactly 1; 0 or 1; 0, 1, or 2.
enum class ClozeVariant { One, ZeroOne, ZeroOneTwo };

std::string cloze_variant_name(ClozeVariant v);
ClozeVariant cloze_variant_from_name(const std::string& s);
std::vector<int> cloze_allowed_sizes(ClozeVariant v);

struct ClozeInstance {
  std::string language_id;
  std::vector<int> observed;  // sorted, disjoint from hidden
  std::vector<int> hidden;    // sorted; size in the variant's allowed set
  ClozeVariant variant = ClozeVariant::One;
};

struct MppEvalConfig {
  long long n_samples = 100000;
  std::uint64_t seed = 1;
};

struct CrossEntropyReport {
  double mean_nats = 0.0;  // +inf when some language has probability 0
  std::vector<std::pair<std::string, double>> per_language;  // -log p(V)
  std::vector<std::string> infinite_languages;
  long long mpp_samples_used = 0;

  bool finite() const { return infinite_languages.empty(); }
};

// Mean -log p(V) over test languages, exact for BPP/DPP; the MPP normalizer
// is importance-sampled once per call (fresh seeded sample set, proposal =
// the model's companion BPP, else uniform-phi). MPP without a sampling
// config is a ConfigError. Zero-probability languages are listed and the
// mean reported as infinite rather than raising.
CrossEntropyReport cross_entropy(const TrainedModel& model, const std::vector<Inventory>& test,
                                 std::optional<MppEvalConfig> mpp_config = std::nullopt);

// Per language and repetition: deletion size uniform over the variant's
// allowed sizes, then a uniform subset of that size hidden. Languages
// smaller than the drawn size are skipped with a warning.
std::vector<ClozeInstance> make_cloze_instances(const std::vector<Inventory>& test,
                                                ClozeVariant variant, std::uint64_t seed,
                                                int repetitions = 1,
                                                std::vector<std::string>* warnings = nullptr);

// argmax over completions D (|D| in the allowed set, D disjoint from
// observed) of p(observed u D); ties broken by lexicographic symbol order.
std::vector<int> cloze_predict(const TrainedModel& model, const std::vector<int>& observed,
                               ClozeVariant variant);

// Percentage of instances whose predicted hidden set matches exactly.
double cloze_accuracy(const TrainedModel& model, const std::vector<ClozeInstance>& instances);

struct ProcrustesResult {
  double scale = 1.0;
  Eigen::MatrixXd rotation;     // orthogonal, det +1 unless reflections allowed
  Eigen::VectorXd translation;
  double residual = 0.0;        // sum of squared alignment errors
};

// Closed-form similarity transform minimizing sum |s R x_i + t - y_i|^2.
// Points are matrix columns. All-identical sources are degenerate.
ProcrustesResult procrustes_align(const Eigen::MatrixXd& source, const Eigen::MatrixXd& target,
                                  bool allow_reflection = false);

// TSV with columns kind, label, blue_x, blue_y, red_x, red_y, aligned_x,
// aligned_y: a feature-space grid, its metric-space image, the image
// Procrustes-aligned back onto feature space (fit on the vowels), and one row
// per vowel. Requires a model with a metric space.
std::string export_metric_space(const TrainedModel& model, int grid_nx = 20, int grid_ny = 20,
                                bool allow_reflection = false);

}  // namespace vpp
