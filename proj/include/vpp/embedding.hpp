#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "vpp/corpus.hpp"
#include "vpp/rng.hpp"

namespace vpp {

// How a vowel's feature vector f(v) in R^k becomes an embedding e(v) in R^r.
//   Tabular:       e(v_i) is a free r-vector per vowel (ignores features).
//   Neural:        feed-forward net, d layers of tanh, output in R^r.
//   Interpretable: the Neural map constrained to r = k (a diffeomorphism of
//                  the feature plane for invertible nonlinearities).
//   Prototype:     Interpretable map into R^k, then a response vector of r
//                  weighted Gaussian densities centered at learned prototypes.
enum class EmbeddingKind { Tabular, Neural, Interpretable, Prototype };

struct EmbeddingConfig {
  EmbeddingKind kind = EmbeddingKind::Neural;
  int k = 2;         // feature dimension
  int r = 2;         // embedding dimension (prototype: number of prototypes)
  int d = 0;         // depth; d = 0 is a single affine layer
  int n_vowels = 0;  // Tabular only: universe size

  void validate() const;
  // dimension of e(v)
  int output_dim() const { return kind == EmbeddingKind::Interpretable ? k : r; }
  bool uses_features() const { return kind != EmbeddingKind::Tabular; }
  bool has_metric_space() const {
    return kind == EmbeddingKind::Interpretable || kind == EmbeddingKind::Prototype;
  }
};

// A named block inside a flat parameter vector, stored column-major.
struct ParamSegment {
  std::string name;
  int rows = 0;
  int cols = 0;
  int offset = 0;
  int size() const { return rows * cols; }
};

struct ParamLayout {
  std::vector<ParamSegment> segments;
  int total = 0;

  void append(const std::string& name, int rows, int cols);
  bool has(const std::string& name) const;
  const ParamSegment& at(const std::string& name) const;
};

// Segment names: Tabular "E"; Neural/Interpretable "W0","b0",...,"Wd","bd";
// Prototype adds "Mu" (k x r, column = prototype), "log_sigma", "weight_logits".
ParamLayout embedding_layout(const EmbeddingConfig& config);

Eigen::Map<const Eigen::MatrixXd> param_block(const ParamLayout& layout,
                                              const Eigen::VectorXd& theta,
                                              const std::string& name);
Eigen::Map<Eigen::MatrixXd> param_block(const ParamLayout& layout, Eigen::VectorXd& theta,
                                        const std::string& name);

// e = W_d tanh(... W_1 tanh(W_0 f + b_0) + b_1 ...) + b_d;  d = 0 is affine.
Eigen::VectorXd neural_forward(const EmbeddingConfig& config, const Eigen::VectorXd& theta,
                               const Eigen::VectorXd& f);

// neural_forward restricted to r == k (ConfigError otherwise).
Eigen::VectorXd interpretable_forward(const EmbeddingConfig& config,
                                      const Eigen::VectorXd& theta,
                                      const Eigen::VectorXd& f);

// x(v): the interpretable-space point fed to the Gaussian responses.
Eigen::VectorXd prototype_metric_point(const EmbeddingConfig& config,
                                       const Eigen::VectorXd& theta,
                                       const Eigen::VectorXd& f);

// e_l = w_l (2 pi sigma^2)^(-k/2) exp(-|x - mu_l|^2 / (2 sigma^2)), all > 0,
// with w = softmax(weight_logits) and sigma = exp(log_sigma).
Eigen::VectorXd prototype_forward(const EmbeddingConfig& config, const Eigen::VectorXd& theta,
                                  const Eigen::VectorXd& f);

// Dispatch on kind; vowel_index is only consulted by Tabular.
Eigen::VectorXd embed(const EmbeddingConfig& config, const Eigen::VectorXd& theta,
                      const Eigen::VectorXd& f, int vowel_index);

// Column i = e(v_i) for every vowel in the table.
Eigen::MatrixXd embed_all(const EmbeddingConfig& config, const Eigen::VectorXd& theta,
                          const VowelTable& table);

// Column i = x(v_i); only for kinds with a metric space (Interpretable returns
// the embedding itself).
Eigen::MatrixXd metric_points_all(const EmbeddingConfig& config, const Eigen::VectorXd& theta,
                                  const VowelTable& table);

// Accumulates d(upstream_e . e(v) + upstream_x . x(v)) / d theta into grad.
// upstream_x may be empty; it is only meaningful for Prototype, where pair
// potentials act on the metric point rather than the response vector.
void embedding_backward(const EmbeddingConfig& config, const Eigen::VectorXd& theta,
                        const Eigen::VectorXd& f, int vowel_index,
                        const Eigen::VectorXd& upstream_e, const Eigen::VectorXd& upstream_x,
                        Eigen::Ref<Eigen::VectorXd> grad);

struct InitStyle {
  double weight_scale = 0.1;
  double bias_scale = 0.0;
};

// Weights ~ U(-weight_scale, +weight_scale), biases likewise with their own
// scale (0 by default); prototypes at the metric-space images of randomly
// chosen training vowels plus N(0, 0.05^2) jitter, log_sigma = log(0.3),
// weight_logits = 0. DPP fits widen both scales: near-linear tanh layers
// leave the embeddings on a rank-k manifold and every larger minor singular.
Eigen::VectorXd init_embedding_params(const EmbeddingConfig& config, const VowelTable& table,
                                      const std::vector<int>& training_vowels, Rng& rng,
                                      const InitStyle& style = {});

}  // namespace vpp
