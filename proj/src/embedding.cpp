#include "vpp/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "vpp/errors.hpp"

namespace vpp {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

void EmbeddingConfig::validate() const {
  if (k <= 0) throw ConfigError("feature dimension k must be positive");
  if (d < 0) throw ConfigError("depth d must be nonnegative");
  switch (kind) {
    case EmbeddingKind::Tabular:
      if (r <= 0) throw ConfigError("tabular embedding needs r > 0");
      if (n_vowels < 0) throw ConfigError("tabular embedding needs the universe size");
      break;
    case EmbeddingKind::Neural:
      if (r <= 0) throw ConfigError("neural embedding needs r > 0");
      break;
    case EmbeddingKind::Interpretable:
      if (r != k) throw ConfigError("interpretable embedding requires r = k");
      break;
    case EmbeddingKind::Prototype:
      if (r <= 0) throw ConfigError("prototype embedding needs r > 0 prototypes");
      break;
  }
}

void ParamLayout::append(const std::string& name, int rows, int cols) {
  segments.push_back({name, rows, cols, total});
  total += rows * cols;
}

bool ParamLayout::has(const std::string& name) const {
  return std::any_of(segments.begin(), segments.end(),
                     [&](const ParamSegment& s) { return s.name == name; });
}

const ParamSegment& ParamLayout::at(const std::string& name) const {
  for (const auto& s : segments) {
    if (s.name == name) return s;
  }
  throw ConfigError("no parameter segment named " + name);
}

namespace {

// layer stack for Neural/Interpretable, and the inner map of Prototype
void append_net_segments(ParamLayout& layout, int in_dim, int out_dim, int depth) {
  layout.append("W0", out_dim, in_dim);
  layout.append("b0", out_dim, 1);
  for (int i = 1; i <= depth; ++i) {
    layout.append("W" + std::to_string(i), out_dim, out_dim);
    layout.append("b" + std::to_string(i), out_dim, 1);
  }
}

}  // namespace

ParamLayout embedding_layout(const EmbeddingConfig& config) {
  config.validate();
  ParamLayout layout;
  switch (config.kind) {
    case EmbeddingKind::Tabular:
      layout.append("E", config.r, config.n_vowels);
      break;
    case EmbeddingKind::Neural:
      append_net_segments(layout, config.k, config.r, config.d);
      break;
    case EmbeddingKind::Interpretable:
      append_net_segments(layout, config.k, config.k, config.d);
      break;
    case EmbeddingKind::Prototype:
      append_net_segments(layout, config.k, config.k, config.d);
      layout.append("Mu", config.k, config.r);
      layout.append("log_sigma", 1, 1);
      layout.append("weight_logits", config.r, 1);
      break;
  }
  return layout;
}

Eigen::Map<const Eigen::MatrixXd> param_block(const ParamLayout& layout,
                                              const Eigen::VectorXd& theta,
                                              const std::string& name) {
  if (theta.size() < layout.total) throw ConfigError("parameter vector shorter than layout");
  const ParamSegment& s = layout.at(name);
  return {theta.data() + s.offset, s.rows, s.cols};
}

Eigen::Map<Eigen::MatrixXd> param_block(const ParamLayout& layout, Eigen::VectorXd& theta,
                                        const std::string& name) {
  if (theta.size() < layout.total) throw ConfigError("parameter vector shorter than layout");
  const ParamSegment& s = layout.at(name);
  return {theta.data() + s.offset, s.rows, s.cols};
}

namespace {

// z_0 = W0 f + b0;  z_i = W_i tanh(z_{i-1}) + b_i;  e = z_d.
Eigen::VectorXd net_forward(const ParamLayout& layout, const Eigen::VectorXd& theta,
                            const Eigen::VectorXd& f, int depth,
                            std::vector<Eigen::VectorXd>* activations = nullptr) {
  Eigen::VectorXd z = param_block(layout, theta, "W0") * f +
                      param_block(layout, theta, "b0").col(0);
  for (int i = 1; i <= depth; ++i) {
    Eigen::VectorXd a = z.array().tanh();
    if (activations) activations->push_back(a);
    z = param_block(layout, theta, "W" + std::to_string(i)) * a +
        param_block(layout, theta, "b" + std::to_string(i)).col(0);
  }
  return z;
}

// Accumulates d(g . e)/d(net params) into grad; g is consumed.
void net_backward(const ParamLayout& layout, const Eigen::VectorXd& theta,
                  const Eigen::VectorXd& f, int depth,
                  const std::vector<Eigen::VectorXd>& activations, Eigen::VectorXd g,
                  Eigen::Ref<Eigen::VectorXd> grad) {
  auto grad_block = [&](const std::string& name) {
    const ParamSegment& s = layout.at(name);
    return Eigen::Map<Eigen::MatrixXd>(grad.data() + s.offset, s.rows, s.cols);
  };
  for (int i = depth; i >= 1; --i) {
    const Eigen::VectorXd& a = activations[static_cast<std::size_t>(i - 1)];
    grad_block("W" + std::to_string(i)).noalias() += g * a.transpose();
    grad_block("b" + std::to_string(i)).col(0) += g;
    const auto w = param_block(layout, theta, "W" + std::to_string(i));
    g = (w.transpose() * g).cwiseProduct((1.0 - a.array().square()).matrix());
  }
  grad_block("W0").noalias() += g * f.transpose();
  grad_block("b0").col(0) += g;
}

struct PrototypeEval {
  Eigen::VectorXd x;          // metric point, R^k
  Eigen::VectorXd weights;    // softmax(weight_logits)
  Eigen::VectorXd responses;  // e, R^r
  Eigen::VectorXd sq_dist;    // |x - mu_l|^2
  double sigma2 = 1.0;
};

PrototypeEval prototype_eval(const EmbeddingConfig& config, const ParamLayout& layout,
                             const Eigen::VectorXd& theta, const Eigen::VectorXd& f,
                             std::vector<Eigen::VectorXd>* activations = nullptr) {
  PrototypeEval ev;
  ev.x = net_forward(layout, theta, f, config.d, activations);

  const auto mu = param_block(layout, theta, "Mu");
  const double log_sigma = param_block(layout, theta, "log_sigma")(0, 0);
  ev.sigma2 = std::exp(2.0 * log_sigma);

  const auto logits = param_block(layout, theta, "weight_logits").col(0);
  const double max_logit = logits.maxCoeff();
  ev.weights = (logits.array() - max_logit).exp().matrix();
  ev.weights /= ev.weights.sum();

  const double k_half = 0.5 * static_cast<double>(config.k);
  const double norm_const = std::pow(kTwoPi * ev.sigma2, -k_half);
  ev.sq_dist = (mu.colwise() - ev.x).colwise().squaredNorm().transpose();
  ev.responses = (ev.weights.array() * norm_const *
                  (-ev.sq_dist.array() / (2.0 * ev.sigma2)).exp())
                     .matrix();
  return ev;
}

}  // namespace

Eigen::VectorXd neural_forward(const EmbeddingConfig& config, const Eigen::VectorXd& theta,
                               const Eigen::VectorXd& f) {
  if (config.kind != EmbeddingKind::Neural && config.kind != EmbeddingKind::Interpretable) {
    throw ConfigError("neural_forward needs a neural or interpretable embedding");
  }
  if (f.size() != config.k) throw ConfigError("feature vector has wrong dimension");
  return net_forward(embedding_layout(config), theta, f, config.d);
}

Eigen::VectorXd interpretable_forward(const EmbeddingConfig& config,
                                      const Eigen::VectorXd& theta,
                                      const Eigen::VectorXd& f) {
  if (config.kind == EmbeddingKind::Neural && config.r != config.k) {
    throw ConfigError("interpretable map requires r = k");
  }
  if (config.kind == EmbeddingKind::Prototype) {
    return prototype_metric_point(config, theta, f);
  }
  return neural_forward(config, theta, f);
}

Eigen::VectorXd prototype_metric_point(const EmbeddingConfig& config,
                                       const Eigen::VectorXd& theta,
                                       const Eigen::VectorXd& f) {
  if (config.kind != EmbeddingKind::Prototype) {
    throw ConfigError("metric point requires a prototype embedding");
  }
  return net_forward(embedding_layout(config), theta, f, config.d);
}

Eigen::VectorXd prototype_forward(const EmbeddingConfig& config, const Eigen::VectorXd& theta,
                                  const Eigen::VectorXd& f) {
  if (config.kind != EmbeddingKind::Prototype) {
    throw ConfigError("prototype_forward needs a prototype embedding");
  }
  return prototype_eval(config, embedding_layout(config), theta, f).responses;
}

Eigen::VectorXd embed(const EmbeddingConfig& config, const Eigen::VectorXd& theta,
                      const Eigen::VectorXd& f, int vowel_index) {
  switch (config.kind) {
    case EmbeddingKind::Tabular: {
      if (vowel_index < 0 || vowel_index >= config.n_vowels) {
        throw ConfigError("tabular vowel index out of range");
      }
      return param_block(embedding_layout(config), theta, "E").col(vowel_index);
    }
    case EmbeddingKind::Neural:
    case EmbeddingKind::Interpretable:
      return neural_forward(config, theta, f);
    case EmbeddingKind::Prototype:
      return prototype_forward(config, theta, f);
  }
  throw ConfigError("unknown embedding kind");
}

Eigen::MatrixXd embed_all(const EmbeddingConfig& config, const Eigen::VectorXd& theta,
                          const VowelTable& table) {
  if (config.kind == EmbeddingKind::Tabular) {
    if (config.n_vowels != table.size()) {
      throw ConfigError("tabular embedding size disagrees with the vowel table");
    }
    return param_block(embedding_layout(config), theta, "E");
  }
  Eigen::MatrixXd result(config.output_dim(), table.size());
  for (int i = 0; i < table.size(); ++i) {
    result.col(i) = embed(config, theta, table.features.col(i), i);
  }
  return result;
}

Eigen::MatrixXd metric_points_all(const EmbeddingConfig& config, const Eigen::VectorXd& theta,
                                  const VowelTable& table) {
  if (!config.has_metric_space()) {
    throw ConfigError("embedding has no metric space (needs interpretable or prototype)");
  }
  Eigen::MatrixXd result(config.k, table.size());
  for (int i = 0; i < table.size(); ++i) {
    result.col(i) = config.kind == EmbeddingKind::Prototype
                        ? prototype_metric_point(config, theta, table.features.col(i))
                        : neural_forward(config, theta, table.features.col(i));
  }
  return result;
}

void embedding_backward(const EmbeddingConfig& config, const Eigen::VectorXd& theta,
                        const Eigen::VectorXd& f, int vowel_index,
                        const Eigen::VectorXd& upstream_e, const Eigen::VectorXd& upstream_x,
                        Eigen::Ref<Eigen::VectorXd> grad) {
  const ParamLayout layout = embedding_layout(config);
  if (grad.size() < layout.total) throw ConfigError("gradient buffer shorter than layout");
  if (config.kind != EmbeddingKind::Prototype && upstream_x.size() != 0) {
    throw ConfigError("metric-point gradient only applies to prototype embeddings");
  }

  switch (config.kind) {
    case EmbeddingKind::Tabular: {
      const ParamSegment& s = layout.at("E");
      Eigen::Map<Eigen::MatrixXd>(grad.data() + s.offset, s.rows, s.cols).col(vowel_index) +=
          upstream_e;
      return;
    }
    case EmbeddingKind::Neural:
    case EmbeddingKind::Interpretable: {
      std::vector<Eigen::VectorXd> activations;
      net_forward(layout, theta, f, config.d, &activations);
      net_backward(layout, theta, f, config.d, activations, upstream_e, grad);
      return;
    }
    case EmbeddingKind::Prototype: {
      std::vector<Eigen::VectorXd> activations;
      const PrototypeEval ev = prototype_eval(config, layout, theta, f, &activations);
      const auto mu = param_block(layout, theta, "Mu");

      // coeff_l = u_l e_l: the response-weighted upstream
      Eigen::VectorXd coeff = Eigen::VectorXd::Zero(config.r);
      if (upstream_e.size() > 0) coeff = upstream_e.cwiseProduct(ev.responses);

      auto grad_of = [&](const std::string& name) {
        const ParamSegment& s = layout.at(name);
        return Eigen::Map<Eigen::MatrixXd>(grad.data() + s.offset, s.rows, s.cols);
      };

      Eigen::VectorXd gx = Eigen::VectorXd::Zero(config.k);
      if (upstream_e.size() > 0) {
        // d e_l / d mu_l = e_l (x - mu_l) / sigma^2; d/dx is the negation
        auto gmu = grad_of("Mu");
        for (int l = 0; l < config.r; ++l) {
          const Eigen::VectorXd diff = ev.x - mu.col(l);
          gmu.col(l) += coeff(l) / ev.sigma2 * diff;
          gx -= coeff(l) / ev.sigma2 * diff;
        }
        // d e_l / d log_sigma = e_l (|x - mu_l|^2 / sigma^2 - k)
        grad_of("log_sigma")(0, 0) +=
            (coeff.array() * (ev.sq_dist.array() / ev.sigma2 - config.k)).sum();
        // softmax jacobian: d S / d rho_m = u_m e_m - w_m S
        const double weighted_sum = coeff.sum();
        grad_of("weight_logits").col(0) += coeff - ev.weights * weighted_sum;
      }
      if (upstream_x.size() > 0) gx += upstream_x;
      if (!gx.isZero(0.0)) {
        net_backward(layout, theta, f, config.d, activations, gx, grad);
      }
      return;
    }
  }
}

Eigen::VectorXd init_embedding_params(const EmbeddingConfig& config, const VowelTable& table,
                                      const std::vector<int>& training_vowels, Rng& rng,
                                      const InitStyle& style) {
  const ParamLayout layout = embedding_layout(config);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(layout.total);

  auto fill_uniform = [&](const std::string& name, double scale) {
    auto block = param_block(layout, theta, name);
    for (int c = 0; c < block.cols(); ++c) {
      for (int rr = 0; rr < block.rows(); ++rr) block(rr, c) = rng.uniform(-scale, scale);
    }
  };

  if (config.kind == EmbeddingKind::Tabular) {
    fill_uniform("E", style.weight_scale);
    return theta;
  }

  for (int i = 0; i <= config.d; ++i) {
    fill_uniform("W" + std::to_string(i), style.weight_scale);
    if (style.bias_scale > 0.0) fill_uniform("b" + std::to_string(i), style.bias_scale);
  }

  if (config.kind == EmbeddingKind::Prototype) {
    std::vector<int> pool(training_vowels);
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
    if (pool.empty()) {
      for (int i = 0; i < table.size(); ++i) pool.push_back(i);
    }
    if (pool.empty()) throw ConfigError("prototype init needs at least one vowel");

    auto mu = param_block(layout, theta, "Mu");
    for (int l = 0; l < config.r; ++l) {
      const int v = pool[rng.uniform_index(pool.size())];
      const Eigen::VectorXd x =
          net_forward(layout, theta, table.features.col(v), config.d);
      for (int rr = 0; rr < config.k; ++rr) mu(rr, l) = x(rr) + 0.05 * rng.normal();
    }
    param_block(layout, theta, "log_sigma")(0, 0) = std::log(0.3);
    // weight_logits stay 0: uniform mixture
  }
  return theta;
}

}  // namespace vpp
