#include "vpp/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"
#include "vpp/errors.hpp"

namespace vpp {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

double logsumexp(const std::vector<double>& xs) {
  double max_x = kNegInf;
  for (double x : xs) max_x = std::max(max_x, x);
  if (!std::isfinite(max_x)) return max_x;  // all -inf (or empty)
  double sum = 0.0;
  for (double x : xs) sum += std::exp(x - max_x);
  return max_x + std::log(sum);
}

double ExactDistribution::prob(std::uint32_t mask) const { return std::exp(log_prob[mask]); }

std::vector<int> mask_to_subset(std::uint64_t mask) {
  std::vector<int> subset;
  for (int i = 0; mask != 0; ++i, mask >>= 1) {
    if (mask & 1u) subset.push_back(i);
  }
  return subset;
}

std::uint64_t subset_to_mask(const std::vector<int>& subset) {
  std::uint64_t mask = 0;
  for (int i : subset) mask |= (std::uint64_t{1} << i);
  return mask;
}

double subset_log_unnormalized(const TrainedModel& model, std::uint64_t mask) {
  return log_unnormalized(model, mask_to_subset(mask));
}

ExactDistribution enumerate_exact(const TrainedModel& model, int max_universe) {
  const int n = model.universe_size();
  if (n > max_universe) {
    throw DataError("universe of " + std::to_string(n) +
                    " vowels exceeds the enumeration limit " + std::to_string(max_universe));
  }
  ExactDistribution dist;
  dist.n = n;
  dist.log_prob.resize(std::size_t{1} << n);
  for (std::uint64_t mask = 0; mask < dist.log_prob.size(); ++mask) {
    dist.log_prob[mask] = subset_log_unnormalized(model, mask);
  }
  dist.log_partition = logsumexp(dist.log_prob);
  for (double& lp : dist.log_prob) lp -= dist.log_partition;
  return dist;
}

double toggle_delta(const TrainedModel& model, std::uint64_t mask, int site) {
  const bool present = (mask >> site) & 1u;
  switch (model.config.family) {
    case Family::BPP: {
      const double lp = std::log(model.phi_values(site));
      return present ? -lp : lp;
    }
    case Family::MPP: {
      double delta = std::log(model.phi_values(site));
      std::uint64_t rest = mask & ~(std::uint64_t{1} << site);
      for (int j = 0; rest != 0; ++j, rest >>= 1) {
        if (rest & 1u) delta += model.log_psi(site, j);
      }
      return present ? -delta : delta;
    }
    case Family::DPP: {
      const std::uint64_t toggled = mask ^ (std::uint64_t{1} << site);
      return subset_log_unnormalized(model, toggled) - subset_log_unnormalized(model, mask);
    }
  }
  throw ConfigError("unknown model family");
}

void GibbsConfig::validate() const {
  if (burn_in < 0 || total_steps <= 0 || thinning <= 0) {
    throw ConfigError("Gibbs schedule fields must be positive");
  }
}

GibbsConfig GibbsConfig::standard(int universe_size, long long kept_samples,
                                  std::uint64_t seed) {
  if (universe_size <= 0 || kept_samples <= 0) {
    throw ConfigError("Gibbs schedule fields must be positive");
  }
  GibbsConfig config;
  config.burn_in = 50LL * universe_size;
  config.thinning = universe_size;
  config.total_steps = kept_samples * universe_size;
  config.seed = seed;
  return config;
}

std::uint64_t gibbs_step(const TrainedModel& model, std::uint64_t state, int site, Rng& rng) {
  // acceptance = p(V') / (p(V) + p(V')) = sigmoid(delta); normalizers cancel
  const double delta = toggle_delta(model, state, site);
  const std::uint64_t toggled = state ^ (std::uint64_t{1} << site);
  if (std::isnan(delta)) {
    throw NumericalError("both states in a replacement decision have probability 0");
  }
  double accept;
  if (delta >= 0.0) {
    accept = 1.0 / (1.0 + std::exp(-delta));  // includes +inf -> 1
  } else {
    const double e = std::exp(delta);  // includes -inf -> 0
    accept = e / (1.0 + e);
  }
  return rng.uniform() < accept ? toggled : state;
}

std::vector<std::uint64_t> gibbs_chain(const TrainedModel& model, std::uint64_t init,
                                       const GibbsConfig& config) {
  config.validate();
  const int n = model.universe_size();
  if (n > 64) throw DataError("Gibbs chains support at most 64 vowels");
  if (subset_log_unnormalized(model, init) == kNegInf) {
    throw NumericalError("Gibbs initial state has probability 0");
  }
  Rng rng(config.seed);

  std::uint64_t state = init;
  for (long long t = 0; t < config.burn_in; ++t) {
    state = gibbs_step(model, state, static_cast<int>(rng.uniform_index(n)), rng);
  }
  std::vector<std::uint64_t> samples;
  samples.reserve(static_cast<std::size_t>(config.total_steps / config.thinning));
  for (long long t = 1; t <= config.total_steps; ++t) {
    state = gibbs_step(model, state, static_cast<int>(rng.uniform_index(n)), rng);
    if (t % config.thinning == 0) samples.push_back(state);
  }
  return samples;
}

std::uint64_t sample_bpp(const TrainedModel& bpp, Rng& rng) {
  std::uint64_t mask = 0;
  for (int i = 0; i < bpp.universe_size(); ++i) {
    const double p = bpp.phi_values(i) / (1.0 + bpp.phi_values(i));
    if (rng.uniform() < p) mask |= (std::uint64_t{1} << i);
  }
  return mask;
}

LogPartitionEstimate estimate_log_partition(const TrainedModel& mpp,
                                            const TrainedModel& proposal_bpp,
                                            long long n_samples, std::uint64_t seed) {
  if (n_samples <= 0) throw ConfigError("partition estimation needs at least one sample");
  if (mpp.config.family != Family::MPP) throw ConfigError("partition target must be an MPP");
  if (proposal_bpp.config.family != Family::BPP) {
    throw ConfigError("partition proposal must be a BPP");
  }
  if (mpp.universe_size() != proposal_bpp.universe_size()) {
    throw ConfigError("proposal universe disagrees with the model");
  }
  if (mpp.universe_size() > 64) throw DataError("sampling supports at most 64 vowels");
  for (int i = 0; i < mpp.universe_size(); ++i) {
    if (mpp.phi_values(i) > 0.0 && !(proposal_bpp.phi_values(i) > 0.0)) {
      throw DataError("proposal puts zero mass on vowel " + mpp.table.symbols[i] +
                      " which the model can include");
    }
  }

  Rng rng(seed);
  LogPartitionEstimate est;
  est.proposal_log_partition = proposal_bpp.log_normalizer;
  est.log_weights.reserve(static_cast<std::size_t>(n_samples));
  for (long long s = 0; s < n_samples; ++s) {
    const std::uint64_t mask = sample_bpp(proposal_bpp, rng);
    const std::vector<int> subset = mask_to_subset(mask);
    est.log_weights.push_back(mpp_log_unnormalized(mpp, subset) -
                              bpp_log_unnormalized(proposal_bpp, subset));
  }
  est.log_partition = est.proposal_log_partition + logsumexp(est.log_weights) -
                      std::log(static_cast<double>(n_samples));
  return est;
}

std::string sample_dump_jsonl(const TrainedModel& model,
                              const std::vector<std::uint64_t>& samples) {
  std::string out;
  for (const std::uint64_t mask : samples) {
    nlohmann::json row = nlohmann::json::array();
    for (const int i : mask_to_subset(mask)) row.push_back(model.table.symbols[i]);
    out += row.dump();
    out += '\n';
  }
  return out;
}

namespace {

bool symbol_lex_less(const TrainedModel& model, const std::vector<int>& a,
                     const std::vector<int>& b) {
  std::vector<std::string> sa, sb;
  for (int i : a) sa.push_back(model.table.symbols[i]);
  for (int i : b) sb.push_back(model.table.symbols[i]);
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  return sa < sb;
}

}  // namespace

std::vector<int> map_inventory(const TrainedModel& model, int size,
                               long long enumeration_budget) {
  const int n = model.universe_size();
  if (size < 0 || size > n) throw DataError("inventory size out of range");

  double combos = 1.0;
  for (int i = 0; i < size; ++i) combos *= static_cast<double>(n - i) / (i + 1);
  if (combos > static_cast<double>(enumeration_budget)) {
    throw DataError("C(" + std::to_string(n) + ", " + std::to_string(size) +
                    ") exceeds the enumeration budget; try a smaller size");
  }

  std::vector<int> current(size);
  for (int i = 0; i < size; ++i) current[i] = i;
  std::vector<int> best;
  double best_score = kNegInf;

  while (true) {
    const double score = log_unnormalized(model, current);
    if (best.empty() || score > best_score ||
        (score == best_score && symbol_lex_less(model, current, best))) {
      best = current;
      best_score = score;
    }
    // next combination in lexicographic index order
    int pos = size - 1;
    while (pos >= 0 && current[pos] == n - size + pos) --pos;
    if (pos < 0) break;
    ++current[pos];
    for (int j = pos + 1; j < size; ++j) current[j] = current[j - 1] + 1;
  }
  return best;
}

}  // namespace vpp
