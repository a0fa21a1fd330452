#pragma once

#include <cstdint>
#include <vector>

#include "vpp/pointprocess.hpp"
#include "vpp/rng.hpp"

namespace vpp {

// Exhaustive normalized distribution over all 2^N subsets of a small
// universe. The test oracle for everything approximate.
struct ExactDistribution {
  int n = 0;
  std::vector<double> log_prob;  // indexed by subset bitmask
  double log_partition = 0.0;

  static constexpr int kMaxUniverse = 20;
  double prob(std::uint32_t mask) const;
};

ExactDistribution enumerate_exact(const TrainedModel& model,
                                  int max_universe = ExactDistribution::kMaxUniverse);

std::vector<int> mask_to_subset(std::uint64_t mask);
std::uint64_t subset_to_mask(const std::vector<int>& subset);

double subset_log_unnormalized(const TrainedModel& model, std::uint64_t mask);

// log score change from toggling `site` in `mask`; O(|V|) for BPP/MPP.
double toggle_delta(const TrainedModel& model, std::uint64_t mask, int site);

struct GibbsConfig {
  long long burn_in = 0;      // discarded steps before sampling starts
  long long total_steps = 0;  // sampled phase length
  long long thinning = 1;     // emit every thinning-th state
  std::uint64_t seed = 1;

  void validate() const;

  // default schedule: burn-in 50 N, thinning N, kept_samples states emitted
  static GibbsConfig standard(int universe_size, long long kept_samples,
                              std::uint64_t seed);
};

// One replacement decision: V' = V with v_site toggled, accepted with
// probability p(V') / (p(V) + p(V')). Both scores -inf is an error.
std::uint64_t gibbs_step(const TrainedModel& model, std::uint64_t state, int site, Rng& rng);

// Uniformly random site per step; emits floor(total_steps / thinning) states.
std::vector<std::uint64_t> gibbs_chain(const TrainedModel& model, std::uint64_t init,
                                       const GibbsConfig& config);

// One BPP draw: independent inclusion with probability phi_i / (1 + phi_i).
std::uint64_t sample_bpp(const TrainedModel& bpp, Rng& rng);

struct LogPartitionEstimate {
  double log_partition = 0.0;           // log Z_hat for the MPP
  double proposal_log_partition = 0.0;  // exact log Z of the proposal BPP
  std::vector<double> log_weights;      // per-sample importance log-weights
};

// log Z_hat = log Z_BPP + logmeanexp_s [ s_mpp(V_s) - s_bpp(V_s) ] over
// n_samples draws V_s from the proposal. Deterministic given seed. The mean
// weight estimates Z_MPP / Z_BPP without bias; its log is reported as-is
// (the log of the mean is biased low by Jensen, vanishing in n_samples).
LogPartitionEstimate estimate_log_partition(const TrainedModel& mpp,
                                            const TrainedModel& proposal_bpp,
                                            long long n_samples, std::uint64_t seed);

// Highest-scoring subset of exactly `size` vowels by exhaustive scan; ties
// broken by lexicographic symbol order. C(N, size) above the budget is an
// error suggesting a smaller size.
std::vector<int> map_inventory(const TrainedModel& model, int size,
                               long long enumeration_budget = 10000000);

// Debug dump: one JSON array of symbol strings per sampled subset.
std::string sample_dump_jsonl(const TrainedModel& model,
                              const std::vector<std::uint64_t>& samples);

double logsumexp(const std::vector<double>& xs);

}  // namespace vpp
