#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rlhflab/objectives.hpp"
#include "rlhflab/world.hpp"

namespace rlhflab {

/// Evaluation budget: n prompts, K rollouts per prompt, and the confidence
/// level delta at which the resulting estimates are judged. delta never
/// enters the sampling itself, only the bounds.
struct SampleBudget {
  std::size_t n = 1;
  std::size_t k = 1;
  double delta = 0.05;
};

void validate_budget(const SampleBudget& budget);

/// A drawn evaluation batch: n prompt indices and an n x K (row-major) table
/// of response indices, reproducible from (world, policy, budget, seed).
///
/// The master seed splits into one prompt stream and one rollout stream per
/// prompt slot, so changing K never perturbs the prompt draw and rollouts
/// j < K are shared between budgets that differ only in K. Passing the same
/// seed to draw_rollouts for two policies pairs their rollout randomness.
struct EvalSample {
  std::vector<std::uint32_t> prompts;
  std::vector<std::uint32_t> rollouts;
  std::size_t k = 0;
  std::uint64_t seed = 0;

  std::size_t n() const { return prompts.size(); }
  std::uint32_t rollout(std::size_t i, std::size_t j) const { return rollouts[i * k + j]; }
};

std::vector<std::uint32_t> draw_prompts(const TabularWorld& world, std::size_t n,
                                        std::uint64_t seed);

EvalSample draw_rollouts(const TabularWorld& world, const Policy& policy,
                         std::vector<std::uint32_t> prompts, std::size_t k,
                         std::uint64_t seed);

/// x_i ~ rho i.i.d., y_{i,j} ~ pi_theta(.|x_i) i.i.d. given x_i, by
/// inverse-CDF over the finite alphabet in ascending index order.
EvalSample draw_sample(const TabularWorld& world, const Policy& policy,
                       const SampleBudget& budget, std::uint64_t seed);

/// (1/nK) sum_{i,j} [r(x_i, y_ij) - beta * clip(ell(x_i, y_ij), tau)].
/// Every per-rollout term lies in [-beta*tau, 1 + beta*tau].
double empirical_objective(const TabularWorld& world, const Policy& policy,
                           const Matrix& reward, const ClipPenaltySpec& spec,
                           const EvalSample& sample);

/// Infinite-rollout analogue: (1/n) sum_i g(x_i) with
/// g(x) = E_{Y~pi_theta(.|x)}[r(x,Y) - beta * clip(ell(x,Y), tau)] enumerated
/// exactly per prompt. Equals the conditional expectation of
/// empirical_objective given the prompts.
double conditional_objective(const TabularWorld& world, const Policy& policy,
                             const Matrix& reward, const ClipPenaltySpec& spec,
                             std::span<const std::uint32_t> prompts);

/// (1/nK) sum_{i,j} clip(ell(x_i, y_ij), tau), the Monte Carlo clipped
/// log-ratio average; always in [-tau, tau].
double empirical_kappa(const TabularWorld& world, const Policy& policy, double tau,
                       const EvalSample& sample);

/// JSONL dump, one record per (i, j): prompt, response, reward, ell, ell_tau.
std::string sample_to_jsonl(const TabularWorld& world, const Policy& policy,
                            const Matrix& reward, const ClipPenaltySpec& spec,
                            const EvalSample& sample);

/// Reads back the |ell| magnitudes of a JSONL dump (field "ell").
std::vector<double> jsonl_log_ratio_magnitudes(const std::string& path);

}  // namespace rlhflab
