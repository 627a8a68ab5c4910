#pragma once

#include <utility>
#include <vector>

#include "rlhflab/objectives.hpp"
#include "rlhflab/sampling.hpp"
#include "rlhflab/world.hpp"

namespace rlhflab {

/// Sampling cost model: total budget B, per-prompt prefill cost, per-rollout
/// decode cost, under the constraint B >= n c_prefill + n K c_decode.
struct CostModel {
  double budget = 1.0;
  double c_prefill = 1.0;
  double c_decode = 1.0;
};

void validate_cost_model(const CostModel& cost);

/// Two-stage split of the per-rollout contribution Z:
/// sigma_prompt_sq = Var(E[Z|X]), sigma_rollout_sq = E[Var(Z|X)]; the two add
/// up to Var(Z) (law of total variance).
struct VarianceDecomposition {
  double sigma_prompt_sq = 0.0;
  double sigma_rollout_sq = 0.0;
};

/// Atomic law of |ell| under D_theta: strictly increasing values with their
/// masses. Quantile and tail lookups share one prefix-sum pass so the
/// two-sided threshold condition holds exactly in floating point.
struct DiscreteLaw {
  std::vector<double> values;
  std::vector<double> masses;
};

DiscreteLaw abs_log_ratio_law(const TabularWorld& world, const Policy& policy);
double law_truncation(const DiscreteLaw& law, double tau);   // E[(V - tau)_+]
double law_tail_gt(const DiscreteLaw& law, double t);        // P(V > t)
double law_tail_ge(const DiscreteLaw& law, double t);        // P(V >= t)

/// alpha_{n,K,delta} = sqrt(log(4/delta)/(2n)) + sqrt(log(4/delta)/(2nK));
/// the sampling bound with the range factor stripped.
double alpha(const SampleBudget& budget);

/// The tau trade-off curve B_theta(tau) = (1 + 2 beta tau) alpha + beta
/// T_theta(tau), evaluated on an ascending grid.
std::vector<std::pair<double, double>> b_curve(const TabularWorld& world, const Policy& policy,
                                               double beta, const SampleBudget& budget,
                                               const std::vector<double>& tau_grid);

/// Smallest t with P(V <= t) >= 1 - two_alpha on the discrete law; 0 when
/// two_alpha >= 1. Satisfies P(V > t) <= two_alpha <= P(V >= t) exactly.
double optimal_tau_of_law(const DiscreteLaw& law, double two_alpha);

/// The lower (1 - 2 alpha)-quantile of |ell| under D_theta: the clipping
/// threshold at which the clipped tail mass matches the sampling error
/// level.
double optimal_tau(const TabularWorld& world, const Policy& policy,
                   const SampleBudget& budget);

/// Order-statistic calibration on a batch of log-ratio magnitudes: 0 when
/// 2 alpha >= 1, else the smallest u_(k) with k/N >= 1 - 2 alpha.
double empirical_tau(std::vector<double> log_ratio_magnitudes, double alpha_val);

/// Allocation result: the continuous minimiser, its integer rounding
/// (nearest, half-down, clamped to >= 1) and the prompt count exhausting the
/// budget. prompt_variance_zero flags the degenerate variance-aware regime
/// where all budget goes to rollouts of a single prompt.
struct BudgetChoice {
  double k_star = 1.0;
  long k_rounded = 1;
  long n_star = 0;
  bool prompt_variance_zero = false;
};

/// Uniform cost: every rollout costs c_decode, so K* = 1 and
/// n* = floor(B / c_decode).
BudgetChoice budget_uniform(const CostModel& cost);

/// Prefill/decode cost: K* = max(1, (c_prefill/c_decode)^(2/3)).
BudgetChoice budget_prefill_decode(const CostModel& cost);

/// Exact enumeration of the two-stage variance of Z = r - beta clip(ell).
VarianceDecomposition variance_decomposition(const TabularWorld& world, const Policy& policy,
                                             const Matrix& reward,
                                             const ClipPenaltySpec& spec);

/// Variance-aware refinement:
/// K* = max(1, sqrt((c_prefill/c_decode) * (sigma_rollout^2/sigma_prompt^2))).
BudgetChoice budget_variance(const CostModel& cost, const VarianceDecomposition& var);

}  // namespace rlhflab
