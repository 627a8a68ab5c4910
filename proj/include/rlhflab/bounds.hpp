#pragma once

#include <optional>

#include "rlhflab/divergences.hpp"
#include "rlhflab/matrix.hpp"
#include "rlhflab/objectives.hpp"
#include "rlhflab/sampling.hpp"
#include "rlhflab/world.hpp"

namespace rlhflab {

// Additive slack on bound comparisons: population terms are exact but
// accumulate rounding over |X|*|Y| summands.
inline constexpr double kBoundSlack = 1e-9;

/// Evaluation of an assembled high-probability bound against the realised
/// deviation. total_bound = sampling + shift + clip, and held means
/// actual_gap <= total_bound + slack. actual_gap is empty when no sample was
/// supplied (the structural terms alone are deterministic bounds).
struct BoundReport {
  std::optional<double> actual_gap;
  double sampling_term = 0.0;
  double shift_term = 0.0;
  double clip_term = 0.0;
  double total_bound = 0.0;
  bool held = true;
};

/// Range of one per-rollout term, 1 + 2 * beta * tau. beta = 0 gives 1 for
/// any tau; beta > 0 with unclipped tau has unbounded range and throws
/// Error("bound requires finite clipping threshold").
double range_factor(const ClipPenaltySpec& spec);

/// (1 + 2 beta tau) * sqrt(log(2/delta) / (2 n K)): rollout sampling error,
/// conditional on the prompts.
double rollout_bound(const SampleBudget& budget, const ClipPenaltySpec& spec);

/// (1 + 2 beta tau) * sqrt(log(2/delta) / (2 n)): prompt sampling error.
double prompt_bound(const SampleBudget& budget, const ClipPenaltySpec& spec);

/// (1 + 2 beta tau) * (sqrt(log(4/delta)/(2n)) + sqrt(log(4/delta)/(2nK))):
/// the two-stage sampling error bound.
double sampling_bound(const SampleBudget& budget, const ClipPenaltySpec& spec);

/// 2 tau * (sqrt(log(4/delta)/(2n)) + sqrt(log(4/delta)/(2nK))): Monte Carlo
/// deviation of the clipped log-ratio average.
double kappa_bound(const SampleBudget& budget, double tau);

/// c_cov * sqrt(l2_train): the reward shift error bound.
double shift_bound(const CoverageReport& cov, double l2_train);

/// Assembles the fixed-policy bound: sampling + shift + clip. When a sample
/// is supplied, actual_gap = |empirical objective under r_hat - J*| and held
/// reports whether the bound covered it.
BoundReport fixed_policy_bound(const TabularWorld& world, const Policy& policy,
                               const RewardModel& model, const ClipPenaltySpec& spec,
                               const SampleBudget& budget,
                               const EvalSample* sample = nullptr);

/// One JSON object with one field per term (actual_gap null when unset).
std::string bound_report_json(const BoundReport& report);

/// Posterior over M pre-registered candidates judged against the uniform
/// prior.
struct FiniteClassSpec {
  std::size_t m_candidates = 2;
  Vector posterior;
};

/// KL(Q || P) = sum_m q_m log(q_m M) with 0 log 0 = 0; lies in [0, log M].
double finite_class_kl(const FiniteClassSpec& spec);

/// PAC-Bayes sampling bound plus posterior-averaged structural terms:
/// (1+2 beta tau)(sqrt((KL+log(8/delta))/(2n)) + sqrt((KL+log(8/delta))/(2nK)))
/// + avg_shift + avg_clip.
double pacbayes_bound(double kl_qp, const SampleBudget& budget, const ClipPenaltySpec& spec,
                      double avg_shift, double avg_clip);

/// Late-stage SGD posterior description: stationary law N(theta_hat, Sigma)
/// with Sigma solving H Sigma + Sigma H = epsilon Sigma_g, judged against
/// the Gaussian prior N(theta_0, Lambda). H and Sigma_g must commute and
/// H's spectrum must lie in [m_lo, m_hi].
struct OuSpec {
  Vector theta_hat;
  Vector theta_0;
  Matrix lambda;
  Matrix hessian;
  Matrix sigma_g;
  double epsilon = 0.0;
  double m_lo = 0.0;
  double m_hi = 0.0;
  std::size_t dim = 0;
};

void validate_ou_spec(const OuSpec& spec);

/// Solves the Lyapunov equation by simultaneous diagonalisation in H's
/// eigenbasis: Sigma_ij' = epsilon * Sigma_g,ij' / (h_i + h_j).
Matrix ou_stationary_cov(const OuSpec& spec);

/// The closed-form upper bound on KL(N(theta_hat, Sigma) || N(theta_0,
/// Lambda)); dominates the exact Gaussian KL and matches it when m_lo ==
/// m_hi.
double ou_kl_bound(const OuSpec& spec);

}  // namespace rlhflab
