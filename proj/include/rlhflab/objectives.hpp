#pragma once

#include <limits>
#include <span>

#include "rlhflab/matrix.hpp"
#include "rlhflab/world.hpp"

namespace rlhflab {

/// Regularisation strength beta and clipping threshold tau. tau = kUnclipped
/// (+infinity) is a first-class value: the clipped and unclipped objectives
/// share one code path, since clip(x, -inf, +inf) = x.
struct ClipPenaltySpec {
  double beta = 0.0;
  double tau = std::numeric_limits<double>::infinity();

  bool clipped() const { return tau != std::numeric_limits<double>::infinity(); }
};

inline constexpr double kUnclipped = std::numeric_limits<double>::infinity();

/// value = reward_term - beta * penalty_term, where reward_term is the
/// expected reward under the policy-induced distribution and penalty_term is
/// the expected (clipped) log ratio.
struct ObjectiveValue {
  double value = 0.0;
  double reward_term = 0.0;
  double penalty_term = 0.0;
};

/// log pi_theta(y|x) - log pi_ref(y|x). Throws on ref mass zero.
double log_ratio(const Policy& policy, const Matrix& ref, std::size_t x, std::size_t y);

/// clip(ell, -tau, tau); boundary values are untouched. tau < 0 throws
/// Error("invalid threshold").
double clip_log_ratio(double ell, double tau);

/// Full log-ratio table for a policy against a reference, validated for
/// absolute continuity everywhere (the softmax policy has full support, so
/// any zero reference entry is a violation).
Matrix log_ratio_table(const Policy& policy, const Matrix& ref);

/// Exact enumeration of E_{D_theta}[r - beta * clip(ell)] over the world,
/// where D_theta = rho x pi_theta. With tau unclipped and reward = r_star
/// this is the target objective J*.
ObjectiveValue population_objective(const TabularWorld& world, const Policy& policy,
                                    const Matrix& reward, const ClipPenaltySpec& spec);

/// KL(pi_theta(.|x) || pi_ref(.|x)) by enumeration; equals the conditional
/// expectation of the log ratio under the policy row.
double exact_kl(const Policy& policy, const Matrix& ref, std::size_t x);

/// T_theta(tau) = E_{D_theta}[(|ell| - tau)_+], the expected truncation
/// excess. Nonincreasing and 1-Lipschitz in tau; zero once tau clears the
/// largest |ell| on the support.
double truncation_mass(const TabularWorld& world, const Policy& policy, double tau);

/// beta * T_theta(tau): the KL clipping error term. Bounds
/// |J^{phi,tau} - J^phi| and is exact for symmetric clipping.
double clipping_error(const TabularWorld& world, const Policy& policy,
                      const ClipPenaltySpec& spec);

/// E_{D_theta}[clip(ell, tau)], the population clipped log-ratio average.
double population_kappa(const TabularWorld& world, const Policy& policy, double tau);

/// Largest |ell| over the support of D_theta.
double max_abs_log_ratio(const TabularWorld& world, const Policy& policy);

}  // namespace rlhflab
