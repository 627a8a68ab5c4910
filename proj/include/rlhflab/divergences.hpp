#pragma once

#include "rlhflab/matrix.hpp"
#include "rlhflab/world.hpp"

namespace rlhflab {

/// Coverage coefficients for the shift from the reward-model training
/// distribution to the policy-induced distribution:
///   c_cov    = sqrt(1 + chi^2(D_theta || D_train))
///   c_prompt = sqrt(E_{rho_label}[(rho / rho_label)^2])
///   c_pol    = sup over supported prompts of
///              sqrt(E_{pi_ref}[(pi_theta / pi_ref)^2])
/// and c_cov <= c_prompt * c_pol (coverage factorisation).
struct CoverageReport {
  double chi_sq = 0.0;
  double c_cov = 1.0;
  double c_prompt = 1.0;
  double c_pol = 1.0;
};

/// chi^2(Q || P) = sum over P's support of (Q/P - 1)^2 * P. Q-mass on a
/// P-null atom is a coverage violation, not +infinity.
double chi_square(const JointDist& q, const JointDist& p);

CoverageReport coverage(const TabularWorld& world, const Policy& policy);

/// L2_train: E_{D_train}[(r_hat - r_star)^2], exact enumeration, in [0, 1].
double reward_train_error(const TabularWorld& world, const RewardModel& model);

/// KL(N(mu_q, sigma_q) || N(mu_p, sigma_p)) via Cholesky factorisations;
/// throws Error("covariance not positive definite") when either factorisation
/// fails.
double gaussian_kl(const Vector& mu_q, const Matrix& sigma_q, const Vector& mu_p,
                   const Matrix& sigma_p);

}  // namespace rlhflab
