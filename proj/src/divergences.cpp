#include "rlhflab/divergences.hpp"

#include <cmath>
#include <string>

#include "rlhflab/error.hpp"
#include "rlhflab/kernels.hpp"
#include "rlhflab/linalg.hpp"

namespace rlhflab {

double chi_square(const JointDist& q, const JointDist& p) {
  if (!q.mass.same_shape(p.mass)) throw Error("chi_square: shape mismatch");
  for (std::size_t x = 0; x < p.mass.rows(); ++x)
    for (std::size_t y = 0; y < p.mass.cols(); ++y)
      if (q.mass(x, y) > 0.0 && !(p.mass(x, y) > 0.0))
        throw Error("coverage violated at (" + std::to_string(x) + "," + std::to_string(y) +
                    ")");
  return kern::chi_sq_sum(q.mass.data(), p.mass.data(), p.mass.size());
}

CoverageReport coverage(const TabularWorld& world, const Policy& policy) {
  if (!policy.probs.same_shape(world.pi_ref)) throw Error("policy shape mismatch");

  // rho << rho_label; the softmax policy has full support, so pi_theta <<
  // pi_ref needs every pi_ref entry positive on rho_label's support.
  for (std::size_t x = 0; x < world.n_prompts; ++x) {
    if (world.rho[x] > 0.0 && !(world.rho_label[x] > 0.0))
      throw Error("coverage violated at prompt " + std::to_string(x));
    if (world.rho_label[x] > 0.0) {
      for (std::size_t y = 0; y < world.n_responses; ++y)
        if (!(world.pi_ref(x, y) > 0.0))
          throw Error("coverage violated at (" + std::to_string(x) + "," + std::to_string(y) +
                      ")");
    }
  }

  CoverageReport report;
  report.chi_sq = chi_square(joint(world.rho, policy.probs), joint(world.rho_label, world.pi_ref));
  report.c_cov = std::sqrt(1.0 + report.chi_sq);

  report.c_prompt = std::sqrt(
      kern::ratio_sq_sum(world.rho.data(), world.rho_label.data(), world.n_prompts));

  // sup over the exact support set {x : rho_label(x) > 0}, strict positivity
  double pol_sq = 0.0;
  for (std::size_t x = 0; x < world.n_prompts; ++x) {
    if (!(world.rho_label[x] > 0.0)) continue;
    const auto theta = policy.probs.row(x);
    const auto ref = world.pi_ref.row(x);
    pol_sq = std::max(pol_sq, kern::ratio_sq_sum(theta.data(), ref.data(), theta.size()));
  }
  report.c_pol = std::sqrt(pol_sq);
  return report;
}

double reward_train_error(const TabularWorld& world, const RewardModel& model) {
  validate_reward_table(model.r_hat, world);
  double total = 0.0;
  for (std::size_t x = 0; x < world.n_prompts; ++x) {
    if (world.rho_label[x] <= 0.0) continue;
    total += world.rho_label[x] *
             kern::sq_err_dot(world.pi_ref.row(x).data(), model.r_hat.row(x).data(),
                              world.r_star.row(x).data(), world.n_responses);
  }
  return total;
}

double gaussian_kl(const Vector& mu_q, const Matrix& sigma_q, const Vector& mu_p,
                   const Matrix& sigma_p) {
  const std::size_t d = mu_q.size();
  if (mu_p.size() != d || sigma_q.rows() != d || sigma_q.cols() != d || sigma_p.rows() != d ||
      sigma_p.cols() != d)
    throw Error("gaussian_kl: shape mismatch");

  const auto chol_p = cholesky(sigma_p);
  if (!chol_p) throw Error("covariance not positive definite");
  const auto chol_q = cholesky(sigma_q);
  if (!chol_q) throw Error("covariance not positive definite");

  // tr(Sigma_P^-1 Sigma_Q): solve column by column
  double trace = 0.0;
  Vector column(d);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < d; ++i) column[i] = sigma_q(i, j);
    trace += cholesky_solve(*chol_p, column)[j];
  }

  Vector diff(d);
  for (std::size_t i = 0; i < d; ++i) diff[i] = mu_q[i] - mu_p[i];
  const Vector solved = cholesky_solve(*chol_p, diff);
  double quad = 0.0;
  for (std::size_t i = 0; i < d; ++i) quad += diff[i] * solved[i];

  const double logdet_p = cholesky_logdet(*chol_p);
  const double logdet_q = cholesky_logdet(*chol_q);
  return 0.5 * (trace + quad - static_cast<double>(d) + logdet_p - logdet_q);
}

}  // namespace rlhflab
