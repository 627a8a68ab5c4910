#include "rlhflab/bounds.hpp"

#include <cmath>

#include <json.hpp>

#include "rlhflab/error.hpp"
#include "rlhflab/format.hpp"
#include "rlhflab/linalg.hpp"

namespace rlhflab {

double range_factor(const ClipPenaltySpec& spec) {
  if (!(spec.beta >= 0.0)) throw Error("invalid penalty strength");
  if (spec.beta == 0.0) return 1.0;
  if (!spec.clipped()) throw Error("bound requires finite clipping threshold");
  if (!(spec.tau >= 0.0)) throw Error("invalid threshold");
  return 1.0 + 2.0 * spec.beta * spec.tau;
}

double rollout_bound(const SampleBudget& budget, const ClipPenaltySpec& spec) {
  validate_budget(budget);
  const double nk = static_cast<double>(budget.n) * static_cast<double>(budget.k);
  return range_factor(spec) * std::sqrt(std::log(2.0 / budget.delta) / (2.0 * nk));
}

double prompt_bound(const SampleBudget& budget, const ClipPenaltySpec& spec) {
  validate_budget(budget);
  return range_factor(spec) *
         std::sqrt(std::log(2.0 / budget.delta) / (2.0 * static_cast<double>(budget.n)));
}

namespace {

// sqrt(log(4/delta)/(2n)) + sqrt(log(4/delta)/(2nK)) with the log numerator
// generalised (PAC-Bayes adds KL(Q||P) and uses log(8/delta)).
double two_stage_root(double log_term, const SampleBudget& budget) {
  const double n = static_cast<double>(budget.n);
  const double nk = n * static_cast<double>(budget.k);
  return std::sqrt(log_term / (2.0 * n)) + std::sqrt(log_term / (2.0 * nk));
}

}  // namespace

double sampling_bound(const SampleBudget& budget, const ClipPenaltySpec& spec) {
  validate_budget(budget);
  return range_factor(spec) * two_stage_root(std::log(4.0 / budget.delta), budget);
}

double kappa_bound(const SampleBudget& budget, double tau) {
  validate_budget(budget);
  if (!(tau >= 0.0)) throw Error("invalid threshold");
  if (std::isinf(tau)) throw Error("bound requires finite clipping threshold");
  return 2.0 * tau * two_stage_root(std::log(4.0 / budget.delta), budget);
}

double shift_bound(const CoverageReport& cov, double l2_train) {
  if (!(l2_train >= 0.0)) throw Error("invalid training error");
  return cov.c_cov * std::sqrt(l2_train);
}

BoundReport fixed_policy_bound(const TabularWorld& world, const Policy& policy,
                               const RewardModel& model, const ClipPenaltySpec& spec,
                               const SampleBudget& budget, const EvalSample* sample) {
  BoundReport report;
  report.sampling_term = sampling_bound(budget, spec);
  report.shift_term = shift_bound(coverage(world, policy), reward_train_error(world, model));
  report.clip_term = clipping_error(world, policy, spec);
  report.total_bound = report.sampling_term + report.shift_term + report.clip_term;
  if (sample != nullptr) {
    const double empirical = empirical_objective(world, policy, model.r_hat, spec, *sample);
    const double target =
        population_objective(world, policy, world.r_star, {spec.beta, kUnclipped}).value;
    report.actual_gap = std::fabs(empirical - target);
    report.held = *report.actual_gap <= report.total_bound + kBoundSlack;
  }
  return report;
}

std::string bound_report_json(const BoundReport& report) {
  nlohmann::json doc;
  if (report.actual_gap) {
    doc["actual_gap"] = round12(*report.actual_gap);
  } else {
    doc["actual_gap"] = nullptr;
  }
  doc["sampling_term"] = round12(report.sampling_term);
  doc["shift_term"] = round12(report.shift_term);
  doc["clip_term"] = round12(report.clip_term);
  doc["total_bound"] = round12(report.total_bound);
  doc["held"] = report.held;
  return doc.dump();
}

double finite_class_kl(const FiniteClassSpec& spec) {
  if (spec.m_candidates < 2) throw Error("finite class needs M >= 2");
  if (spec.posterior.size() != spec.m_candidates)
    throw Error("posterior size does not match candidate count");
  double total = 0.0;
  for (double q : spec.posterior) {
    if (!(q >= 0.0)) throw Error("invalid posterior");
    total += q;
  }
  if (std::fabs(total - 1.0) > kDistTol) throw Error("invalid posterior");
  const double m = static_cast<double>(spec.m_candidates);
  double kl = 0.0;
  for (double q : spec.posterior)
    if (q > 0.0) kl += q * std::log(q * m);
  return kl < 0.0 ? 0.0 : kl;
}

double pacbayes_bound(double kl_qp, const SampleBudget& budget, const ClipPenaltySpec& spec,
                      double avg_shift, double avg_clip) {
  validate_budget(budget);
  if (!(kl_qp >= 0.0)) throw Error("invalid KL complexity");
  if (!(avg_shift >= 0.0) || !(avg_clip >= 0.0)) throw Error("invalid averaged terms");
  const double log_term = kl_qp + std::log(8.0 / budget.delta);
  return range_factor(spec) * two_stage_root(log_term, budget) + avg_shift + avg_clip;
}

void validate_ou_spec(const OuSpec& spec) {
  const std::size_t d = spec.dim;
  if (d == 0) throw Error("OU spec: dimension must be positive");
  if (spec.theta_hat.size() != d || spec.theta_0.size() != d || spec.lambda.rows() != d ||
      spec.lambda.cols() != d || spec.hessian.rows() != d || spec.hessian.cols() != d ||
      spec.sigma_g.rows() != d || spec.sigma_g.cols() != d)
    throw Error("OU spec: shape mismatch");
  if (!(spec.epsilon > 0.0)) throw Error("OU spec: step size must be positive");
  if (!(spec.m_lo > 0.0 && spec.m_hi >= spec.m_lo))
    throw Error("OU spec: need 0 < m_lo <= m_hi");

  // commutation: ||H Sigma_g - Sigma_g H||_max <= 1e-9 ||H|| ||Sigma_g||
  const Matrix hs = matmul(spec.hessian, spec.sigma_g);
  const Matrix sh = matmul(spec.sigma_g, spec.hessian);
  Matrix commutator(d, d);
  for (std::size_t i = 0; i < commutator.size(); ++i)
    commutator.data()[i] = hs.data()[i] - sh.data()[i];
  const double scale = max_abs_entry(spec.hessian) * max_abs_entry(spec.sigma_g);
  if (max_abs_entry(commutator) > 1e-9 * scale)
    throw Error("H and Sigma_g do not commute");

  const auto eig = jacobi_eigh(spec.hessian);
  if (eig.values.front() < spec.m_lo - 1e-12 || eig.values.back() > spec.m_hi + 1e-12)
    throw Error("OU spec: H spectrum outside [m_lo, m_hi]");
  if (!cholesky(spec.sigma_g)) throw Error("covariance not positive definite");
  if (!cholesky(spec.lambda)) throw Error("covariance not positive definite");
}

Matrix ou_stationary_cov(const OuSpec& spec) {
  validate_ou_spec(spec);
  const std::size_t d = spec.dim;
  const auto eig = jacobi_eigh(spec.hessian);
  // rotate Sigma_g into H's eigenbasis, divide by eigenvalue sums, rotate back
  const Matrix vt = transpose(eig.vectors);
  const Matrix rotated = matmul(vt, matmul(spec.sigma_g, eig.vectors));
  Matrix solved(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      solved(i, j) = spec.epsilon * rotated(i, j) / (eig.values[i] + eig.values[j]);
  Matrix sigma = matmul(eig.vectors, matmul(solved, vt));
  // symmetrise away rotation rounding
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) {
      const double avg = 0.5 * (sigma(i, j) + sigma(j, i));
      sigma(i, j) = avg;
      sigma(j, i) = avg;
    }
  return sigma;
}

double ou_kl_bound(const OuSpec& spec) {
  validate_ou_spec(spec);
  const std::size_t d = spec.dim;
  const auto chol_lambda = cholesky(spec.lambda);
  const auto chol_sigma_g = cholesky(spec.sigma_g);
  if (!chol_lambda || !chol_sigma_g) throw Error("covariance not positive definite");

  Vector diff(d);
  for (std::size_t i = 0; i < d; ++i) diff[i] = spec.theta_hat[i] - spec.theta_0[i];
  const Vector solved = cholesky_solve(*chol_lambda, diff);
  double quad = 0.0;
  for (std::size_t i = 0; i < d; ++i) quad += diff[i] * solved[i];

  double trace = 0.0;
  Vector column(d);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < d; ++i) column[i] = spec.sigma_g(i, j);
    trace += cholesky_solve(*chol_lambda, column)[j];
  }

  const double dd = static_cast<double>(d);
  return 0.5 * (quad + spec.epsilon / (2.0 * spec.m_lo) * trace - dd +
                cholesky_logdet(*chol_lambda) - cholesky_logdet(*chol_sigma_g) -
                dd * std::log(spec.epsilon / (2.0 * spec.m_hi)));
}

}  // namespace rlhflab
