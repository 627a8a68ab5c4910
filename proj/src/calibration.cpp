#include "rlhflab/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "rlhflab/error.hpp"
#include "rlhflab/kernels.hpp"

namespace rlhflab {

void validate_cost_model(const CostModel& cost) {
  if (!(cost.budget > 0.0 && cost.c_prefill > 0.0 && cost.c_decode > 0.0))
    throw Error("invalid cost model: all entries must be strictly positive");
}

DiscreteLaw abs_log_ratio_law(const TabularWorld& world, const Policy& policy) {
  const Matrix ell = log_ratio_table(policy, world.pi_ref);
  std::map<double, double> atoms;
  for (std::size_t x = 0; x < world.n_prompts; ++x) {
    if (world.rho[x] <= 0.0) continue;
    for (std::size_t y = 0; y < world.n_responses; ++y) {
      const double mass = world.rho[x] * policy.probs(x, y);
      if (mass > 0.0) atoms[std::fabs(ell(x, y))] += mass;
    }
  }
  DiscreteLaw law;
  law.values.reserve(atoms.size());
  law.masses.reserve(atoms.size());
  for (const auto& [value, mass] : atoms) {
    law.values.push_back(value);
    law.masses.push_back(mass);
  }
  return law;
}

double law_truncation(const DiscreteLaw& law, double tau) {
  double total = 0.0;
  for (std::size_t i = 0; i < law.values.size(); ++i)
    total += law.masses[i] * std::max(law.values[i] - tau, 0.0);
  return total;
}

namespace {

// Tail probabilities as (total - forward prefix), the same accumulation the
// quantile selection walks. Forward sums of nonnegative masses are monotone
// in floating point, so the two-sided condition at the selected threshold
// holds exactly, not merely up to rounding.
double law_tail_from_prefix(const DiscreteLaw& law, double t, bool strict) {
  double prefix = 0.0;
  double running = 0.0;
  for (std::size_t i = 0; i < law.values.size(); ++i) {
    running += law.masses[i];
    const bool below = strict ? law.values[i] <= t : law.values[i] < t;
    if (below) prefix = running;
  }
  return running - prefix;
}

}  // namespace

double law_tail_gt(const DiscreteLaw& law, double t) {
  return law_tail_from_prefix(law, t, /*strict=*/true);
}

double law_tail_ge(const DiscreteLaw& law, double t) {
  return law_tail_from_prefix(law, t, /*strict=*/false);
}

double alpha(const SampleBudget& budget) {
  validate_budget(budget);
  const double log_term = std::log(4.0 / budget.delta);
  const double n = static_cast<double>(budget.n);
  const double nk = n * static_cast<double>(budget.k);
  return std::sqrt(log_term / (2.0 * n)) + std::sqrt(log_term / (2.0 * nk));
}

std::vector<std::pair<double, double>> b_curve(const TabularWorld& world, const Policy& policy,
                                               double beta, const SampleBudget& budget,
                                               const std::vector<double>& tau_grid) {
  if (!(beta >= 0.0)) throw Error("invalid penalty strength");
  if (tau_grid.empty()) throw Error("empty tau grid");
  if (!std::is_sorted(tau_grid.begin(), tau_grid.end())) throw Error("unsorted tau grid");
  if (!(tau_grid.front() >= 0.0)) throw Error("invalid threshold");
  const double a = alpha(budget);
  std::vector<std::pair<double, double>> curve;
  curve.reserve(tau_grid.size());
  for (double tau : tau_grid) {
    const double value = (1.0 + 2.0 * beta * tau) * a + beta * truncation_mass(world, policy, tau);
    curve.emplace_back(tau, value);
  }
  return curve;
}

double optimal_tau_of_law(const DiscreteLaw& law, double two_alpha) {
  if (!(two_alpha >= 0.0)) throw Error("invalid quantile level");
  if (two_alpha >= 1.0) return 0.0;
  if (law.values.empty()) throw Error("empty law");
  // smallest value whose strict upper tail drops to at most two_alpha; the
  // tail is evaluated exactly as in law_tail_gt, so the selected threshold
  // satisfies the two-sided condition without any rounding window
  double total = 0.0;
  for (double mass : law.masses) total += mass;
  double prefix = 0.0;
  for (std::size_t i = 0; i < law.values.size(); ++i) {
    prefix += law.masses[i];
    if (total - prefix <= two_alpha) return law.values[i];
  }
  return law.values.back();
}

double optimal_tau(const TabularWorld& world, const Policy& policy,
                   const SampleBudget& budget) {
  return optimal_tau_of_law(abs_log_ratio_law(world, policy), 2.0 * alpha(budget));
}

double empirical_tau(std::vector<double> log_ratio_magnitudes, double alpha_val) {
  if (log_ratio_magnitudes.empty()) throw Error("empty sample for threshold calibration");
  if (!(alpha_val >= 0.0)) throw Error("invalid quantile level");
  if (2.0 * alpha_val >= 1.0) return 0.0;
  std::sort(log_ratio_magnitudes.begin(), log_ratio_magnitudes.end());
  const double n = static_cast<double>(log_ratio_magnitudes.size());
  // smallest order statistic u_(k) with k/N >= 1 - 2 alpha
  const double target = (1.0 - 2.0 * alpha_val) * n;
  std::size_t k = static_cast<std::size_t>(std::ceil(target));
  if (k < 1) k = 1;
  if (k > log_ratio_magnitudes.size()) k = log_ratio_magnitudes.size();
  return log_ratio_magnitudes[k - 1];
}

namespace {

// nearest integer, half rounded down, clamped to >= 1
long round_half_down(double x) {
  const long rounded = static_cast<long>(std::ceil(x - 0.5));
  return rounded < 1 ? 1 : rounded;
}

long exhaust_budget(const CostModel& cost, long k) {
  const double per_prompt = cost.c_prefill + static_cast<double>(k) * cost.c_decode;
  return static_cast<long>(std::floor(cost.budget / per_prompt));
}

}  // namespace

BudgetChoice budget_uniform(const CostModel& cost) {
  validate_cost_model(cost);
  BudgetChoice choice;
  choice.k_star = 1.0;
  choice.k_rounded = 1;
  choice.n_star = static_cast<long>(std::floor(cost.budget / cost.c_decode));
  return choice;
}

BudgetChoice budget_prefill_decode(const CostModel& cost) {
  validate_cost_model(cost);
  BudgetChoice choice;
  choice.k_star = std::max(1.0, std::pow(cost.c_prefill / cost.c_decode, 2.0 / 3.0));
  choice.k_rounded = round_half_down(choice.k_star);
  choice.n_star = exhaust_budget(cost, choice.k_rounded);
  return choice;
}

VarianceDecomposition variance_decomposition(const TabularWorld& world, const Policy& policy,
                                             const Matrix& reward,
                                             const ClipPenaltySpec& spec) {
  if (!(spec.beta >= 0.0)) throw Error("invalid penalty strength");
  if (!spec.clipped()) throw Error("unclipped tau rejected: Z must be bounded");
  validate_reward_table(reward, world);
  const Matrix ell = log_ratio_table(policy, world.pi_ref);

  // Z = r - beta clip(ell); per prompt, E[Z|x] and Var(Z|x) by enumeration
  std::vector<double> z(world.n_responses);
  Vector mean_by_prompt(world.n_prompts, 0.0);
  double rollout_var = 0.0;
  double grand_mean = 0.0;
  for (std::size_t x = 0; x < world.n_prompts; ++x) {
    if (world.rho[x] <= 0.0) continue;
    const auto probs = policy.probs.row(x);
    for (std::size_t y = 0; y < world.n_responses; ++y)
      z[y] = reward(x, y) - spec.beta * clip_log_ratio(ell(x, y), spec.tau);
    const double mean = kern::dot(probs.data(), z.data(), z.size());
    mean_by_prompt[x] = mean;
    rollout_var += world.rho[x] * kern::sq_dev_dot(probs.data(), z.data(), mean, z.size());
    grand_mean += world.rho[x] * mean;
  }

  VarianceDecomposition out;
  out.sigma_rollout_sq = rollout_var;
  out.sigma_prompt_sq =
      kern::sq_dev_dot(world.rho.data(), mean_by_prompt.data(), grand_mean, world.n_prompts);
  return out;
}

BudgetChoice budget_variance(const CostModel& cost, const VarianceDecomposition& var) {
  validate_cost_model(cost);
  if (!(var.sigma_prompt_sq >= 0.0) || !(var.sigma_rollout_sq >= 0.0))
    throw Error("invalid variance decomposition");
  BudgetChoice choice;
  if (var.sigma_prompt_sq == 0.0) {
    // prompt variance zero: allocate all budget to rollouts (n = 1)
    choice.prompt_variance_zero = true;
    choice.n_star = 1;
    const double k = std::floor((cost.budget - cost.c_prefill) / cost.c_decode);
    choice.k_rounded = k < 1.0 ? 1 : static_cast<long>(k);
    choice.k_star = static_cast<double>(choice.k_rounded);
    return choice;
  }
  choice.k_star = std::max(
      1.0, std::sqrt(cost.c_prefill / cost.c_decode * var.sigma_rollout_sq / var.sigma_prompt_sq));
  choice.k_rounded = round_half_down(choice.k_star);
  choice.n_star = exhaust_budget(cost, choice.k_rounded);
  return choice;
}

}  // namespace rlhflab
