#include "rlhflab/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "rlhflab/error.hpp"
#include "rlhflab/kernels.hpp"

namespace rlhflab {

namespace {

[[noreturn]] void continuity_violation(std::size_t x, std::size_t y) {
  throw Error("absolute continuity violated at (" + std::to_string(x) + "," +
              std::to_string(y) + ")");
}

void check_spec(const ClipPenaltySpec& spec) {
  if (!(spec.beta >= 0.0)) throw Error("invalid penalty strength");
  if (!(spec.tau >= 0.0)) throw Error("invalid threshold");
}

// Log-ratio row for prompt x, validated at the point of use (the softmax
// policy has full support, so a zero reference entry violates Assumption 1).
void log_ratio_row(const Policy& policy, const Matrix& ref, std::size_t x,
                   std::span<double> out) {
  const auto probs = policy.probs.row(x);
  for (std::size_t y = 0; y < probs.size(); ++y) {
    if (!(ref(x, y) > 0.0)) continuity_violation(x, y);
    out[y] = std::log(probs[y]) - std::log(ref(x, y));
  }
}

}  // namespace

double log_ratio(const Policy& policy, const Matrix& ref, std::size_t x, std::size_t y) {
  if (!(ref(x, y) > 0.0)) continuity_violation(x, y);
  return std::log(policy.probs(x, y)) - std::log(ref(x, y));
}

double clip_log_ratio(double ell, double tau) {
  if (!(tau >= 0.0)) throw Error("invalid threshold");
  return std::min(std::max(ell, -tau), tau);
}

Matrix log_ratio_table(const Policy& policy, const Matrix& ref) {
  if (!policy.probs.same_shape(ref)) throw Error("log ratio: shape mismatch");
  Matrix ell(ref.rows(), ref.cols());
  for (std::size_t x = 0; x < ref.rows(); ++x) log_ratio_row(policy, ref, x, ell.row(x));
  return ell;
}

ObjectiveValue population_objective(const TabularWorld& world, const Policy& policy,
                                    const Matrix& reward, const ClipPenaltySpec& spec) {
  check_spec(spec);
  validate_reward_table(reward, world);
  if (!policy.probs.same_shape(world.pi_ref)) throw Error("policy shape mismatch");
  std::vector<double> ell(world.n_responses);
  ObjectiveValue out;
  for (std::size_t x = 0; x < world.n_prompts; ++x) {
    if (world.rho[x] <= 0.0) continue;
    const auto probs = policy.probs.row(x);
    log_ratio_row(policy, world.pi_ref, x, ell);
    out.reward_term +=
        world.rho[x] * kern::dot(probs.data(), reward.row(x).data(), probs.size());
    out.penalty_term +=
        world.rho[x] * kern::clipped_dot(probs.data(), ell.data(), probs.size(), spec.tau);
  }
  out.value = out.reward_term - spec.beta * out.penalty_term;
  return out;
}

double exact_kl(const Policy& policy, const Matrix& ref, std::size_t x) {
  if (!policy.probs.same_shape(ref)) throw Error("exact_kl: shape mismatch");
  const auto probs = policy.probs.row(x);
  double sum = 0.0;
  for (std::size_t y = 0; y < probs.size(); ++y) {
    if (!(ref(x, y) > 0.0)) continuity_violation(x, y);
    sum += probs[y] * (std::log(probs[y]) - std::log(ref(x, y)));
  }
  // Gibbs: nonnegative in exact arithmetic; clamp accumulated rounding.
  return sum < 0.0 ? 0.0 : sum;
}

double truncation_mass(const TabularWorld& world, const Policy& policy, double tau) {
  if (!(tau >= 0.0)) throw Error("invalid threshold");
  if (!policy.probs.same_shape(world.pi_ref)) throw Error("policy shape mismatch");
  std::vector<double> ell(world.n_responses);
  double total = 0.0;
  for (std::size_t x = 0; x < world.n_prompts; ++x) {
    if (world.rho[x] <= 0.0) continue;
    const auto probs = policy.probs.row(x);
    log_ratio_row(policy, world.pi_ref, x, ell);
    total += world.rho[x] * kern::excess_dot(probs.data(), ell.data(), probs.size(), tau);
  }
  return total;
}

double clipping_error(const TabularWorld& world, const Policy& policy,
                      const ClipPenaltySpec& spec) {
  check_spec(spec);
  if (spec.beta == 0.0) return 0.0;
  return spec.beta * truncation_mass(world, policy, spec.tau);
}

double population_kappa(const TabularWorld& world, const Policy& policy, double tau) {
  if (!(tau >= 0.0)) throw Error("invalid threshold");
  if (!policy.probs.same_shape(world.pi_ref)) throw Error("policy shape mismatch");
  std::vector<double> ell(world.n_responses);
  double total = 0.0;
  for (std::size_t x = 0; x < world.n_prompts; ++x) {
    if (world.rho[x] <= 0.0) continue;
    const auto probs = policy.probs.row(x);
    log_ratio_row(policy, world.pi_ref, x, ell);
    total += world.rho[x] * kern::clipped_dot(probs.data(), ell.data(), probs.size(), tau);
  }
  return total;
}

double max_abs_log_ratio(const TabularWorld& world, const Policy& policy) {
  if (!policy.probs.same_shape(world.pi_ref)) throw Error("policy shape mismatch");
  std::vector<double> ell(world.n_responses);
  double peak = 0.0;
  for (std::size_t x = 0; x < world.n_prompts; ++x) {
    if (world.rho[x] <= 0.0) continue;
    log_ratio_row(policy, world.pi_ref, x, ell);
    peak = std::max(peak, kern::max_abs(ell.data(), ell.size()));
  }
  return peak;
}

}  // namespace rlhflab
