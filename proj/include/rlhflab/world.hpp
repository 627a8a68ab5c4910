#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rlhflab/matrix.hpp"

namespace rlhflab {

// Normalisation tolerance for constructed distributions. Downstream identity
// checks use 1e-9 relative instead, so construction error stays separated
// from accumulation error.
inline constexpr double kDistTol = 1e-12;

/// A finite RLHF world: prompt space of size n_prompts, response space of
/// size n_responses, evaluation prompt distribution rho, labelling prompt
/// distribution rho_label, reference policy pi_ref (row-stochastic), and the
/// oracle reward r_star with entries in [0, 1]. Immutable after
/// construction; every population quantity downstream is an exact
/// enumeration over this object.
struct TabularWorld {
  std::size_t n_prompts = 0;
  std::size_t n_responses = 0;
  Vector rho;
  Vector rho_label;
  Matrix pi_ref;
  Matrix r_star;
};

/// Softmax policy over the response alphabet, one row of logits per prompt.
/// probs rows are log-sum-exp-stabilised softmax of the logits, so every
/// entry is strictly positive and log-probabilities are exact.
struct Policy {
  Matrix logits;
  Matrix probs;
};

/// Proxy reward table with entries in [0, 1]. The pointwise error against a
/// world's r_star is computed on demand.
struct RewardModel {
  Matrix r_hat;
};

/// Joint distribution over (prompt, response) pairs, e.g. the
/// policy-induced distribution or the reward-model training distribution.
struct JointDist {
  Matrix mass;
};

enum class DistKind { kUniform, kDirichlet };
enum class RewardKind { kUniform };

/// Generator recipe for random worlds: how the prompt distributions and
/// reference rows are drawn, and how rewards are drawn. Text forms accepted
/// by parse_world_gen: "uniform-all", "dirichlet(0.5)", optionally combined
/// with ", uniform-reward".
struct WorldGen {
  DistKind dist_kind = DistKind::kUniform;
  double alpha = 1.0;
  RewardKind reward_kind = RewardKind::kUniform;
};

WorldGen parse_world_gen(const std::string& text);
std::string world_gen_to_string(const WorldGen& gen);

/// Builds a valid world; pure function of (gen, seed).
TabularWorld build_world(std::size_t n_prompts, std::size_t n_responses, const WorldGen& gen,
                         std::uint64_t seed);

/// Throws Error("invalid world: ...") naming the offending field.
void validate_world(const TabularWorld& world);
void validate_reward_table(const Matrix& table, const TabularWorld& world);

/// Stabilised softmax rows; throws Error("invalid logits") on non-finite
/// input. Adding a per-row constant leaves probs unchanged within 1e-12.
Policy policy_from_logits(Matrix logits);

/// Per-prompt convex combination of component policies,
/// ref(y|x) = sum_m weights[m] * policies[m](y|x).
Matrix mixture_ref(std::span<const Policy> policies, std::span<const double> weights);

/// mass[x][y] = prompt_dist[x] * response_rows[x][y].
JointDist joint(const Vector& prompt_dist, const Matrix& response_rows);

// World config files: line-oriented "key = value" text, either generator
// parameters (n_prompts, n_responses, generator, reward, seed) or explicit
// tables (rho, rho_label, pi_ref[i], r_star[i]). Errors carry file:line.
TabularWorld load_world_file(const std::string& path);
TabularWorld world_from_config_text(const std::string& text, const std::string& name);
std::string world_to_config_text(const TabularWorld& world);

}  // namespace rlhflab
