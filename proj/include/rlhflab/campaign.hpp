#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rlhflab/bounds.hpp"
#include "rlhflab/calibration.hpp"
#include "rlhflab/sampling.hpp"
#include "rlhflab/world.hpp"

namespace rlhflab {

inline constexpr const char* kArtifactVersion = "0.1.0";

/// Verification targets: each names one high-probability bound or identity
/// family exercised per trial.
enum class Target {
  kLemma2,          // rollout sampling error bound
  kLemma3,          // prompt sampling error bound
  kLemma4,          // two-stage sampling error bound
  kEq12,            // clipped log-ratio Monte Carlo bound
  kTheorem1,        // fixed-policy assembled bound
  kTheorem2Finite,  // PAC-Bayes bound, adversarial finite-class posterior
  kOu,              // stationary-covariance and Gaussian-KL chain
  kCalibration,     // quantile threshold optimality
};

const char* target_name(Target target);
std::optional<Target> parse_target(const std::string& name);

/// One batch verification campaign: per trial, generate a world and policy,
/// enumerate the population truths, draw a sample, evaluate each target and
/// tally failures.
struct CampaignConfig {
  std::size_t n_prompts = 8;
  std::size_t n_responses = 16;
  WorldGen world_gen{DistKind::kDirichlet, 0.5, RewardKind::kUniform};
  double logit_scale = 2.0;
  double reward_noise = 0.1;
  std::size_t trials = 500;
  SampleBudget budget{50, 4, 0.1};
  ClipPenaltySpec spec{0.2, 2.0};
  std::vector<Target> targets;
  std::uint64_t master_seed = 0;
  std::size_t finite_class_size = 16;
  std::size_t ou_max_dim = 8;
};

CampaignConfig default_campaign_config();
void validate_campaign_config(const CampaignConfig& config);

/// Loads a campaign config file ("key = value" lines over the defaults).
CampaignConfig campaign_config_from_file(const std::string& path);

/// Canonical serialisation of the semantic fields (sorted keys, normalised
/// numbers, seed excluded); its FNV-1a hash names the report files.
std::string campaign_config_canonical(const CampaignConfig& config);
std::string campaign_config_hash(const CampaignConfig& config);

struct FailedTrial {
  std::size_t trial = 0;
  std::uint64_t seed = 0;
};

struct TargetTally {
  Target target = Target::kLemma4;
  std::size_t trials = 0;
  std::size_t failures = 0;
  double delta = 0.0;
  double slack_threshold = 0.0;  // delta + 3 sqrt(delta (1-delta) / trials)
  bool pass = false;
  std::vector<FailedTrial> failed_trials;
  double mean_gap = 0.0;
  double max_gap = 0.0;
  double mean_bound = 0.0;
  double min_bound = 0.0;
};

struct CampaignResult {
  std::vector<TargetTally> tallies;
  std::string config_hash;
  std::uint64_t master_seed = 0;
  std::string artifact_version;
  bool all_pass = false;
};

/// Deterministic given the master seed; any per-trial error aborts with the
/// trial index and seed for replay.
CampaignResult run_campaign(const CampaignConfig& config);

/// CSV rows: target, trials, failures, delta, slack_threshold, pass.
std::string campaign_csv(const CampaignResult& result);
/// One JSON document per line (append-friendly), full per-term detail.
std::string campaign_json(const CampaignResult& result);

/// Appends the CSV and JSON reports under out_dir, file names derived from
/// the config hash; returns the two paths. Never truncates existing files.
std::pair<std::string, std::string> write_campaign_outputs(const CampaignResult& result,
                                                           const std::string& out_dir);

/// Random OU instance with commuting (H, Sigma_g) built from a shared
/// eigenbasis; isotropic forces H = m I (the m_lo = m_hi equality case).
OuSpec random_commuting_ou_spec(std::uint64_t seed, std::size_t dim, bool isotropic = false);

/// Policy with logits ~ scale * N(0, 1), the campaign's policy generator.
Policy random_policy(std::size_t n_prompts, std::size_t n_responses, double scale,
                     std::uint64_t seed);

}  // namespace rlhflab
