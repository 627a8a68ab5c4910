#include "rlhflab/campaign.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "rlhflab/config.hpp"
#include "rlhflab/error.hpp"
#include "rlhflab/format.hpp"
#include "rlhflab/linalg.hpp"
#include "rlhflab/rng.hpp"

namespace rlhflab {

namespace {

// per-trial seed-stream tags
constexpr std::uint64_t kTagTrial = 0x20;
constexpr std::uint64_t kTagWorld = 0x21;
constexpr std::uint64_t kTagPolicy = 0x22;
constexpr std::uint64_t kTagReward = 0x23;
constexpr std::uint64_t kTagSample = 0x24;
constexpr std::uint64_t kTagCandidate = 0x25;
constexpr std::uint64_t kTagCandRollout = 0x26;
constexpr std::uint64_t kTagOu = 0x27;

constexpr Target kAllTargets[] = {
    Target::kLemma2,  Target::kLemma3,   Target::kLemma4,        Target::kEq12,
    Target::kTheorem1, Target::kTheorem2Finite, Target::kOu,     Target::kCalibration,
};

bool is_probabilistic(Target target) {
  return target != Target::kOu && target != Target::kCalibration;
}

struct TrialContext {
  TabularWorld world;
  Policy policy;
  RewardModel model;
  EvalSample sample;
};

double clamp01(double v) { return std::min(std::max(v, 0.0), 1.0); }

}  // namespace

const char* target_name(Target target) {
  switch (target) {
    case Target::kLemma2: return "lemma2";
    case Target::kLemma3: return "lemma3";
    case Target::kLemma4: return "lemma4";
    case Target::kEq12: return "eq12";
    case Target::kTheorem1: return "theorem1";
    case Target::kTheorem2Finite: return "theorem2-finite";
    case Target::kOu: return "ou";
    case Target::kCalibration: return "calibration";
  }
  return "?";
}

std::optional<Target> parse_target(const std::string& name) {
  for (Target t : kAllTargets)
    if (name == target_name(t)) return t;
  return std::nullopt;
}

CampaignConfig default_campaign_config() {
  CampaignConfig config;
  config.targets.assign(std::begin(kAllTargets), std::end(kAllTargets));
  return config;
}

void validate_campaign_config(const CampaignConfig& config) {
  if (config.targets.empty()) throw Error("campaign config: no targets");
  validate_budget(config.budget);
  if (!(config.spec.beta >= 0.0)) throw Error("campaign config: invalid beta");
  if (!(config.spec.tau >= 0.0)) throw Error("campaign config: invalid tau");
  if (config.n_prompts < 2 || config.n_responses < 2)
    throw Error("campaign config: world too small");
  if (config.finite_class_size < 2) throw Error("campaign config: finite class needs M >= 2");
  if (config.ou_max_dim < 1 || config.ou_max_dim > 32)
    throw Error("campaign config: ou_max_dim out of range");
  for (Target t : config.targets) {
    if (is_probabilistic(t) && config.trials < 100)
      throw Error(std::string("campaign config: probabilistic target '") + target_name(t) +
                  "' needs at least 100 trials");
  }
  if (config.trials < 1) throw Error("campaign config: trials must be >= 1");
}

CampaignConfig campaign_config_from_file(const std::string& path) {
  CampaignConfig config = default_campaign_config();
  for (const auto& entry : parse_config_file(path)) {
    if (entry.key == "n_prompts") {
      config.n_prompts = static_cast<std::size_t>(config_long(entry, path));
    } else if (entry.key == "n_responses") {
      config.n_responses = static_cast<std::size_t>(config_long(entry, path));
    } else if (entry.key == "generator") {
      config.world_gen = parse_world_gen(entry.value);
    } else if (entry.key == "logit_scale") {
      config.logit_scale = config_double(entry, path);
    } else if (entry.key == "reward_noise") {
      config.reward_noise = config_double(entry, path);
    } else if (entry.key == "trials") {
      config.trials = static_cast<std::size_t>(config_long(entry, path));
    } else if (entry.key == "n") {
      config.budget.n = static_cast<std::size_t>(config_long(entry, path));
    } else if (entry.key == "k") {
      config.budget.k = static_cast<std::size_t>(config_long(entry, path));
    } else if (entry.key == "delta") {
      config.budget.delta = config_double(entry, path);
    } else if (entry.key == "beta") {
      config.spec.beta = config_double(entry, path);
    } else if (entry.key == "tau") {
      const std::string& v = entry.value;
      config.spec.tau = (v == "unclipped" || v == "inf") ? kUnclipped
                                                         : config_double(entry, path);
    } else if (entry.key == "seed") {
      config.master_seed = static_cast<std::uint64_t>(config_long(entry, path));
    } else if (entry.key == "finite_class_size") {
      config.finite_class_size = static_cast<std::size_t>(config_long(entry, path));
    } else if (entry.key == "ou_max_dim") {
      config.ou_max_dim = static_cast<std::size_t>(config_long(entry, path));
    } else if (entry.key == "targets") {
      config.targets.clear();
      std::string list = entry.value;
      std::replace(list.begin(), list.end(), ',', ' ');
      std::istringstream in(list);
      std::string token;
      while (in >> token) {
        const auto target = parse_target(token);
        if (!target)
          throw Error(path + ":" + std::to_string(entry.line) + ": unknown target '" + token +
                      "'");
        config.targets.push_back(*target);
      }
    } else {
      throw Error(path + ":" + std::to_string(entry.line) + ": unknown key '" + entry.key +
                  "'");
    }
  }
  validate_campaign_config(config);
  return config;
}

std::string campaign_config_canonical(const CampaignConfig& config) {
  std::map<std::string, std::string> fields;
  fields["n_prompts"] = std::to_string(config.n_prompts);
  fields["n_responses"] = std::to_string(config.n_responses);
  fields["generator"] = world_gen_to_string(config.world_gen);
  char buf[40];
  auto num = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  fields["logit_scale"] = num(config.logit_scale);
  fields["reward_noise"] = num(config.reward_noise);
  fields["trials"] = std::to_string(config.trials);
  fields["n"] = std::to_string(config.budget.n);
  fields["k"] = std::to_string(config.budget.k);
  fields["delta"] = num(config.budget.delta);
  fields["beta"] = num(config.spec.beta);
  fields["tau"] = config.spec.clipped() ? num(config.spec.tau) : "unclipped";
  fields["finite_class_size"] = std::to_string(config.finite_class_size);
  fields["ou_max_dim"] = std::to_string(config.ou_max_dim);
  std::vector<std::string> names;
  for (Target t : config.targets) names.push_back(target_name(t));
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  std::string list;
  for (const auto& name : names) list += (list.empty() ? "" : " ") + name;
  fields["targets"] = list;

  std::string canonical;
  for (const auto& [key, value] : fields) canonical += key + " = " + value + "\n";
  return canonical;
}

std::string campaign_config_hash(const CampaignConfig& config) {
  return hex64(fnv1a64(campaign_config_canonical(config)));
}

Policy random_policy(std::size_t n_prompts, std::size_t n_responses, double scale,
                     std::uint64_t seed) {
  Rng rng(seed);
  Matrix logits(n_prompts, n_responses);
  for (std::size_t i = 0; i < logits.size(); ++i) logits.data()[i] = scale * rng.normal();
  return policy_from_logits(std::move(logits));
}

OuSpec random_commuting_ou_spec(std::uint64_t seed, std::size_t dim, bool isotropic) {
  Rng rng(seed);
  const std::size_t d = dim;

  // random orthogonal basis: two sweeps of random Givens rotations
  Matrix basis(d, d, 0.0);
  for (std::size_t i = 0; i < d; ++i) basis(i, i) = 1.0;
  for (int sweep = 0; sweep < 2; ++sweep) {
    for (std::size_t p = 0; p < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        const double angle = rng.uniform(0.0, 6.283185307179586);
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        for (std::size_t i = 0; i < d; ++i) {
          const double vp = basis(i, p);
          const double vq = basis(i, q);
          basis(i, p) = c * vp - s * vq;
          basis(i, q) = s * vp + c * vq;
        }
      }
    }
  }

  Vector h(d), s_eig(d);
  if (isotropic) {
    const double m = rng.uniform(0.2, 5.0);
    for (auto& v : h) v = m;
  } else {
    for (auto& v : h) v = rng.uniform(0.1, 10.0);
  }
  for (auto& v : s_eig) v = rng.uniform(0.05, 4.0);

  auto from_spectrum = [&](const Vector& eig) {
    Matrix diag(d, d, 0.0);
    for (std::size_t i = 0; i < d; ++i) diag(i, i) = eig[i];
    return matmul(basis, matmul(diag, transpose(basis)));
  };

  OuSpec spec;
  spec.dim = d;
  spec.hessian = from_spectrum(h);
  spec.sigma_g = from_spectrum(s_eig);
  // symmetrise rotation rounding
  for (Matrix* m : {&spec.hessian, &spec.sigma_g}) {
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i + 1; j < d; ++j) {
        const double avg = 0.5 * ((*m)(i, j) + (*m)(j, i));
        (*m)(i, j) = avg;
        (*m)(j, i) = avg;
      }
  }
  spec.m_lo = *std::min_element(h.begin(), h.end());
  spec.m_hi = *std::max_element(h.begin(), h.end());
  spec.epsilon = rng.uniform(0.01, 0.5);

  spec.theta_hat.resize(d);
  spec.theta_0.resize(d);
  for (auto& v : spec.theta_hat) v = rng.normal();
  for (auto& v : spec.theta_0) v = rng.normal();

  // prior covariance: random SPD, A A^T + I
  Matrix a(d, d);
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] = 0.5 * rng.normal();
  spec.lambda = matmul(a, transpose(a));
  for (std::size_t i = 0; i < d; ++i) spec.lambda(i, i) += 1.0;
  return spec;
}

namespace {

struct TrialOutcome {
  bool failed = false;
  double gap = 0.0;
  double bound = 0.0;
};

TrialOutcome eval_sampling_target(Target target, const CampaignConfig& config,
                                  const TrialContext& ctx) {
  TrialOutcome outcome;
  switch (target) {
    case Target::kLemma2: {
      const double empirical = empirical_objective(ctx.world, ctx.policy, ctx.model.r_hat,
                                                   config.spec, ctx.sample);
      const double conditional = conditional_objective(ctx.world, ctx.policy, ctx.model.r_hat,
                                                       config.spec, ctx.sample.prompts);
      outcome.gap = std::fabs(empirical - conditional);
      outcome.bound = rollout_bound(config.budget, config.spec);
      break;
    }
    case Target::kLemma3: {
      const double conditional = conditional_objective(ctx.world, ctx.policy, ctx.model.r_hat,
                                                       config.spec, ctx.sample.prompts);
      const double population =
          population_objective(ctx.world, ctx.policy, ctx.model.r_hat, config.spec).value;
      outcome.gap = std::fabs(conditional - population);
      outcome.bound = prompt_bound(config.budget, config.spec);
      break;
    }
    case Target::kLemma4: {
      const double empirical = empirical_objective(ctx.world, ctx.policy, ctx.model.r_hat,
                                                   config.spec, ctx.sample);
      const double population =
          population_objective(ctx.world, ctx.policy, ctx.model.r_hat, config.spec).value;
      outcome.gap = std::fabs(empirical - population);
      outcome.bound = sampling_bound(config.budget, config.spec);
      break;
    }
    case Target::kEq12: {
      const double empirical = empirical_kappa(ctx.world, ctx.policy, config.spec.tau, ctx.sample);
      const double population = population_kappa(ctx.world, ctx.policy, config.spec.tau);
      outcome.gap = std::fabs(empirical - population);
      outcome.bound = kappa_bound(config.budget, config.spec.tau);
      break;
    }
    default:
      throw Error("not a sampling target");
  }
  outcome.failed = outcome.gap > outcome.bound + kBoundSlack;
  return outcome;
}

TrialOutcome eval_theorem1(const CampaignConfig& config, const TrialContext& ctx) {
  const BoundReport report = fixed_policy_bound(ctx.world, ctx.policy, ctx.model, config.spec,
                                                config.budget, &ctx.sample);
  TrialOutcome outcome;
  outcome.gap = report.actual_gap.value_or(0.0);
  outcome.bound = report.total_bound;
  outcome.failed = !report.held;
  return outcome;
}

TrialOutcome eval_theorem2(const CampaignConfig& config, const TrialContext& ctx,
                           std::uint64_t trial_seed) {
  const std::size_t m_count = config.finite_class_size;
  const auto prompts = draw_prompts(ctx.world, config.budget.n, mix_seed(trial_seed, kTagSample));

  // pre-registered candidates, then the adversarial Dirac on the argmax of
  // the empirical objective (the data-dependent selection the fixed-policy
  // bound cannot cover)
  double best_emp = -1e300;
  std::size_t best = 0;
  std::vector<Policy> candidates;
  candidates.reserve(m_count);
  std::vector<double> empirical(m_count, 0.0);
  for (std::size_t m = 0; m < m_count; ++m) {
    candidates.push_back(random_policy(ctx.world.n_prompts, ctx.world.n_responses,
                                       config.logit_scale,
                                       mix_seed(trial_seed, kTagCandidate, m)));
    const EvalSample sample = draw_rollouts(ctx.world, candidates[m], prompts, config.budget.k,
                                            mix_seed(trial_seed, kTagCandRollout, m));
    empirical[m] =
        empirical_objective(ctx.world, candidates[m], ctx.model.r_hat, config.spec, sample);
    if (empirical[m] > best_emp) {
      best_emp = empirical[m];
      best = m;
    }
  }

  const Policy& chosen = candidates[best];
  const double kl = std::log(static_cast<double>(m_count));  // Dirac posterior
  const double avg_shift =
      shift_bound(coverage(ctx.world, chosen), reward_train_error(ctx.world, ctx.model));
  const double avg_clip = clipping_error(ctx.world, chosen, config.spec);
  const double target =
      population_objective(ctx.world, chosen, ctx.world.r_star, {config.spec.beta, kUnclipped})
          .value;

  TrialOutcome outcome;
  outcome.gap = std::fabs(best_emp - target);
  outcome.bound = pacbayes_bound(kl, config.budget, config.spec, avg_shift, avg_clip);
  outcome.failed = outcome.gap > outcome.bound + kBoundSlack;
  return outcome;
}

TrialOutcome eval_ou(const CampaignConfig& config, std::size_t trial, std::uint64_t trial_seed) {
  const std::size_t max_dim = std::max<std::size_t>(config.ou_max_dim, 2);
  const std::size_t dim = 2 + trial % (max_dim - 1);
  const bool isotropic = trial % 5 == 4;  // every fifth trial checks the equality case
  const OuSpec spec = random_commuting_ou_spec(mix_seed(trial_seed, kTagOu), dim, isotropic);
  const Matrix sigma = ou_stationary_cov(spec);

  bool ok = true;
  // Lyapunov residual
  const Matrix hs = matmul(spec.hessian, sigma);
  Matrix residual(dim, dim);
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = 0; j < dim; ++j)
      residual(i, j) = hs(i, j) + hs(j, i) - spec.epsilon * spec.sigma_g(i, j);
  ok = ok && max_abs_entry(residual) <= 1e-9 * spec.epsilon * max_abs_entry(spec.sigma_g);

  // covariance sandwich, eigenvalues of the two differences >= -1e-9
  auto sandwich_ok = [&](double scale, bool upper) {
    Matrix diff(dim, dim);
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j < dim; ++j) {
        const double bound_part = scale * spec.sigma_g(i, j);
        diff(i, j) = upper ? bound_part - sigma(i, j) : sigma(i, j) - bound_part;
      }
    return jacobi_eigh(diff).values.front() >= -1e-9;
  };
  ok = ok && sandwich_ok(spec.epsilon / (2.0 * spec.m_hi), false);
  ok = ok && sandwich_ok(spec.epsilon / (2.0 * spec.m_lo), true);

  const double exact = gaussian_kl(spec.theta_hat, sigma, spec.theta_0, spec.lambda);
  const double bound = ou_kl_bound(spec);
  ok = ok && exact <= bound + 1e-9;
  if (isotropic) ok = ok && std::fabs(bound - exact) <= 1e-9;

  TrialOutcome outcome;
  outcome.gap = exact;
  outcome.bound = bound;
  outcome.failed = !ok;
  return outcome;
}

TrialOutcome eval_calibration(const CampaignConfig& config, const TrialContext& ctx) {
  const DiscreteLaw law = abs_log_ratio_law(ctx.world, ctx.policy);
  const double a = alpha(config.budget);
  const double two_alpha = 2.0 * a;
  const double tau_star = optimal_tau(ctx.world, ctx.policy, config.budget);

  bool ok = true;
  if (two_alpha >= 1.0) {
    ok = tau_star == 0.0;
  } else {
    ok = law_tail_gt(law, tau_star) <= two_alpha && two_alpha <= law_tail_ge(law, tau_star);
  }

  // grid optimality of B(tau) = (1 + 2 beta tau) alpha + beta T(tau)
  const double beta = config.spec.beta > 0.0 ? config.spec.beta : 1.0;
  auto b_of = [&](double tau) {
    return (1.0 + 2.0 * beta * tau) * a + beta * law_truncation(law, tau);
  };
  const double b_star = b_of(tau_star);
  const double top = law.values.empty() ? 1.0 : law.values.back();
  double b_min = b_star;
  for (int g = 0; g < 1000; ++g) {
    const double t = top * static_cast<double>(g) / 999.0;
    b_min = std::min(b_min, b_of(t));
  }
  ok = ok && b_star <= b_min + 1e-9;

  // monotone response: quadrupling n never decreases the threshold
  SampleBudget richer = config.budget;
  richer.n *= 4;
  ok = ok && optimal_tau(ctx.world, ctx.policy, richer) >= tau_star;

  TrialOutcome outcome;
  outcome.gap = tau_star;
  outcome.bound = b_star;
  outcome.failed = !ok;
  return outcome;
}

}  // namespace

CampaignResult run_campaign(const CampaignConfig& config) {
  validate_campaign_config(config);

  CampaignResult result;
  result.config_hash = campaign_config_hash(config);
  result.master_seed = config.master_seed;
  result.artifact_version = kArtifactVersion;

  std::vector<TargetTally> tallies;
  for (Target target : config.targets) {
    TargetTally tally;
    tally.target = target;
    tally.trials = config.trials;
    tally.delta = config.budget.delta;
    tally.slack_threshold =
        config.budget.delta + 3.0 * std::sqrt(config.budget.delta * (1.0 - config.budget.delta) /
                                              static_cast<double>(config.trials));
    tally.min_bound = 1e300;
    tallies.push_back(tally);
  }

  const bool needs_context =
      std::any_of(config.targets.begin(), config.targets.end(),
                  [](Target t) { return t != Target::kOu; });

  for (std::size_t trial = 0; trial < config.trials; ++trial) {
    const std::uint64_t trial_seed = mix_seed(config.master_seed, kTagTrial, trial);
    try {
      TrialContext ctx;
      if (needs_context) {
        ctx.world = build_world(config.n_prompts, config.n_responses, config.world_gen,
                                mix_seed(trial_seed, kTagWorld));
        ctx.policy = random_policy(config.n_prompts, config.n_responses, config.logit_scale,
                                   mix_seed(trial_seed, kTagPolicy));
        Rng reward_rng(mix_seed(trial_seed, kTagReward));
        ctx.model.r_hat = ctx.world.r_star;
        for (std::size_t i = 0; i < ctx.model.r_hat.size(); ++i)
          ctx.model.r_hat.data()[i] = clamp01(ctx.model.r_hat.data()[i] +
                                              config.reward_noise *
                                                  (2.0 * reward_rng.uniform01() - 1.0));
        ctx.sample = draw_sample(ctx.world, ctx.policy, config.budget,
                                 mix_seed(trial_seed, kTagSample));
      }

      for (std::size_t ti = 0; ti < config.targets.size(); ++ti) {
        const Target target = config.targets[ti];
        TrialOutcome outcome;
        switch (target) {
          case Target::kLemma2:
          case Target::kLemma3:
          case Target::kLemma4:
          case Target::kEq12:
            outcome = eval_sampling_target(target, config, ctx);
            break;
          case Target::kTheorem1:
            outcome = eval_theorem1(config, ctx);
            break;
          case Target::kTheorem2Finite:
            outcome = eval_theorem2(config, ctx, trial_seed);
            break;
          case Target::kOu:
            outcome = eval_ou(config, trial, trial_seed);
            break;
          case Target::kCalibration:
            outcome = eval_calibration(config, ctx);
            break;
        }
        TargetTally& tally = tallies[ti];
        if (outcome.failed) {
          ++tally.failures;
          tally.failed_trials.push_back({trial, trial_seed});
        }
        tally.mean_gap += outcome.gap;
        tally.max_gap = std::max(tally.max_gap, outcome.gap);
        tally.mean_bound += outcome.bound;
        tally.min_bound = std::min(tally.min_bound, outcome.bound);
      }
    } catch (const Error& err) {
      throw Error("trial " + std::to_string(trial) + " (seed " + hex64(trial_seed) +
                  "): " + err.what());
    }
  }

  result.all_pass = true;
  for (TargetTally& tally : tallies) {
    tally.mean_gap /= static_cast<double>(tally.trials);
    tally.mean_bound /= static_cast<double>(tally.trials);
    tally.pass = static_cast<double>(tally.failures) / static_cast<double>(tally.trials) <=
                 tally.slack_threshold;
    result.all_pass = result.all_pass && tally.pass;
  }
  result.tallies = std::move(tallies);
  return result;
}

std::string campaign_csv(const CampaignResult& result) {
  std::ostringstream out;
  out << "target,trials,failures,delta,slack_threshold,pass\n";
  for (const auto& tally : result.tallies) {
    out << target_name(tally.target) << ',' << tally.trials << ',' << tally.failures << ','
        << fmt12(tally.delta) << ',' << fmt12(tally.slack_threshold) << ','
        << (tally.pass ? 1 : 0) << '\n';
  }
  return out.str();
}

std::string campaign_json(const CampaignResult& result) {
  nlohmann::json doc;
  doc["artifact_version"] = result.artifact_version;
  doc["config_hash"] = result.config_hash;
  doc["master_seed"] = result.master_seed;
  doc["all_pass"] = result.all_pass;
  nlohmann::json targets = nlohmann::json::array();
  for (const auto& tally : result.tallies) {
    nlohmann::json entry;
    entry["target"] = target_name(tally.target);
    entry["trials"] = tally.trials;
    entry["failures"] = tally.failures;
    entry["delta"] = round12(tally.delta);
    entry["slack_threshold"] = round12(tally.slack_threshold);
    entry["pass"] = tally.pass;
    entry["mean_gap"] = round12(tally.mean_gap);
    entry["max_gap"] = round12(tally.max_gap);
    entry["mean_bound"] = round12(tally.mean_bound);
    entry["min_bound"] = round12(tally.min_bound);
    nlohmann::json failed = nlohmann::json::array();
    for (const auto& f : tally.failed_trials) {
      failed.push_back({{"trial", f.trial}, {"seed", hex64(f.seed)}});
    }
    entry["failed_trials"] = failed;
    targets.push_back(entry);
  }
  doc["targets"] = targets;
  return doc.dump();
}

std::pair<std::string, std::string> write_campaign_outputs(const CampaignResult& result,
                                                           const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const std::string stem = out_dir + "/campaign_" + result.config_hash;
  const std::string csv_path = stem + ".csv";
  const std::string json_path = stem + ".json";

  const bool csv_exists = std::filesystem::exists(csv_path);
  std::ofstream csv(csv_path, std::ios::app);
  if (!csv) throw Error("cannot write " + csv_path);
  const std::string csv_body = campaign_csv(result);
  if (csv_exists) {
    // append-only log: skip the header on subsequent runs
    csv << csv_body.substr(csv_body.find('\n') + 1);
  } else {
    csv << csv_body;
  }

  std::ofstream json(json_path, std::ios::app);
  if (!json) throw Error("cannot write " + json_path);
  json << campaign_json(result) << '\n';
  return {csv_path, json_path};
}

}  // namespace rlhflab
