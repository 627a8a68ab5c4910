#include "rlhflab/sampling.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rlhflab/error.hpp"
#include "rlhflab/kernels.hpp"
#include "rlhflab/rng.hpp"

namespace rlhflab {

namespace {

constexpr std::uint64_t kTagPromptStream = 0x10;
constexpr std::uint64_t kTagRolloutStream = 0x11;

void check_sample(const TabularWorld& world, const EvalSample& sample) {
  if (sample.prompts.empty() || sample.k == 0) throw Error("empty sample");
  if (sample.rollouts.size() != sample.n() * sample.k)
    throw Error("sample shape mismatch");
  for (auto x : sample.prompts)
    if (x >= world.n_prompts) throw Error("sample prompt index out of range");
  for (auto y : sample.rollouts)
    if (y >= world.n_responses) throw Error("sample response index out of range");
}

// Gathers per-rollout reward and log-ratio values into flat arrays; the
// estimator reductions then run over them.
void gather(const TabularWorld& world, const Policy& policy, const Matrix* reward,
            const EvalSample& sample, std::vector<double>* r_out, std::vector<double>* ell_out) {
  check_sample(world, sample);
  if (!policy.probs.same_shape(world.pi_ref)) throw Error("policy shape mismatch");
  const std::size_t total = sample.rollouts.size();
  if (r_out != nullptr) r_out->resize(total);
  ell_out->resize(total);
  for (std::size_t i = 0; i < sample.n(); ++i) {
    const std::size_t x = sample.prompts[i];
    for (std::size_t j = 0; j < sample.k; ++j) {
      const std::size_t y = sample.rollout(i, j);
      if (!(world.pi_ref(x, y) > 0.0))
        throw Error("absolute continuity violated at (" + std::to_string(x) + "," +
                    std::to_string(y) + ")");
      const std::size_t flat = i * sample.k + j;
      (*ell_out)[flat] = std::log(policy.probs(x, y)) - std::log(world.pi_ref(x, y));
      if (r_out != nullptr) (*r_out)[flat] = (*reward)(x, y);
    }
  }
}

}  // namespace

void validate_budget(const SampleBudget& budget) {
  if (budget.n < 1 || budget.k < 1) throw Error("invalid budget: n and K must be >= 1");
  if (!(budget.delta > 0.0 && budget.delta < 1.0))
    throw Error("invalid budget: delta must lie in (0,1)");
}

std::vector<std::uint32_t> draw_prompts(const TabularWorld& world, std::size_t n,
                                        std::uint64_t seed) {
  Rng rng(mix_seed(seed, kTagPromptStream));
  std::vector<std::uint32_t> prompts(n);
  for (auto& x : prompts) x = static_cast<std::uint32_t>(rng.categorical(world.rho));
  return prompts;
}

EvalSample draw_rollouts(const TabularWorld& world, const Policy& policy,
                         std::vector<std::uint32_t> prompts, std::size_t k,
                         std::uint64_t seed) {
  if (!policy.probs.same_shape(world.pi_ref)) throw Error("policy shape mismatch");
  EvalSample sample;
  sample.k = k;
  sample.seed = seed;
  sample.rollouts.resize(prompts.size() * k);
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    Rng rng(mix_seed(seed, kTagRolloutStream, i));
    const auto row = policy.probs.row(prompts[i]);
    for (std::size_t j = 0; j < k; ++j)
      sample.rollouts[i * k + j] = static_cast<std::uint32_t>(rng.categorical(row));
  }
  sample.prompts = std::move(prompts);
  return sample;
}

EvalSample draw_sample(const TabularWorld& world, const Policy& policy,
                       const SampleBudget& budget, std::uint64_t seed) {
  validate_budget(budget);
  return draw_rollouts(world, policy, draw_prompts(world, budget.n, seed), budget.k, seed);
}

double empirical_objective(const TabularWorld& world, const Policy& policy,
                           const Matrix& reward, const ClipPenaltySpec& spec,
                           const EvalSample& sample) {
  validate_reward_table(reward, world);
  std::vector<double> r, ell;
  gather(world, policy, &reward, sample, &r, &ell);
  return kern::clipped_term_sum(r.data(), ell.data(), ell.size(), spec.beta, spec.tau) /
         static_cast<double>(ell.size());
}

double conditional_objective(const TabularWorld& world, const Policy& policy,
                             const Matrix& reward, const ClipPenaltySpec& spec,
                             std::span<const std::uint32_t> prompts) {
  if (prompts.empty()) throw Error("empty prompt list");
  validate_reward_table(reward, world);
  if (!policy.probs.same_shape(world.pi_ref)) throw Error("policy shape mismatch");
  const Matrix ell = log_ratio_table(policy, world.pi_ref);
  double total = 0.0;
  for (auto x : prompts) {
    if (x >= world.n_prompts) throw Error("prompt index out of range");
    const auto probs = policy.probs.row(x);
    total += kern::dot(probs.data(), reward.row(x).data(), probs.size()) -
             spec.beta * kern::clipped_dot(probs.data(), ell.row(x).data(), probs.size(),
                                           spec.tau);
  }
  return total / static_cast<double>(prompts.size());
}

double empirical_kappa(const TabularWorld& world, const Policy& policy, double tau,
                       const EvalSample& sample) {
  if (!(tau >= 0.0)) throw Error("invalid threshold");
  std::vector<double> ell;
  gather(world, policy, nullptr, sample, nullptr, &ell);
  return kern::clipped_sum(ell.data(), ell.size(), tau) / static_cast<double>(ell.size());
}

std::string sample_to_jsonl(const TabularWorld& world, const Policy& policy,
                            const Matrix& reward, const ClipPenaltySpec& spec,
                            const EvalSample& sample) {
  validate_reward_table(reward, world);
  std::vector<double> r, ell;
  gather(world, policy, &reward, sample, &r, &ell);
  std::ostringstream out;
  char buf[256];
  for (std::size_t i = 0; i < sample.n(); ++i) {
    for (std::size_t j = 0; j < sample.k; ++j) {
      const std::size_t flat = i * sample.k + j;
      const double clipped = clip_log_ratio(ell[flat], spec.tau);
      std::snprintf(buf, sizeof(buf),
                    "{\"prompt\":%u,\"response\":%u,\"reward\":%.12g,\"ell\":%.12g,"
                    "\"ell_tau\":%.12g}\n",
                    sample.prompts[i], sample.rollout(i, j), r[flat], ell[flat], clipped);
      out << buf;
    }
  }
  return out.str();
}

std::vector<double> jsonl_log_ratio_magnitudes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dump file: " + path);
  std::vector<double> magnitudes;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string key = "\"ell\":";
    const auto pos = line.find(key);
    if (pos == std::string::npos)
      throw Error(path + ":" + std::to_string(lineno) + ": record without 'ell' field");
    magnitudes.push_back(std::fabs(std::strtod(line.c_str() + pos + key.size(), nullptr)));
  }
  if (magnitudes.empty()) throw Error(path + ": no records");
  return magnitudes;
}

}  // namespace rlhflab
