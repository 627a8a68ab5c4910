#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "rlhflab/error.hpp"
#include "rlhflab/sampling.hpp"
#include "rlhflab/world.hpp"
#include "test_util.hpp"

using namespace rlhflab;

namespace {

TabularWorld two_prompt_world(double rho0) {
  TabularWorld world;
  world.n_prompts = 2;
  world.n_responses = 2;
  world.rho = {rho0, 1.0 - rho0};
  world.rho_label = {0.5, 0.5};
  world.pi_ref = Matrix(2, 2, 0.5);
  world.r_star = Matrix(2, 2, 0.5);
  validate_world(world);
  return world;
}

}  // namespace

TEST_CASE("same seed reproduces the sample") {
  const TabularWorld world = build_world(6, 8, parse_world_gen("dirichlet(0.5)"), 3);
  const Policy policy = policy_from_logits(testutil::random_logits(6, 8, 2.0, 4));
  const SampleBudget budget{40, 3, 0.1};
  const EvalSample a = draw_sample(world, policy, budget, 123);
  const EvalSample b = draw_sample(world, policy, budget, 123);
  CHECK(a.prompts == b.prompts);
  CHECK(a.rollouts == b.rollouts);
  const EvalSample c = draw_sample(world, policy, budget, 124);
  CHECK(a.rollouts != c.rollouts);
}

TEST_CASE("changing K never perturbs the prompt draw and pairs rollouts") {
  const TabularWorld world = build_world(6, 8, parse_world_gen("dirichlet(0.5)"), 3);
  const Policy policy = policy_from_logits(testutil::random_logits(6, 8, 2.0, 4));
  const EvalSample narrow = draw_sample(world, policy, {25, 2, 0.1}, 55);
  const EvalSample wide = draw_sample(world, policy, {25, 5, 0.1}, 55);
  CHECK(narrow.prompts == wide.prompts);
  for (std::size_t i = 0; i < 25; ++i)
    for (std::size_t j = 0; j < 2; ++j) CHECK(narrow.rollout(i, j) == wide.rollout(i, j));
}

TEST_CASE("point-mass prompt distribution only draws that prompt") {
  const TabularWorld world = two_prompt_world(1.0);
  const Policy policy = policy_from_logits(Matrix(2, 2, 0.0));
  const EvalSample sample = draw_sample(world, policy, {500, 1, 0.1}, 9);
  for (auto x : sample.prompts) CHECK(x == 0);
}

TEST_CASE("prompt marginal concentrates on rho") {
  const TabularWorld world = two_prompt_world(0.5);
  const Policy policy = policy_from_logits(Matrix(2, 2, 0.0));
  const EvalSample sample = draw_sample(world, policy, {200000, 1, 0.1}, 17);
  std::size_t zeros = 0;
  for (auto x : sample.prompts) zeros += x == 0 ? 1 : 0;
  const double freq = static_cast<double>(zeros) / 200000.0;
  CHECK(freq == doctest::Approx(0.5).epsilon(0.02));
  CHECK(std::fabs(freq - 0.5) <= 0.01);
}

TEST_CASE("single-sample arithmetic") {
  // one prompt effectively certain, one response effectively certain;
  // reference scaled so the log ratio at the drawn pair is exactly 0.25,
  // clipped at tau = 0.2
  TabularWorld world;
  world.n_prompts = 2;
  world.n_responses = 2;
  world.rho = {1.0, 0.0};
  world.rho_label = {1.0, 0.0};
  Matrix logits(2, 2, 0.0);
  logits(0, 0) = 30.0;
  logits(0, 1) = -30.0;
  const Policy policy = policy_from_logits(logits);
  const double p0 = policy.probs(0, 0);
  world.pi_ref = Matrix(2, 2, 0.5);
  world.pi_ref(0, 0) = p0 * std::exp(-0.25);
  world.pi_ref(0, 1) = 1.0 - world.pi_ref(0, 0);
  world.r_star = Matrix(2, 2, 0.6);
  validate_world(world);

  const EvalSample sample = draw_sample(world, policy, {1, 1, 0.1}, 2);
  REQUIRE(sample.prompts[0] == 0);
  REQUIRE(sample.rollout(0, 0) == 0);
  // J = 0.6 - 0.5 * clip(0.25, 0.2) = 0.5
  const double value = empirical_objective(world, policy, world.r_star, {0.5, 0.2}, sample);
  CHECK(value == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("beta zero with constant reward is exact") {
  const TabularWorld world = build_world(4, 5, parse_world_gen("dirichlet(1.0)"), 8);
  const Policy policy = policy_from_logits(testutil::random_logits(4, 5, 2.0, 9));
  const Matrix constant(4, 5, 0.37);
  const EvalSample sample = draw_sample(world, policy, {60, 2, 0.1}, 10);
  CHECK(empirical_objective(world, policy, constant, {0.0, 1.0}, sample) ==
        doctest::Approx(0.37).epsilon(1e-15));
}

TEST_CASE("degenerate sampling reproduces the population objective") {
  TabularWorld world;
  world.n_prompts = 2;
  world.n_responses = 2;
  world.rho = {1.0, 0.0};
  world.rho_label = {1.0, 0.0};
  world.pi_ref = Matrix(2, 2, 0.5);
  world.r_star = Matrix(2, 2, 0.25);
  validate_world(world);
  Matrix logits(2, 2, 0.0);
  logits(0, 0) = 30.0;
  logits(0, 1) = -30.0;
  const Policy policy = policy_from_logits(logits);
  const ClipPenaltySpec spec{0.4, 1.0};
  const EvalSample sample = draw_sample(world, policy, {3, 2, 0.1}, 5);
  const double empirical = empirical_objective(world, policy, world.r_star, spec, sample);
  const double population = population_objective(world, policy, world.r_star, spec).value;
  CHECK(std::fabs(empirical - population) <= 1e-12);
}

TEST_CASE("conditional objective: constant prompt list enumerates g exactly") {
  const TabularWorld world = build_world(4, 6, parse_world_gen("dirichlet(0.8)"), 30);
  const Policy policy = policy_from_logits(testutil::random_logits(4, 6, 2.0, 31));
  const ClipPenaltySpec spec{0.3, 1.5};
  const std::vector<std::uint32_t> prompts(17, 2);
  double expected = 0.0;  // g(2), independently enumerated
  for (std::size_t y = 0; y < 6; ++y) {
    const double ell = std::log(policy.probs(2, y)) - std::log(world.pi_ref(2, y));
    expected += policy.probs(2, y) *
                (world.r_star(2, y) - spec.beta * std::min(std::max(ell, -spec.tau), spec.tau));
  }
  CHECK(conditional_objective(world, policy, world.r_star, spec, prompts) ==
        doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("conditional objective at exact rho frequencies is the population value") {
  TabularWorld world = two_prompt_world(0.25);
  world.r_star(0, 0) = 0.9;
  world.r_star(1, 1) = 0.1;
  const Policy policy = policy_from_logits(testutil::random_logits(2, 2, 1.0, 40));
  const ClipPenaltySpec spec{0.5, 2.0};
  const std::vector<std::uint32_t> prompts = {0, 1, 1, 1};  // frequencies (1/4, 3/4) = rho
  const double conditional = conditional_objective(world, policy, world.r_star, spec, prompts);
  const double population = population_objective(world, policy, world.r_star, spec).value;
  CHECK(conditional == doctest::Approx(population).epsilon(1e-12));
}

TEST_CASE("Monte Carlo convergence of the empirical to the conditional objective") {
  const TabularWorld world = build_world(5, 7, parse_world_gen("dirichlet(0.5)"), 50);
  const Policy policy = policy_from_logits(testutil::random_logits(5, 7, 2.0, 51));
  const ClipPenaltySpec spec{0.2, 2.0};
  const SampleBudget budget{4, 20000, 0.1};
  const EvalSample sample = draw_sample(world, policy, budget, 52);
  const double empirical = empirical_objective(world, policy, world.r_star, spec, sample);
  const double conditional =
      conditional_objective(world, policy, world.r_star, spec, sample.prompts);
  const double range = 1.0 + 2.0 * spec.beta * spec.tau;
  CHECK(std::fabs(empirical - conditional) <= 3.0 * range / std::sqrt(20000.0 * 4.0 / 2.0));
}

TEST_CASE("two-stage unbiasedness") {
  const TabularWorld world = build_world(5, 6, parse_world_gen("dirichlet(0.7)"), 60);
  const Policy policy = policy_from_logits(testutil::random_logits(5, 6, 2.0, 61));
  const ClipPenaltySpec spec{0.3, 1.0};
  const SampleBudget budget{20, 2, 0.1};

  // stage one: prompts fixed, fresh rollout seeds
  const auto prompts = draw_prompts(world, budget.n, 777);
  const double conditional = conditional_objective(world, policy, world.r_star, spec, prompts);
  double mean_emp = 0.0;
  const int reps = 300;
  for (int rep = 0; rep < reps; ++rep) {
    const EvalSample sample = draw_rollouts(world, policy, prompts, budget.k, 1000 + rep);
    mean_emp += empirical_objective(world, policy, world.r_star, spec, sample);
  }
  mean_emp /= reps;
  const double range = 1.0 + 2.0 * spec.beta * spec.tau;
  const double se1 = range / (2.0 * std::sqrt(static_cast<double>(reps * budget.n * budget.k)));
  CHECK(std::fabs(mean_emp - conditional) <= 3.0 * se1);

  // stage two: fresh prompt seeds against the population objective
  const double population = population_objective(world, policy, world.r_star, spec).value;
  double mean_cond = 0.0;
  for (int rep = 0; rep < reps; ++rep) {
    const auto fresh = draw_prompts(world, budget.n, 5000 + rep);
    mean_cond += conditional_objective(world, policy, world.r_star, spec, fresh);
  }
  mean_cond /= reps;
  const double se2 = range / (2.0 * std::sqrt(static_cast<double>(reps * budget.n)));
  CHECK(std::fabs(mean_cond - population) <= 3.0 * se2);
}

TEST_CASE("empirical kappa: policy equal to reference gives exact zero") {
  const TabularWorld world = build_world(3, 4, parse_world_gen("dirichlet(1.0)"), 70);
  Matrix logits(3, 4);
  for (std::size_t x = 0; x < 3; ++x)
    for (std::size_t y = 0; y < 4; ++y) logits(x, y) = std::log(world.pi_ref(x, y));
  const Policy policy = policy_from_logits(logits);
  const EvalSample sample = draw_sample(world, policy, {50, 2, 0.1}, 71);
  CHECK(std::fabs(empirical_kappa(world, policy, 3.0, sample)) <= 1e-12);
  // tau = 0 clips everything to zero for any policy
  const Policy other = policy_from_logits(testutil::random_logits(3, 4, 2.0, 72));
  CHECK(empirical_kappa(world, other, 0.0, sample) == 0.0);
}

TEST_CASE("per-rollout terms stay inside the stated range") {
  const TabularWorld world = build_world(5, 6, parse_world_gen("dirichlet(0.4)"), 80);
  const Policy policy = policy_from_logits(testutil::random_logits(5, 6, 3.0, 81));
  const ClipPenaltySpec spec{0.6, 1.2};
  const EvalSample sample = draw_sample(world, policy, {100, 3, 0.1}, 82);
  for (std::size_t i = 0; i < sample.n(); ++i) {
    for (std::size_t j = 0; j < sample.k; ++j) {
      const std::size_t x = sample.prompts[i];
      const std::size_t y = sample.rollout(i, j);
      const double ell = std::log(policy.probs(x, y)) - std::log(world.pi_ref(x, y));
      const double term =
          world.r_star(x, y) - spec.beta * std::min(std::max(ell, -spec.tau), spec.tau);
      CHECK(term >= -spec.beta * spec.tau - 1e-15);
      CHECK(term <= 1.0 + spec.beta * spec.tau + 1e-15);
    }
  }
}

TEST_CASE("jsonl dump round-trips log-ratio magnitudes") {
  const TabularWorld world = build_world(4, 5, parse_world_gen("dirichlet(0.6)"), 90);
  const Policy policy = policy_from_logits(testutil::random_logits(4, 5, 2.0, 91));
  const ClipPenaltySpec spec{0.2, 2.0};
  const EvalSample sample = draw_sample(world, policy, {12, 3, 0.1}, 92);
  const std::string dump = sample_to_jsonl(world, policy, world.r_star, spec, sample);

  const std::string path = std::filesystem::temp_directory_path() / "rlhflab_dump_test.jsonl";
  {
    std::ofstream out(path);
    out << dump;
  }
  const auto magnitudes = jsonl_log_ratio_magnitudes(path);
  REQUIRE(magnitudes.size() == 12 * 3);
  std::size_t index = 0;
  for (std::size_t i = 0; i < sample.n(); ++i)
    for (std::size_t j = 0; j < sample.k; ++j) {
      const std::size_t x = sample.prompts[i];
      const std::size_t y = sample.rollout(i, j);
      const double ell = std::log(policy.probs(x, y)) - std::log(world.pi_ref(x, y));
      CHECK(magnitudes[index++] == doctest::Approx(std::fabs(ell)).epsilon(1e-9));
    }
  std::filesystem::remove(path);
}

TEST_CASE("sample validation") {
  const TabularWorld world = build_world(3, 3, parse_world_gen("uniform-all"), 1);
  const Policy policy = policy_from_logits(Matrix(3, 3, 0.0));
  EvalSample sample = draw_sample(world, policy, {5, 2, 0.1}, 2);
  sample.prompts[0] = 99;
  CHECK_THROWS_AS(empirical_objective(world, policy, world.r_star, {0.1, 1.0}, sample), Error);
  CHECK_THROWS_AS(draw_sample(world, policy, {0, 1, 0.1}, 3), Error);
  CHECK_THROWS_AS(draw_sample(world, policy, {5, 1, 1.5}, 3), Error);
}
