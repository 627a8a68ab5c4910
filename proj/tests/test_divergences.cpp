#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rlhflab/divergences.hpp"
#include "rlhflab/error.hpp"
#include "rlhflab/objectives.hpp"
#include "rlhflab/rng.hpp"
#include "rlhflab/world.hpp"
#include "test_util.hpp"

using namespace rlhflab;
using testutil::close_rel;

namespace {

JointDist from_values(std::size_t rows, std::size_t cols, const std::vector<double>& flat) {
  JointDist dist;
  dist.mass = Matrix(rows, cols);
  for (std::size_t i = 0; i < flat.size(); ++i) dist.mass.data()[i] = flat[i];
  return dist;
}

Matrix identity(std::size_t d) {
  Matrix m(d, d, 0.0);
  for (std::size_t i = 0; i < d; ++i) m(i, i) = 1.0;
  return m;
}

Matrix random_spd(std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  Matrix a(d, d);
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  Matrix spd(d, d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      for (std::size_t k = 0; k < d; ++k) spd(i, j) += a(i, k) * a(j, k);
      if (i == j) spd(i, j) += 0.5;
    }
  return spd;
}

}  // namespace

TEST_CASE("chi_square: identical distributions") {
  const JointDist p = from_values(1, 2, {0.5, 0.5});
  CHECK(chi_square(p, p) == 0.0);
}

TEST_CASE("chi_square: hand sum on two atoms") {
  const JointDist p = from_values(1, 2, {0.5, 0.5});
  const JointDist q = from_values(1, 2, {0.75, 0.25});
  CHECK(chi_square(q, p) == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("chi_square: mass on a null atom violates coverage") {
  const JointDist p = from_values(1, 2, {1.0, 0.0});
  const JointDist q = from_values(1, 2, {0.75, 0.25});
  CHECK_THROWS_WITH_AS(chi_square(q, p), "coverage violated at (0,1)", Error);
}

TEST_CASE("coverage: no shift at all") {
  const TabularWorld world = build_world(4, 5, parse_world_gen("dirichlet(1.0)"), 2);
  Matrix logits(4, 5);
  for (std::size_t x = 0; x < 4; ++x)
    for (std::size_t y = 0; y < 5; ++y) logits(x, y) = std::log(world.pi_ref(x, y));
  TabularWorld symmetric = world;
  symmetric.rho_label = symmetric.rho;
  const CoverageReport report = coverage(symmetric, policy_from_logits(logits));
  CHECK(report.chi_sq <= 1e-12);
  CHECK(report.c_cov == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(report.c_prompt == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(report.c_pol == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("coverage: hand-evaluated prompt shift, factorisation tight") {
  TabularWorld world;
  world.n_prompts = 2;
  world.n_responses = 2;
  world.rho = {0.75, 0.25};
  world.rho_label = {0.5, 0.5};
  world.pi_ref = Matrix(2, 2, 0.5);
  world.r_star = Matrix(2, 2, 0.5);
  validate_world(world);
  const Policy policy = policy_from_logits(Matrix(2, 2, 0.0));  // equals pi_ref
  const CoverageReport report = coverage(world, policy);
  // c_prompt = sqrt(0.5 * 1.5^2 + 0.5 * 0.5^2) = sqrt(1.25)
  CHECK(report.c_prompt == doctest::Approx(1.118033988749895).epsilon(1e-12));
  CHECK(report.c_pol == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(report.c_cov == doctest::Approx(1.118033988749895).epsilon(1e-12));
  CHECK(report.c_cov == doctest::Approx(std::sqrt(1.0 + report.chi_sq)).epsilon(1e-12));
}

TEST_CASE("coverage factorisation holds on 1000 seeded instances") {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const TabularWorld world = build_world(5, 7, parse_world_gen("dirichlet(0.5)"), seed);
    const Policy policy = policy_from_logits(testutil::random_logits(5, 7, 2.0, seed + 4444));
    const CoverageReport report = coverage(world, policy);
    CHECK(report.c_cov == doctest::Approx(std::sqrt(1.0 + report.chi_sq)).epsilon(1e-12));
    CHECK(report.c_cov <= report.c_prompt * report.c_pol * (1.0 + 1e-9));
    CHECK(report.c_prompt >= 1.0 - 1e-12);
    CHECK(report.c_pol >= 1.0 - 1e-12);
  }
}

TEST_CASE("second-moment identity: E_P[w^2] = 1 + chi^2") {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const TabularWorld world = build_world(4, 6, parse_world_gen("dirichlet(0.6)"), seed);
    const Policy policy = policy_from_logits(testutil::random_logits(4, 6, 2.0, seed + 1));
    const JointDist q = joint(world.rho, policy.probs);
    const JointDist p = joint(world.rho_label, world.pi_ref);
    const double chi = chi_square(q, p);
    // density-ratio second moment, enumerated independently
    double second_moment = 0.0;
    for (std::size_t i = 0; i < p.mass.size(); ++i) {
      const double pm = p.mass.data()[i];
      if (pm > 0.0) {
        const double w = q.mass.data()[i] / pm;
        second_moment += w * w * pm;
      }
    }
    CHECK(close_rel(second_moment, 1.0 + chi, 1e-9));
  }
}

TEST_CASE("chi-square change of measure on random bounded functions") {
  Rng frng(777);
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const TabularWorld world = build_world(4, 5, parse_world_gen("dirichlet(0.7)"), seed);
    const Policy policy = policy_from_logits(testutil::random_logits(4, 5, 1.5, seed + 2));
    const JointDist q = joint(world.rho, policy.probs);
    const JointDist p = joint(world.rho_label, world.pi_ref);
    const double amplification = std::sqrt(1.0 + chi_square(q, p));
    double mean_q = 0.0;
    double second_p = 0.0;
    for (std::size_t i = 0; i < p.mass.size(); ++i) {
      const double f = 2.0 * frng.uniform01() - 1.0;
      mean_q += q.mass.data()[i] * f;
      second_p += p.mass.data()[i] * f * f;
    }
    CHECK(std::fabs(mean_q) <= amplification * std::sqrt(second_p) * (1.0 + 1e-9) + 1e-15);
  }
}

TEST_CASE("reward_train_error examples") {
  const TabularWorld world = build_world(3, 4, parse_world_gen("dirichlet(1.0)"), 5);
  RewardModel perfect{world.r_star};
  CHECK(reward_train_error(world, perfect) == 0.0);

  // constant error 0.1 with no clamping: rescale r_star into [0, 0.9]
  TabularWorld squeezed = world;
  for (std::size_t i = 0; i < squeezed.r_star.size(); ++i) squeezed.r_star.data()[i] *= 0.9;
  RewardModel offset{squeezed.r_star};
  for (std::size_t i = 0; i < offset.r_hat.size(); ++i) offset.r_hat.data()[i] += 0.1;
  CHECK(reward_train_error(squeezed, offset) == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("reward_train_error: hand enumeration on a 2x2 table") {
  TabularWorld world;
  world.n_prompts = 2;
  world.n_responses = 2;
  world.rho = {0.5, 0.5};
  world.rho_label = {0.5, 0.5};
  world.pi_ref = Matrix(2, 2, 0.5);  // D_train uniform over four cells
  world.r_star = Matrix(2, 2);
  world.r_star(0, 0) = 0.0;
  world.r_star(0, 1) = 0.5;
  world.r_star(1, 0) = 1.0;
  world.r_star(1, 1) = 0.25;
  validate_world(world);
  RewardModel model;
  model.r_hat = Matrix(2, 2);
  model.r_hat(0, 0) = 0.2;
  model.r_hat(0, 1) = 0.5;
  model.r_hat(1, 0) = 0.7;
  model.r_hat(1, 1) = 0.45;
  const double expected =
      (0.2 * 0.2 + 0.0 + 0.3 * 0.3 + 0.2 * 0.2) / 4.0;  // mean of squared errors
  CHECK(reward_train_error(world, model) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("gaussian_kl: identical Gaussians") {
  const Matrix sigma = random_spd(3, 9);
  const Vector mu = {0.3, -1.0, 2.0};
  CHECK(std::fabs(gaussian_kl(mu, sigma, mu, sigma)) <= 1e-10);
}

TEST_CASE("gaussian_kl: unit-covariance mean offset") {
  const Vector mu_q = {1.0, 0.0};
  const Vector mu_p = {0.0, 0.0};
  CHECK(gaussian_kl(mu_q, identity(2), mu_p, identity(2)) ==
        doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("gaussian_kl: variance-two against unit, d = 1") {
  Matrix two(1, 1, 2.0);
  CHECK(gaussian_kl({0.0}, two, {0.0}, identity(1)) ==
        doctest::Approx(0.15342640972002735).epsilon(1e-12));
}

TEST_CASE("gaussian_kl is nonnegative on random SPD pairs") {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    const std::size_t d = 1 + seed % 6;
    Rng rng(seed + 31);
    Vector mu_q(d), mu_p(d);
    for (auto& v : mu_q) v = rng.normal();
    for (auto& v : mu_p) v = rng.normal();
    const double kl =
        gaussian_kl(mu_q, random_spd(d, seed * 2 + 1), mu_p, random_spd(d, seed * 2 + 2));
    CHECK(kl >= -1e-12);
  }
}

TEST_CASE("gaussian_kl rejects non-SPD covariances") {
  Matrix bad(2, 2, 0.0);
  bad(0, 0) = 1.0;
  bad(1, 1) = -1.0;
  CHECK_THROWS_WITH_AS(gaussian_kl({0, 0}, bad, {0, 0}, identity(2)),
                       "covariance not positive definite", Error);
  CHECK_THROWS_WITH_AS(gaussian_kl({0, 0}, identity(2), {0, 0}, bad),
                       "covariance not positive definite", Error);
}

TEST_CASE("reward shift bound holds on random instances") {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const TabularWorld world = build_world(4, 6, parse_world_gen("dirichlet(0.5)"), seed);
    const Policy policy = policy_from_logits(testutil::random_logits(4, 6, 2.0, seed + 3));
    RewardModel model;
    model.r_hat = testutil::random_reward(4, 6, seed + 4);
    const double j_phi =
        population_objective(world, policy, model.r_hat, {0.5, kUnclipped}).value;
    const double j_star =
        population_objective(world, policy, world.r_star, {0.5, kUnclipped}).value;
    const double bound = coverage(world, policy).c_cov * std::sqrt(reward_train_error(world, model));
    CHECK(std::fabs(j_phi - j_star) <= bound + 1e-9);
  }
}

TEST_CASE("reward shift bound is tight for constant error with no shift") {
  TabularWorld world = build_world(4, 5, parse_world_gen("dirichlet(1.0)"), 12);
  world.rho_label = world.rho;  // D_theta = D_train once the policy matches pi_ref
  for (std::size_t i = 0; i < world.r_star.size(); ++i) world.r_star.data()[i] *= 0.9;
  Matrix logits(4, 5);
  for (std::size_t x = 0; x < 4; ++x)
    for (std::size_t y = 0; y < 5; ++y) logits(x, y) = std::log(world.pi_ref(x, y));
  const Policy policy = policy_from_logits(logits);
  RewardModel model{world.r_star};
  for (std::size_t i = 0; i < model.r_hat.size(); ++i) model.r_hat.data()[i] += 0.05;

  const double j_phi = population_objective(world, policy, model.r_hat, {0.3, kUnclipped}).value;
  const double j_star = population_objective(world, policy, world.r_star, {0.3, kUnclipped}).value;
  const double bound =
      coverage(world, policy).c_cov * std::sqrt(reward_train_error(world, model));
  CHECK(close_rel(std::fabs(j_phi - j_star), bound, 1e-9));
}
