#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rlhflab/calibration.hpp"
#include "rlhflab/error.hpp"
#include "rlhflab/rng.hpp"
#include "test_util.hpp"

using namespace rlhflab;

namespace {

const DiscreteLaw kTwoPointLaw{{0.1, 5.0}, {0.9, 0.1}};

// grid-search oracle for the K allocation proxies
double grid_argmin(double lo, double hi, int points, const std::function<double(double)>& f) {
  double best_k = lo;
  double best_value = f(lo);
  for (int g = 1; g < points; ++g) {
    const double k = lo + (hi - lo) * static_cast<double>(g) / (points - 1);
    const double value = f(k);
    if (value < best_value) {
      best_value = value;
      best_k = k;
    }
  }
  return best_k;
}

DiscreteLaw random_law(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t atoms = 1 + static_cast<std::size_t>(rng.uniform01() * 19.0);
  std::vector<double> values(atoms);
  for (auto& v : values) v = std::fabs(3.0 * rng.normal());
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  Vector masses(values.size());
  rng.dirichlet(1.0, masses);
  return {values, masses};
}

}  // namespace

TEST_CASE("alpha: frozen value, limit, clip-everything threshold") {
  CHECK(alpha({100, 1, 0.05}) == doctest::Approx(0.29604143746015968).epsilon(1e-13));
  // K large leaves the first addend
  CHECK(alpha({100, 1000000000, 0.05}) ==
        doctest::Approx(std::sqrt(std::log(80.0) / 200.0)).epsilon(1e-4));
  // tiny budgets land in the clip-everything regime
  CHECK(2.0 * alpha({4, 1, 0.1}) >= 1.0);
  CHECK(2.0 * alpha({4000, 4, 0.1}) < 1.0);
}

TEST_CASE("b_curve: beta 0 is flat at alpha, tau 0 endpoint, unsorted grid rejected") {
  const TabularWorld world = build_world(5, 8, parse_world_gen("dirichlet(0.5)"), 3);
  const Policy policy = policy_from_logits(testutil::random_logits(5, 8, 2.0, 4));
  const SampleBudget budget{50, 4, 0.1};
  const double a = alpha(budget);

  const auto flat = b_curve(world, policy, 0.0, budget, {0.0, 0.5, 1.0, 2.0});
  for (const auto& [tau, value] : flat) CHECK(value == doctest::Approx(a).epsilon(1e-13));

  const auto curve = b_curve(world, policy, 0.7, budget, {0.0, 1.0});
  CHECK(curve[0].second ==
        doctest::Approx(a + 0.7 * truncation_mass(world, policy, 0.0)).epsilon(1e-12));

  CHECK_THROWS_WITH_AS(b_curve(world, policy, 0.7, budget, {1.0, 0.5}), "unsorted tau grid",
                       Error);
}

TEST_CASE("optimal tau on the two-point |ell| law") {
  // P(>5) = 0 <= 0.05 <= P(>=5) = 0.1
  CHECK(optimal_tau_of_law(kTwoPointLaw, 0.05) == 5.0);
  CHECK(optimal_tau_of_law(kTwoPointLaw, 0.5) == 0.1);
  CHECK(optimal_tau_of_law(kTwoPointLaw, 1.0) == 0.0);
  CHECK(optimal_tau_of_law(kTwoPointLaw, 1.7) == 0.0);
}

TEST_CASE("two-sided condition holds exactly on 200 random discrete laws") {
  Rng rng(12);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const DiscreteLaw law = random_law(seed);
    const double two_alpha = rng.uniform(0.01, 0.99);
    const double tau_star = optimal_tau_of_law(law, two_alpha);
    CHECK(law_tail_gt(law, tau_star) <= two_alpha);
    CHECK(law_tail_ge(law, tau_star) >= two_alpha);
  }
}

TEST_CASE("quantile minimises the B objective over a fine grid") {
  Rng rng(13);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const DiscreteLaw law = random_law(seed + 500);
    const double two_alpha = rng.uniform(0.01, 0.99);
    const double beta = rng.uniform(0.01, 5.0);
    const double a = two_alpha / 2.0;
    const auto b_of = [&](double tau) {
      return (1.0 + 2.0 * beta * tau) * a + beta * law_truncation(law, tau);
    };
    const double tau_star = optimal_tau_of_law(law, two_alpha);
    const double top = law.values.back();
    double grid_min = b_of(tau_star);
    for (int g = 0; g < 1000; ++g)
      grid_min = std::min(grid_min, b_of(top * static_cast<double>(g) / 999.0));
    CHECK(b_of(tau_star) <= grid_min + 1e-9);
  }
}

TEST_CASE("optimal tau against the b_curve grid argmin on random worlds") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const TabularWorld world = build_world(5, 8, parse_world_gen("dirichlet(0.5)"), seed);
    const Policy policy = policy_from_logits(testutil::random_logits(5, 8, 2.0, seed + 21));
    const SampleBudget budget{400, 4, 0.1};
    const double tau_star = optimal_tau(world, policy, budget);

    const double top = max_abs_log_ratio(world, policy);
    std::vector<double> grid(400);
    for (std::size_t g = 0; g < grid.size(); ++g)
      grid[g] = top * static_cast<double>(g) / (grid.size() - 1);
    const auto curve = b_curve(world, policy, 0.8, budget, grid);
    double best = curve[0].second;
    double best_tau = curve[0].first;
    for (const auto& [tau, value] : curve) {
      if (value < best) {
        best = value;
        best_tau = tau;
      }
    }
    const double step = top / static_cast<double>(grid.size() - 1);
    CHECK(std::fabs(best_tau - tau_star) <= step + 1e-12);
  }
}

TEST_CASE("monotone response: richer budgets never decrease the threshold") {
  const TabularWorld world = build_world(6, 10, parse_world_gen("dirichlet(0.5)"), 40);
  const Policy policy = policy_from_logits(testutil::random_logits(6, 10, 2.0, 41));
  double previous = -1.0;
  for (std::size_t n : {20UL, 50UL, 200UL, 1000UL, 10000UL}) {
    const double tau_star = optimal_tau(world, policy, {n, 4, 0.1});
    CHECK(tau_star >= previous);
    previous = tau_star;
  }
}

TEST_CASE("empirical tau: calibration rule examples") {
  CHECK(empirical_tau({3.0, 1.0, 2.0}, 0.6) == 0.0);  // 2 alpha >= 1
  const std::vector<double> deciles{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  CHECK(empirical_tau(deciles, 0.1) == 8.0);  // 2 alpha = 0.2
  CHECK(empirical_tau({4.2, 4.2, 4.2, 4.2}, 0.3) == 4.2);
  CHECK_THROWS_AS(empirical_tau({}, 0.1), Error);
}

TEST_CASE("budget under uniform cost") {
  const BudgetChoice choice = budget_uniform({500.0, 3.0, 1.0});
  CHECK(choice.k_star == 1.0);
  CHECK(choice.k_rounded == 1);
  CHECK(choice.n_star == 500);
  const BudgetChoice doubled = budget_uniform({1000.0, 3.0, 1.0});
  CHECK(doubled.n_star == 1000);
}

TEST_CASE("budget under prefill/decode cost: spot ratios") {
  const BudgetChoice eight = budget_prefill_decode({1000.0, 8.0, 1.0});
  CHECK(eight.k_star == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(eight.k_rounded == 4);
  CHECK(eight.n_star == static_cast<long>(std::floor(1000.0 / (8.0 + 4.0))));

  CHECK(budget_prefill_decode({100.0, 2.0, 2.0}).k_star == 1.0);
  CHECK(budget_prefill_decode({1000.0, 27.0, 1.0}).k_star == doctest::Approx(9.0).epsilon(1e-12));
  // below ratio 1 the max clamps at 1
  CHECK(budget_prefill_decode({100.0, 1.0, 4.0}).k_star == 1.0);
}

TEST_CASE("prefill/decode closed form matches the grid minimiser of F") {
  Rng rng(71);
  for (int trial = 0; trial < 100; ++trial) {
    const double c_decode = rng.uniform(0.1, 5.0);
    const double ratio = std::exp(rng.uniform(std::log(0.1), std::log(1000.0)));
    const double c_prefill = ratio * c_decode;
    const BudgetChoice choice = budget_prefill_decode({1e6, c_prefill, c_decode});

    const auto f_proxy = [&](double k) {
      const double root = 1.0 + 1.0 / std::sqrt(k);
      return (c_prefill + k * c_decode) * root * root;
    };
    const double hi = std::max(4.0 * choice.k_star, 50.0);
    const double step = (hi - 1.0) / 9999.0;
    const double grid_best = grid_argmin(1.0, hi, 10000, f_proxy);
    CHECK(std::fabs(grid_best - choice.k_star) <= step + 1e-9);
  }
}

TEST_CASE("variance decomposition: degenerate regimes") {
  // point-mass prompt distribution: no prompt-level variance
  TabularWorld world;
  world.n_prompts = 2;
  world.n_responses = 3;
  world.rho = {1.0, 0.0};
  world.rho_label = {0.5, 0.5};
  world.pi_ref = Matrix(2, 3, 1.0 / 3.0);
  world.r_star = testutil::random_reward(2, 3, 9);
  validate_world(world);
  const Policy policy = policy_from_logits(testutil::random_logits(2, 3, 1.0, 10));
  const VarianceDecomposition point_prompt =
      variance_decomposition(world, policy, world.r_star, {0.3, 1.0});
  CHECK(point_prompt.sigma_prompt_sq <= 1e-15);

  // near-point-mass policy rows: no rollout-level variance
  TabularWorld wide = build_world(3, 4, parse_world_gen("dirichlet(1.0)"), 11);
  Matrix steep(3, 4, -60.0);
  for (std::size_t x = 0; x < 3; ++x) steep(x, x) = 60.0;
  const Policy deterministic = policy_from_logits(steep);
  const VarianceDecomposition point_rollout =
      variance_decomposition(wide, deterministic, wide.r_star, {0.0, 1.0});
  CHECK(point_rollout.sigma_rollout_sq <= 1e-12);

  CHECK_THROWS_AS(variance_decomposition(wide, deterministic, wide.r_star, {0.3, kUnclipped}),
                  Error);
}

TEST_CASE("variance decomposition matches the full-outcome brute force on a 2x2 world") {
  TabularWorld world;
  world.n_prompts = 2;
  world.n_responses = 2;
  world.rho = {0.3, 0.7};
  world.rho_label = {0.5, 0.5};
  world.pi_ref = Matrix(2, 2, 0.5);
  world.r_star = Matrix(2, 2);
  world.r_star(0, 0) = 0.9;
  world.r_star(0, 1) = 0.1;
  world.r_star(1, 0) = 0.4;
  world.r_star(1, 1) = 0.6;
  validate_world(world);
  const Policy policy = policy_from_logits(testutil::random_logits(2, 2, 1.5, 12));
  const ClipPenaltySpec spec{0.5, 0.8};

  // brute force over all four outcomes
  double mean = 0.0, second = 0.0;
  double prompt_means[2] = {0.0, 0.0};
  double prompt_seconds[2] = {0.0, 0.0};
  for (std::size_t x = 0; x < 2; ++x)
    for (std::size_t y = 0; y < 2; ++y) {
      const double ell = std::log(policy.probs(x, y)) - std::log(world.pi_ref(x, y));
      const double z =
          world.r_star(x, y) - spec.beta * std::min(std::max(ell, -spec.tau), spec.tau);
      prompt_means[x] += policy.probs(x, y) * z;
      prompt_seconds[x] += policy.probs(x, y) * z * z;
      mean += world.rho[x] * policy.probs(x, y) * z;
      second += world.rho[x] * policy.probs(x, y) * z * z;
    }
  double rollout = 0.0, prompt = 0.0;
  for (std::size_t x = 0; x < 2; ++x) {
    rollout += world.rho[x] * (prompt_seconds[x] - prompt_means[x] * prompt_means[x]);
    prompt += world.rho[x] * (prompt_means[x] - mean) * (prompt_means[x] - mean);
  }

  const VarianceDecomposition value = variance_decomposition(world, policy, world.r_star, spec);
  CHECK(value.sigma_prompt_sq == doctest::Approx(prompt).epsilon(1e-12));
  CHECK(value.sigma_rollout_sq == doctest::Approx(rollout).epsilon(1e-12));
  // law of total variance
  CHECK(value.sigma_prompt_sq + value.sigma_rollout_sq ==
        doctest::Approx(second - mean * mean).epsilon(1e-9));
}

TEST_CASE("law of total variance on random instances") {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    const TabularWorld world = build_world(5, 7, parse_world_gen("dirichlet(0.5)"), seed);
    const Policy policy = policy_from_logits(testutil::random_logits(5, 7, 2.0, seed + 5));
    const Matrix reward = testutil::random_reward(5, 7, seed + 6);
    Rng rng(seed + 7);
    const ClipPenaltySpec spec{rng.uniform(0.0, 1.5), rng.uniform(0.1, 4.0)};
    const VarianceDecomposition value = variance_decomposition(world, policy, reward, spec);

    double mean = 0.0, second = 0.0;  // total variance, enumerated independently
    for (std::size_t x = 0; x < world.n_prompts; ++x)
      for (std::size_t y = 0; y < world.n_responses; ++y) {
        const double ell = std::log(policy.probs(x, y)) - std::log(world.pi_ref(x, y));
        const double z =
            reward(x, y) - spec.beta * std::min(std::max(ell, -spec.tau), spec.tau);
        const double mass = world.rho[x] * policy.probs(x, y);
        mean += mass * z;
        second += mass * z * z;
      }
    CHECK(testutil::close_rel(value.sigma_prompt_sq + value.sigma_rollout_sq,
                              second - mean * mean, 1e-9));
  }
}

TEST_CASE("variance-aware budget rule") {
  // ratio 4 and variance ratio 9 give K* = 6
  const BudgetChoice spot = budget_variance({1000.0, 4.0, 1.0}, {1.0, 9.0});
  CHECK(spot.k_star == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(spot.k_rounded == 6);

  CHECK(budget_variance({100.0, 4.0, 1.0}, {2.0, 0.0}).k_star == 1.0);
  CHECK(budget_variance({100.0, 2.0, 2.0}, {3.0, 3.0}).k_star == 1.0);

  const BudgetChoice advisory = budget_variance({100.0, 4.0, 1.0}, {0.0, 2.0});
  CHECK(advisory.prompt_variance_zero);
  CHECK(advisory.n_star == 1);
  CHECK(advisory.k_rounded == 96);  // floor((100 - 4) / 1)
}

TEST_CASE("variance closed form matches the grid minimiser of G") {
  Rng rng(72);
  for (int trial = 0; trial < 100; ++trial) {
    const double c_decode = rng.uniform(0.1, 5.0);
    const double c_prefill = c_decode * std::exp(rng.uniform(std::log(0.1), std::log(100.0)));
    const double sigma_prompt = rng.uniform(0.01, 2.0);
    const double sigma_rollout = rng.uniform(0.0, 2.0);
    const BudgetChoice choice =
        budget_variance({1e6, c_prefill, c_decode}, {sigma_prompt, sigma_rollout});

    const auto g_proxy = [&](double k) {
      return (c_prefill + k * c_decode) * (sigma_prompt + sigma_rollout / k);
    };
    const double hi = std::max(4.0 * choice.k_star, 50.0);
    const double step = (hi - 1.0) / 9999.0;
    const double grid_best = grid_argmin(1.0, hi, 10000, g_proxy);
    CHECK(std::fabs(grid_best - choice.k_star) <= step + 1e-9);
  }
}
