#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "snapsurv/evaluate.hpp"
#include "snapsurv/simulate.hpp"
#include "test_support.hpp"

using namespace snapsurv;

TEST_CASE("inverse transform hits the survival quantiles") {
  // S(1; 1) = exp(-1), so V = exp(-1) must map back to T = 1
  CHECK(failure_time_from_uniform(1.0, std::exp(-1.0)) == Catch::Approx(1.0).margin(1e-12));
  CHECK(failure_time_from_uniform(2.0, std::exp(-1.0)) == Catch::Approx(0.5).margin(1e-12));
  CHECK(failure_time_from_uniform(1.0, std::exp(-4.0)) == Catch::Approx(2.0).margin(1e-12));
}

TEST_CASE("censoring truncates the recorded time") {
  SimConfig cfg;
  cfg.n_individuals = 2000;
  cfg.seed = 5;
  auto pop = simulate_population(cfg);
  REQUIRE(pop.truth.size() == 2000);
  for (std::size_t i = 0; i < pop.truth.size(); ++i) {
    const auto& t = pop.truth[i];
    const auto& ind = pop.dataset.individuals[i];
    if (t.true_failure_time <= t.censor_time) {
      CHECK(ind.event);
      CHECK(ind.recorded_time == t.true_failure_time);
    } else {
      CHECK_FALSE(ind.event);
      CHECK(ind.recorded_time == t.censor_time);
    }
    // two anchor snapshots encode the exact usage line
    REQUIRE(ind.snapshots.size() == 2);
    CHECK(ind.snapshots[0].time == 0.0);
    CHECK(ind.snapshots[0].covariates[0] == 0.0);
    CHECK(ind.snapshots[1].time == ind.recorded_time);
    CHECK(ind.snapshots[1].covariates[0] ==
          Catch::Approx(t.usage * ind.recorded_time).margin(1e-12));
  }
}

TEST_CASE("simulation is deterministic in the seed") {
  SimConfig cfg;
  cfg.n_individuals = 50;
  cfg.seed = 99;
  auto a = simulate_population(cfg);
  auto b = simulate_population(cfg);
  for (std::size_t i = 0; i < a.truth.size(); ++i) {
    CHECK(a.truth[i].usage == b.truth[i].usage);
    CHECK(a.truth[i].true_failure_time == b.truth[i].true_failure_time);
    CHECK(a.truth[i].censor_time == b.truth[i].censor_time);
  }
  cfg.seed = 100;
  auto c = simulate_population(cfg);
  CHECK(a.truth[0].usage != c.truth[0].usage);
}

TEST_CASE("true survival functions match the closed forms") {
  CHECK(true_survival(0.5, 1.0, 1.0) == Catch::Approx(std::exp(-0.25)));
  CHECK(true_survival(0.5, 1.0, 1.0) == Catch::Approx(0.7788).margin(1e-4));
  CHECK(true_survival(0.0, 0.7, 2.0) == 1.0);
  CHECK(true_survival(3.0, 0.7, 0.0) == 1.0);  // zero usage never fails
  CHECK_THROWS_WITH(true_survival(1.0, 0.0, 1.0),
                    Catch::Matchers::ContainsSubstring("true_population_survival"));

  // ratio definition: S^r(t) = S(t + t0)/S(t0)
  CHECK(true_remaining_survival(0.0, 0.6, 1.3) == Catch::Approx(1.0));
  CHECK(true_remaining_survival(1.0, 1.0, 1.0) == Catch::Approx(std::exp(-3.0)).margin(1e-12));
  CHECK(true_remaining_survival(1.0, 1.0, 1.0) == Catch::Approx(0.0498).margin(1e-4));
  double prev = 1.0;
  for (double t = 0.0; t <= 2.0; t += 0.05) {
    const double s = true_remaining_survival(t, 0.5, 1.2);
    CHECK(s <= prev);
    prev = s;
  }
}

TEST_CASE("population survival agrees with a quadrature oracle") {
  // oracle: (1/4) integral_1^5 exp(-(u t)^2) du on a fine Simpson grid
  auto oracle = [](double t) {
    const int n = 4000;  // even
    const double h = 4.0 / n;
    double acc = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double u = 1.0 + h * i;
      const double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
      acc += w * std::exp(-(u * t) * (u * t));
    }
    return acc * h / 3.0 / 4.0;
  };
  CHECK(true_population_survival(0.0) == 1.0);
  for (double t : {0.05, 0.2, 0.5, 1.0, 2.0}) {
    CHECK(true_population_survival(t) == Catch::Approx(oracle(t)).margin(1e-9));
  }
  CHECK(true_population_survival(0.5) == Catch::Approx(0.2123).margin(1e-4));
  CHECK(true_population_survival(50.0) < 1e-12);
}

TEST_CASE("usage ratio x(t)/t passes a KS test against Uniform(1,5)") {
  SimConfig cfg;
  cfg.n_individuals = 10000;
  cfg.seed = 21;
  auto pop = simulate_population(cfg);
  std::vector<double> u_values;
  for (const auto& ind : pop.dataset.individuals) {
    // x(tau)/tau recovers u exactly for the anchor encoding
    u_values.push_back(ind.snapshots[1].covariates[0] / ind.snapshots[1].time);
  }
  std::sort(u_values.begin(), u_values.end());
  double d_stat = 0.0;
  const double n = static_cast<double>(u_values.size());
  for (std::size_t i = 0; i < u_values.size(); ++i) {
    const double f = std::clamp((u_values[i] - 1.0) / 4.0, 0.0, 1.0);
    d_stat = std::max(d_stat, std::abs(f - static_cast<double>(i + 1) / n));
    d_stat = std::max(d_stat, std::abs(f - static_cast<double>(i) / n));
  }
  // 1% critical value for large n
  CHECK(d_stat < 1.628 / std::sqrt(n));
}

TEST_CASE("empirical survival of a narrow usage band tracks exp(-(3t)^2)") {
  SimConfig cfg;
  cfg.n_individuals = 10000;
  cfg.seed = 8;
  auto pop = simulate_population(cfg);
  std::vector<double> times;
  for (const auto& t : pop.truth) {
    if (t.usage >= 2.9 && t.usage <= 3.1) times.push_back(t.true_failure_time);
  }
  REQUIRE(times.size() > 200);
  std::sort(times.begin(), times.end());
  const double n = static_cast<double>(times.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double expected = std::exp(-9.0 * times[i] * times[i]);
    const double empirical = 1.0 - static_cast<double>(i + 1) / n;
    worst = std::max(worst, std::abs(expected - empirical));
  }
  CHECK(worst < 0.05);
}

TEST_CASE("censoring fraction is stable across seeds") {
  std::vector<double> fractions;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SimConfig cfg;
    cfg.n_individuals = 10000;
    cfg.seed = seed;
    auto pop = simulate_population(cfg);
    std::size_t censored = 0;
    for (const auto& ind : pop.dataset.individuals) censored += ind.event ? 0 : 1;
    fractions.push_back(static_cast<double>(censored) / 10000.0);
  }
  const double mean =
      std::accumulate(fractions.begin(), fractions.end(), 0.0) / static_cast<double>(fractions.size());
  for (double f : fractions) CHECK(std::abs(f - mean) < 0.02);
}

TEST_CASE("truth table round-trips through its CSV emitter") {
  SimConfig cfg;
  cfg.n_individuals = 10;
  cfg.seed = 3;
  auto pop = simulate_population(cfg);
  testsupport::TempDir tmp("truth");
  save_truth(pop.truth, tmp.file("truth.csv"));
  auto table = csv::read_file(tmp.file("truth.csv"));
  REQUIRE(table.header == std::vector<std::string>{"id", "u", "true_T", "censor_time"});
  REQUIRE(table.rows.size() == 10);
  CHECK(csv::parse_double(table.rows[0][1], "u") == pop.truth[0].usage);
}
