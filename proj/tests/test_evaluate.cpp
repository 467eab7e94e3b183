#include <catch2/catch_amalgamated.hpp>

#include "snapsurv/evaluate.hpp"
#include "snapsurv/resample.hpp"
#include "snapsurv/simulate.hpp"
#include "test_support.hpp"

using namespace snapsurv;
using testsupport::constant_energy_model;

namespace {

std::vector<std::pair<double, bool>> obs3() {
  return {{1.0, true}, {2.0, false}, {3.0, true}};
}

FlatSample flat(double target, bool event, double t0, double x) {
  FlatSample s;
  s.target_time = target;
  s.event = event;
  s.snapshot_time = t0;
  s.covariates = {x};
  return s;
}

}  // namespace

TEST_CASE("product-limit estimator on the hand-computed fixture") {
  auto obs = obs3();
  auto km = kaplan_meier(obs);
  // (1 - 1/3) at t=1, censored at 2, (1 - 1/1) at t=3
  CHECK(km.at(0.5) == 1.0);
  CHECK(km.at(1.0) == Catch::Approx(2.0 / 3.0).margin(1e-12));
  CHECK(km.at(2.0) == Catch::Approx(2.0 / 3.0).margin(1e-12));
  CHECK(km.at(2.9) == Catch::Approx(2.0 / 3.0).margin(1e-12));
  CHECK(km.at(3.0) == Catch::Approx(0.0).margin(1e-12));
  CHECK(km.left_limit(1.0) == 1.0);
  CHECK(km.left_limit(3.0) == Catch::Approx(2.0 / 3.0).margin(1e-12));
}

TEST_CASE("censoring estimate inverts the event flags") {
  auto obs = obs3();
  auto g = censoring_kaplan_meier(obs);
  // single censoring event at t=2 with 2 at risk
  CHECK(g.at(1.9) == 1.0);
  CHECK(g.at(2.0) == Catch::Approx(0.5).margin(1e-12));
  CHECK(g.left_limit(2.0) == 1.0);
}

TEST_CASE("KM without censoring is the empirical survival function") {
  auto rng = make_rng(4);
  std::vector<std::pair<double, bool>> obs;
  for (int i = 0; i < 40; ++i) obs.emplace_back(0.1 + uniform01(rng) * 3.0, true);
  auto km = kaplan_meier(obs);
  std::vector<double> times;
  for (auto& [t, e] : obs) times.push_back(t);
  std::sort(times.begin(), times.end());
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double expected = 1.0 - static_cast<double>(i + 1) / 40.0;
    CHECK(km.at(times[i]) == Catch::Approx(expected).margin(1e-12));
  }
}

TEST_CASE("ties are aggregated") {
  std::vector<std::pair<double, bool>> obs = {{1.0, true}, {1.0, true}, {2.0, true}, {2.0, false}};
  auto km = kaplan_meier(obs);
  CHECK(km.at(1.0) == Catch::Approx(0.5));           // 1 - 2/4
  CHECK(km.at(2.0) == Catch::Approx(0.25));          // * (1 - 1/2)
}

TEST_CASE("quasi log likelihood equals the negated training loss") {
  auto m = constant_energy_model(0.0, 1.0, 257);
  std::vector<FlatSample> samples = {flat(0.5, true, 0.5, 1.0), flat(0.25, false, 0.5, 1.0)};
  CHECK(quasi_log_likelihood(m, samples) ==
        Catch::Approx(-batch_score(m, samples, false).mean_nll).margin(1e-15));
  CHECK(quasi_log_likelihood(m, {samples.begin(), samples.begin() + 1}) ==
        Catch::Approx(0.0).margin(1e-12));
  CHECK(quasi_log_likelihood(m, {samples.begin() + 1, samples.end()}) ==
        Catch::Approx(std::log(0.75)).margin(1e-12));
}

TEST_CASE("single-time resamples make the quasi-likelihood a proper likelihood") {
  // one flat sample per individual: the quasi-log-likelihood must equal the
  // conventional censored log-likelihood computed directly from (tau, delta)
  SimConfig cfg;
  cfg.n_individuals = 60;
  cfg.seed = 13;
  auto pop = simulate_population(cfg);
  SamplingGrid grid{{0.5}};
  auto resampled = homogeneous_resample(pop.dataset, grid).dataset;
  auto samples = flatten(resampled, FlattenMode::TotalLife);
  REQUIRE(!samples.empty());
  for (const auto& s : samples) REQUIRE(s.snapshot_time == 0.5);

  auto rng = make_rng(77);
  auto model = testsupport::random_model(rng, 1, 129, 3.5);

  double direct = 0.0;
  for (const auto& s : samples) {
    const EvalContext ctx = context_of(s);
    direct += s.event ? log_density(model, s.target_time, ctx)
                      : std::log(survival(model, s.target_time, ctx));
  }
  direct /= static_cast<double>(samples.size());
  CHECK(quasi_log_likelihood(model, samples) == Catch::Approx(direct).margin(1e-12));
}

namespace {

SurvivalPredictor constant_predictor(double s_value) {
  return [s_value](const FlatSample&, std::span<const double> ts) {
    return std::vector<double>(ts.size(), s_value);
  };
}

}  // namespace

TEST_CASE("brier curve on the single-sample fixture") {
  // one sample, delta=1, tau=1, S == 0.5, G == 1: both indicator branches
  // contribute exactly 0.25
  std::vector<FlatSample> samples = {flat(1.0, true, 0.5, 1.0)};
  std::vector<std::pair<double, bool>> all_events = {{1.0, true}, {2.0, true}};
  auto g = censoring_kaplan_meier(all_events);  // no censorings: G = 1 everywhere

  std::vector<double> times = {0.5, 1.5};
  auto curve = brier_curve(constant_predictor(0.5), samples, times, g);
  CHECK(curve.skipped_terms == 0);
  CHECK(curve.values[0] == Catch::Approx(0.25).margin(1e-12));  // tau > t: (1 - 0.5)^2
  CHECK(curve.values[1] == Catch::Approx(0.25).margin(1e-12));  // failure term: 0.5^2
}

TEST_CASE("boundary predictors on uncensored data") {
  std::vector<FlatSample> samples = {flat(1.0, true, 0.5, 1.0), flat(2.0, true, 0.5, 1.0)};
  std::vector<std::pair<double, bool>> ev = {{1.0, true}, {2.0, true}};
  auto g = censoring_kaplan_meier(ev);
  std::vector<double> early = {0.5};  // before every tau

  auto ones = brier_curve(constant_predictor(1.0), samples, early, g);
  CHECK(ones.values[0] == Catch::Approx(0.0).margin(1e-12));
  auto zeros = brier_curve(constant_predictor(0.0), samples, early, g);
  CHECK(zeros.values[0] == Catch::Approx(1.0).margin(1e-12));

  // a perfect step predictor at each sample's own tau scores zero everywhere
  SurvivalPredictor step = [](const FlatSample& s, std::span<const double> ts) {
    std::vector<double> out;
    for (double t : ts) out.push_back(t < s.target_time ? 1.0 : 0.0);
    return out;
  };
  for (double t : {0.3, 0.9999, 1.0, 1.5, 2.0, 3.0}) {
    std::vector<double> one_time = {t};
    auto perfect = brier_curve(step, samples, one_time, g);
    CHECK(perfect.values[0] == Catch::Approx(0.0).margin(1e-12));
  }
}

TEST_CASE("IPCW weighting divides by G") {
  auto m = constant_energy_model(0.0, 2.0, 257);
  // two individuals, one censored early; G drops to 1/2 at t=0.5
  std::vector<FlatSample> samples = {flat(1.0, true, 0.2, 1.0)};
  std::vector<std::pair<double, bool>> outcome = {{0.5, false}, {1.0, true}};
  auto g = censoring_kaplan_meier(outcome);
  CHECK(g.at(0.75) == Catch::Approx(0.5));

  std::vector<double> times = {0.75};
  auto curve = brier_curve(m, samples, times, g);
  const double s_pred = survival(m, 0.75, context_of(samples[0]));
  CHECK(curve.values[0] == Catch::Approx((1.0 - s_pred) * (1.0 - s_pred) / 0.5).margin(1e-12));
}

TEST_CASE("brier terms with zero censoring weight are skipped and counted") {
  auto m = constant_energy_model(0.0, 2.0, 257);
  std::vector<FlatSample> samples = {flat(1.5, true, 0.2, 1.0)};
  std::vector<std::pair<double, bool>> outcome = {{1.0, false}};  // G hits 0 at t=1
  auto g = censoring_kaplan_meier(outcome);
  CHECK(g.at(1.0) == 0.0);
  std::vector<double> times = {1.2};
  auto curve = brier_curve(m, samples, times, g);
  CHECK(curve.values[0] == 0.0);
  CHECK(curve.skipped_terms == 1);
}

TEST_CASE("KM-baseline brier curve stays under the sanity ceiling") {
  // predicting the population Kaplan-Meier for everyone is the classic
  // no-covariate baseline; its Brier score sits near the 0.25 worst case of
  // a calibrated coin plus IPCW noise
  SimConfig cfg;
  cfg.n_individuals = 1000;
  cfg.seed = 99;
  auto pop = simulate_population(cfg);
  std::vector<std::pair<double, bool>> outcome;
  double tau90 = 0.0;
  std::vector<double> taus;
  for (const auto& ind : pop.dataset.individuals) {
    outcome.emplace_back(ind.recorded_time, ind.event);
    taus.push_back(ind.recorded_time);
  }
  std::sort(taus.begin(), taus.end());
  tau90 = taus[static_cast<std::size_t>(0.9 * taus.size())];

  auto censor_km = censoring_kaplan_meier(outcome);

  SamplingGrid grid{{0.2, 0.5, 0.8}};
  auto flat = flatten(homogeneous_resample(pop.dataset, grid).dataset, FlattenMode::TotalLife);
  REQUIRE(flat.size() > 500);

  // KM fitted on the flat targets themselves: the calibrated no-covariate
  // baseline for this (survivor-weighted) sample
  std::vector<std::pair<double, bool>> flat_outcome;
  for (const auto& s : flat) flat_outcome.emplace_back(s.target_time, s.event);
  auto pop_km = kaplan_meier(flat_outcome);
  SurvivalPredictor km_predictor = [&pop_km](const FlatSample&, std::span<const double> ts) {
    std::vector<double> out;
    for (double t : ts) out.push_back(pop_km.at(t));
    return out;
  };
  std::vector<double> times;
  for (int i = 0; i < 40; ++i) times.push_back(tau90 * i / 39.0);
  auto curve = brier_curve(km_predictor, flat, times, censor_km);
  for (double v : curve.values) {
    CHECK(v >= 0.0);
    CHECK(v < 0.30);  // 0.25 plus IPCW inflation
  }
}

TEST_CASE("integrated brier score") {
  SECTION("constant curve integrates to its value") {
    std::vector<double> t = {0.0, 0.5, 1.0, 1.5, 2.0};
    std::vector<double> v(5, 0.125);
    CHECK(integrated_brier(t, v, 2.0) == Catch::Approx(0.125).margin(1e-15));
  }
  SECTION("linear ramp integrates to half its peak") {
    std::vector<double> t, v;
    for (int i = 0; i <= 10; ++i) {
      t.push_back(0.3 * i);
      v.push_back(static_cast<double>(i) / 10.0);
    }
    CHECK(integrated_brier(t, v, 3.0) == Catch::Approx(0.5).margin(1e-12));
  }
  SECTION("refinement changes a smooth curve by little") {
    auto curve_at = [](int n) {
      std::vector<double> t, v;
      for (int i = 0; i <= n; ++i) {
        const double x = 2.0 * i / n;
        t.push_back(x);
        v.push_back(x * std::exp(-x));
      }
      return integrated_brier(t, v, 2.0);
    };
    CHECK(std::abs(curve_at(100) - curve_at(200)) < 1e-3);
  }
  SECTION("a curve not covering the horizon is rejected") {
    std::vector<double> t = {0.5, 1.0};
    std::vector<double> v = {0.1, 0.1};
    CHECK_THROWS(integrated_brier(t, v, 2.0));
  }
}
