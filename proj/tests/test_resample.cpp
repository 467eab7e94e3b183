#include <catch2/catch_amalgamated.hpp>

#include "snapsurv/resample.hpp"
#include "test_support.hpp"

using namespace snapsurv;

namespace {

IndividualRecord two_point_record(double t0, double x0, double t1, double x1, double tau) {
  IndividualRecord ind;
  ind.id = "i";
  ind.recorded_time = tau;
  ind.snapshots = {Snapshot{t0, {x0}}, Snapshot{t1, {x1}}};
  return ind;
}

}  // namespace

TEST_CASE("linear interpolation between bracketing snapshots") {
  auto ind = two_point_record(1.0, 2.0, 3.0, 6.0, 3.0);
  auto mid = interpolate_usage(ind, 2.0);
  REQUIRE(mid);
  CHECK((*mid)[0] == Catch::Approx(4.0));

  auto knot = interpolate_usage(ind, 1.0);
  REQUIRE(knot);
  CHECK((*knot)[0] == 2.0);  // knot values are exact

  CHECK_FALSE(interpolate_usage(ind, 0.5));  // outside the snapshot hull
  CHECK_FALSE(interpolate_usage(ind, 3.5));

  IndividualRecord empty;
  empty.recorded_time = 1.0;
  CHECK_FALSE(interpolate_usage(empty, 0.5));
}

TEST_CASE("interpolation reproduces affine usage to near machine precision") {
  auto rng = make_rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const double a = uniform_in(rng, -3.0, 3.0);
    const double b = uniform_in(rng, -2.0, 2.0);
    IndividualRecord ind;
    ind.id = "aff";
    ind.recorded_time = 10.0;
    double t = 0.0;
    for (int k = 0; k < 8; ++k) {
      t += 0.1 + uniform01(rng);
      ind.snapshots.push_back(Snapshot{t, {a * t + b}});
    }
    for (int q = 0; q < 20; ++q) {
      const double tq = uniform_in(rng, ind.snapshots.front().time, ind.snapshots.back().time);
      auto v = interpolate_usage(ind, tq);
      REQUIRE(v);
      const double expected = a * tq + b;
      CHECK(std::abs((*v)[0] - expected) <= 1e-12 * std::max(1.0, std::abs(expected)));
    }
  }
}

TEST_CASE("fixed grids are equidistant inclusive of both endpoints") {
  GridPolicy p;
  p.kind = GridKind::FixedEquidistant;
  p.t_min = 0.1;
  p.t_max = 1.0;
  p.num_points = 4;
  auto g = make_grid(p, 0);
  REQUIRE(g.points.size() == 4);
  CHECK(g.points[0] == Catch::Approx(0.1));
  CHECK(g.points[1] == Catch::Approx(0.4));
  CHECK(g.points[2] == Catch::Approx(0.7));
  CHECK(g.points[3] == Catch::Approx(1.0));
  CHECK(make_grid(p, 5).points == g.points);  // epoch-independent
}

TEST_CASE("stratified epochwise grids span the range and are reproducible") {
  GridPolicy p;
  p.kind = GridKind::EpochwiseRandom;
  p.t_min = 0.0;
  p.t_max = 1.0;
  p.num_points = 2;
  p.rng_seed = 123;

  // u = (0.5, 0.5) places points at the stratum midpoints
  SamplingGrid direct;
  for (int k = 0; k < 2; ++k) direct.points.push_back(0.0 + 1.0 * (k + 0.5) / 2.0);
  CHECK(direct.points[0] == 0.25);
  CHECK(direct.points[1] == 0.75);

  auto a = make_grid(p, 3);
  auto b = make_grid(p, 3);
  CHECK(a.points == b.points);  // same (seed, epoch) => identical grid
  CHECK(make_grid(p, 4).points != a.points);

  p.num_points = 16;
  for (int epoch = 0; epoch < 200; ++epoch) {
    auto g = make_grid(p, epoch);
    REQUIRE(g.points.size() == 16);
    CHECK(g.points.front() >= p.t_min);
    CHECK(g.points.back() <= p.t_max);
    for (std::size_t k = 0; k + 1 < g.points.size(); ++k) CHECK(g.points[k] < g.points[k + 1]);
    // exactly one point per stratum
    for (std::size_t k = 0; k < g.points.size(); ++k) {
      const double lo = p.t_min + (p.t_max - p.t_min) * static_cast<double>(k) / 16.0;
      const double hi = p.t_min + (p.t_max - p.t_min) * static_cast<double>(k + 1) / 16.0;
      CHECK(g.points[k] >= lo);
      CHECK(g.points[k] < hi);
    }
  }
}

TEST_CASE("literal grid formula crowds points into the first stratum") {
  GridPolicy p;
  p.kind = GridKind::EpochwiseRandom;
  p.t_min = 0.1;
  p.t_max = 1.0;
  p.num_points = 8;
  p.rng_seed = 9;
  p.literal_formula = true;
  auto g = make_grid(p, 0);
  for (double t : g.points) {
    CHECK(t >= p.t_min);
    CHECK(t <= p.t_min + (p.t_max - p.t_min) / 8.0);
  }
}

TEST_CASE("homogeneous_resample applies the availability rule") {
  SnapshotDataset ds;
  ds.feature_dim = 1;
  ds.feature_names = {"f1"};
  IndividualRecord ind;
  ind.id = "a";
  ind.recorded_time = 2.0;
  ind.snapshots = {Snapshot{0.5, {1.0}}, Snapshot{2.0, {4.0}}};
  ds.individuals.push_back(ind);

  SECTION("grid inside hull and below tau is fully covered") {
    SamplingGrid grid{{1.0, 1.5}};
    auto res = homogeneous_resample(ds, grid);
    REQUIRE(res.dataset.individuals[0].snapshots.size() == 2);
    CHECK(res.dataset.individuals[0].snapshots[0].time == 1.0);
    CHECK(res.dataset.individuals[0].snapshots[0].covariates[0] == Catch::Approx(2.0));
    CHECK(res.dataset.individuals[0].snapshots[1].covariates[0] == Catch::Approx(3.0));
    CHECK(res.summary.full_coverage_count == 1);
    CHECK(res.summary.partial_ids.empty());
  }
  SECTION("points before the first snapshot are unavailable and flagged") {
    SamplingGrid grid{{0.1, 1.0}};
    auto res = homogeneous_resample(ds, grid);
    REQUIRE(res.dataset.individuals[0].snapshots.size() == 1);
    CHECK(res.dataset.individuals[0].snapshots[0].time == 1.0);
    CHECK(res.summary.full_coverage_count == 0);
    REQUIRE(res.summary.partial_ids.size() == 1);
    CHECK(res.summary.partial_ids[0] == "a");
  }
  SECTION("empty grid leaves every individual with zero snapshots") {
    SamplingGrid grid;
    auto res = homogeneous_resample(ds, grid);
    CHECK(res.dataset.individuals[0].snapshots.empty());
    CHECK(res.summary.full_coverage_count == 1);  // nothing was required either
  }
  SECTION("grid points beyond tau are not required") {
    SamplingGrid grid{{1.0, 2.5}};
    auto res = homogeneous_resample(ds, grid);
    REQUIRE(res.dataset.individuals[0].snapshots.size() == 1);
    CHECK(res.summary.full_coverage_count == 1);
  }
}

TEST_CASE("resampled datasets are homogeneously sampled (full-coverage individuals)") {
  auto rng = make_rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    auto ds = testsupport::random_dataset(rng, 12, 2, /*anchor_ends=*/true);
    GridPolicy p;
    p.kind = GridKind::EpochwiseRandom;
    p.t_min = 0.05;
    p.t_max = 1.5;
    p.num_points = 1 + static_cast<int>(uniform01(rng) * 6.0);
    p.rng_seed = rng();
    auto res = homogeneous_resample(ds, make_grid(p, trial));
    // anchored individuals cover [0, tau], so everyone reaches full coverage
    CHECK(res.summary.full_coverage_count == res.summary.individual_count);
    auto verdict = is_homogeneously_sampled(res.dataset);
    INFO(verdict.diagnostic);
    CHECK(verdict.homogeneous);
  }
}

TEST_CASE("resampling grid-aligned data is idempotent") {
  auto rng = make_rng(77);
  auto ds = testsupport::random_dataset(rng, 15, 2, /*anchor_ends=*/true);
  GridPolicy p;
  p.kind = GridKind::FixedEquidistant;
  p.t_min = 0.1;
  p.t_max = 1.2;
  p.num_points = 5;
  auto grid = make_grid(p, 0);
  auto once = homogeneous_resample(ds, grid).dataset;
  auto twice = homogeneous_resample(once, grid).dataset;
  REQUIRE(once.individuals.size() == twice.individuals.size());
  for (std::size_t i = 0; i < once.individuals.size(); ++i) {
    const auto& a = once.individuals[i].snapshots;
    const auto& b = twice.individuals[i].snapshots;
    REQUIRE(a.size() == b.size());
    for (std::size_t j = 0; j < a.size(); ++j) {
      CHECK(a[j].time == b[j].time);
      CHECK(a[j].covariates == b[j].covariates);  // exact, not approximate
    }
  }
}
