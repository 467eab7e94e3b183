#pragma once

// Declarative simulated studies: a grid of (policy x grid size x population
// size) cells, each trained over seeded replicates and scored on a shared
// held-out test population. Emits a tidy CSV of
//   policy,M,N,replicate,test_qnll,test_ibs
// plus per-run manifests and checkpoints. Every job is a deterministic
// function of the study seed, and rows are assembled in job order, so reruns
// are byte-identical regardless of the worker count.
//
// The optional "mixed" policy reproduces the inhomogeneous-sampling cell:
// the population is split in two equal cohorts, resampled on fixed grids of
// M and density_factor x M points, and trained on the union as-is.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "snapsurv/config.hpp"
#include "snapsurv/evaluate.hpp"
#include "snapsurv/simulate.hpp"
#include "snapsurv/train.hpp"

namespace snapsurv {

struct StudyConfig {
  std::vector<int> sizes = {250, 500, 1000};
  std::vector<int> grid_sizes = {4};
  std::vector<std::string> policies = {"fixed", "random"};
  int mixed_density_factor = 10;
  int replicates = 5;
  std::string replicate_mode = "resimulate";  // or "reuse": one population per size
  int test_size = 500;
  std::vector<double> test_times = {0.4, 0.7};
  int random_test_points = 15;
  double val_fraction = 0.15;
  TrainConfig train;  // learning rate, epochs, grid range, net, quadrature
  SimConfig sim;      // population model; n/seed fields are ignored per cell
  std::uint64_t seed = 0;
  int workers = 2;

  // Optional learning-rate selection before the cells run: a geometric
  // sweep on freshly simulated datasets picks the rate with the best mean
  // validation loss, which then overrides train.learning_rate.
  bool sweep_enabled = false;
  SweepSpec sweep_spec;
  int sweep_replicates = 5;
  int sweep_size = 500;
};

inline StudyConfig parse_study_config(const config::Document& doc) {
  namespace cf = config;
  StudyConfig s;
  auto sizes = cf::get_int_array(doc, "study", "sizes", {250, 500, 1000});
  s.sizes.assign(sizes.begin(), sizes.end());
  auto grids = cf::get_int_array(doc, "study", "grid_sizes", {4});
  s.grid_sizes.assign(grids.begin(), grids.end());
  s.policies = cf::get_string_array(doc, "study", "policies", {"fixed", "random"});
  s.mixed_density_factor =
      static_cast<int>(cf::get_int(doc, "study", "mixed_density_factor", 10));
  s.replicates = static_cast<int>(cf::get_int(doc, "study", "replicates", 5));
  s.replicate_mode = cf::get_string(doc, "study", "replicate_mode", "resimulate");
  if (s.replicate_mode != "resimulate" && s.replicate_mode != "reuse") {
    throw std::runtime_error("study: replicate_mode must be resimulate|reuse");
  }
  s.test_size = static_cast<int>(cf::get_int(doc, "study", "test_size", 500));
  s.test_times = cf::get_number_array(doc, "study", "test_times", {0.4, 0.7});
  s.random_test_points = static_cast<int>(cf::get_int(doc, "study", "random_test_points", 15));
  s.seed = static_cast<std::uint64_t>(cf::get_int(doc, "study", "seed", 0));
  s.workers = static_cast<int>(cf::get_int(doc, "study", "workers", 2));

  s.val_fraction = cf::get_double(doc, "train", "val_fraction", 0.15);
  s.train.epochs = static_cast<int>(cf::get_int(doc, "train", "epochs", 200));
  s.train.learning_rate = cf::get_double(doc, "train", "learning_rate", 0.05);
  s.train.batch_size = static_cast<int>(cf::get_int(doc, "train", "batch_size", 128));
  s.train.mode = flatten_mode_from_string(cf::get_string(doc, "train", "mode", "total"));
  s.train.policy =
      train_resample_from_string(cf::get_string(doc, "train", "policy", "fixed"));
  s.train.grid_t_min = cf::get_double(doc, "train", "t_min", 0.1);
  s.train.grid_t_max = cf::get_double(doc, "train", "t_max", 1.0);
  s.train.grid_points = static_cast<int>(cf::get_int(doc, "train", "grid_points", 4));
  s.train.grid_literal_formula = cf::get_bool(doc, "train", "literal_grid_formula", false);
  auto hidden = cf::get_int_array(doc, "network", "hidden", {32, 32});
  s.train.hidden.assign(hidden.begin(), hidden.end());
  s.train.dropout_rate = cf::get_double(doc, "network", "dropout", 0.0);
  s.train.quadrature_points =
      static_cast<int>(cf::get_int(doc, "quadrature", "num_points", 257));
  s.train.t_upper = cf::get_double(doc, "quadrature", "t_upper", 0.0);

  s.sim.usage_low = cf::get_double(doc, "simulate", "usage_low", 1.0);
  s.sim.usage_high = cf::get_double(doc, "simulate", "usage_high", 5.0);
  s.sim.weibull_shape = cf::get_double(doc, "simulate", "weibull_shape", 2.0);
  s.sim.censor_low = cf::get_double(doc, "simulate", "censor_low", 0.0);
  s.sim.censor_high = cf::get_double(doc, "simulate", "censor_high", 3.0);

  s.sweep_enabled = doc.sections.count("sweep") > 0;
  if (s.sweep_enabled) {
    s.sweep_spec.count = static_cast<int>(cf::get_int(doc, "sweep", "count", 15));
    s.sweep_spec.low = cf::get_double(doc, "sweep", "low", 1e-2);
    s.sweep_spec.high = cf::get_double(doc, "sweep", "high", 0.25);
    s.sweep_replicates = static_cast<int>(cf::get_int(doc, "sweep", "replicates", 5));
    s.sweep_size = static_cast<int>(cf::get_int(doc, "sweep", "size", 500));
  }
  return s;
}

// Every cell of a study shares one quadrature horizon so the per-model
// likelihoods are defined on the same support and stay comparable. The
// simulated recorded times are bounded by censor_high, which pins the
// largest possible target for either mode.
inline double study_horizon(const StudyConfig& cfg) {
  if (cfg.train.t_upper > 0.0) return cfg.train.t_upper;
  const double max_target = cfg.train.mode == FlattenMode::TotalLife
                                ? cfg.sim.censor_high
                                : cfg.sim.censor_high - cfg.train.grid_t_min;
  return 1.5 * max_target;
}

struct StudyCell {
  std::string policy;  // fixed | random | mixed
  int grid_points = 0;
  int population = 0;
};

struct StudyRow {
  StudyCell cell;
  int replicate = 0;
  bool ok = false;
  std::string status;
  double test_qnll = 0.0;  // mean test quasi-NLL on the random-grid resample
  double test_ibs = 0.0;
  std::vector<double> single_time_qnll;
};

namespace detail {

struct TestSets {
  std::vector<FlatSample> random_grid;
  std::vector<std::vector<FlatSample>> single_time;
  KaplanMeierCurve censoring_km;           // on test individuals (total-life terms)
  std::vector<double> brier_times;
  double horizon = 0.0;
};

inline TestSets build_test_sets(const StudyConfig& cfg) {
  SimConfig sim = cfg.sim;
  sim.n_individuals = cfg.test_size;
  sim.seed = mix_seed(cfg.seed, stream_tag("test-population"));
  auto pop = simulate_population(sim);

  GridPolicy p;
  p.kind = GridKind::EpochwiseRandom;
  p.t_min = cfg.train.grid_t_min;
  p.t_max = cfg.train.grid_t_max;
  p.num_points = cfg.random_test_points;
  p.rng_seed = mix_seed(cfg.seed, stream_tag("test-grid"));

  TestSets ts;
  ts.random_grid = flatten(homogeneous_resample(pop.dataset, make_grid(p, 0)).dataset,
                           cfg.train.mode);
  for (double t : cfg.test_times) {
    SamplingGrid g;
    g.points = {t};
    ts.single_time.push_back(
        flatten(homogeneous_resample(pop.dataset, g).dataset, cfg.train.mode));
  }

  std::vector<std::pair<double, bool>> outcome;
  if (cfg.train.mode == FlattenMode::TotalLife) {
    for (const auto& ind : pop.dataset.individuals) {
      outcome.emplace_back(ind.recorded_time, ind.event);
    }
  } else {
    for (const auto& s : ts.random_grid) outcome.emplace_back(s.target_time, s.event);
  }
  ts.censoring_km = censoring_kaplan_meier(outcome);

  for (const auto& s : ts.random_grid) ts.horizon = std::max(ts.horizon, s.target_time);
  const int n_brier = 100;
  for (int i = 0; i < n_brier; ++i) {
    ts.brier_times.push_back(ts.horizon * static_cast<double>(i) /
                             static_cast<double>(n_brier - 1));
  }
  return ts;
}

// Pre-resamples the two cohorts of the mixed cell on fixed grids of M and
// density_factor x M points.
inline SnapshotDataset build_mixed_dataset(const SnapshotDataset& population, int grid_points,
                                           int density_factor, double t_min, double t_max) {
  GridPolicy sparse;
  sparse.kind = GridKind::FixedEquidistant;
  sparse.t_min = t_min;
  sparse.t_max = t_max;
  sparse.num_points = grid_points;
  GridPolicy dense = sparse;
  dense.num_points = grid_points * density_factor;

  SnapshotDataset half_a, half_b;
  half_a.feature_dim = half_b.feature_dim = population.feature_dim;
  half_a.feature_names = half_b.feature_names = population.feature_names;
  const std::size_t mid = population.individuals.size() / 2;
  for (std::size_t i = 0; i < population.individuals.size(); ++i) {
    (i < mid ? half_a : half_b).individuals.push_back(population.individuals[i]);
  }
  auto res_a = homogeneous_resample(half_a, make_grid(sparse, 0));
  auto res_b = homogeneous_resample(half_b, make_grid(dense, 0));

  SnapshotDataset mixed = std::move(res_a.dataset);
  for (auto& ind : res_b.dataset.individuals) mixed.individuals.push_back(std::move(ind));
  return mixed;
}

}  // namespace detail

inline StudyRow run_study_job(const StudyConfig& cfg, const StudyCell& cell, int replicate,
                              const detail::TestSets& tests, const std::string& run_dir) {
  StudyRow row;
  row.cell = cell;
  row.replicate = replicate;

  SimConfig sim = cfg.sim;
  sim.n_individuals = cell.population;
  sim.seed = cfg.replicate_mode == "resimulate"
                 ? mix_seed(cfg.seed, stream_tag("population"),
                            static_cast<std::uint64_t>(cell.population),
                            static_cast<std::uint64_t>(replicate))
                 : mix_seed(cfg.seed, stream_tag("population"),
                            static_cast<std::uint64_t>(cell.population));
  auto pop = simulate_population(sim);

  TrainConfig tc = cfg.train;
  tc.t_upper = study_horizon(cfg);
  tc.grid_points = cell.grid_points;
  tc.seed = mix_seed(cfg.seed, stream_tag(cell.policy.c_str()),
                     mix_seed(static_cast<std::uint64_t>(cell.grid_points),
                              static_cast<std::uint64_t>(cell.population)),
                     static_cast<std::uint64_t>(replicate));

  SnapshotDataset training_source;
  if (cell.policy == "mixed") {
    tc.policy = TrainResample::AsIs;
    training_source = detail::build_mixed_dataset(pop.dataset, cell.grid_points,
                                                  cfg.mixed_density_factor, tc.grid_t_min,
                                                  tc.grid_t_max);
  } else {
    tc.policy = train_resample_from_string(cell.policy);
    training_source = std::move(pop.dataset);
  }

  const std::uint64_t split_seed =
      mix_seed(cfg.seed, stream_tag("split"), static_cast<std::uint64_t>(cell.population),
               static_cast<std::uint64_t>(replicate));
  auto [train_part, val_part] = split_by_individual(training_source, cfg.val_fraction, split_seed);

  TrainResult result = train(train_part, val_part, tc);
  row.status = result.manifest.status;
  nlohmann::json meta = result.manifest.to_json();
  meta["cell"] = {{"policy", cell.policy},
                  {"grid_points", cell.grid_points},
                  {"population", cell.population},
                  {"replicate", replicate}};

  if (result.model) {
    const EnergySurvivalModel& model = *result.model;
    row.test_qnll = -quasi_log_likelihood(model, tests.random_grid);
    auto brier = brier_curve(model, tests.random_grid, tests.brier_times, tests.censoring_km);
    row.test_ibs = integrated_brier(brier, tests.horizon);
    for (const auto& flat : tests.single_time) {
      row.single_time_qnll.push_back(flat.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                  : -quasi_log_likelihood(model, flat));
    }
    meta["test"] = {{"qnll_random_grid", row.test_qnll},
                    {"ibs_random_grid", row.test_ibs},
                    {"qnll_single_time", row.single_time_qnll}};
    row.ok = true;
  }

  if (!run_dir.empty()) {
    std::filesystem::create_directories(run_dir);
    std::ofstream mf(run_dir + "/manifest.json");
    mf << meta.dump(2) << '\n';
    if (result.model) save_checkpoint(*result.model, run_dir + "/checkpoint.json", meta["cell"]);
  }
  return row;
}

struct StudyResult {
  std::vector<StudyRow> rows;
  std::string results_csv_path;
};

inline StudyResult run_study(const StudyConfig& input_cfg, const std::string& out_dir) {
  StudyConfig cfg = input_cfg;
  if (cfg.replicates < 1) throw std::runtime_error("study: replicates must be >= 1");
  std::filesystem::create_directories(out_dir);

  SweepResult sweep_result;
  if (cfg.sweep_enabled) {
    TrainConfig base = cfg.train;
    base.t_upper = study_horizon(cfg);
    base.grid_points = cfg.grid_sizes.empty() ? 4 : cfg.grid_sizes.front();
    auto provider = [&cfg](int rep) {
      SimConfig sim = cfg.sim;
      sim.n_individuals = cfg.sweep_size;
      sim.seed = mix_seed(cfg.seed, stream_tag("sweep-population"),
                          static_cast<std::uint64_t>(rep));
      return simulate_population(sim).dataset;
    };
    sweep_result = sweep(provider, base, cfg.sweep_spec, cfg.sweep_replicates,
                         cfg.val_fraction, mix_seed(cfg.seed, stream_tag("sweep")));
    if (sweep_result.best_index < 0) throw std::runtime_error("study: every sweep run aborted");
    cfg.train.learning_rate = sweep_result.rates[static_cast<std::size_t>(sweep_result.best_index)];
  }

  const detail::TestSets tests = detail::build_test_sets(cfg);

  std::vector<StudyCell> cells;
  for (const auto& policy : cfg.policies) {
    if (policy != "fixed" && policy != "random" && policy != "mixed") {
      throw std::runtime_error("study: unknown policy '" + policy + "'");
    }
    for (int n : cfg.sizes) {
      for (int m : cfg.grid_sizes) cells.push_back(StudyCell{policy, m, n});
    }
  }

  struct Job {
    StudyCell cell;
    int replicate;
    std::string run_dir;
  };
  std::vector<Job> jobs;
  for (const auto& cell : cells) {
    for (int rep = 0; rep < cfg.replicates; ++rep) {
      const std::string run_dir = out_dir + "/runs/" + cell.policy + "_N" +
                                  std::to_string(cell.population) + "_M" +
                                  std::to_string(cell.grid_points) + "_r" + std::to_string(rep);
      jobs.push_back(Job{cell, rep, run_dir});
    }
  }

  StudyResult res;
  res.rows.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::string> errors(jobs.size());
  const int workers = std::max(1, cfg.workers);
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        res.rows[i] = run_study_job(cfg, jobs[i].cell, jobs[i].replicate, tests, jobs[i].run_dir);
      } catch (const std::exception& e) {
        res.rows[i].cell = jobs[i].cell;
        res.rows[i].replicate = jobs[i].replicate;
        res.rows[i].ok = false;
        res.rows[i].status = std::string("failed: ") + e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  res.results_csv_path = out_dir + "/results.csv";
  csv::Writer out(res.results_csv_path);
  out.row({"policy", "M", "N", "replicate", "test_qnll", "test_ibs"});
  for (const auto& row : res.rows) {
    if (!row.ok) continue;
    out.row({row.cell.policy, std::to_string(row.cell.grid_points),
             std::to_string(row.cell.population), std::to_string(row.replicate),
             csv::format_double(row.test_qnll), csv::format_double(row.test_ibs)});
  }

  nlohmann::json manifest;
  manifest["seed"] = cfg.seed;
  manifest["replicates"] = cfg.replicates;
  manifest["replicate_mode"] = cfg.replicate_mode;
  manifest["test_size"] = cfg.test_size;
  manifest["test_times"] = cfg.test_times;
  manifest["random_test_points"] = cfg.random_test_points;
  manifest["train"] = train_config_to_json(cfg.train);
  manifest["val_fraction"] = cfg.val_fraction;
  if (cfg.sweep_enabled) {
    manifest["sweep"] = {{"rates", sweep_result.rates},
                         {"mean_best_val_losses", sweep_result.mean_best_val_losses},
                         {"selected_rate", cfg.train.learning_rate}};
  }
  nlohmann::json job_summaries = nlohmann::json::array();
  for (const auto& row : res.rows) {
    job_summaries.push_back(nlohmann::json{{"policy", row.cell.policy},
                                           {"M", row.cell.grid_points},
                                           {"N", row.cell.population},
                                           {"replicate", row.replicate},
                                           {"ok", row.ok},
                                           {"status", row.status}});
  }
  manifest["jobs"] = std::move(job_summaries);
  std::ofstream mf(out_dir + "/study_manifest.json");
  mf << manifest.dump(2) << '\n';
  return res;
}

}  // namespace snapsurv
