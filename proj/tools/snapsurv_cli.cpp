// Command-line front end: simulate | resample | train | evaluate | predict |
// study. Every subcommand is a thin wrapper over the library; all randomness
// is seeded, and outputs are deterministic functions of inputs and flags.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "snapsurv/checkpoint.hpp"
#include "snapsurv/config.hpp"
#include "snapsurv/dataset.hpp"
#include "snapsurv/energy_model.hpp"
#include "snapsurv/evaluate.hpp"
#include "snapsurv/resample.hpp"
#include "snapsurv/simulate.hpp"
#include "snapsurv/study.hpp"
#include "snapsurv/train.hpp"

namespace {

using namespace snapsurv;

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::string cur;
  auto flush = [&]() {
    if (!cur.empty()) {
      out.push_back(csv::parse_double(cur, "list value"));
      cur.clear();
    }
  };
  for (char c : text) {
    if (c == ',') {
      flush();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur.push_back(c);
    }
  }
  flush();
  return out;
}

int cmd_simulate(const std::string& out_individuals, const std::string& out_snapshots,
                 const std::string& out_truth, int n, std::uint64_t seed) {
  SimConfig cfg;
  cfg.n_individuals = n;
  cfg.seed = seed;
  auto pop = simulate_population(cfg);
  save_dataset(pop.dataset, out_individuals, out_snapshots);
  if (!out_truth.empty()) save_truth(pop.truth, out_truth);
  std::size_t events = 0;
  for (const auto& ind : pop.dataset.individuals) events += ind.event ? 1 : 0;
  std::cerr << "simulated " << n << " individuals, " << events << " failures, "
            << n - static_cast<int>(events) << " censored\n";
  return 0;
}

int cmd_resample(const std::string& individuals, const std::string& snapshots,
                 const std::string& grid_kind, double t_min, double t_max, int num_points,
                 std::uint64_t seed, bool literal_grid, const std::string& mode_name,
                 const std::string& out_individuals, const std::string& out_snapshots,
                 const std::string& out_flat) {
  if (out_flat.empty() && (out_individuals.empty() || out_snapshots.empty())) {
    throw std::runtime_error(
        "resample: give --out-flat and/or both --out-individuals/--out-snapshots");
  }
  auto ds = load_dataset(individuals, snapshots);

  GridPolicy policy;
  if (grid_kind == "fixed") {
    policy.kind = GridKind::FixedEquidistant;
  } else if (grid_kind == "random") {
    policy.kind = GridKind::EpochwiseRandom;
  } else {
    throw std::runtime_error("resample: --grid must be fixed|random");
  }
  policy.t_min = t_min;
  policy.t_max = t_max;
  policy.num_points = num_points;
  policy.rng_seed = seed;
  policy.literal_formula = literal_grid;

  auto result = homogeneous_resample(ds, make_grid(policy, 0));
  std::cerr << "coverage: " << result.summary.full_coverage_count << "/"
            << result.summary.individual_count << " individuals fully on the grid ("
            << csv::format_double(result.summary.coverage_fraction()) << ")\n";

  if (!out_individuals.empty() && !out_snapshots.empty()) {
    save_dataset(result.dataset, out_individuals, out_snapshots);
  }
  if (!out_flat.empty()) {
    auto flat = flatten(result.dataset, flatten_mode_from_string(mode_name));
    auto names = result.dataset.feature_names.size() == result.dataset.feature_dim
                     ? result.dataset.feature_names
                     : default_feature_names(result.dataset.feature_dim);
    write_flat_csv(flat, names, out_flat);
  }
  return 0;
}

TrainConfig train_config_from_file(const std::string& config_path) {
  if (config_path.empty()) {
    StudyConfig defaults;
    return defaults.train;
  }
  return parse_study_config(config::parse_file(config_path)).train;
}

int cmd_train(const std::string& individuals, const std::string& snapshots,
              const std::string& config_path, const std::string& out_dir, std::uint64_t seed,
              const std::optional<int>& epochs, const std::optional<double>& lr,
              const std::optional<std::string>& grid, const std::optional<int>& grid_points,
              const std::optional<std::string>& mode) {
  auto ds = load_dataset(individuals, snapshots);
  TrainConfig cfg = train_config_from_file(config_path);
  double val_fraction = 0.15;
  if (!config_path.empty()) {
    val_fraction =
        config::get_double(config::parse_file(config_path), "train", "val_fraction", 0.15);
  }
  cfg.seed = seed;
  if (epochs) cfg.epochs = *epochs;
  if (lr) cfg.learning_rate = *lr;
  if (grid) cfg.policy = train_resample_from_string(*grid);
  if (grid_points) cfg.grid_points = *grid_points;
  if (mode) cfg.mode = flatten_mode_from_string(*mode);

  auto [train_part, val_part] =
      split_by_individual(ds, val_fraction, mix_seed(seed, stream_tag("cli-split")));
  TrainResult result = train(train_part, val_part, cfg);

  std::filesystem::create_directories(out_dir);
  std::ofstream mf(out_dir + "/manifest.json");
  mf << result.manifest.to_json().dump(2) << '\n';
  if (!result.model) {
    std::cerr << "training aborted: " << result.manifest.status << '\n';
    return 1;
  }
  save_checkpoint(*result.model, out_dir + "/checkpoint.json",
                  nlohmann::json{{"best_epoch", result.manifest.best_epoch},
                                 {"best_val_loss", result.manifest.best_val_loss}});
  std::cerr << "best epoch " << result.manifest.best_epoch << ", validation loss "
            << csv::format_double(result.manifest.best_val_loss) << '\n';
  return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& individuals,
                 const std::string& snapshots, const std::string& out_dir,
                 const std::string& test_times_text, int random_points, std::uint64_t seed,
                 double t_min, double t_max) {
  EnergySurvivalModel model = load_checkpoint(checkpoint);
  auto ds = load_dataset(individuals, snapshots);
  std::filesystem::create_directories(out_dir);

  const std::vector<double> test_times = parse_double_list(test_times_text);
  nlohmann::json report;
  report["mode"] = to_string(model.mode);
  nlohmann::json qll = nlohmann::json::object();
  nlohmann::json counts = nlohmann::json::object();

  for (double t : test_times) {
    SamplingGrid g;
    g.points = {t};
    auto flat = flatten(homogeneous_resample(ds, g).dataset, model.mode);
    const std::string key = "single_time_" + csv::format_double(t);
    counts[key] = flat.size();
    qll[key] = flat.empty() ? nlohmann::json()
                            : nlohmann::json(quasi_log_likelihood(model, flat));
  }

  GridPolicy p;
  p.kind = GridKind::EpochwiseRandom;
  p.t_min = t_min;
  p.t_max = t_max;
  p.num_points = random_points;
  p.rng_seed = mix_seed(seed, stream_tag("evaluate-grid"));
  auto random_flat = flatten(homogeneous_resample(ds, make_grid(p, 0)).dataset, model.mode);
  if (random_flat.empty()) throw std::runtime_error("evaluate: random-grid resample is empty");
  counts["random_grid"] = random_flat.size();
  qll["random_grid"] = quasi_log_likelihood(model, random_flat);

  std::vector<std::pair<double, bool>> outcome;
  if (model.mode == FlattenMode::TotalLife) {
    for (const auto& ind : ds.individuals) outcome.emplace_back(ind.recorded_time, ind.event);
  } else {
    for (const auto& s : random_flat) outcome.emplace_back(s.target_time, s.event);
  }
  auto censor_km = censoring_kaplan_meier(outcome);

  double horizon = 0.0;
  for (const auto& s : random_flat) horizon = std::max(horizon, s.target_time);
  std::vector<double> brier_times;
  for (int i = 0; i < 100; ++i) brier_times.push_back(horizon * i / 99.0);
  auto brier = brier_curve(model, random_flat, brier_times, censor_km);

  report["quasi_log_likelihood"] = qll;
  report["sample_counts"] = counts;
  report["integrated_brier_score"] = integrated_brier(brier, horizon);
  report["brier_skipped_terms"] = brier.skipped_terms;
  report["brier_horizon"] = horizon;

  csv::Writer bc(out_dir + "/brier_curve.csv");
  bc.row({"t", "brier"});
  for (std::size_t i = 0; i < brier.times.size(); ++i) {
    bc.row({csv::format_double(brier.times[i]), csv::format_double(brier.values[i])});
  }
  std::ofstream rf(out_dir + "/report.json");
  rf << report.dump(2) << '\n';
  std::cout << report.dump(2) << '\n';
  return 0;
}

int cmd_predict(const std::string& checkpoint, double t0, const std::string& covariates_text,
                const std::string& times_text, double grid_max, int grid_points,
                const std::string& out_path) {
  EnergySurvivalModel model = load_checkpoint(checkpoint);
  EvalContext ctx;
  ctx.t0 = t0;
  ctx.covariates = parse_double_list(covariates_text);

  std::vector<double> times;
  if (!times_text.empty()) {
    times = parse_double_list(times_text);
  } else {
    const double hi = grid_max > 0.0 ? grid_max : model.quadrature.t_upper;
    for (int i = 0; i < grid_points; ++i) {
      times.push_back(hi * static_cast<double>(i) / static_cast<double>(grid_points - 1));
    }
  }
  auto surv = survival_curve(model, ctx, times);

  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) throw std::runtime_error("cannot open " + out_path);
    out = &file;
  }
  (*out) << "t,S\n";
  for (std::size_t i = 0; i < times.size(); ++i) {
    (*out) << csv::format_double(times[i]) << ',' << csv::format_double(surv[i]) << '\n';
  }
  return 0;
}

int cmd_study(const std::string& config_path, const std::string& out_dir,
              const std::optional<std::uint64_t>& seed, const std::optional<int>& workers) {
  StudyConfig cfg = parse_study_config(config::parse_file(config_path));
  if (seed) cfg.seed = *seed;
  if (workers) cfg.workers = *workers;
  auto result = run_study(cfg, out_dir);
  std::size_t ok = 0;
  for (const auto& row : result.rows) ok += row.ok ? 1 : 0;
  std::cerr << "study: " << ok << "/" << result.rows.size() << " runs completed, results in "
            << result.results_csv_path << '\n';
  return ok == result.rows.size() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"usage-specific survival modeling from operational snapshots"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate a synthetic benchmark population");
  std::string sim_individuals, sim_snapshots, sim_truth;
  int sim_n = 1000;
  std::uint64_t sim_seed = 0;
  sim->add_option("--n", sim_n, "number of individuals");
  sim->add_option("--seed", sim_seed, "rng seed");
  sim->add_option("--out-individuals", sim_individuals)->required();
  sim->add_option("--out-snapshots", sim_snapshots)->required();
  sim->add_option("--out-truth", sim_truth, "hidden truth table (id,u,true_T,censor_time)");

  // resample
  auto* rs = app.add_subcommand("resample", "resample a dataset on a sampling grid");
  std::string rs_individuals, rs_snapshots, rs_grid = "fixed", rs_mode = "total";
  std::string rs_out_individuals, rs_out_snapshots, rs_out_flat;
  double rs_tmin = 0.1, rs_tmax = 1.0;
  int rs_points = 4;
  std::uint64_t rs_seed = 0;
  rs->add_option("--individuals", rs_individuals)->required();
  rs->add_option("--snapshots", rs_snapshots)->required();
  rs->add_option("--grid", rs_grid, "fixed|random");
  rs->add_option("--t-min", rs_tmin);
  rs->add_option("--t-max", rs_tmax);
  rs->add_option("--num-points", rs_points);
  rs->add_option("--seed", rs_seed);
  bool rs_literal = false;
  rs->add_flag("--literal-grid", rs_literal,
               "draw random grids with the literal (non-stratified) formula");
  rs->add_option("--mode", rs_mode, "total|remaining (for --out-flat)");
  rs->add_option("--out-individuals", rs_out_individuals);
  rs->add_option("--out-snapshots", rs_out_snapshots);
  rs->add_option("--out-flat", rs_out_flat, "flat-sample CSV (target_time,event,t0,features)");

  // train
  auto* tr = app.add_subcommand("train", "train an energy-based survival model");
  std::string tr_individuals, tr_snapshots, tr_config, tr_out = "run";
  std::uint64_t tr_seed = 0;
  std::optional<int> tr_epochs, tr_points;
  std::optional<double> tr_lr;
  std::optional<std::string> tr_grid, tr_mode;
  tr->add_option("--individuals", tr_individuals)->required();
  tr->add_option("--snapshots", tr_snapshots)->required();
  tr->add_option("--config", tr_config, "config file ([train]/[network]/[quadrature])");
  tr->add_option("--out-dir", tr_out);
  tr->add_option("--seed", tr_seed);
  tr->add_option("--epochs", tr_epochs);
  tr->add_option("--learning-rate", tr_lr);
  tr->add_option("--grid", tr_grid, "fixed|random|as-is");
  tr->add_option("--num-points", tr_points);
  tr->add_option("--mode", tr_mode, "total|remaining");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "score a checkpoint on a test dataset");
  std::string ev_checkpoint, ev_individuals, ev_snapshots, ev_out = "eval";
  std::string ev_times = "0.4,0.7";
  int ev_random_points = 15;
  std::uint64_t ev_seed = 0;
  double ev_tmin = 0.1, ev_tmax = 1.0;
  ev->add_option("--checkpoint", ev_checkpoint)->required();
  ev->add_option("--individuals", ev_individuals)->required();
  ev->add_option("--snapshots", ev_snapshots)->required();
  ev->add_option("--out-dir", ev_out);
  ev->add_option("--test-times", ev_times, "single-time resample points, comma separated");
  ev->add_option("--random-points", ev_random_points);
  ev->add_option("--seed", ev_seed);
  ev->add_option("--t-min", ev_tmin);
  ev->add_option("--t-max", ev_tmax);

  // predict
  auto* pr = app.add_subcommand("predict", "emit a survival curve for one snapshot context");
  std::string pr_checkpoint, pr_cov, pr_times, pr_out;
  double pr_t0 = 0.0, pr_grid_max = 0.0;
  int pr_grid_points = 101;
  pr->add_option("--checkpoint", pr_checkpoint)->required();
  pr->add_option("--t0", pr_t0, "snapshot age")->required();
  pr->add_option("--covariates", pr_cov, "comma-separated covariate vector")->required();
  pr->add_option("--times", pr_times, "explicit evaluation times (overrides the grid)");
  pr->add_option("--grid-max", pr_grid_max, "evaluation grid end (default: model horizon)");
  pr->add_option("--grid-points", pr_grid_points);
  pr->add_option("--out", pr_out, "output CSV (default stdout)");

  // study
  auto* st = app.add_subcommand("study", "run a declarative replicated study");
  std::string st_config, st_out = "study";
  std::optional<std::uint64_t> st_seed;
  std::optional<int> st_workers;
  st->add_option("--config", st_config)->required();
  st->add_option("--out-dir", st_out);
  st->add_option("--seed", st_seed, "override the study seed");
  st->add_option("--workers", st_workers, "override the worker count");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      return cmd_simulate(sim_individuals, sim_snapshots, sim_truth, sim_n, sim_seed);
    }
    if (rs->parsed()) {
      return cmd_resample(rs_individuals, rs_snapshots, rs_grid, rs_tmin, rs_tmax, rs_points,
                          rs_seed, rs_literal, rs_mode, rs_out_individuals, rs_out_snapshots,
                          rs_out_flat);
    }
    if (tr->parsed()) {
      return cmd_train(tr_individuals, tr_snapshots, tr_config, tr_out, tr_seed, tr_epochs, tr_lr,
                       tr_grid, tr_points, tr_mode);
    }
    if (ev->parsed()) {
      return cmd_evaluate(ev_checkpoint, ev_individuals, ev_snapshots, ev_out, ev_times,
                          ev_random_points, ev_seed, ev_tmin, ev_tmax);
    }
    if (pr->parsed()) {
      return cmd_predict(pr_checkpoint, pr_t0, pr_cov, pr_times, pr_grid_max, pr_grid_points,
                         pr_out);
    }
    if (st->parsed()) {
      return cmd_study(st_config, st_out, st_seed, st_workers);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
