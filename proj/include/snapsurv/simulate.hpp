#pragma once

// Synthetic benchmark population with analytic ground truth. Each individual
// has a constant usage rate u ~ Uniform(1, 5); failure times follow the
// Weibull survival S(t; u) = exp(-(u t)^2) and censoring times are
// Uniform(0, 3). The accumulated usage x(t) = u t is exactly linear, so two
// anchor snapshots at t = 0 and t = tau carry the whole usage curve and
// linear interpolation reconstructs any resampling grid exactly.
//
// Failure times come from the inverse transform T = (-log V)^(1/k) / u with
// V uniform on (0, 1], so the whole population is a deterministic function
// of the seed.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "snapsurv/csv.hpp"
#include "snapsurv/dataset.hpp"
#include "snapsurv/rng.hpp"

namespace snapsurv {

struct SimConfig {
  int n_individuals = 1000;
  double usage_low = 1.0;
  double usage_high = 5.0;
  double weibull_shape = 2.0;  // k of S(t; u) = exp(-(u t)^k)
  double censor_low = 0.0;
  double censor_high = 3.0;
  std::uint64_t seed = 0;
};

inline void validate_sim_config(const SimConfig& c) {
  if (c.n_individuals < 1) throw std::runtime_error("simulate: n_individuals must be >= 1");
  if (!(c.usage_low < c.usage_high)) throw std::runtime_error("simulate: usage_low < usage_high");
  if (!(c.censor_low < c.censor_high)) throw std::runtime_error("simulate: censor_low < censor_high");
  if (!(c.weibull_shape > 0.0)) throw std::runtime_error("simulate: weibull_shape must be > 0");
}

// Solves S(T; u) = v for T.
inline double failure_time_from_uniform(double usage, double v, double shape = 2.0) {
  return std::pow(-std::log(v), 1.0 / shape) / usage;
}

struct TruthRecord {
  std::string id;
  double usage = 0.0;
  double true_failure_time = 0.0;
  double censor_time = 0.0;
};

struct SimulatedPopulation {
  SnapshotDataset dataset;
  std::vector<TruthRecord> truth;
};

inline SimulatedPopulation simulate_population(const SimConfig& config) {
  validate_sim_config(config);
  SimulatedPopulation pop;
  pop.dataset.feature_dim = 1;
  pop.dataset.feature_names = {"usage"};
  pop.dataset.individuals.reserve(static_cast<std::size_t>(config.n_individuals));
  pop.truth.reserve(static_cast<std::size_t>(config.n_individuals));

  for (int i = 0; i < config.n_individuals; ++i) {
    auto rng = make_rng(mix_seed(config.seed, stream_tag("simulate-individual"),
                                 static_cast<std::uint64_t>(i)));
    const double u = uniform_in(rng, config.usage_low, config.usage_high);
    double failure = 0.0;
    double censor = 0.0;
    do {
      failure = failure_time_from_uniform(u, uniform01_pos(rng), config.weibull_shape);
      censor = config.censor_low + (config.censor_high - config.censor_low) * uniform01(rng);
    } while (!(failure > 0.0) || !(censor > 0.0));  // guards the measure-zero edge draws

    IndividualRecord ind;
    ind.id = "sim" + std::to_string(i);
    ind.event = failure <= censor;
    ind.recorded_time = ind.event ? failure : censor;
    ind.snapshots.push_back(Snapshot{0.0, {0.0}});
    ind.snapshots.push_back(Snapshot{ind.recorded_time, {u * ind.recorded_time}});

    pop.truth.push_back(TruthRecord{ind.id, u, failure, censor});
    pop.dataset.individuals.push_back(std::move(ind));
  }
  return pop;
}

inline void save_truth(const std::vector<TruthRecord>& truth, const std::string& path) {
  csv::Writer out(path);
  out.row({"id", "u", "true_T", "censor_time"});
  for (const auto& t : truth) {
    out.row({t.id, csv::format_double(t.usage), csv::format_double(t.true_failure_time),
             csv::format_double(t.censor_time)});
  }
}

// True usage-specific survival S(t; t0, x) = exp(-(t x / t0)^2), valid for
// t0 > 0; the population at t0 = 0 carries no usage information and is a
// different (discontinuous) limit, see true_population_survival.
inline double true_survival(double t, double t0, double x) {
  if (!(t0 > 0.0)) {
    throw std::runtime_error("true_survival requires t0 > 0; use true_population_survival");
  }
  const double a = t * x / t0;
  return std::exp(-a * a);
}

// Remaining-life counterpart, the ratio S(t + t0)/S(t0) evaluated in closed
// form: exp(x^2 - ((t + t0) x / t0)^2). Equal to 1 at t = 0 by construction.
inline double true_remaining_survival(double t, double t0, double x) {
  if (!(t0 > 0.0)) {
    throw std::runtime_error("true_remaining_survival requires t0 > 0");
  }
  const double a = (t + t0) * x / t0;
  return std::exp(x * x - a * a);
}

// Population-average survival (1/4) * integral_1^5 exp(-(u t)^2) du, which
// reduces to sqrt(pi) (erf(5t) - erf(t)) / (8 t) for t > 0 and 1 at t = 0.
inline double true_population_survival(double t) {
  if (!(t >= 0.0)) throw std::runtime_error("true_population_survival requires t >= 0");
  if (t < 1e-8) return 1.0;  // series limit; avoids 0/0
  const double sqrt_pi = 1.7724538509055160273;
  return sqrt_pi * (std::erf(5.0 * t) - std::erf(t)) / (8.0 * t);
}

}  // namespace snapsurv
