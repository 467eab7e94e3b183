#pragma once

// Censoring-aware evaluation: quasi-log-likelihood on flattened test sets,
// the product-limit (Kaplan-Meier) estimator, and the censoring-weighted
// Brier score with its time integral. Applied to censoring times (flags
// inverted) the product-limit estimator yields G, the IPCW weight source.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "snapsurv/energy_model.hpp"
#include "snapsurv/resample.hpp"

namespace snapsurv {

// Right-continuous step estimate; value 1 before the first event time.
struct KaplanMeierCurve {
  std::vector<double> times;   // event times with at least one event, increasing
  std::vector<double> values;  // estimate just after each time

  double at(double t) const {
    auto it = std::upper_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return 1.0;
    return values[static_cast<std::size_t>(it - times.begin()) - 1];
  }

  // Left limit S(t-): the value strictly before t.
  double left_limit(double t) const {
    auto it = std::lower_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return 1.0;
    return values[static_cast<std::size_t>(it - times.begin()) - 1];
  }
};

// Product-limit estimator over (tau, event) pairs, ties aggregated.
inline KaplanMeierCurve kaplan_meier(std::span<const std::pair<double, bool>> observations) {
  if (observations.empty()) throw std::runtime_error("kaplan_meier: no observations");
  std::vector<std::pair<double, bool>> obs(observations.begin(), observations.end());
  for (const auto& [t, e] : obs) {
    if (!(t > 0.0)) throw std::runtime_error("kaplan_meier: times must be positive");
  }
  std::sort(obs.begin(), obs.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  KaplanMeierCurve km;
  double surv = 1.0;
  std::size_t at_risk = obs.size();
  std::size_t i = 0;
  while (i < obs.size()) {
    const double t = obs[i].first;
    std::size_t deaths = 0, leaves = 0;
    while (i < obs.size() && obs[i].first == t) {
      if (obs[i].second) ++deaths;
      ++leaves;
      ++i;
    }
    if (deaths > 0) {
      surv *= 1.0 - static_cast<double>(deaths) / static_cast<double>(at_risk);
      km.times.push_back(t);
      km.values.push_back(surv);
    }
    at_risk -= leaves;
  }
  return km;
}

inline KaplanMeierCurve censoring_kaplan_meier(std::span<const std::pair<double, bool>> obs) {
  std::vector<std::pair<double, bool>> inverted(obs.begin(), obs.end());
  for (auto& [t, e] : inverted) e = !e;
  return kaplan_meier(inverted);
}

// Mean per-sample log f (events) / log S (censorings). Same machinery as the
// training loss with the sign flipped and no gradient.
inline double quasi_log_likelihood(const EnergySurvivalModel& model,
                                   std::span<const FlatSample> samples) {
  return -batch_score(model, samples, false).mean_nll;
}

struct BrierResult {
  std::vector<double> times;
  std::vector<double> values;
  std::size_t skipped_terms = 0;  // terms dropped because G reached 0 (IPCW tail breakdown)
};

// Survival predictions for one flat sample at a set of evaluation times.
using SurvivalPredictor =
    std::function<std::vector<double>(const FlatSample&, std::span<const double>)>;

// Censoring-weighted Brier score over a flattened test set. For each
// evaluation time t, samples still at risk contribute (1-S)^2 / G(t) and
// observed failures before t contribute S^2 / G(tau-); the sum is divided by
// the total number of flat samples. G is the censoring Kaplan-Meier fitted on
// the test individuals, evaluated as a left limit in the failure term (the
// usual IPCW convention).
inline BrierResult brier_curve(const SurvivalPredictor& predict,
                               std::span<const FlatSample> samples,
                               std::span<const double> eval_times,
                               const KaplanMeierCurve& censoring_km) {
  if (samples.empty()) throw std::runtime_error("brier_curve: no samples");
  BrierResult out;
  out.times.assign(eval_times.begin(), eval_times.end());
  out.values.assign(eval_times.size(), 0.0);

  const double n = static_cast<double>(samples.size());
  for (const auto& s : samples) {
    const auto curve = predict(s, eval_times);
    for (std::size_t j = 0; j < eval_times.size(); ++j) {
      const double t = eval_times[j];
      if (s.target_time > t) {
        const double g = censoring_km.at(t);
        if (g > 0.0) {
          out.values[j] += (1.0 - curve[j]) * (1.0 - curve[j]) / g / n;
        } else {
          ++out.skipped_terms;
        }
      } else if (s.event) {
        const double g = censoring_km.left_limit(s.target_time);
        if (g > 0.0) {
          out.values[j] += curve[j] * curve[j] / g / n;
        } else {
          ++out.skipped_terms;
        }
      }
    }
  }
  return out;
}

inline BrierResult brier_curve(const EnergySurvivalModel& model,
                               std::span<const FlatSample> samples,
                               std::span<const double> eval_times,
                               const KaplanMeierCurve& censoring_km) {
  return brier_curve(
      [&model](const FlatSample& s, std::span<const double> ts) {
        return survival_curve(model, context_of(s), ts);
      },
      samples, eval_times, censoring_km);
}

// Trapezoidal mean of the Brier curve over [0, horizon]. The curve must
// cover the whole interval.
inline double integrated_brier(std::span<const double> times, std::span<const double> values,
                               double horizon) {
  if (times.size() != values.size() || times.size() < 2) {
    throw std::runtime_error("integrated_brier: need a curve of at least two points");
  }
  if (!(horizon > 0.0)) throw std::runtime_error("integrated_brier: horizon must be > 0");
  const double tol = 1e-9 * std::max(1.0, horizon);
  if (times.front() > tol || times.back() < horizon - tol) {
    throw std::runtime_error("integrated_brier: curve does not cover [0, horizon]");
  }
  double acc = 0.0;
  for (std::size_t j = 0; j + 1 < times.size(); ++j) {
    const double lo = std::clamp(times[j], 0.0, horizon);
    const double hi = std::clamp(times[j + 1], 0.0, horizon);
    if (hi <= lo) continue;
    // linear segment restricted to [0, horizon]
    const double span = times[j + 1] - times[j];
    const double v_lo =
        values[j] + (values[j + 1] - values[j]) * (lo - times[j]) / span;
    const double v_hi =
        values[j] + (values[j + 1] - values[j]) * (hi - times[j]) / span;
    acc += 0.5 * (v_lo + v_hi) * (hi - lo);
  }
  return acc / horizon;
}

inline double integrated_brier(const BrierResult& curve, double horizon) {
  return integrated_brier(curve.times, curve.values, horizon);
}

// Full evaluation of one model against a test dataset, following the
// canonical protocol: one single-time resample per requested time plus one
// random-grid resample; the Brier curve and its integral are computed on the
// random-grid samples with G fitted on the test individuals (total-life) or
// the flat targets (remaining-life, where no single per-individual outcome
// exists).
struct EvaluationReport {
  std::vector<std::pair<std::string, double>> quasi_log_likelihood;  // per test grid
  std::vector<std::pair<std::string, std::size_t>> sample_counts;
  BrierResult brier;
  double integrated_brier_score = 0.0;
  double brier_horizon = 0.0;
};

inline EvaluationReport evaluate_model(const EnergySurvivalModel& model,
                                       const SnapshotDataset& test_data,
                                       std::span<const double> single_times,
                                       int random_grid_points, double t_min, double t_max,
                                       std::uint64_t seed, int brier_points = 100) {
  EvaluationReport report;
  for (double t : single_times) {
    SamplingGrid g;
    g.points = {t};
    auto flat = flatten(homogeneous_resample(test_data, g).dataset, model.mode);
    const std::string key = "single_time_" + csv::format_double(t);
    report.sample_counts.emplace_back(key, flat.size());
    report.quasi_log_likelihood.emplace_back(
        key, flat.empty() ? std::numeric_limits<double>::quiet_NaN()
                          : quasi_log_likelihood(model, flat));
  }

  GridPolicy p;
  p.kind = GridKind::EpochwiseRandom;
  p.t_min = t_min;
  p.t_max = t_max;
  p.num_points = random_grid_points;
  p.rng_seed = mix_seed(seed, stream_tag("evaluate-grid"));
  auto random_flat = flatten(homogeneous_resample(test_data, make_grid(p, 0)).dataset, model.mode);
  if (random_flat.empty()) throw std::runtime_error("evaluate: random-grid resample is empty");
  report.sample_counts.emplace_back("random_grid", random_flat.size());
  report.quasi_log_likelihood.emplace_back("random_grid",
                                           quasi_log_likelihood(model, random_flat));

  std::vector<std::pair<double, bool>> outcome;
  if (model.mode == FlattenMode::TotalLife) {
    for (const auto& ind : test_data.individuals) {
      outcome.emplace_back(ind.recorded_time, ind.event);
    }
  } else {
    for (const auto& s : random_flat) outcome.emplace_back(s.target_time, s.event);
  }
  auto censor_km = censoring_kaplan_meier(outcome);

  for (const auto& s : random_flat) {
    report.brier_horizon = std::max(report.brier_horizon, s.target_time);
  }
  std::vector<double> times;
  for (int i = 0; i < brier_points; ++i) {
    times.push_back(report.brier_horizon * i / static_cast<double>(brier_points - 1));
  }
  report.brier = brier_curve(model, random_flat, times, censor_km);
  report.integrated_brier_score = integrated_brier(report.brier, report.brier_horizon);
  return report;
}

}  // namespace snapsurv
