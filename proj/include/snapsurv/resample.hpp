#pragma once

// Homogeneous resampling: replace each individual's irregular snapshot series
// with values interpolated on a common sampling grid, either a fixed
// equidistant grid or a fresh stratified-random grid per training epoch.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "snapsurv/dataset.hpp"
#include "snapsurv/rng.hpp"

namespace snapsurv {

struct SamplingGrid {
  std::vector<double> points;  // g_1 < ... < g_M, all >= 0

  std::size_t size() const { return points.size(); }
};

inline void validate_grid(const SamplingGrid& grid) {
  double prev = -1.0;
  for (double g : grid.points) {
    if (!(g >= 0.0)) throw std::runtime_error("sampling grid point must be >= 0");
    if (g <= prev) throw std::runtime_error("sampling grid points must be strictly increasing");
    prev = g;
  }
}

enum class GridKind { FixedEquidistant, EpochwiseRandom };

struct GridPolicy {
  GridKind kind = GridKind::FixedEquidistant;
  double t_min = 0.1;
  double t_max = 1.0;
  int num_points = 4;           // M
  std::uint64_t rng_seed = 0;   // epochwise only
  // Reproduces the printed draw g_k = t_min + (t_max-t_min)/M * u_k, which
  // crowds all points into the first 1/M-th of the range. Kept only for
  // comparison runs; the default stratified draw spans [t_min, t_max].
  bool literal_formula = false;
};

inline void validate_policy(const GridPolicy& p) {
  if (!(p.t_min < p.t_max)) throw std::runtime_error("grid policy requires t_min < t_max");
  if (p.num_points < 1) throw std::runtime_error("grid policy requires num_points >= 1");
}

// Fixed: M equally spaced points on [t_min, t_max] inclusive, epoch-independent.
// Epochwise: one point per stratum, g_k = t_min + (t_max-t_min)(k-1+u_k)/M with
// u_k iid Uniform(0,1) from a stream keyed by (rng_seed, epoch). Strata are
// disjoint, so the points are sorted by construction.
inline SamplingGrid make_grid(const GridPolicy& policy, int epoch) {
  validate_policy(policy);
  const int M = policy.num_points;
  const double span = policy.t_max - policy.t_min;
  SamplingGrid grid;
  grid.points.reserve(static_cast<std::size_t>(M));

  if (policy.kind == GridKind::FixedEquidistant) {
    if (M == 1) {
      grid.points.push_back(policy.t_min + 0.5 * span);  // centre of the single stratum
    } else {
      for (int k = 0; k < M; ++k) {
        grid.points.push_back(policy.t_min + span * static_cast<double>(k) /
                                                 static_cast<double>(M - 1));
      }
    }
    return grid;
  }

  auto rng = make_rng(mix_seed(policy.rng_seed, stream_tag("epoch-grid"),
                               static_cast<std::uint64_t>(static_cast<std::int64_t>(epoch))));
  if (policy.literal_formula) {
    for (int k = 0; k < M; ++k) {
      grid.points.push_back(policy.t_min + span / static_cast<double>(M) * uniform01(rng));
    }
    std::sort(grid.points.begin(), grid.points.end());
    grid.points.erase(std::unique(grid.points.begin(), grid.points.end()), grid.points.end());
  } else {
    for (int k = 0; k < M; ++k) {
      double u = uniform01(rng);
      grid.points.push_back(policy.t_min +
                            span * (static_cast<double>(k) + u) / static_cast<double>(M));
    }
  }
  validate_grid(grid);
  return grid;
}

// Componentwise linear interpolation of the usage curve between the two
// bracketing snapshots. Returns nothing outside [first, last] snapshot time:
// interpolation is only defined inside the observed hull, and extrapolation
// is deliberately not offered.
inline std::optional<std::vector<double>> interpolate_usage(const IndividualRecord& record,
                                                            double t) {
  const auto& snaps = record.snapshots;
  if (snaps.empty()) return std::nullopt;
  if (t < snaps.front().time || t > snaps.back().time) return std::nullopt;

  auto it = std::lower_bound(snaps.begin(), snaps.end(), t,
                             [](const Snapshot& s, double v) { return s.time < v; });
  if (it != snaps.end() && it->time == t) return it->covariates;  // knot values are exact
  // it points at the first snapshot with time > t; the bracketing pair is (it-1, it).
  const Snapshot& lo = *(it - 1);
  const Snapshot& hi = *it;
  const double lambda = (t - lo.time) / (hi.time - lo.time);
  std::vector<double> out(lo.covariates.size());
  for (std::size_t c = 0; c < out.size(); ++c) {
    out[c] = (1.0 - lambda) * lo.covariates[c] + lambda * hi.covariates[c];
  }
  return out;
}

struct ResampleSummary {
  std::size_t individual_count = 0;
  std::size_t full_coverage_count = 0;      // individuals with I_i = {1,...,M_i}
  std::vector<std::string> partial_ids;     // everyone else
  double coverage_fraction() const {
    return individual_count == 0
               ? 1.0
               : static_cast<double>(full_coverage_count) / static_cast<double>(individual_count);
  }
};

struct ResampleResult {
  SnapshotDataset dataset;
  ResampleSummary summary;
};

// Resamples every individual on the grid. I_i keeps the grid points where
// interpolation is available and g_k <= tau_i; individuals with empty I_i are
// retained with zero snapshots. Full coverage means I_i = {1,...,M_i} with
// M_i = M when tau_i >= g_M and max{k : g_k <= tau_i} otherwise, i.e. the
// individual supports every grid point it could possibly carry.
inline ResampleResult homogeneous_resample(const SnapshotDataset& ds, const SamplingGrid& grid) {
  validate_grid(grid);
  ResampleResult res;
  res.dataset.feature_dim = ds.feature_dim;
  res.dataset.feature_names = ds.feature_names;
  res.dataset.individuals.reserve(ds.individuals.size());
  res.summary.individual_count = ds.individuals.size();

  for (const auto& ind : ds.individuals) {
    IndividualRecord out;
    out.id = ind.id;
    out.recorded_time = ind.recorded_time;
    out.event = ind.event;

    std::size_t required = 0;  // M_i of the homogeneous-sampling definition
    for (double g : grid.points) {
      if (g <= ind.recorded_time) ++required;
    }
    for (double g : grid.points) {
      if (g > ind.recorded_time) break;
      auto x = interpolate_usage(ind, g);
      if (!x) continue;
      out.snapshots.push_back(Snapshot{g, std::move(*x)});
    }
    if (out.snapshots.size() == required) {
      ++res.summary.full_coverage_count;
    } else {
      res.summary.partial_ids.push_back(ind.id);
    }
    res.dataset.individuals.push_back(std::move(out));
  }
  return res;
}

}  // namespace snapsurv
