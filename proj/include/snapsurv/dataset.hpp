#pragma once

// Domain model for right-censored snapshot survival data.
//
// An individual carries an outcome (recorded time tau, event flag) and an
// ordered series of usage snapshots taken while it was alive. Snapshots after
// tau are rejected outright: the model makes them impossible, and dropping
// them silently would hide upstream data bugs. A snapshot exactly at tau is
// allowed (the simulator stores one from the time of failure).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "snapsurv/csv.hpp"

namespace snapsurv {

struct Snapshot {
  double time = 0.0;               // component age at storage time
  std::vector<double> covariates;  // aggregated usage features x(t)
};

struct IndividualRecord {
  std::string id;
  double recorded_time = 0.0;  // tau
  bool event = false;          // true = failure, false = right-censoring
  std::vector<Snapshot> snapshots;
};

struct SnapshotDataset {
  std::vector<IndividualRecord> individuals;
  std::size_t feature_dim = 0;
  std::vector<std::string> feature_names;

  std::size_t size() const { return individuals.size(); }
  std::size_t total_snapshots() const {
    std::size_t n = 0;
    for (const auto& ind : individuals) n += ind.snapshots.size();
    return n;
  }
};

enum class FlattenMode { TotalLife, RemainingLife };

inline const char* to_string(FlattenMode m) {
  return m == FlattenMode::TotalLife ? "total" : "remaining";
}

inline FlattenMode flatten_mode_from_string(const std::string& s) {
  if (s == "total") return FlattenMode::TotalLife;
  if (s == "remaining") return FlattenMode::RemainingLife;
  throw std::runtime_error("unknown mode '" + s + "' (expected total|remaining)");
}

// One training row: (target time, event, snapshot time, covariates).
// target_time is tau in total-life mode and tau - t0 in remaining-life mode.
struct FlatSample {
  double target_time = 0.0;
  bool event = false;
  double snapshot_time = 0.0;  // t0
  std::vector<double> covariates;
};

inline void validate_record(const IndividualRecord& ind, std::size_t feature_dim) {
  if (!(ind.recorded_time > 0.0) || !std::isfinite(ind.recorded_time)) {
    throw std::runtime_error("individual '" + ind.id + "': recorded time must be positive, got " +
                             csv::format_double(ind.recorded_time));
  }
  double prev = -1.0;
  for (const auto& s : ind.snapshots) {
    if (!(s.time >= 0.0) || !std::isfinite(s.time)) {
      throw std::runtime_error("individual '" + ind.id + "': snapshot time must be >= 0");
    }
    if (s.time <= prev) {
      throw std::runtime_error("individual '" + ind.id +
                               "': snapshot times not strictly increasing at t=" +
                               csv::format_double(s.time));
    }
    if (s.time > ind.recorded_time) {
      throw std::runtime_error("individual '" + ind.id + "': snapshot after recorded time (t=" +
                               csv::format_double(s.time) +
                               " > tau=" + csv::format_double(ind.recorded_time) + ")");
    }
    if (s.covariates.size() != feature_dim) {
      throw std::runtime_error("individual '" + ind.id + "': snapshot at t=" +
                               csv::format_double(s.time) + " has " +
                               std::to_string(s.covariates.size()) + " features, expected " +
                               std::to_string(feature_dim));
    }
    prev = s.time;
  }
}

inline void validate_dataset(const SnapshotDataset& ds) {
  std::map<std::string, int> seen;
  for (const auto& ind : ds.individuals) {
    if (++seen[ind.id] > 1) throw std::runtime_error("duplicate individual id '" + ind.id + "'");
    validate_record(ind, ds.feature_dim);
  }
}

// Loads the two-table interchange format:
//   individuals: id,tau,delta            (delta in {0,1})
//   snapshots:   id,t,<f1>,...,<fd>      (long format, one row per snapshot)
// Snapshots are grouped per id and sorted by t. Any invariant violation
// aborts with a message naming the offending row or individual.
inline SnapshotDataset load_dataset(const std::string& individuals_path,
                                    const std::string& snapshots_path) {
  auto ind_table = csv::read_file(individuals_path);
  if (!ind_table.header.empty() &&
      (ind_table.header.size() != 3 || ind_table.header[0] != "id" ||
       ind_table.header[1] != "tau" || ind_table.header[2] != "delta")) {
    throw std::runtime_error(individuals_path + ": expected header id,tau,delta");
  }

  SnapshotDataset ds;
  std::map<std::string, std::size_t> index_of;
  for (std::size_t r = 0; r < ind_table.rows.size(); ++r) {
    const auto& row = ind_table.rows[r];
    const std::string where = individuals_path + " row " + std::to_string(r + 1);
    IndividualRecord ind;
    ind.id = row[0];
    ind.recorded_time = csv::parse_double(row[1], where);
    long long delta = csv::parse_int(row[2], where);
    if (delta != 0 && delta != 1) throw std::runtime_error(where + ": delta must be 0 or 1");
    ind.event = delta == 1;
    if (index_of.count(ind.id)) throw std::runtime_error(where + ": duplicate id '" + ind.id + "'");
    index_of[ind.id] = ds.individuals.size();
    ds.individuals.push_back(std::move(ind));
  }

  auto snap_table = csv::read_file(snapshots_path);
  if (!snap_table.header.empty()) {
    if (snap_table.header.size() < 2 || snap_table.header[0] != "id" ||
        snap_table.header[1] != "t") {
      throw std::runtime_error(snapshots_path + ": expected header id,t,<features...>");
    }
    ds.feature_dim = snap_table.header.size() - 2;
    ds.feature_names.assign(snap_table.header.begin() + 2, snap_table.header.end());
  }
  for (std::size_t r = 0; r < snap_table.rows.size(); ++r) {
    const auto& row = snap_table.rows[r];
    const std::string where = snapshots_path + " row " + std::to_string(r + 1);
    auto it = index_of.find(row[0]);
    if (it == index_of.end()) throw std::runtime_error(where + ": unknown id '" + row[0] + "'");
    Snapshot s;
    s.time = csv::parse_double(row[1], where);
    s.covariates.reserve(ds.feature_dim);
    for (std::size_t c = 2; c < row.size(); ++c) {
      s.covariates.push_back(csv::parse_double(row[c], where));
    }
    ds.individuals[it->second].snapshots.push_back(std::move(s));
  }

  for (auto& ind : ds.individuals) {
    std::stable_sort(ind.snapshots.begin(), ind.snapshots.end(),
                     [](const Snapshot& a, const Snapshot& b) { return a.time < b.time; });
  }
  validate_dataset(ds);
  return ds;
}

inline std::vector<std::string> default_feature_names(std::size_t d) {
  std::vector<std::string> names;
  names.reserve(d);
  for (std::size_t i = 0; i < d; ++i) names.push_back("f" + std::to_string(i + 1));
  return names;
}

// Inverse emitter of load_dataset: same column schema, to_chars doubles, so
// load(save(ds)) reproduces ds bit-identically.
inline void save_dataset(const SnapshotDataset& ds, const std::string& individuals_path,
                         const std::string& snapshots_path) {
  csv::Writer ind_out(individuals_path);
  ind_out.row({"id", "tau", "delta"});
  for (const auto& ind : ds.individuals) {
    ind_out.row({ind.id, csv::format_double(ind.recorded_time), ind.event ? "1" : "0"});
  }

  csv::Writer snap_out(snapshots_path);
  std::vector<std::string> header = {"id", "t"};
  auto names = ds.feature_names.size() == ds.feature_dim ? ds.feature_names
                                                         : default_feature_names(ds.feature_dim);
  header.insert(header.end(), names.begin(), names.end());
  snap_out.row(header);
  for (const auto& ind : ds.individuals) {
    for (const auto& s : ind.snapshots) {
      std::vector<std::string> row = {ind.id, csv::format_double(s.time)};
      for (double v : s.covariates) row.push_back(csv::format_double(v));
      snap_out.row(row);
    }
  }
}

// One sample per (individual, snapshot) pair; |output| = sum_i M_i.
inline std::vector<FlatSample> flatten(const SnapshotDataset& ds, FlattenMode mode) {
  std::vector<FlatSample> out;
  out.reserve(ds.total_snapshots());
  for (const auto& ind : ds.individuals) {
    for (const auto& s : ind.snapshots) {
      FlatSample fs;
      fs.event = ind.event;
      fs.snapshot_time = s.time;
      fs.covariates = s.covariates;
      fs.target_time = mode == FlattenMode::TotalLife ? ind.recorded_time
                                                      : ind.recorded_time - s.time;
      out.push_back(std::move(fs));
    }
  }
  return out;
}

// Flat-sample CSV emitter: target_time,event,t0,<f1>,...,<fd>.
inline void write_flat_csv(const std::vector<FlatSample>& samples,
                           const std::vector<std::string>& feature_names,
                           const std::string& path) {
  csv::Writer out(path);
  std::vector<std::string> header = {"target_time", "event", "t0"};
  header.insert(header.end(), feature_names.begin(), feature_names.end());
  out.row(header);
  for (const auto& s : samples) {
    std::vector<std::string> row = {csv::format_double(s.target_time), s.event ? "1" : "0",
                                    csv::format_double(s.snapshot_time)};
    for (double v : s.covariates) row.push_back(csv::format_double(v));
    out.row(row);
  }
}

struct HomogeneityResult {
  bool homogeneous = false;
  std::string diagnostic;  // names the first violating individual/time
};

// Timestamps are matched within a combined absolute/relative tolerance;
// real snapshot times carry floating-point noise even when the underlying
// schedule is exact.
inline bool times_match(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

// A dataset is homogeneously sampled if there is one common time sequence
// t_1 < ... < t_M such that every individual holds snapshots at exactly the
// first M_i of them, where M_i = M or M_i = max{k : t_k <= tau_i}. The
// candidate sequence is the tolerance-merged union of all observed times:
// any valid common sequence must contain every observed time, so if the
// union fails no sequence can succeed.
inline HomogeneityResult is_homogeneously_sampled(const SnapshotDataset& ds, double tolerance) {
  HomogeneityResult res;
  std::vector<double> all_times;
  for (const auto& ind : ds.individuals) {
    for (const auto& s : ind.snapshots) all_times.push_back(s.time);
  }
  if (all_times.empty()) {
    res.homogeneous = true;
    res.diagnostic = "no snapshots (vacuously homogeneous)";
    return res;
  }
  std::sort(all_times.begin(), all_times.end());
  std::vector<double> reps;
  for (double t : all_times) {
    if (reps.empty() || !times_match(reps.back(), t, tolerance)) reps.push_back(t);
  }
  const std::size_t M = reps.size();

  for (const auto& ind : ds.individuals) {
    const std::size_t Mi = ind.snapshots.size();
    for (std::size_t j = 0; j < Mi; ++j) {
      if (!times_match(ind.snapshots[j].time, reps[j], tolerance)) {
        res.diagnostic = "individual '" + ind.id + "': snapshot time " +
                         csv::format_double(ind.snapshots[j].time) +
                         " does not match common time " + csv::format_double(reps[j]);
        return res;
      }
    }
    if (Mi == M) continue;
    // Truncated series: the next common time must lie beyond tau_i.
    double t_next = reps[Mi];
    if (t_next <= ind.recorded_time || times_match(t_next, ind.recorded_time, tolerance)) {
      res.diagnostic = "individual '" + ind.id + "': missing snapshot at time " +
                       csv::format_double(t_next) + " although it is <= tau=" +
                       csv::format_double(ind.recorded_time);
      return res;
    }
  }
  res.homogeneous = true;
  res.diagnostic = "homogeneous on " + std::to_string(M) + " common times";
  return res;
}

inline HomogeneityResult is_homogeneously_sampled(const SnapshotDataset& ds) {
  return is_homogeneously_sampled(ds, 1e-9);
}

}  // namespace snapsurv
