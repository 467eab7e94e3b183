#pragma once

// Training loops for the quasi-likelihood objective.
//
// One run: split by individual, freeze standardization and the quadrature
// horizon from the first training resample, then run minibatch Adam. Under
// the epochwise policy the training grid is redrawn from its seeded stream
// at the start of every epoch; under the fixed policy the data is resampled
// once. Validation data is always resampled once, on a grid frozen at setup,
// so epoch-to-epoch validation losses stay comparable, and the returned
// model is the state from the epoch with the lowest validation loss.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "snapsurv/checkpoint.hpp"
#include "snapsurv/dataset.hpp"
#include "snapsurv/energy_model.hpp"
#include "snapsurv/evaluate.hpp"
#include "snapsurv/mlp.hpp"
#include "snapsurv/resample.hpp"
#include "snapsurv/rng.hpp"

namespace snapsurv {

// How training data is regenerated across epochs. AsIs trains directly on
// the stored snapshots and exists for pre-resampled (e.g. deliberately
// inhomogeneous) datasets.
enum class TrainResample { Fixed, EpochwiseRandom, AsIs };

inline const char* to_string(TrainResample p) {
  switch (p) {
    case TrainResample::Fixed: return "fixed";
    case TrainResample::EpochwiseRandom: return "random";
    default: return "as-is";
  }
}

inline TrainResample train_resample_from_string(const std::string& s) {
  if (s == "fixed") return TrainResample::Fixed;
  if (s == "random") return TrainResample::EpochwiseRandom;
  if (s == "as-is") return TrainResample::AsIs;
  throw std::runtime_error("unknown resample policy '" + s + "' (fixed|random|as-is)");
}

struct TrainConfig {
  int epochs = 200;
  double learning_rate = 0.05;
  int batch_size = 128;  // 0 = full batch
  FlattenMode mode = FlattenMode::TotalLife;
  TrainResample policy = TrainResample::Fixed;
  double grid_t_min = 0.1;
  double grid_t_max = 1.0;
  int grid_points = 4;
  bool grid_literal_formula = false;
  std::vector<int> hidden = {32, 32};
  double dropout_rate = 0.0;
  int quadrature_points = 257;
  double t_upper = 0.0;  // 0 = auto: 1.5 x the largest achievable target time
  std::uint64_t seed = 0;
};

struct RunManifest {
  nlohmann::json config;
  std::vector<double> train_losses;
  std::vector<double> val_losses;
  int best_epoch = -1;  // argmin of val_losses
  double best_val_loss = 0.0;
  std::string status = "ok";  // or "aborted: ..."
  double t_upper = 0.0;
  std::vector<std::vector<double>> epoch_grids;  // one entry under the fixed policy
  std::vector<double> validation_grid;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["config"] = config;
    j["train_losses"] = train_losses;
    j["val_losses"] = val_losses;
    j["best_epoch"] = best_epoch;
    j["best_val_loss"] = best_val_loss;
    j["status"] = status;
    j["t_upper"] = t_upper;
    j["epoch_grids"] = epoch_grids;
    j["validation_grid"] = validation_grid;
    return j;
  }
};

struct TrainResult {
  std::optional<EnergySurvivalModel> model;  // empty when the run aborted
  RunManifest manifest;
};

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  return nlohmann::json{{"epochs", c.epochs},
                        {"learning_rate", c.learning_rate},
                        {"batch_size", c.batch_size},
                        {"mode", to_string(c.mode)},
                        {"policy", to_string(c.policy)},
                        {"grid_t_min", c.grid_t_min},
                        {"grid_t_max", c.grid_t_max},
                        {"grid_points", c.grid_points},
                        {"grid_literal_formula", c.grid_literal_formula},
                        {"hidden", c.hidden},
                        {"dropout_rate", c.dropout_rate},
                        {"quadrature_points", c.quadrature_points},
                        {"t_upper", c.t_upper},
                        {"seed", c.seed}};
}

// Disjoint individual-level partition; no id appears on both sides. The
// validation share rounds to the nearest count but always leaves both sides
// nonempty.
inline std::pair<SnapshotDataset, SnapshotDataset> split_by_individual(const SnapshotDataset& ds,
                                                                       double val_fraction,
                                                                       std::uint64_t seed) {
  const std::size_t n = ds.individuals.size();
  if (n < 2) throw std::runtime_error("split: need at least 2 individuals");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw std::runtime_error("split: val_fraction must be in (0, 1)");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto rng = make_rng(mix_seed(seed, stream_tag("individual-split")));
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i + 1));
    std::swap(order[i], order[std::min(j, i)]);
  }
  std::size_t n_val = static_cast<std::size_t>(std::lround(val_fraction * static_cast<double>(n)));
  n_val = std::clamp<std::size_t>(n_val, 1, n - 1);

  SnapshotDataset train, val;
  train.feature_dim = val.feature_dim = ds.feature_dim;
  train.feature_names = val.feature_names = ds.feature_names;
  for (std::size_t i = 0; i < n; ++i) {
    (i < n_val ? val : train).individuals.push_back(ds.individuals[order[i]]);
  }
  return {std::move(train), std::move(val)};
}

namespace detail {

// Largest target time any resampling of this dataset can produce under the
// given mode and policy; the auto quadrature horizon is 1.5 x this value so
// no training target can ever leave the model support.
inline double max_achievable_target(const SnapshotDataset& ds, FlattenMode mode,
                                    TrainResample policy, double grid_t_min) {
  double best = 0.0;
  for (const auto& ind : ds.individuals) {
    if (ind.snapshots.empty()) continue;
    if (mode == FlattenMode::TotalLife) {
      best = std::max(best, ind.recorded_time);
    } else {
      const double lowest_t0 = policy == TrainResample::AsIs
                                   ? ind.snapshots.front().time
                                   : std::max(grid_t_min, ind.snapshots.front().time);
      best = std::max(best, ind.recorded_time - lowest_t0);
    }
  }
  return best;
}

inline GridPolicy grid_policy_of(const TrainConfig& c, std::uint64_t grid_seed) {
  GridPolicy p;
  p.kind = c.policy == TrainResample::EpochwiseRandom ? GridKind::EpochwiseRandom
                                                      : GridKind::FixedEquidistant;
  p.t_min = c.grid_t_min;
  p.t_max = c.grid_t_max;
  p.num_points = c.grid_points;
  p.rng_seed = grid_seed;
  p.literal_formula = c.grid_literal_formula;
  return p;
}

}  // namespace detail

inline TrainResult train(const SnapshotDataset& train_ds, const SnapshotDataset& val_ds,
                         const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw std::runtime_error("train: epochs must be >= 1");
  if (train_ds.feature_dim != val_ds.feature_dim) {
    throw std::runtime_error("train: train/validation feature dimensions differ");
  }
  if (cfg.batch_size < 0) throw std::runtime_error("train: batch_size must be >= 0");

  TrainResult out;
  out.manifest.config = train_config_to_json(cfg);

  const GridPolicy train_grid_policy =
      detail::grid_policy_of(cfg, mix_seed(cfg.seed, stream_tag("train-grid")));

  auto resample_flat = [&](const SnapshotDataset& ds, const SamplingGrid& grid) {
    return flatten(homogeneous_resample(ds, grid).dataset, cfg.mode);
  };

  // Epoch-0 training data; fixed policy keeps it for the whole run.
  SamplingGrid grid0;
  std::vector<FlatSample> train_flat;
  if (cfg.policy == TrainResample::AsIs) {
    train_flat = flatten(train_ds, cfg.mode);
  } else {
    grid0 = make_grid(train_grid_policy, 0);
    train_flat = resample_flat(train_ds, grid0);
  }
  if (train_flat.empty()) throw std::runtime_error("train: no training samples after resampling");

  // Validation data is resampled once on a random grid frozen at setup and
  // identical across epochs. A random grid rather than the training grid so
  // model selection rewards off-grid generalization under either policy.
  std::vector<FlatSample> val_flat;
  if (cfg.policy == TrainResample::AsIs) {
    val_flat = flatten(val_ds, cfg.mode);
  } else {
    GridPolicy val_policy = train_grid_policy;
    val_policy.kind = GridKind::EpochwiseRandom;
    val_policy.rng_seed = mix_seed(cfg.seed, stream_tag("validation-grid"));
    SamplingGrid val_grid = make_grid(val_policy, 0);
    out.manifest.validation_grid = val_grid.points;
    val_flat = resample_flat(val_ds, val_grid);
  }
  if (val_flat.empty()) throw std::runtime_error("train: no validation samples after resampling");

  EnergySurvivalModel model;
  model.mode = cfg.mode;
  model.feature_names = train_ds.feature_names.size() == train_ds.feature_dim
                            ? train_ds.feature_names
                            : default_feature_names(train_ds.feature_dim);
  model.net.input_dim = 2 + static_cast<int>(train_ds.feature_dim);
  model.net.hidden = cfg.hidden;
  model.net.dropout_rate = cfg.dropout_rate;
  model.net.init_seed = mix_seed(cfg.seed, stream_tag("init"));
  model.params = init_params(model.net);
  model.standardizer = fit_standardizer(train_flat);
  model.quadrature.num_points = cfg.quadrature_points;
  // The auto horizon must cover every target the run can ever score,
  // including the frozen validation resample.
  model.quadrature.t_upper =
      cfg.t_upper > 0.0
          ? cfg.t_upper
          : 1.5 * std::max(
                      detail::max_achievable_target(train_ds, cfg.mode, cfg.policy, cfg.grid_t_min),
                      detail::max_achievable_target(val_ds, cfg.mode, cfg.policy, cfg.grid_t_min));
  if (!(model.quadrature.t_upper > 0.0)) {
    throw std::runtime_error("train: could not derive a positive quadrature horizon");
  }
  out.manifest.t_upper = model.quadrature.t_upper;

  AdamState adam = make_adam(cfg.learning_rate, model.params.count());
  auto shuffle_rng = make_rng(mix_seed(cfg.seed, stream_tag("batch-shuffle")));
  auto dropout_rng = make_rng(mix_seed(cfg.seed, stream_tag("dropout")));

  MlpParams best_params = model.params;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.policy == TrainResample::EpochwiseRandom) {
      SamplingGrid grid = make_grid(train_grid_policy, epoch);
      out.manifest.epoch_grids.push_back(grid.points);
      train_flat = resample_flat(train_ds, grid);
      if (train_flat.empty()) {
        out.manifest.status = "aborted: empty epoch resample";
        return out;
      }
    } else if (epoch == 0 && cfg.policy == TrainResample::Fixed) {
      out.manifest.epoch_grids.push_back(grid0.points);
    }

    std::vector<std::size_t> order(train_flat.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      const std::size_t j =
          static_cast<std::size_t>(uniform01(shuffle_rng) * static_cast<double>(i + 1));
      std::swap(order[i], order[std::min(j, i)]);
    }

    const std::size_t batch =
        cfg.batch_size == 0 ? train_flat.size() : static_cast<std::size_t>(cfg.batch_size);
    double epoch_loss = 0.0;
    std::vector<FlatSample> minibatch;
    try {
      for (std::size_t begin = 0; begin < order.size(); begin += batch) {
        const std::size_t end = std::min(order.size(), begin + batch);
        minibatch.clear();
        for (std::size_t k = begin; k < end; ++k) minibatch.push_back(train_flat[order[k]]);
        ScoreResult score =
            batch_nll(model, minibatch, cfg.dropout_rate > 0.0 ? &dropout_rng : nullptr);
        if (!std::isfinite(score.mean_nll)) throw std::runtime_error("non-finite training loss");
        adam_step(adam, model.params, score.grad_flat);
        epoch_loss += score.mean_nll * static_cast<double>(end - begin);
      }
      out.manifest.train_losses.push_back(epoch_loss / static_cast<double>(train_flat.size()));

      const double val_loss = batch_score(model, val_flat, false).mean_nll;
      if (!std::isfinite(val_loss)) throw std::runtime_error("non-finite validation loss");
      out.manifest.val_losses.push_back(val_loss);
      if (val_loss < best_val) {
        best_val = val_loss;
        best_epoch = epoch;
        best_params = model.params;
      }
    } catch (const std::exception& e) {
      out.manifest.status = std::string("aborted: ") + e.what();
      return out;
    }
  }

  out.manifest.best_epoch = best_epoch;
  out.manifest.best_val_loss = best_val;
  model.params = std::move(best_params);
  out.model = std::move(model);
  return out;
}

struct SweepSpec {
  int count = 15;
  double low = 1e-2;
  double high = 0.25;
};

// Geometric progression of candidate rates, low to high inclusive.
inline std::vector<double> sweep_rates(const SweepSpec& spec) {
  if (spec.count < 1) throw std::runtime_error("sweep: count must be >= 1");
  if (!(spec.low > 0.0 && spec.high > 0.0)) throw std::runtime_error("sweep: rates must be > 0");
  std::vector<double> rates;
  if (spec.count == 1) {
    rates.push_back(spec.low);
    return rates;
  }
  const double ratio = std::pow(spec.high / spec.low, 1.0 / static_cast<double>(spec.count - 1));
  for (int i = 0; i < spec.count; ++i) {
    rates.push_back(spec.low * std::pow(ratio, static_cast<double>(i)));
  }
  return rates;
}

struct SweepResult {
  std::vector<double> rates;
  std::vector<double> mean_best_val_losses;  // NaN for rates whose every replicate aborted
  std::vector<int> completed_replicates;
  int best_index = -1;
};

// Trains `replicates` models per candidate rate on independently seeded
// dataset representations and reports the per-rate mean best-validation
// loss. The representation provider is called once per replicate index, so
// every rate sees the same replicate datasets and split seeds; rates differ
// only in the learning rate.
template <typename DatasetProvider>
SweepResult sweep(DatasetProvider&& dataset_for_replicate, const TrainConfig& base,
                  const SweepSpec& spec, int replicates, double val_fraction,
                  std::uint64_t seed) {
  if (replicates < 1) throw std::runtime_error("sweep: replicates must be >= 1");
  SweepResult res;
  res.rates = sweep_rates(spec);
  res.mean_best_val_losses.assign(res.rates.size(), 0.0);
  res.completed_replicates.assign(res.rates.size(), 0);

  for (int rep = 0; rep < replicates; ++rep) {
    const SnapshotDataset ds = dataset_for_replicate(rep);
    const std::uint64_t rep_seed = mix_seed(seed, stream_tag("sweep-replicate"),
                                            static_cast<std::uint64_t>(rep));
    auto [train_part, val_part] = split_by_individual(ds, val_fraction, rep_seed);
    for (std::size_t r = 0; r < res.rates.size(); ++r) {
      TrainConfig cfg = base;
      cfg.learning_rate = res.rates[r];
      cfg.seed = rep_seed;
      TrainResult t = train(train_part, val_part, cfg);
      if (t.model) {
        res.mean_best_val_losses[r] += t.manifest.best_val_loss;
        res.completed_replicates[r] += 1;
      }
    }
  }

  double best = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < res.rates.size(); ++r) {
    if (res.completed_replicates[r] == 0) {
      res.mean_best_val_losses[r] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    res.mean_best_val_losses[r] /= static_cast<double>(res.completed_replicates[r]);
    if (res.mean_best_val_losses[r] < best) {
      best = res.mean_best_val_losses[r];
      res.best_index = static_cast<int>(r);
    }
  }
  return res;
}

}  // namespace snapsurv
