#pragma once

// Energy-based survival head. The network defines an energy E(t; t0, x); the
// failure density is f = exp(-E)/Z with Z integrated numerically, and the
// survival function is one minus the cumulative integral of f. Truncating
// Z's integral at a declared horizon t_upper makes (S, f) an exactly
// consistent pair on [0, t_upper], which the likelihood needs.
//
// All integrals use the composite trapezoid on a uniform grid of Q points
// over [0, t_upper]. Evaluation shifts by the per-sample max log mass
// (log-sum-exp in cumulative form), so large energies of either sign cannot
// overflow. Target times that fall between grid points get the enclosing
// partial trapezoid plus one exact energy evaluation at the target itself,
// so event likelihoods are not quantized to the grid.
//
// Network input layout per evaluation: [time-of-evaluation, t0, covariates],
// each standardized with constants frozen from the training set. In
// remaining-life mode the time axis is remaining time rather than age; the
// machinery is identical.

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "snapsurv/dataset.hpp"
#include "snapsurv/mlp.hpp"

namespace snapsurv {

struct QuadratureConfig {
  double t_upper = 1.0;   // integration horizon; the model's support is [0, t_upper]
  int num_points = 257;   // Q; 2^k + 1 keeps refinement studies clean
};

inline void validate_quadrature(const QuadratureConfig& q) {
  if (!(q.t_upper > 0.0)) throw std::runtime_error("quadrature: t_upper must be > 0");
  if (q.num_points < 2) throw std::runtime_error("quadrature: need at least 2 points");
}

struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;
};

inline Standardizer identity_standardizer(int dim) {
  Standardizer s;
  s.mean = Eigen::VectorXd::Zero(dim);
  s.scale = Eigen::VectorXd::Ones(dim);
  return s;
}

// Per-column mean/std of the model inputs [target_time, t0, covariates...]
// over a flattened training set. Constant columns get scale 1.
inline Standardizer fit_standardizer(std::span<const FlatSample> samples) {
  if (samples.empty()) throw std::runtime_error("standardizer: no samples");
  const int dim = 2 + static_cast<int>(samples.front().covariates.size());
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd sumsq = Eigen::VectorXd::Zero(dim);
  for (const auto& s : samples) {
    Eigen::VectorXd row(dim);
    row(0) = s.target_time;
    row(1) = s.snapshot_time;
    for (int c = 0; c < dim - 2; ++c) row(2 + c) = s.covariates[static_cast<std::size_t>(c)];
    sum += row;
    sumsq += row.cwiseProduct(row);
  }
  const double n = static_cast<double>(samples.size());
  Standardizer st;
  st.mean = sum / n;
  st.scale = ((sumsq / n) - st.mean.cwiseProduct(st.mean)).cwiseMax(0.0).cwiseSqrt();
  for (Eigen::Index i = 0; i < st.scale.size(); ++i) {
    if (st.scale(i) < 1e-12) st.scale(i) = 1.0;
  }
  return st;
}

struct EnergySurvivalModel {
  MlpConfig net;
  MlpParams params;
  QuadratureConfig quadrature;
  Standardizer standardizer;
  FlattenMode mode = FlattenMode::TotalLife;
  std::vector<std::string> feature_names;

  std::size_t feature_dim() const { return static_cast<std::size_t>(net.input_dim - 2); }
};

// The covariate context a prediction conditions on: the snapshot (t0, x).
struct EvalContext {
  double t0 = 0.0;
  std::vector<double> covariates;
};

inline EvalContext context_of(const FlatSample& s) {
  return EvalContext{s.snapshot_time, s.covariates};
}

namespace detail {

inline void check_context(const EnergySurvivalModel& m, const EvalContext& ctx) {
  if (ctx.covariates.size() != m.feature_dim()) {
    throw std::runtime_error("model expects " + std::to_string(m.feature_dim()) +
                             " covariates, got " + std::to_string(ctx.covariates.size()));
  }
}

inline void fill_row(const EnergySurvivalModel& m, Eigen::MatrixXd& X, Eigen::Index r, double t,
                     const EvalContext& ctx) {
  const auto& st = m.standardizer;
  X(r, 0) = (t - st.mean(0)) / st.scale(0);
  X(r, 1) = (ctx.t0 - st.mean(1)) / st.scale(1);
  for (std::size_t c = 0; c < ctx.covariates.size(); ++c) {
    const Eigen::Index j = 2 + static_cast<Eigen::Index>(c);
    X(r, j) = (ctx.covariates[c] - st.mean(j)) / st.scale(j);
  }
}

// Grid spacing and trapezoid weight of point q.
inline double quad_h(const QuadratureConfig& q) {
  return q.t_upper / static_cast<double>(q.num_points - 1);
}
inline double quad_weight(const QuadratureConfig& q, int k) {
  const double h = quad_h(q);
  return (k == 0 || k == q.num_points - 1) ? 0.5 * h : h;
}

// The standardized network-input matrix a scoring pass evaluates: Q grid
// rows plus the target row, per sample.
inline Eigen::MatrixXd score_inputs(const EnergySurvivalModel& model,
                                    std::span<const FlatSample> samples) {
  const int Q = model.quadrature.num_points;
  const double h = quad_h(model.quadrature);
  const int rows_per_sample = Q + 1;
  Eigen::MatrixXd X(static_cast<Eigen::Index>(samples.size()) * rows_per_sample,
                    model.net.input_dim);
  for (Eigen::Index b = 0; b < static_cast<Eigen::Index>(samples.size()); ++b) {
    const FlatSample& s = samples[static_cast<std::size_t>(b)];
    const EvalContext ctx = context_of(s);
    check_context(model, ctx);
    const Eigen::Index base = b * rows_per_sample;
    for (int q = 0; q < Q; ++q) fill_row(model, X, base + q, h * q, ctx);
    fill_row(model, X, base + Q, std::min(s.target_time, model.quadrature.t_upper), ctx);
  }
  return X;
}

}  // namespace detail

// Survival values at each requested time, sharing one network pass and one
// normalizer evaluation. Times at or beyond t_upper clamp to S = 0; results
// are clamped to [0, 1] against round-off.
inline std::vector<double> survival_curve(const EnergySurvivalModel& model, const EvalContext& ctx,
                                          std::span<const double> times) {
  detail::check_context(model, ctx);
  validate_quadrature(model.quadrature);
  const int Q = model.quadrature.num_points;
  const double h = detail::quad_h(model.quadrature);
  const double t_upper = model.quadrature.t_upper;
  const Eigen::Index n_extra = static_cast<Eigen::Index>(times.size());

  Eigen::MatrixXd X(Q + n_extra, model.net.input_dim);
  for (int q = 0; q < Q; ++q) detail::fill_row(model, X, q, h * q, ctx);
  for (Eigen::Index i = 0; i < n_extra; ++i) {
    const double t = std::min(std::max(times[i], 0.0), t_upper);
    detail::fill_row(model, X, Q + i, t, ctx);
  }
  Eigen::VectorXd energy = forward(model.net, model.params, X);
  if (!energy.allFinite()) throw std::runtime_error("non-finite energy on quadrature grid");

  // shift by the max grid log-mass so z is always well-scaled
  const double shift = (-energy.head(Q).array()).maxCoeff();
  Eigen::ArrayXd mass = (-energy.array() - shift).exp();  // exp(-E) up to a common factor

  // prefix[k] = integral of exp(-E)-mass over [0, t_k], same scale as z
  Eigen::ArrayXd prefix(Q);
  prefix(0) = 0.0;
  for (int k = 1; k < Q; ++k) {
    prefix(k) = prefix(k - 1) + 0.5 * h * (mass(k - 1) + mass(k));
  }
  const double z = prefix(Q - 1);

  std::vector<double> out(times.size());
  for (Eigen::Index i = 0; i < n_extra; ++i) {
    const double t = times[i];
    if (t <= 0.0) {
      out[static_cast<std::size_t>(i)] = 1.0;
      continue;
    }
    if (t >= t_upper) {
      out[static_cast<std::size_t>(i)] = 0.0;
      continue;
    }
    const int k = std::min(static_cast<int>(t / h), Q - 1);
    const double part = prefix(k) + 0.5 * (t - h * k) * (mass(k) + mass(Q + i));
    const double s = 1.0 - part / z;
    out[static_cast<std::size_t>(i)] = std::min(std::max(s, 0.0), 1.0);
  }
  return out;
}

inline double survival(const EnergySurvivalModel& model, double t, const EvalContext& ctx) {
  if (!(t >= 0.0)) throw std::runtime_error("survival: t must be >= 0");
  return survival_curve(model, ctx, std::span<const double>(&t, 1)).front();
}

// log Z = log integral of exp(-E) over [0, t_upper], trapezoid + log-sum-exp.
inline double log_normalizer(const EnergySurvivalModel& model, const EvalContext& ctx) {
  detail::check_context(model, ctx);
  validate_quadrature(model.quadrature);
  const int Q = model.quadrature.num_points;
  Eigen::MatrixXd X(Q, model.net.input_dim);
  const double h = detail::quad_h(model.quadrature);
  for (int q = 0; q < Q; ++q) detail::fill_row(model, X, q, h * q, ctx);
  Eigen::VectorXd energy = forward(model.net, model.params, X);
  if (!energy.allFinite()) throw std::runtime_error("non-finite energy on quadrature grid");

  const double shift = (-energy.array()).maxCoeff();
  double acc = 0.0;
  for (int q = 0; q < Q; ++q) {
    acc += detail::quad_weight(model.quadrature, q) * std::exp(-energy(q) - shift);
  }
  return shift + std::log(acc);
}

// log f(t) = -E(t) - log Z for t inside the support.
inline double log_density(const EnergySurvivalModel& model, double t, const EvalContext& ctx) {
  detail::check_context(model, ctx);
  validate_quadrature(model.quadrature);
  if (!(t >= 0.0) || t > model.quadrature.t_upper) {
    throw std::runtime_error("log_density: t=" + csv::format_double(t) +
                             " outside model support [0, " +
                             csv::format_double(model.quadrature.t_upper) + "]");
  }
  const int Q = model.quadrature.num_points;
  Eigen::MatrixXd X(Q + 1, model.net.input_dim);
  const double h = detail::quad_h(model.quadrature);
  for (int q = 0; q < Q; ++q) detail::fill_row(model, X, q, h * q, ctx);
  detail::fill_row(model, X, Q, t, ctx);
  Eigen::VectorXd energy = forward(model.net, model.params, X);
  if (!energy.allFinite()) throw std::runtime_error("non-finite energy on quadrature grid");

  const double shift = (-energy.head(Q).array()).maxCoeff();
  double acc = 0.0;
  for (int q = 0; q < Q; ++q) {
    acc += detail::quad_weight(model.quadrature, q) * std::exp(-energy(q) - shift);
  }
  return -energy(Q) - (shift + std::log(acc));
}

struct ScoreResult {
  double mean_nll = 0.0;
  Eigen::VectorXd grad_flat;  // empty unless gradients were requested
};

// Mean negative log-(quasi-)likelihood of a flat batch: events contribute
// -log f(target), censorings -log S(target). With want_grad the exact
// reverse-mode gradient through the quadrature sums is returned; each sample
// touches the Q grid energies plus its own target-point energy.
//
// Large inputs are processed in fixed-size chunks with an ordered reduction,
// so results do not depend on chunking and stay reproducible.
inline ScoreResult batch_score(const EnergySurvivalModel& model, std::span<const FlatSample> samples,
                               bool want_grad, std::mt19937_64* dropout_rng = nullptr) {
  if (samples.empty()) throw std::runtime_error("batch score: no samples");
  validate_quadrature(model.quadrature);
  const int Q = model.quadrature.num_points;
  const double h = detail::quad_h(model.quadrature);
  const double t_upper = model.quadrature.t_upper;
  const int rows_per_sample = Q + 1;

  ScoreResult res;
  Eigen::VectorXd grad_acc;
  if (want_grad) grad_acc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.params.count()));

  const std::size_t chunk_samples =
      std::max<std::size_t>(1, 65536 / static_cast<std::size_t>(rows_per_sample));
  double loss_sum = 0.0;

  for (std::size_t begin = 0; begin < samples.size(); begin += chunk_samples) {
    const std::size_t end = std::min(samples.size(), begin + chunk_samples);
    const Eigen::Index B = static_cast<Eigen::Index>(end - begin);
    Eigen::MatrixXd X = detail::score_inputs(model, samples.subspan(begin, end - begin));

    ForwardCache cache;
    Eigen::VectorXd energy =
        forward(model.net, model.params, X, want_grad ? &cache : nullptr, dropout_rng);
    if (!energy.allFinite()) throw std::runtime_error("non-finite energy on quadrature grid");

    Eigen::VectorXd cot;
    if (want_grad) cot = Eigen::VectorXd::Zero(energy.size());

    for (Eigen::Index b = 0; b < B; ++b) {
      const FlatSample& s = samples[begin + static_cast<std::size_t>(b)];
      const Eigen::Index base = b * rows_per_sample;
      if (!(s.target_time >= 0.0)) {
        throw std::runtime_error("batch score: negative target time");
      }
      if (s.target_time > t_upper) {
        throw std::runtime_error(
            "batch score: target time " + csv::format_double(s.target_time) +
            " beyond the quadrature horizon t_upper=" + csv::format_double(t_upper) +
            "; raise t_upper");
      }

      const double shift = (-energy.segment(base, Q).array()).maxCoeff();
      double z = 0.0;
      for (int q = 0; q < Q; ++q) {
        z += detail::quad_weight(model.quadrature, q) * std::exp(-energy(base + q) - shift);
      }
      const double log_z = shift + std::log(z);

      if (s.event) {
        loss_sum += energy(base + Q) + log_z;
        if (want_grad) {
          cot(base + Q) += 1.0;
          for (int q = 0; q < Q; ++q) {
            cot(base + q) -= detail::quad_weight(model.quadrature, q) *
                             std::exp(-energy(base + q) - shift) / z;
          }
        }
      } else {
        // S(t*) = 1 - A/Z with A the cumulative trapezoid up to t*,
        // closed by a partial trapezoid against the exact target energy.
        const int k = std::min(static_cast<int>(s.target_time / h), Q - 1);
        const double partial = s.target_time - h * k;
        double a = 0.0;
        for (int q = 0; q < k; ++q) {
          a += 0.5 * h * (std::exp(-energy(base + q) - shift) + std::exp(-energy(base + q + 1) - shift));
        }
        a += 0.5 * partial *
             (std::exp(-energy(base + k) - shift) + std::exp(-energy(base + Q) - shift));
        const double cdf = a / z;
        double surv = 1.0 - cdf;
        if (!(surv > 0.0) && s.target_time >= t_upper * (1.0 - 1e-12)) {
          throw std::runtime_error(
              "batch score: censored sample at t=" + csv::format_double(s.target_time) +
              " has survival 0 (target beyond support); raise t_upper");
        }
        // Inside the support the survival can still underflow to zero when
        // the energies are extreme (early training with a large step size).
        // A floor keeps the loss and its gradient finite so Adam can recover.
        surv = std::max(surv, 1e-12);
        loss_sum += surv > 1e-12 ? -std::log1p(-cdf) : -std::log(surv);

        if (want_grad) {
          // d(-log S)/dE_j = (F * p_j - a_j phi_j / Z) / S with F = A/Z and
          // p_j the normalized trapezoid mass of grid point j.
          for (int q = 0; q < Q; ++q) {
            double a_w = 0.0;
            if (k >= 1) {
              if (q == 0) a_w = 0.5 * h;
              else if (q < k) a_w = h;
              else if (q == k) a_w = 0.5 * h;
            }
            if (q == k) a_w += 0.5 * partial;
            const double phi = std::exp(-energy(base + q) - shift);
            const double p = detail::quad_weight(model.quadrature, q) * phi / z;
            cot(base + q) += (cdf * p - a_w * phi / z) / surv;
          }
          const double phi_t = std::exp(-energy(base + Q) - shift);
          cot(base + Q) += -(0.5 * partial * phi_t / z) / surv;
        }
      }
    }

    if (want_grad) {
      MlpParams g = backward(model.net, model.params, cache, cot);
      grad_acc += g.flat();
    }
  }

  const double n = static_cast<double>(samples.size());
  res.mean_nll = loss_sum / n;
  if (want_grad) res.grad_flat = grad_acc / n;
  return res;
}

inline ScoreResult batch_nll(const EnergySurvivalModel& model, std::span<const FlatSample> samples,
                             std::mt19937_64* dropout_rng = nullptr) {
  return batch_score(model, samples, true, dropout_rng);
}

}  // namespace snapsurv
