#pragma once

// Small rectifier MLP with a scalar output, exact reverse-mode gradients,
// inverted dropout and an Adam optimizer. This is all the network machinery
// the energy head needs; everything runs batched through Eigen in double
// precision. The quadrature and likelihood downstream are sensitive and the
// networks are tiny, so there is no reason to trade precision for speed.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "snapsurv/rng.hpp"

namespace snapsurv {

struct MlpConfig {
  int input_dim = 1;
  std::vector<int> hidden = {32, 32};  // output dimension is always 1
  double dropout_rate = 0.0;           // inverted dropout on hidden activations
  std::uint64_t init_seed = 0;
};

inline void validate_config(const MlpConfig& c) {
  if (c.input_dim < 1) throw std::runtime_error("mlp: input_dim must be >= 1");
  for (int h : c.hidden) {
    if (h < 1) throw std::runtime_error("mlp: hidden layer width must be >= 1");
  }
  if (!(c.dropout_rate >= 0.0 && c.dropout_rate < 1.0)) {
    throw std::runtime_error("mlp: dropout_rate must be in [0, 1)");
  }
}

// Per-layer weights W (in x out) and biases b; flat-indexable as one vector
// in layer order (column-major weights, then bias) for the optimizer and for
// finite-difference checks.
struct MlpParams {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  std::size_t count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      n += static_cast<std::size_t>(weights[l].size()) + static_cast<std::size_t>(biases[l].size());
    }
    return n;
  }

  Eigen::VectorXd flat() const {
    Eigen::VectorXd v(count());
    Eigen::Index at = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      v.segment(at, weights[l].size()) =
          Eigen::Map<const Eigen::VectorXd>(weights[l].data(), weights[l].size());
      at += weights[l].size();
      v.segment(at, biases[l].size()) = biases[l];
      at += biases[l].size();
    }
    return v;
  }

  void set_flat(const Eigen::VectorXd& v) {
    if (static_cast<std::size_t>(v.size()) != count()) {
      throw std::runtime_error("mlp: flat parameter vector has wrong length");
    }
    Eigen::Index at = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      Eigen::Map<Eigen::VectorXd>(weights[l].data(), weights[l].size()) =
          v.segment(at, weights[l].size());
      at += weights[l].size();
      biases[l] = v.segment(at, biases[l].size());
      at += biases[l].size();
    }
  }

  bool all_finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    }
    return true;
  }
};

inline MlpParams zero_params(const MlpConfig& c) {
  validate_config(c);
  MlpParams p;
  int in = c.input_dim;
  for (int h : c.hidden) {
    p.weights.push_back(Eigen::MatrixXd::Zero(in, h));
    p.biases.push_back(Eigen::VectorXd::Zero(h));
    in = h;
  }
  p.weights.push_back(Eigen::MatrixXd::Zero(in, 1));
  p.biases.push_back(Eigen::VectorXd::Zero(1));
  return p;
}

// Kaiming-style uniform fan-in initialization (limit sqrt(6/fan_in)), zero
// biases. Deterministic in init_seed.
inline MlpParams init_params(const MlpConfig& c) {
  MlpParams p = zero_params(c);
  auto rng = make_rng(mix_seed(c.init_seed, stream_tag("mlp-init")));
  for (auto& w : p.weights) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows()));
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) {
        w(i, j) = uniform_in(rng, -limit, limit);
      }
    }
  }
  return p;
}

// Activations kept from a forward pass; enough to run backward.
// acts[0] is the input batch; acts[l+1] the (post-dropout) output of hidden
// layer l. masks[l] is empty when dropout was off for that pass.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> acts;
  std::vector<Eigen::MatrixXd> masks;
};

// Batch forward pass: rows of `inputs` are samples, output is one energy per
// row. If `dropout_rng` is non-null and the config has a positive rate, a
// fresh inverted-dropout mask is drawn for each hidden layer (training mode);
// evaluation passes leave it null and the pass is deterministic.
inline Eigen::VectorXd forward(const MlpConfig& config, const MlpParams& params,
                               const Eigen::MatrixXd& inputs, ForwardCache* cache = nullptr,
                               std::mt19937_64* dropout_rng = nullptr) {
  if (inputs.cols() != config.input_dim) {
    throw std::runtime_error("mlp: input has " + std::to_string(inputs.cols()) +
                             " columns, expected " + std::to_string(config.input_dim));
  }
  for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
    if (!inputs.row(r).allFinite()) {
      throw std::runtime_error("mlp: non-finite input in row " + std::to_string(r));
    }
  }
  const bool use_dropout = dropout_rng != nullptr && config.dropout_rate > 0.0;
  const std::size_t L = params.weights.size() - 1;  // hidden layer count
  if (cache) {
    cache->acts.assign(L + 1, Eigen::MatrixXd());
    cache->masks.assign(L, Eigen::MatrixXd());
    cache->acts[0] = inputs;
  }

  Eigen::MatrixXd a = inputs;
  for (std::size_t l = 0; l < L; ++l) {
    Eigen::MatrixXd z = (a * params.weights[l]).rowwise() + params.biases[l].transpose();
    a = z.cwiseMax(0.0);
    if (use_dropout) {
      const double keep = 1.0 - config.dropout_rate;
      Eigen::MatrixXd mask(a.rows(), a.cols());
      for (Eigen::Index j = 0; j < mask.cols(); ++j) {
        for (Eigen::Index i = 0; i < mask.rows(); ++i) {
          mask(i, j) = uniform01(*dropout_rng) < keep ? 1.0 / keep : 0.0;
        }
      }
      a = a.cwiseProduct(mask);
      if (cache) cache->masks[l] = std::move(mask);
    }
    if (cache) cache->acts[l + 1] = a;
  }
  Eigen::VectorXd out = (a * params.weights[L]).col(0);
  out.array() += params.biases[L](0);
  return out;
}

// Exact gradient of sum_b cotangent_b * E(input_b) with respect to every
// parameter, replaying the cached activations.
inline MlpParams backward(const MlpConfig& config, const MlpParams& params,
                          const ForwardCache& cache, const Eigen::VectorXd& cotangents) {
  const std::size_t L = params.weights.size() - 1;
  if (cache.acts.size() != L + 1) throw std::runtime_error("mlp: cache does not match network");
  if (cache.acts[0].rows() != cotangents.size()) {
    throw std::runtime_error("mlp: cotangent length " + std::to_string(cotangents.size()) +
                             " does not match cached batch of " +
                             std::to_string(cache.acts[0].rows()));
  }

  MlpParams grad = zero_params(config);
  Eigen::MatrixXd g = cotangents;  // column, B x 1
  grad.weights[L] = cache.acts[L].transpose() * g;
  grad.biases[L](0) = g.sum();

  for (std::size_t l = L; l-- > 0;) {
    Eigen::MatrixXd gh = g * params.weights[l + 1].transpose();
    if (cache.masks[l].size() > 0) gh = gh.cwiseProduct(cache.masks[l]);
    // relu gate; post-dropout activations are positive exactly where the
    // pre-dropout ones were, so the cached tensor carries the gate too
    gh = gh.cwiseProduct((cache.acts[l + 1].array() > 0.0).cast<double>().matrix());
    grad.weights[l] = cache.acts[l].transpose() * gh;
    grad.biases[l] = gh.colwise().sum().transpose();
    g = std::move(gh);
  }
  return grad;
}

struct AdamState {
  long long step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Eigen::VectorXd m;  // first moment, flat layout
  Eigen::VectorXd v;  // second moment
};

inline AdamState make_adam(double learning_rate, std::size_t param_count) {
  AdamState s;
  s.learning_rate = learning_rate;
  s.m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(param_count));
  s.v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(param_count));
  return s;
}

// Standard bias-corrected Adam update on the flat parameter vector.
inline void adam_step(AdamState& state, MlpParams& params, const Eigen::VectorXd& grad_flat) {
  if (static_cast<std::size_t>(grad_flat.size()) != params.count() ||
      grad_flat.size() != state.m.size()) {
    throw std::runtime_error("adam: gradient shape does not match parameters");
  }
  if (!grad_flat.allFinite()) throw std::runtime_error("adam: non-finite gradient");

  state.step += 1;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad_flat;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad_flat.cwiseProduct(grad_flat);
  const double mc = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double vc = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  Eigen::VectorXd theta = params.flat();
  theta.array() -= state.learning_rate * (state.m.array() / mc) /
                   ((state.v.array() / vc).sqrt() + state.epsilon);
  params.set_flat(theta);
}

}  // namespace snapsurv
