#pragma once

// Model checkpoints: a self-describing JSON document with a magic header and
// format version, carrying the network config, parameters, standardization
// constants, quadrature config and free-form training metadata. nlohmann's
// shortest round-trip double serialization makes save/load bit-exact.

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "snapsurv/energy_model.hpp"

namespace snapsurv {

inline constexpr const char* kCheckpointMagic = "snapsurv.checkpoint";
inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json params_to_json(const MlpParams& p) {
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    nlohmann::json w = nlohmann::json::array();
    for (Eigen::Index i = 0; i < p.weights[l].rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index j = 0; j < p.weights[l].cols(); ++j) row.push_back(p.weights[l](i, j));
      w.push_back(std::move(row));
    }
    nlohmann::json b = nlohmann::json::array();
    for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) b.push_back(p.biases[l](i));
    layers.push_back(nlohmann::json{{"weights", std::move(w)}, {"biases", std::move(b)}});
  }
  return layers;
}

inline MlpParams params_from_json(const nlohmann::json& layers) {
  MlpParams p;
  for (const auto& layer : layers) {
    const auto& w = layer.at("weights");
    const auto& b = layer.at("biases");
    Eigen::MatrixXd wm(w.size(), w.empty() ? 0 : w[0].size());
    for (Eigen::Index i = 0; i < wm.rows(); ++i) {
      for (Eigen::Index j = 0; j < wm.cols(); ++j) {
        wm(i, j) = w[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].get<double>();
      }
    }
    Eigen::VectorXd bv(b.size());
    for (Eigen::Index i = 0; i < bv.size(); ++i) bv(i) = b[static_cast<std::size_t>(i)].get<double>();
    p.weights.push_back(std::move(wm));
    p.biases.push_back(std::move(bv));
  }
  return p;
}

inline nlohmann::json checkpoint_to_json(const EnergySurvivalModel& model,
                                         const nlohmann::json& training_meta = {}) {
  nlohmann::json j;
  j["magic"] = kCheckpointMagic;
  j["version"] = kCheckpointVersion;
  j["mode"] = to_string(model.mode);
  j["net"] = {{"input_dim", model.net.input_dim},
              {"hidden", model.net.hidden},
              {"dropout_rate", model.net.dropout_rate},
              {"init_seed", model.net.init_seed}};
  j["params"] = params_to_json(model.params);
  j["standardizer"] = {
      {"mean", std::vector<double>(model.standardizer.mean.data(),
                                   model.standardizer.mean.data() + model.standardizer.mean.size())},
      {"scale", std::vector<double>(model.standardizer.scale.data(),
                                    model.standardizer.scale.data() + model.standardizer.scale.size())}};
  j["quadrature"] = {{"t_upper", model.quadrature.t_upper},
                     {"num_points", model.quadrature.num_points}};
  j["feature_names"] = model.feature_names;
  if (!training_meta.is_null()) j["training"] = training_meta;
  return j;
}

inline void save_checkpoint(const EnergySurvivalModel& model, const std::string& path,
                            const nlohmann::json& training_meta = {}) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << checkpoint_to_json(model, training_meta).dump(2) << '\n';
}

inline EnergySurvivalModel checkpoint_from_json(const nlohmann::json& j) {
  if (!j.contains("magic") || j.at("magic").get<std::string>() != kCheckpointMagic) {
    throw std::runtime_error("not a model checkpoint (bad magic header)");
  }
  if (j.at("version").get<int>() != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(j.at("version").get<int>()));
  }
  EnergySurvivalModel m;
  m.mode = flatten_mode_from_string(j.at("mode").get<std::string>());
  const auto& net = j.at("net");
  m.net.input_dim = net.at("input_dim").get<int>();
  m.net.hidden = net.at("hidden").get<std::vector<int>>();
  m.net.dropout_rate = net.at("dropout_rate").get<double>();
  m.net.init_seed = net.at("init_seed").get<std::uint64_t>();
  m.params = params_from_json(j.at("params"));
  const auto mean = j.at("standardizer").at("mean").get<std::vector<double>>();
  const auto scale = j.at("standardizer").at("scale").get<std::vector<double>>();
  m.standardizer.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  m.standardizer.scale = Eigen::Map<const Eigen::VectorXd>(scale.data(), static_cast<Eigen::Index>(scale.size()));
  m.quadrature.t_upper = j.at("quadrature").at("t_upper").get<double>();
  m.quadrature.num_points = j.at("quadrature").at("num_points").get<int>();
  m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  return m;
}

inline EnergySurvivalModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  nlohmann::json j;
  in >> j;
  return checkpoint_from_json(j);
}

}  // namespace snapsurv
