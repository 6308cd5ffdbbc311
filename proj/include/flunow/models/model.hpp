#pragma once

#include <string>
#include <variant>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "flunow/error.hpp"
#include "flunow/models/arima.hpp"
#include "flunow/models/forest.hpp"
#include "flunow/models/huber.hpp"
#include "flunow/models/lasso.hpp"
#include "flunow/models/svr.hpp"

namespace flunow {

using RegressionModel = std::variant<LassoModel, HuberModel, SvrModel, ForestModel>;

inline Eigen::Index feature_count(const RegressionModel& model) {
  return std::visit(
      [](const auto& m) -> Eigen::Index {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ForestModel>) {
          return m.n_features;
        } else if constexpr (std::is_same_v<T, SvrModel>) {
          return m.weights.size();
        } else {
          return m.beta.size();
        }
      },
      model);
}

inline double predict(const RegressionModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  if (x.size() != feature_count(model)) throw Error(ErrorKind::ShapeMismatch, "feature count does not match model");
  return std::visit([&](const auto& m) { return m.predict(x); }, model);
}

inline Eigen::VectorXd predict_batch(const RegressionModel& model, const Eigen::MatrixXd& X) {
  if (X.cols() != feature_count(model)) throw Error(ErrorKind::ShapeMismatch, "feature count does not match model");
  return std::visit([&](const auto& m) -> Eigen::VectorXd { return m.predict_batch(X); }, model);
}

// JSON serialization. nlohmann writes doubles as the shortest decimal that
// parses back to the same bits, so coefficients round-trip exactly.

namespace detail {

inline nlohmann::json to_json_array(const Eigen::VectorXd& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline Eigen::VectorXd from_json_array(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace detail

inline nlohmann::json to_json(const RegressionModel& model) {
  using nlohmann::json;
  return std::visit(
      [](const auto& m) -> json {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, LassoModel>) {
          return {{"kind", "lasso"}, {"beta", detail::to_json_array(m.beta)}, {"intercept", m.intercept},
                  {"lambda", m.lambda}};
        } else if constexpr (std::is_same_v<T, HuberModel>) {
          return {{"kind", "huber"}, {"beta", detail::to_json_array(m.beta)}, {"intercept", m.intercept},
                  {"sigma", m.sigma}, {"delta", m.delta}};
        } else if constexpr (std::is_same_v<T, SvrModel>) {
          return {{"kind", "svr"},         {"weights", detail::to_json_array(m.weights)},
                  {"bias", m.bias},        {"c_penalty", m.c_penalty},
                  {"epsilon", m.epsilon},  {"alpha", detail::to_json_array(m.alpha)},
                  {"alpha_star", detail::to_json_array(m.alpha_star)}};
        } else {
          json trees = json::array();
          for (const auto& tree : m.trees) {
            json nodes = json::array();
            for (const auto& node : tree.nodes) {
              nodes.push_back({node.feature, node.threshold, node.left, node.right, node.value});
            }
            trees.push_back(std::move(nodes));
          }
          return {{"kind", "forest"},
                  {"n_trees", m.options.n_trees},
                  {"max_depth", m.options.max_depth},
                  {"min_leaf", m.options.min_leaf},
                  {"bootstrap", m.options.bootstrap},
                  {"max_features", m.options.max_features},
                  {"seed", m.options.seed},
                  {"n_features", m.n_features},
                  {"trees", std::move(trees)}};
        }
      },
      model);
}

inline RegressionModel regression_model_from_json(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "lasso") {
    LassoModel m;
    m.beta = detail::from_json_array(j.at("beta"));
    m.intercept = j.at("intercept").get<double>();
    m.lambda = j.at("lambda").get<double>();
    return m;
  }
  if (kind == "huber") {
    HuberModel m;
    m.beta = detail::from_json_array(j.at("beta"));
    m.intercept = j.at("intercept").get<double>();
    m.sigma = j.at("sigma").get<double>();
    m.delta = j.at("delta").get<double>();
    return m;
  }
  if (kind == "svr") {
    SvrModel m;
    m.weights = detail::from_json_array(j.at("weights"));
    m.bias = j.at("bias").get<double>();
    m.c_penalty = j.at("c_penalty").get<double>();
    m.epsilon = j.at("epsilon").get<double>();
    m.alpha = detail::from_json_array(j.at("alpha"));
    m.alpha_star = detail::from_json_array(j.at("alpha_star"));
    return m;
  }
  if (kind == "forest") {
    ForestModel m;
    m.options.n_trees = j.at("n_trees").get<int>();
    m.options.max_depth = j.at("max_depth").get<int>();
    m.options.min_leaf = j.at("min_leaf").get<int>();
    m.options.bootstrap = j.at("bootstrap").get<bool>();
    m.options.max_features = j.at("max_features").get<int>();
    m.options.seed = j.at("seed").get<std::uint64_t>();
    m.n_features = j.at("n_features").get<Eigen::Index>();
    for (const auto& jt : j.at("trees")) {
      RegressionTree tree;
      for (const auto& jn : jt) {
        tree.nodes.push_back({jn.at(0).get<int>(), jn.at(1).get<double>(), jn.at(2).get<int>(),
                              jn.at(3).get<int>(), jn.at(4).get<double>()});
      }
      m.trees.push_back(std::move(tree));
    }
    return m;
  }
  throw Error(ErrorKind::ParseError, "unknown model kind '" + kind + "'");
}

inline nlohmann::json to_json(const ArimaModel& m) {
  return {{"kind", "arima"},
          {"order", {m.order.p, m.order.d, m.order.q}},
          {"ar", detail::to_json_array(m.ar)},
          {"ma", detail::to_json_array(m.ma)},
          {"intercept", m.intercept},
          {"noise_variance", m.noise_variance}};
}

inline ArimaModel arima_model_from_json(const nlohmann::json& j) {
  if (j.at("kind").get<std::string>() != "arima") throw Error(ErrorKind::ParseError, "not an ARIMA model");
  ArimaModel m;
  const auto order = j.at("order").get<std::vector<int>>();
  if (order.size() != 3) throw Error(ErrorKind::ParseError, "ARIMA order needs three entries");
  m.order = {order[0], order[1], order[2]};
  m.ar = detail::from_json_array(j.at("ar"));
  m.ma = detail::from_json_array(j.at("ma"));
  m.intercept = j.at("intercept").get<double>();
  m.noise_variance = j.at("noise_variance").get<double>();
  return m;
}

}  // namespace flunow
