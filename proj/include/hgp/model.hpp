#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>

#include <Eigen/Dense>

#include "hgp/dataset.hpp"
#include "hgp/gp.hpp"
#include "hgp/grid.hpp"
#include "hgp/linmodel.hpp"
#include "hgp/sparsegp.hpp"
#include "json.hpp"

namespace hgp {

enum class ModelMode { hybrid, full };

ModelMode parse_model_mode(const std::string& name);
std::string to_string(ModelMode m);

/// y(x) = z(x) + GP(x) in hybrid mode, GP(x) alone in full mode.
struct HybridModel {
  IoSchema schema;
  ModelMode mode = ModelMode::hybrid;
  std::optional<LinearSurrogate> surrogate;  // hybrid only
  std::variant<GpModel, SparseGpModel> gp;
  Eigen::MatrixXd train_X;  // kept so the posteriors can be rebuilt on load
  Eigen::MatrixXd train_targets;
  std::string case_id;
  std::uint64_t seed = 0;

  bool sparse() const { return std::holds_alternative<SparseGpModel>(gp); }
  PosteriorView view() const;
  int n_x() const { return schema.n_x; }
  int n_y() const { return schema.n_y; }
};

struct TrainConfig {
  ModelMode mode = ModelMode::hybrid;
  std::optional<int> sparse_m;
  InducingStrategy strategy = InducingStrategy::kmeans;
  int restarts = 5;
  std::uint64_t seed = 0;
};

HybridModel train_model(const Dataset& data, const TrainConfig& cfg);

/// Linear part z(x); zeros in full mode.
Eigen::VectorXd linear_part(const HybridModel& model, const Eigen::VectorXd& x);

/// Posterior mean and GP variance of the outputs at a deterministic input.
PosteriorMoments predict_model(const HybridModel& model, const Eigen::VectorXd& x);
/// Row-wise posterior means.
Eigen::MatrixXd predict_means(const HybridModel& model, const Eigen::MatrixXd& X);

nlohmann::json to_json(const HybridModel& model);
HybridModel model_from_json(const nlohmann::json& j);
void save_model(const HybridModel& model, const std::string& path);
HybridModel load_model(const std::string& path);

}  // namespace hgp
