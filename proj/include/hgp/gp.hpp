#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "hgp/kernel.hpp"
#include "hgp/optim.hpp"

namespace hgp {

struct LmlResult {
  double value = 0.0;
  Eigen::VectorXd grad;  // w.r.t. Hyperparams::to_log()
};

/// -1/2 r^T (K + s_n^2 I)^{-1} r - 1/2 log|K + s_n^2 I| - N/2 log 2 pi, with the
/// analytic gradient in log-hyperparameters.
LmlResult log_marginal_likelihood(const Hyperparams& hp, const Eigen::MatrixXd& X,
                                  const Eigen::VectorXd& r);

/// Exact GP posteriors, one per residual column, over the shared inputs X.
struct GpModel {
  Eigen::MatrixXd X;
  Eigen::MatrixXd targets;  // N x n_y
  std::vector<KernelPosterior> outputs;
  std::vector<double> lml;  // trained objective per output

  int n_x() const { return static_cast<int>(X.cols()); }
  int n_y() const { return static_cast<int>(outputs.size()); }
  PosteriorView view() const { return {&X, &outputs}; }
};

struct GpTrainOptions {
  int restarts = 5;
  std::uint64_t seed = 0;
  /// Shared initial hyperparameters; default is lengthscales = column std,
  /// signal_var = target variance, noise_var = 0.1 target variance.
  std::optional<Hyperparams> init;
  BfgsOptions bfgs{};
};

/// Training parameterization theta = [log l, log sf2, t] with
/// noise_var = kNoiseFloor + kRelativeNoiseFloor * sf2 + exp(t); the relative
/// part keeps K + noise I well conditioned on noiseless data.
inline constexpr double kRelativeNoiseFloor = 1e-9;
Hyperparams hp_from_theta(const Eigen::VectorXd& theta);
Eigen::VectorXd theta_from_hp(const Hyperparams& hp);
/// Maps a gradient w.r.t. Hyperparams::to_log() to one w.r.t. theta.
Eigen::VectorXd theta_gradient(const Hyperparams& hp, const Eigen::VectorXd& theta, const Eigen::VectorXd& log_grad);

/// Default starting point for one target column.
Hyperparams default_init(const Eigen::MatrixXd& X, const Eigen::VectorXd& r);

/// Caches the factorization and weights of one output at fixed hyperparameters.
KernelPosterior exact_posterior(const Hyperparams& hp, const Eigen::MatrixXd& X, const Eigen::VectorXd& r);

/// Fixed-hyperparameter model (no training).
GpModel make_gp(const Eigen::MatrixXd& X, const Eigen::MatrixXd& R, const std::vector<Hyperparams>& hps);

/// Maximizes the log marginal likelihood of each column independently.
GpModel train_gp(const Eigen::MatrixXd& X, const Eigen::MatrixXd& R, const GpTrainOptions& opts = {});

/// Best hyperparameters for a single column.
Hyperparams fit_hyperparams(const Eigen::MatrixXd& X, const Eigen::VectorXd& r, const GpTrainOptions& opts,
                            std::uint64_t column_seed, double* best_value = nullptr);

PosteriorMoments gp_predict(const GpModel& model, const Eigen::VectorXd& x);
Eigen::MatrixXd gp_mean_gradient(const GpModel& model, const Eigen::VectorXd& x);

}  // namespace hgp
