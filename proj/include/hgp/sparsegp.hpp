#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hgp/gp.hpp"
#include "hgp/kernel.hpp"

namespace hgp {

/// Relative jitter always added to K_mm.
inline constexpr double kInducingJitter = 1e-12;

enum class InducingStrategy { kmeans, random, greedy_variance };

InducingStrategy parse_inducing_strategy(const std::string& name);
std::string to_string(InducingStrategy s);

/// Picks m inducing inputs from the rows of X. greedy_variance repeatedly takes
/// the row with the largest noiseless posterior variance under `hp` (default:
/// unit signal variance, lengthscales = column std); ties go to the lowest index.
Eigen::MatrixXd select_inducing(const Eigen::MatrixXd& X, int m, InducingStrategy strategy, std::uint64_t seed,
                                const std::optional<Hyperparams>& hp = std::nullopt);

/// Titsias variational lower bound and its gradient w.r.t. Hyperparams::to_log().
LmlResult sparse_bound(const Hyperparams& hp, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z,
                       const Eigen::VectorXd& r);

struct SparseOutput {
  KernelPosterior post;   // weights over Z plus the K_mm / B factors
  Eigen::VectorXd mu_m;   // posterior mean at Z
  Eigen::MatrixXd A_m;    // posterior covariance at Z
  double bound = 0.0;
};

/// Variational posterior of one output at fixed hyperparameters.
SparseOutput sparse_posterior(const Hyperparams& hp, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z,
                              const Eigen::VectorXd& r);

struct SparseGpModel {
  Eigen::MatrixXd Z;
  std::vector<KernelPosterior> outputs;
  std::vector<Eigen::VectorXd> mu_m;
  std::vector<Eigen::MatrixXd> A_m;
  std::vector<double> bound;

  int m() const { return static_cast<int>(Z.rows()); }
  int n_x() const { return static_cast<int>(Z.cols()); }
  int n_y() const { return static_cast<int>(outputs.size()); }
  PosteriorView view() const { return {&Z, &outputs}; }
};

struct SparseTrainOptions {
  int m = 10;
  InducingStrategy strategy = InducingStrategy::kmeans;
  int restarts = 5;
  std::uint64_t seed = 0;
  std::optional<Hyperparams> init;
  BfgsOptions bfgs{};
};

/// Fixed-hyperparameter model over given inducing inputs.
SparseGpModel make_sparse(const Eigen::MatrixXd& X, const Eigen::MatrixXd& R, const Eigen::MatrixXd& Z,
                          const std::vector<Hyperparams>& hps);

SparseGpModel train_sparse(const Eigen::MatrixXd& X, const Eigen::MatrixXd& R, const SparseTrainOptions& opts = {});

PosteriorMoments sparse_predict(const SparseGpModel& model, const Eigen::VectorXd& x);
Eigen::MatrixXd sparse_mean_gradient(const SparseGpModel& model, const Eigen::VectorXd& x);

}  // namespace hgp
