#pragma once

#include <vector>

#include <Eigen/Dense>

namespace hgp {

/// SE-kernel hyperparameters of one output dimension (Lambda = diag(l^2)).
struct Hyperparams {
  Eigen::VectorXd lengthscales;
  double signal_var = 1.0;
  double noise_var = 1e-2;

  int dim() const { return static_cast<int>(lengthscales.size()); }
  /// [log l_1 .. log l_d, log signal_var, log noise_var]
  Eigen::VectorXd to_log() const;
  static Hyperparams from_log(const Eigen::VectorXd& theta);
};

inline constexpr double kNoiseFloor = 1e-12;

/// sigma_f^2 exp(-0.5 (x1 - x2)^T Lambda^{-1} (x1 - x2))
double se_kernel(const Eigen::VectorXd& x1, const Eigen::VectorXd& x2, const Hyperparams& hp);

/// Cross-covariance between the rows of A and the rows of B.
Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Hyperparams& hp);

/// Lower Cholesky factor of K + jitter * scale * I. Jitter starts at `min_rel`
/// (zero by default) and escalates 1e-10, 1e-9, ..., 1e-6; throws NumericalError
/// after that.
struct JitteredCholesky {
  Eigen::MatrixXd L;
  double jitter = 0.0;  // absolute value added to the diagonal
};
JitteredCholesky jittered_cholesky(const Eigen::MatrixXd& K, double scale, double min_rel = 0.0);

/// One output's posterior in kernel-expansion form over support points S:
///   mean(x) = k(S, x)^T weights
///   var(x)  = k(x, x) - |a|^2 + inner_scale * |inner_chol^{-1} a|^2,
///   a = outer_chol^{-1} k(S, x).
/// Exact GP: S = X, outer_chol = chol(K + sigma_n^2 I), no inner factor.
/// Variational sparse GP: S = Z, outer_chol = chol(K_mm), inner factor of
/// sigma_n^2 I + V V^T with V = outer_chol^{-1} K_mn, inner_scale = sigma_n^2.
struct KernelPosterior {
  Hyperparams hp;
  Eigen::VectorXd weights;
  Eigen::MatrixXd outer_chol;
  Eigen::MatrixXd inner_chol;
  double inner_scale = 0.0;
};

struct PosteriorPoint {
  double mean = 0.0;
  double var = 0.0;
  Eigen::VectorXd mean_grad;  // order >= 1
  Eigen::VectorXd var_grad;   // order >= 1
  Eigen::MatrixXd mean_hess;  // order >= 2
};

/// order 0: mean/var, 1: adds gradients, 2: adds the mean Hessian.
PosteriorPoint evaluate_posterior(const Eigen::MatrixXd& support, const KernelPosterior& post,
                                  const Eigen::VectorXd& x, int order = 0);

/// Non-owning view over per-output posteriors sharing one support set.
struct PosteriorView {
  const Eigen::MatrixXd* support = nullptr;
  const std::vector<KernelPosterior>* outputs = nullptr;

  int n_y() const { return static_cast<int>(outputs->size()); }
  int n_x() const { return static_cast<int>(support->cols()); }
  const KernelPosterior& output(int a) const { return (*outputs)[static_cast<std::size_t>(a)]; }
};

struct PosteriorMoments {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;
};

PosteriorMoments predict(const PosteriorView& view, const Eigen::VectorXd& x);
/// n_y x n_x matrix of posterior-mean gradients.
Eigen::MatrixXd mean_gradient(const PosteriorView& view, const Eigen::VectorXd& x);

}  // namespace hgp
