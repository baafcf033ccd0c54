#pragma once

#include <Eigen/Dense>

#include "json.hpp"

namespace hgp {

struct Dataset;

/// Physical part of the hybrid model: z(x) = [v_dc (n_v times), A x + b].
struct LinearSurrogate {
  int n_v = 0;
  Eigen::MatrixXd A;  // (n_y - n_v) x n_x
  Eigen::VectorXd b;
  double v_dc = 1.0;

  int n_x() const { return static_cast<int>(A.cols()); }
  int n_y() const { return n_v + static_cast<int>(A.rows()); }
};

inline constexpr double kSurrogateRidge = 1e-8;

/// Least-squares fit of the non-voltage outputs; the voltage block is fixed at
/// v_dc. Zero-variance input columns get a zero coefficient. A small ridge on A
/// is used when there are fewer than n_x + 1 rows or the design is rank deficient.
LinearSurrogate fit_linear(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, int n_v);
LinearSurrogate fit_linear(const Dataset& data);

Eigen::VectorXd predict_linear(const LinearSurrogate& sur, const Eigen::VectorXd& x);
/// Row-wise prediction for a sample matrix.
Eigen::MatrixXd predict_linear(const LinearSurrogate& sur, const Eigen::MatrixXd& X);

/// diag of the output covariance [0, 0; 0, A Sigma A^T].
Eigen::VectorXd propagate_linear_cov(const LinearSurrogate& sur, const Eigen::MatrixXd& sigma_x);

nlohmann::json to_json(const LinearSurrogate& sur);
LinearSurrogate surrogate_from_json(const nlohmann::json& j);

}  // namespace hgp
