#pragma once

#include <functional>

#include <Eigen/Dense>

namespace hgp {

/// Returns f(x) and writes its gradient; may return +inf (or throw
/// NumericalError) for points outside the domain.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

struct BfgsOptions {
  int max_iter = 200;
  double grad_tol = 1e-6;   // infinity norm
  double max_step = 4.0;    // infinity-norm cap of a single step
};

struct MinimizeResult {
  Eigen::VectorXd x;
  double f = 0.0;
  Eigen::VectorXd grad;
  int iterations = 0;
  bool converged = false;
  bool line_search_failed = false;
};

/// Dense BFGS with a backtracking/expanding Armijo-Wolfe line search.
MinimizeResult minimize_bfgs(const Objective& fn, const Eigen::VectorXd& x0, const BfgsOptions& opts = {});

}  // namespace hgp
