#pragma once

#include <functional>
#include <string>

#include <Eigen/Dense>

namespace hgp {

/// min f(x) s.t. c_E(x) = 0, c_I(x) >= 0.
struct NlpProblem {
  int n = 0;
  int m_eq = 0;
  int m_in = 0;
  Eigen::VectorXd x0;

  /// Returns f(x); fills the gradient when `grad` is non-null.
  std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)> objective;
  /// c(x) and, when `jac` is non-null, its m x n Jacobian.
  std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& c, Eigen::MatrixXd* jac)> equalities;
  std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& c, Eigen::MatrixXd* jac)> inequalities;
  /// Optional Hessian of the Lagrangian f - y_E^T c_E - y_I^T c_I. Damped BFGS is used when empty.
  std::function<Eigen::MatrixXd(const Eigen::VectorXd& x, const Eigen::VectorXd& y_eq, const Eigen::VectorXd& y_in)>
      hessian;
};

enum class SolveStatus { optimal, max_iter, infeasible };

std::string to_string(SolveStatus s);

struct IpOptions {
  double tol = 1e-5;
  int max_iter = 500;
  double mu0 = 0.1;
};

/// Gradient-based scaling (factors <= 1) applied to the objective and every
/// constraint row so that no gradient exceeds 100 at the starting point.
struct ProblemScaling {
  double obj = 1.0;
  Eigen::VectorXd eq;
  Eigen::VectorXd in;
};

ProblemScaling compute_scaling(const NlpProblem& p, const Eigen::VectorXd& x);

struct IpResult {
  Eigen::VectorXd x;
  Eigen::VectorXd y_eq;  // multipliers of the scaled problem
  Eigen::VectorXd y_in;  // >= 0
  ProblemScaling scaling;
  Eigen::VectorXd slack;
  double f = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
  SolveStatus status = SolveStatus::max_iter;
};

struct KktResidual {
  double stationarity = 0.0;
  double feasibility = 0.0;
  double complementarity = 0.0;
  double max() const { return std::max({stationarity, feasibility, complementarity}); }
};

/// First-order optimality error of the scaled problem at (x, y_eq, y_in). The
/// slacks are taken as max(c_I, 0); stationarity and complementarity are
/// divided by the usual multiplier-size factor.
KktResidual kkt_residual(const NlpProblem& p, const ProblemScaling& scaling, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& y_eq, const Eigen::VectorXd& y_in);

/// Primal-dual interior-point method with slacks, fraction-to-boundary rule and
/// an l1 merit line search.
IpResult solve_ip(const NlpProblem& p, const IpOptions& opts = {});

/// Lagrangian Hessian by central differences of the analytic first derivatives.
std::function<Eigen::MatrixXd(const Eigen::VectorXd&, const Eigen::VectorXd&, const Eigen::VectorXd&)>
fd_lagrangian_hessian(const NlpProblem& p);

}  // namespace hgp
