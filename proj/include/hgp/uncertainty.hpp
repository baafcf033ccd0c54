#pragma once

#include <Eigen/Dense>

#include "hgp/grid.hpp"
#include "hgp/model.hpp"

namespace hgp {

struct GaussianVector {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

struct OutputMoments {
  Eigen::VectorXd mu_y;
  Eigen::VectorXd var_y;
};

struct Margins {
  Eigen::VectorXd lambda_y;
  Eigen::VectorXd lambda_pg;
  double tau_y = 0.0;
  double tau_pg = 0.0;
};

/// Covariance of [p_g (rows of `alpha`), d] where d = [p_l (first n_load), p_r]
/// has independent variances sigma_d and the generators follow
/// p_g = mean + alpha * (sum dp_l - sum dp_r). `alpha` must lie on the simplex.
Eigen::MatrixXd build_input_cov(const Eigen::VectorXd& alpha, const Eigen::VectorXd& sigma_d, int n_load);

/// Same for a case layout: only the non-slack generators (schema.gen_inputs)
/// appear in x; `alpha` has one entry per generator.
Eigen::MatrixXd build_input_cov(const IoSchema& schema, const Eigen::VectorXd& alpha, const Eigen::VectorXd& sigma_d);

/// First-order Taylor propagation of a Gaussian input through the model mean.
OutputMoments ta1_propagate(const HybridModel& model, const GaussianVector& input);

/// Phi^{-1}(p).
double normal_quantile(double p);
double normal_cdf(double x);

Margins compute_margins(const Eigen::VectorXd& var_y, const Eigen::VectorXd& alpha, const Eigen::VectorXd& sigma_d,
                        double eps_y, double eps_pg);

struct EmpiricalMargins {
  Eigen::VectorXd upper;
  Eigen::VectorXd lower;
};

/// Column-wise distance of the (1-eps) and eps sample quantiles from y_center.
EmpiricalMargins empirical_margins(const Eigen::MatrixXd& samples, const Eigen::VectorXd& y_center, double eps);

/// Sample quantile by linear interpolation between order statistics.
double sample_quantile(std::vector<double> values, double p);

}  // namespace hgp
