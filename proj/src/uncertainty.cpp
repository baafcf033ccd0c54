#include "hgp/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hgp/errors.hpp"

namespace hgp {

namespace {

void check_simplex(const Eigen::VectorXd& alpha) {
  if (alpha.size() == 0) throw InputError("participation vector is empty");
  if ((alpha.array() < -1e-10).any() || std::abs(alpha.sum() - 1.0) > 1e-8) {
    throw InputError("participation factors must be non-negative and sum to 1");
  }
}

Eigen::MatrixXd cov_blocks(const Eigen::VectorXd& a, const Eigen::VectorXd& sigma_d, int n_load) {
  if ((sigma_d.array() < 0.0).any()) throw InputError("input variances must be non-negative");
  const Eigen::Index ng = a.size();
  const Eigen::Index nd = sigma_d.size();
  const double tr = sigma_d.sum();
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(ng + nd, ng + nd);
  S.topLeftCorner(ng, ng) = tr * a * a.transpose();
  Eigen::VectorXd signed_var = sigma_d;
  signed_var.tail(nd - n_load) *= -1.0;
  S.topRightCorner(ng, nd) = a * signed_var.transpose();
  S.bottomLeftCorner(nd, ng) = S.topRightCorner(ng, nd).transpose();
  S.bottomRightCorner(nd, nd) = sigma_d.asDiagonal();
  return S;
}

}  // namespace

Eigen::MatrixXd build_input_cov(const Eigen::VectorXd& alpha, const Eigen::VectorXd& sigma_d, int n_load) {
  check_simplex(alpha);
  if (n_load < 0 || n_load > sigma_d.size()) throw InputError("load count exceeds the uncertain inputs");
  return cov_blocks(alpha, sigma_d, n_load);
}

Eigen::MatrixXd build_input_cov(const IoSchema& schema, const Eigen::VectorXd& alpha, const Eigen::VectorXd& sigma_d) {
  check_simplex(alpha);
  if (sigma_d.size() != schema.n_d()) throw InputError("variance vector does not match the uncertain inputs");
  Eigen::VectorXd a(schema.n_pg());
  for (int i = 0; i < schema.n_pg(); ++i) {
    const int k = schema.gen_inputs[static_cast<std::size_t>(i)];
    if (k >= alpha.size()) throw InputError("participation vector shorter than the generator count");
    a[i] = alpha[k];
  }
  return cov_blocks(a, sigma_d, schema.n_pl());
}

OutputMoments ta1_propagate(const HybridModel& model, const GaussianVector& input) {
  const Eigen::MatrixXd& S = input.cov;
  const PosteriorView view = model.view();
  OutputMoments out;
  out.mu_y = linear_part(model, input.mean);
  out.var_y = Eigen::VectorXd::Zero(model.n_y());
  if (model.surrogate) out.var_y = propagate_linear_cov(*model.surrogate, S);
  for (int a = 0; a < view.n_y(); ++a) {
    const PosteriorPoint p = evaluate_posterior(*view.support, view.output(a), input.mean, 1);
    out.mu_y[a] += p.mean;
    out.var_y[a] += p.var + std::max(0.0, p.mean_grad.dot(S * p.mean_grad));
  }
  return out;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InputError("quantile probability must lie in (0, 1)");
  // Acklam's rational approximation, then one Halley step on the CDF.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // the upper tail is refined through the lower one to keep Phi^{-1}(p) = -Phi^{-1}(1-p)
  const double e = (p > 0.5 ? -(normal_cdf(-x) - (1.0 - p)) : normal_cdf(x) - p);
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

Margins compute_margins(const Eigen::VectorXd& var_y, const Eigen::VectorXd& alpha, const Eigen::VectorXd& sigma_d,
                        double eps_y, double eps_pg) {
  if (!(eps_y > 0.0 && eps_y <= 0.5) || !(eps_pg > 0.0 && eps_pg <= 0.5)) {
    throw InputError("violation probabilities must lie in (0, 0.5]");
  }
  Margins m;
  m.tau_y = eps_y == 0.5 ? 0.0 : normal_quantile(1.0 - eps_y);
  m.tau_pg = eps_pg == 0.5 ? 0.0 : normal_quantile(1.0 - eps_pg);
  m.lambda_y = m.tau_y * var_y.cwiseMax(0.0).cwiseSqrt();
  m.lambda_pg = m.tau_pg * std::sqrt(std::max(sigma_d.sum(), 0.0)) * alpha;
  return m;
}

double sample_quantile(std::vector<double> values, double p) {
  if (values.empty()) throw InputError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

EmpiricalMargins empirical_margins(const Eigen::MatrixXd& samples, const Eigen::VectorXd& y_center, double eps) {
  if (samples.cols() != y_center.size()) throw InputError("sample width does not match the center vector");
  EmpiricalMargins m;
  m.upper.resize(samples.cols());
  m.lower.resize(samples.cols());
  for (Eigen::Index a = 0; a < samples.cols(); ++a) {
    std::vector<double> col(samples.col(a).data(), samples.col(a).data() + samples.rows());
    m.upper[a] = sample_quantile(col, 1.0 - eps) - y_center[a];
    m.lower[a] = y_center[a] - sample_quantile(col, eps);
  }
  return m;
}

}  // namespace hgp
