#include "hgp/linmodel.hpp"

#include <cmath>

#include "hgp/dataset.hpp"
#include "hgp/errors.hpp"
#include "hgp/log.hpp"
#include "hgp/matrix_json.hpp"

namespace hgp {

LinearSurrogate fit_linear(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, int n_v) {
  const Eigen::Index n = X.rows();
  const Eigen::Index n_x = X.cols();
  if (n < 1) throw InputError("fit_linear: empty dataset");
  if (Y.rows() != n) throw InputError("fit_linear: X and Y row counts differ");
  if (n_v < 0 || n_v > Y.cols()) throw InputError("fit_linear: bad voltage block size");

  const Eigen::MatrixXd T = Y.rightCols(Y.cols() - n_v);
  const Eigen::RowVectorXd x_mean = X.colwise().mean();
  const Eigen::RowVectorXd t_mean = T.colwise().mean();
  Eigen::MatrixXd Xc = X.rowwise() - x_mean;
  const Eigen::MatrixXd Tc = T.rowwise() - t_mean;

  std::vector<Eigen::Index> active;
  for (Eigen::Index j = 0; j < n_x; ++j) {
    const double scale = std::max(1.0, x_mean[j] == 0.0 ? 0.0 : std::abs(x_mean[j]));
    if (Xc.col(j).cwiseAbs().maxCoeff() > 1e-14 * scale) {
      active.push_back(j);
    } else if (n > 1) {
      log_warning("fit_linear: input column " + std::to_string(j) + " has zero variance; coefficient set to 0");
    }
  }

  LinearSurrogate sur;
  sur.n_v = n_v;
  sur.A = Eigen::MatrixXd::Zero(T.cols(), n_x);
  if (!active.empty()) {
    Eigen::MatrixXd Xa(n, static_cast<Eigen::Index>(active.size()));
    for (std::size_t c = 0; c < active.size(); ++c) Xa.col(static_cast<Eigen::Index>(c)) = Xc.col(active[c]);
    Eigen::MatrixXd coef;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xa);
    const bool full_rank = n >= n_x + 1 && qr.rank() == Xa.cols();
    if (full_rank) {
      coef = qr.solve(Tc);
    } else {
      Eigen::MatrixXd gram = Xa.transpose() * Xa;
      gram.diagonal().array() += kSurrogateRidge;
      coef = gram.ldlt().solve(Xa.transpose() * Tc);
    }
    for (std::size_t c = 0; c < active.size(); ++c) {
      sur.A.col(active[c]) = coef.row(static_cast<Eigen::Index>(c)).transpose();
    }
  }
  sur.b = t_mean.transpose() - sur.A * x_mean.transpose();
  return sur;
}

LinearSurrogate fit_linear(const Dataset& data) { return fit_linear(data.X, data.Y, data.schema.n_v()); }

Eigen::VectorXd predict_linear(const LinearSurrogate& sur, const Eigen::VectorXd& x) {
  if (x.size() != sur.n_x()) throw InputError("predict_linear: input dimension mismatch");
  Eigen::VectorXd z(sur.n_y());
  z.head(sur.n_v).setConstant(sur.v_dc);
  z.tail(sur.A.rows()) = sur.A * x + sur.b;
  return z;
}

Eigen::MatrixXd predict_linear(const LinearSurrogate& sur, const Eigen::MatrixXd& X) {
  if (X.cols() != sur.n_x()) throw InputError("predict_linear: input dimension mismatch");
  Eigen::MatrixXd Z(X.rows(), sur.n_y());
  Z.leftCols(sur.n_v).setConstant(sur.v_dc);
  Z.rightCols(sur.A.rows()) = (X * sur.A.transpose()).rowwise() + sur.b.transpose();
  return Z;
}

Eigen::VectorXd propagate_linear_cov(const LinearSurrogate& sur, const Eigen::MatrixXd& sigma_x) {
  if (sigma_x.rows() != sur.n_x() || sigma_x.cols() != sur.n_x()) {
    throw InputError("propagate_linear_cov: covariance dimension mismatch");
  }
  const double asym = (sigma_x - sigma_x.transpose()).cwiseAbs().maxCoeff();
  Eigen::MatrixXd sym = sigma_x;
  if (asym > 0.0) {
    if (asym >= 1e-10) throw InputError("propagate_linear_cov: covariance is not symmetric");
    if (asym > 1e-12 * std::max(1.0, sigma_x.cwiseAbs().maxCoeff())) {
      log_warning("propagate_linear_cov: symmetrizing covariance (asymmetry " + std::to_string(asym) + ")");
    }
    sym = 0.5 * (sigma_x + sigma_x.transpose());
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(sur.n_y());
  const Eigen::MatrixXd AS = sur.A * sym;
  for (Eigen::Index r = 0; r < sur.A.rows(); ++r) {
    out[sur.n_v + r] = std::max(0.0, AS.row(r).dot(sur.A.row(r)));
  }
  return out;
}

nlohmann::json to_json(const LinearSurrogate& sur) {
  return {{"n_v", sur.n_v}, {"n_x", sur.n_x()}, {"v_dc", sur.v_dc}, {"A", matrix_json(sur.A)}, {"b", vector_json(sur.b)}};
}

LinearSurrogate surrogate_from_json(const nlohmann::json& j) {
  LinearSurrogate sur;
  try {
    sur.n_v = j.at("n_v").get<int>();
    sur.v_dc = j.value("v_dc", 1.0);
    sur.b = json_vector(j.at("b"));
    sur.A = json_matrix(j.at("A"), j.value("n_x", 0));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("surrogate: ") + e.what());
  }
  if (sur.A.rows() != sur.b.size()) throw InputError("surrogate: A and b dimensions differ");
  return sur;
}

}  // namespace hgp
