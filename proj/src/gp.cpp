#include "hgp/gp.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "hgp/errors.hpp"
#include "hgp/log.hpp"
#include "hgp/rng.hpp"

namespace hgp {

namespace {

std::string describe(const Hyperparams& hp) {
  std::ostringstream os;
  os << "signal_var=" << hp.signal_var << " noise_var=" << hp.noise_var << " lengthscales=[";
  for (int d = 0; d < hp.dim(); ++d) os << (d ? "," : "") << hp.lengthscales[d];
  os << "]";
  return os.str();
}

JitteredCholesky factor_cov(const Hyperparams& hp, const Eigen::MatrixXd& X) {
  Eigen::MatrixXd K = kernel_matrix(X, X, hp);
  K.diagonal().array() += hp.noise_var;
  try {
    return jittered_cholesky(K, hp.signal_var);
  } catch (const NumericalError& e) {
    throw NumericalError(std::string(e.what()) + " (" + describe(hp) + ")");
  }
}

/// sum_ij M_ij (x_id - x_jd)^2 for every column d; M symmetric.
Eigen::VectorXd weighted_sq_dist(const Eigen::MatrixXd& M, const Eigen::MatrixXd& X) {
  const Eigen::VectorXd row = M.rowwise().sum();
  const Eigen::MatrixXd MX = M * X;
  Eigen::VectorXd out(X.cols());
  for (Eigen::Index d = 0; d < X.cols(); ++d) {
    out[d] = 2.0 * X.col(d).array().square().matrix().dot(row) - 2.0 * X.col(d).dot(MX.col(d));
  }
  return out;
}

double column_var(const Eigen::VectorXd& v) {
  if (v.size() < 2) return 0.0;
  return (v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1);
}

}  // namespace

LmlResult log_marginal_likelihood(const Hyperparams& hp, const Eigen::MatrixXd& X, const Eigen::VectorXd& r) {
  const Eigen::Index n = X.rows();
  const Eigen::Index dim = X.cols();
  Eigen::MatrixXd Kf = kernel_matrix(X, X, hp);
  Eigen::MatrixXd K = Kf;
  K.diagonal().array() += hp.noise_var;
  JitteredCholesky ch;
  try {
    ch = jittered_cholesky(K, hp.signal_var);
  } catch (const NumericalError& e) {
    throw NumericalError(std::string(e.what()) + " (" + describe(hp) + ")");
  }
  auto L = ch.L.triangularView<Eigen::Lower>();
  const Eigen::VectorXd alpha = L.transpose().solve(L.solve(r));

  LmlResult res;
  res.value = -0.5 * r.dot(alpha) - ch.L.diagonal().array().log().sum() -
              0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);

  Eigen::MatrixXd Kinv = Eigen::MatrixXd::Identity(n, n);
  L.solveInPlace(Kinv);
  L.transpose().solveInPlace(Kinv);
  const Eigen::MatrixXd W = alpha * alpha.transpose() - Kinv;

  res.grad.resize(dim + 2);
  const Eigen::MatrixXd WK = W.cwiseProduct(Kf);
  // dK/dlog l_d = Kf o (x_id - x_jd)^2 / l_d^2
  const Eigen::VectorXd sq = weighted_sq_dist(WK, X);
  for (Eigen::Index d = 0; d < dim; ++d) {
    res.grad[d] = 0.5 * sq[d] / (hp.lengthscales[d] * hp.lengthscales[d]);
  }
  res.grad[dim] = 0.5 * WK.sum();
  res.grad[dim + 1] = 0.5 * hp.noise_var * W.trace();
  return res;
}

Hyperparams hp_from_theta(const Eigen::VectorXd& theta) {
  const Eigen::Index d = theta.size() - 2;
  Hyperparams hp;
  hp.lengthscales = theta.head(d).array().exp();
  hp.signal_var = std::exp(theta[d]);
  hp.noise_var = kNoiseFloor + kRelativeNoiseFloor * hp.signal_var + std::exp(theta[d + 1]);
  return hp;
}

Eigen::VectorXd theta_from_hp(const Hyperparams& hp) {
  Eigen::VectorXd theta = hp.to_log();
  const double excess = hp.noise_var - kNoiseFloor - kRelativeNoiseFloor * hp.signal_var;
  theta[hp.dim() + 1] = std::log(std::max(excess, kNoiseFloor));
  return theta;
}

Eigen::VectorXd theta_gradient(const Hyperparams& hp, const Eigen::VectorXd& theta, const Eigen::VectorXd& log_grad) {
  const int d = hp.dim();
  Eigen::VectorXd g = log_grad;
  const double dnoise = log_grad[d + 1] / hp.noise_var;  // dF / d noise_var
  g[d] += dnoise * kRelativeNoiseFloor * hp.signal_var;
  g[d + 1] = dnoise * std::exp(theta[d + 1]);
  return g;
}

Hyperparams default_init(const Eigen::MatrixXd& X, const Eigen::VectorXd& r) {
  Hyperparams hp;
  hp.lengthscales.resize(X.cols());
  for (Eigen::Index d = 0; d < X.cols(); ++d) {
    const double s = std::sqrt(column_var(X.col(d)));
    hp.lengthscales[d] = s > 1e-12 ? s : 1.0;
  }
  double v = column_var(r);
  if (!(v > 1e-20)) v = std::max(r.squaredNorm() / std::max<Eigen::Index>(r.size(), 1), 1e-8);
  hp.signal_var = v;
  hp.noise_var = std::max(0.1 * v, kNoiseFloor);
  return hp;
}

KernelPosterior exact_posterior(const Hyperparams& hp, const Eigen::MatrixXd& X, const Eigen::VectorXd& r) {
  KernelPosterior post;
  post.hp = hp;
  post.outer_chol = factor_cov(hp, X).L;
  auto L = post.outer_chol.triangularView<Eigen::Lower>();
  post.weights = L.transpose().solve(L.solve(r));
  return post;
}

GpModel make_gp(const Eigen::MatrixXd& X, const Eigen::MatrixXd& R, const std::vector<Hyperparams>& hps) {
  if (static_cast<Eigen::Index>(hps.size()) != R.cols()) throw InputError("one hyperparameter set per output required");
  GpModel m;
  m.X = X;
  m.targets = R;
  for (Eigen::Index a = 0; a < R.cols(); ++a) {
    m.outputs.push_back(exact_posterior(hps[static_cast<std::size_t>(a)], X, R.col(a)));
    m.lml.push_back(log_marginal_likelihood(hps[static_cast<std::size_t>(a)], X, R.col(a)).value);
  }
  return m;
}

Hyperparams fit_hyperparams(const Eigen::MatrixXd& X, const Eigen::VectorXd& r, const GpTrainOptions& opts,
                            std::uint64_t column_seed, double* best_value) {
  const int dim = static_cast<int>(X.cols());
  Hyperparams init = opts.init ? *opts.init : default_init(X, r);
  if (init.dim() != dim) throw InputError("initial hyperparameters have the wrong dimension");

  const Objective obj = [&](const Eigen::VectorXd& th, Eigen::VectorXd& g) {
    if (th.cwiseAbs().maxCoeff() > 60.0) return std::numeric_limits<double>::infinity();
    const Hyperparams hp = hp_from_theta(th);
    const LmlResult lml = log_marginal_likelihood(hp, X, r);
    g = -theta_gradient(hp, th, lml.grad);
    return -lml.value;
  };
  const Eigen::VectorXd th0 = theta_from_hp(init);

  Rng rng(column_seed);
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_th = th0;
  bool best_stationary = false;
  for (int k = 0; k < std::max(opts.restarts, 1); ++k) {
    Eigen::VectorXd start = th0;
    if (k > 0) {
      for (Eigen::Index i = 0; i < start.size(); ++i) start[i] += rng.normal();
    }
    const MinimizeResult mr = minimize_bfgs(obj, start, opts.bfgs);
    if (std::isfinite(mr.f) && mr.f < best) {
      best = mr.f;
      best_th = mr.x;
      // line searches usually stop at rounding level before grad_tol is met
      best_stationary = mr.converged || mr.grad.lpNorm<Eigen::Infinity>() <= 1e-3 * std::max(1.0, std::abs(mr.f));
    }
  }
  if (!std::isfinite(best)) throw NumericalError("hyperparameter optimization failed for every restart");
  if (!best_stationary) {
    log_warning("GP hyperparameter optimization stopped away from a stationary point; keeping best iterate");
  }
  if (best_value) *best_value = -best;
  return hp_from_theta(best_th);
}

GpModel train_gp(const Eigen::MatrixXd& X, const Eigen::MatrixXd& R, const GpTrainOptions& opts) {
  if (X.rows() < 2) throw InputError("GP training needs at least two rows");
  if (X.rows() != R.rows()) throw InputError("GP inputs and targets have different row counts");
  if (!X.allFinite() || !R.allFinite()) throw InputError("GP training data must be finite");
  GpModel m;
  m.X = X;
  m.targets = R;
  for (Eigen::Index a = 0; a < R.cols(); ++a) {
    double value = 0.0;
    const Hyperparams hp = fit_hyperparams(X, R.col(a), opts, derive_seed(opts.seed, static_cast<std::uint64_t>(a)), &value);
    m.outputs.push_back(exact_posterior(hp, X, R.col(a)));
    m.lml.push_back(value);
  }
  return m;
}

PosteriorMoments gp_predict(const GpModel& model, const Eigen::VectorXd& x) { return predict(model.view(), x); }

Eigen::MatrixXd gp_mean_gradient(const GpModel& model, const Eigen::VectorXd& x) {
  return mean_gradient(model.view(), x);
}

}  // namespace hgp
