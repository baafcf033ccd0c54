#include "hgp/kernel.hpp"

#include <cmath>
#include <sstream>

#include "hgp/errors.hpp"

namespace hgp {

Eigen::VectorXd Hyperparams::to_log() const {
  Eigen::VectorXd theta(dim() + 2);
  theta.head(dim()) = lengthscales.array().log();
  theta[dim()] = std::log(signal_var);
  theta[dim() + 1] = std::log(noise_var);
  return theta;
}

Hyperparams Hyperparams::from_log(const Eigen::VectorXd& theta) {
  const Eigen::Index d = theta.size() - 2;
  Hyperparams hp;
  hp.lengthscales = theta.head(d).array().exp();
  hp.signal_var = std::exp(theta[d]);
  hp.noise_var = std::exp(theta[d + 1]);
  return hp;
}

double se_kernel(const Eigen::VectorXd& x1, const Eigen::VectorXd& x2, const Hyperparams& hp) {
  const double q = ((x1 - x2).array() / hp.lengthscales.array()).square().sum();
  return hp.signal_var * std::exp(-0.5 * q);
}

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Hyperparams& hp) {
  const Eigen::ArrayXd inv_l = hp.lengthscales.array().inverse();
  const Eigen::MatrixXd As = A * inv_l.matrix().asDiagonal();
  const Eigen::MatrixXd Bs = B * inv_l.matrix().asDiagonal();
  const Eigen::VectorXd a2 = As.rowwise().squaredNorm();
  const Eigen::VectorXd b2 = Bs.rowwise().squaredNorm();
  Eigen::MatrixXd d2 = -2.0 * As * Bs.transpose();
  d2.colwise() += a2;
  d2.rowwise() += b2.transpose();
  return hp.signal_var * (-0.5 * d2.array().max(0.0)).exp().matrix();
}

JitteredCholesky jittered_cholesky(const Eigen::MatrixXd& K, double scale, double min_rel) {
  const double s = scale > 0.0 ? scale : 1.0;
  double rel = min_rel;
  for (;;) {
    Eigen::MatrixXd Kj = K;
    if (rel > 0.0) Kj.diagonal().array() += rel * s;
    Eigen::LLT<Eigen::MatrixXd> llt(Kj);
    if (llt.info() == Eigen::Success && llt.matrixLLT().diagonal().minCoeff() > 0.0) {
      return {llt.matrixL(), rel * s};
    }
    rel = rel == 0.0 ? 1e-10 : rel * 10.0;
    if (rel > 1.000001e-6) {
      throw NumericalError("covariance matrix not positive definite after jitter escalation");
    }
  }
}

PosteriorPoint evaluate_posterior(const Eigen::MatrixXd& support, const KernelPosterior& post,
                                  const Eigen::VectorXd& x, int order) {
  const Hyperparams& hp = post.hp;
  const Eigen::Index n = support.rows();
  const Eigen::ArrayXd inv_l2 = hp.lengthscales.array().square().inverse();

  // diff(i, d) = (s_id - x_d) / l_d^2
  Eigen::MatrixXd diff = support.rowwise() - x.transpose();
  Eigen::VectorXd k(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double q = (diff.row(i).array().square() * inv_l2.transpose()).sum();
    k[i] = hp.signal_var * std::exp(-0.5 * q);
  }
  diff = diff * inv_l2.matrix().asDiagonal();

  PosteriorPoint out;
  out.mean = k.dot(post.weights);
  Eigen::VectorXd a = post.outer_chol.triangularView<Eigen::Lower>().solve(k);
  double var = hp.signal_var - a.squaredNorm();
  Eigen::VectorXd inner;
  if (post.inner_chol.size() > 0) {
    inner = post.inner_chol.triangularView<Eigen::Lower>().solve(a);
    var += post.inner_scale * inner.squaredNorm();
  }
  out.var = std::max(var, 0.0);
  if (order < 1) return out;

  const Eigen::VectorXd wk = post.weights.cwiseProduct(k);
  out.mean_grad = diff.transpose() * wk;

  // P k = L1^{-T} (a - c L2^{-T} L2^{-1} a)
  Eigen::VectorXd t = a;
  if (post.inner_chol.size() > 0) {
    t -= post.inner_scale * post.inner_chol.transpose().triangularView<Eigen::Upper>().solve(inner);
  }
  const Eigen::VectorXd pk = post.outer_chol.transpose().triangularView<Eigen::Upper>().solve(t);
  out.var_grad = -2.0 * diff.transpose() * k.cwiseProduct(pk);
  if (order < 2) return out;

  out.mean_hess = diff.transpose() * wk.asDiagonal() * diff;
  out.mean_hess.diagonal() -= (wk.sum() * inv_l2).matrix();
  return out;
}

PosteriorMoments predict(const PosteriorView& view, const Eigen::VectorXd& x) {
  PosteriorMoments m;
  const int ny = view.n_y();
  m.mean.resize(ny);
  m.var.resize(ny);
  for (int a = 0; a < ny; ++a) {
    const PosteriorPoint p = evaluate_posterior(*view.support, view.output(a), x, 0);
    m.mean[a] = p.mean;
    m.var[a] = p.var;
  }
  return m;
}

Eigen::MatrixXd mean_gradient(const PosteriorView& view, const Eigen::VectorXd& x) {
  Eigen::MatrixXd g(view.n_y(), view.n_x());
  for (int a = 0; a < view.n_y(); ++a) {
    g.row(a) = evaluate_posterior(*view.support, view.output(a), x, 1).mean_grad.transpose();
  }
  return g;
}

}  // namespace hgp
