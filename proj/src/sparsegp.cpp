#include "hgp/sparsegp.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "hgp/errors.hpp"
#include "hgp/log.hpp"
#include "hgp/rng.hpp"

namespace hgp {

namespace {

Eigen::VectorXd column_std(const Eigen::MatrixXd& X) {
  Eigen::VectorXd s(X.cols());
  for (Eigen::Index d = 0; d < X.cols(); ++d) {
    const double mean = X.col(d).mean();
    const double v = X.rows() > 1 ? (X.col(d).array() - mean).square().sum() / static_cast<double>(X.rows() - 1) : 0.0;
    s[d] = v > 1e-24 ? std::sqrt(v) : 1.0;
  }
  return s;
}

Eigen::MatrixXd kmeans(const Eigen::MatrixXd& X, int m, std::uint64_t seed) {
  const Eigen::Index n = X.rows();
  const Eigen::RowVectorXd mean = X.colwise().mean();
  const Eigen::VectorXd sd = column_std(X);
  const Eigen::MatrixXd S = (X.rowwise() - mean) * sd.cwiseInverse().asDiagonal();

  Rng rng(seed);
  Eigen::MatrixXd C(m, X.cols());
  // k-means++ seeding
  C.row(0) = S.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
  Eigen::VectorXd d2 = (S.rowwise() - C.row(0)).rowwise().squaredNorm();
  for (int k = 1; k < m; ++k) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      for (pick = 0; pick < n - 1; ++pick) {
        u -= d2[pick];
        if (u < 0.0) break;
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    }
    C.row(k) = S.row(pick);
    d2 = d2.cwiseMin((S.rowwise() - C.row(k)).rowwise().squaredNorm());
  }

  std::vector<int> assign(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < 300; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      (C.rowwise() - S.row(i)).rowwise().squaredNorm().minCoeff(&best);
      if (assign[static_cast<std::size_t>(i)] != static_cast<int>(best)) {
        assign[static_cast<std::size_t>(i)] = static_cast<int>(best);
        changed = true;
      }
    }
    if (!changed && iter > 0) break;
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(m, X.cols());
    Eigen::VectorXi count = Eigen::VectorXi::Zero(m);
    for (Eigen::Index i = 0; i < n; ++i) {
      sum.row(assign[static_cast<std::size_t>(i)]) += S.row(i);
      ++count[assign[static_cast<std::size_t>(i)]];
    }
    for (int k = 0; k < m; ++k) {
      if (count[k] > 0) {
        C.row(k) = sum.row(k) / count[k];
      } else {
        // re-seed an empty cluster at the point farthest from its centroid
        Eigen::Index far = 0;
        double worst = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double d = (S.row(i) - C.row(assign[static_cast<std::size_t>(i)])).squaredNorm();
          if (d > worst) {
            worst = d;
            far = i;
          }
        }
        C.row(k) = S.row(far);
        assign[static_cast<std::size_t>(far)] = k;
      }
    }
  }
  Eigen::MatrixXd Z = C * sd.asDiagonal();
  Z.rowwise() += mean;
  return Z;
}

Eigen::MatrixXd greedy_variance(const Eigen::MatrixXd& X, int m, const Hyperparams& hp) {
  const Eigen::Index n = X.rows();
  Eigen::VectorXd var = Eigen::VectorXd::Constant(n, hp.signal_var);
  Eigen::MatrixXd F(m, n);  // rows of the partial Cholesky factor
  std::vector<bool> taken(static_cast<std::size_t>(n), false);
  Eigen::MatrixXd Z(m, X.cols());
  for (int k = 0; k < m; ++k) {
    Eigen::Index best = -1;
    double best_var = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!taken[static_cast<std::size_t>(i)] && var[i] > best_var) {
        best_var = var[i];
        best = i;
      }
    }
    taken[static_cast<std::size_t>(best)] = true;
    Z.row(k) = X.row(best);
    const Eigen::VectorXd kcol = kernel_matrix(X, X.row(best), hp).col(0);
    const double piv = std::sqrt(std::max(best_var, 1e-300));
    Eigen::VectorXd f = kcol;
    if (k > 0) f -= F.topRows(k).transpose() * F.topRows(k).col(best);
    f /= piv;
    F.row(k) = f.transpose();
    var -= f.cwiseAbs2();
  }
  return Z;
}

struct VfeState {
  JitteredCholesky Lm;
  Eigen::MatrixXd Kmm, Kmn, V, LB;
  Eigen::VectorXd c;
  double noise = 0.0;
};

VfeState vfe_state(const Hyperparams& hp, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z,
                   const Eigen::VectorXd& r) {
  VfeState s;
  s.noise = hp.noise_var;
  s.Kmm = kernel_matrix(Z, Z, hp);
  // K_mm carries no noise term; the first jitter step is always applied so that
  // rounding in a near-singular K_mm cannot push Q_nn above K_nn
  s.Lm = jittered_cholesky(s.Kmm, hp.signal_var, kInducingJitter);
  s.Kmm.diagonal().array() += s.Lm.jitter;
  s.Kmn = kernel_matrix(Z, X, hp);
  s.V = s.Lm.L.triangularView<Eigen::Lower>().solve(s.Kmn);
  Eigen::MatrixXd B = s.V * s.V.transpose();
  B.diagonal().array() += s.noise;
  Eigen::LLT<Eigen::MatrixXd> llt(B);
  if (llt.info() != Eigen::Success) throw NumericalError("sparse GP inner factorization failed");
  s.LB = llt.matrixL();
  s.c = s.LB.triangularView<Eigen::Lower>().solve(s.V * r);
  return s;
}

double vfe_value(const VfeState& s, const Hyperparams& hp, const Eigen::VectorXd& r) {
  const double n = static_cast<double>(s.V.cols());
  const double m = static_cast<double>(s.V.rows());
  return -0.5 / s.noise * (r.squaredNorm() - s.c.squaredNorm()) -
         0.5 * ((n - m) * std::log(s.noise) + 2.0 * s.LB.diagonal().array().log().sum()) -
         0.5 * n * std::log(2.0 * std::numbers::pi) - (n * hp.signal_var - s.V.squaredNorm()) / (2.0 * s.noise);
}

}  // namespace

InducingStrategy parse_inducing_strategy(const std::string& name) {
  if (name == "kmeans") return InducingStrategy::kmeans;
  if (name == "random") return InducingStrategy::random;
  if (name == "greedy-variance" || name == "greedy_variance") return InducingStrategy::greedy_variance;
  throw InputError("unknown inducing strategy '" + name + "'");
}

std::string to_string(InducingStrategy s) {
  switch (s) {
    case InducingStrategy::kmeans: return "kmeans";
    case InducingStrategy::random: return "random";
    case InducingStrategy::greedy_variance: return "greedy-variance";
  }
  return "kmeans";
}

Eigen::MatrixXd select_inducing(const Eigen::MatrixXd& X, int m, InducingStrategy strategy, std::uint64_t seed,
                                const std::optional<Hyperparams>& hp) {
  const Eigen::Index n = X.rows();
  if (m < 1) throw InputError("number of inducing points must be at least 1");
  if (m > n) {
    throw InputError("number of inducing points (" + std::to_string(m) + ") exceeds training rows (" +
                     std::to_string(n) + ")");
  }
  switch (strategy) {
    case InducingStrategy::kmeans:
      return kmeans(X, m, seed);
    case InducingStrategy::random: {
      std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
      std::iota(idx.begin(), idx.end(), Eigen::Index{0});
      Rng rng(seed);
      Eigen::MatrixXd Z(m, X.cols());
      for (int k = 0; k < m; ++k) {
        const auto j = static_cast<std::size_t>(k) + rng.below(static_cast<std::uint64_t>(n - k));
        std::swap(idx[static_cast<std::size_t>(k)], idx[j]);
        Z.row(k) = X.row(idx[static_cast<std::size_t>(k)]);
      }
      return Z;
    }
    case InducingStrategy::greedy_variance: {
      Hyperparams h;
      if (hp) {
        h = *hp;
      } else {
        h.lengthscales = column_std(X);
        h.signal_var = 1.0;
      }
      return greedy_variance(X, m, h);
    }
  }
  return {};
}

LmlResult sparse_bound(const Hyperparams& hp, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z,
                       const Eigen::VectorXd& r) {
  const VfeState s = vfe_state(hp, X, Z, r);
  const Eigen::Index n = X.rows();
  const Eigen::Index m = Z.rows();
  const Eigen::Index dim = X.cols();
  const double sn2 = s.noise;

  LmlResult res;
  res.value = vfe_value(s, hp, r);

  const auto LB = s.LB.triangularView<Eigen::Lower>();
  const auto LBt = s.LB.transpose().triangularView<Eigen::Upper>();
  const Eigen::VectorXd alpha = (r - s.V.transpose() * LBt.solve(s.c)) / sn2;
  const Eigen::MatrixXd U = s.Lm.L.transpose().triangularView<Eigen::Upper>().solve(s.V);  // K_mm^{-1} K_mn
  Eigen::MatrixXd BinvV = LB.solve(s.V);
  LBt.solveInPlace(BinvV);
  const Eigen::VectorXd Ua = U * alpha;
  const Eigen::MatrixXd UVt = U * s.V.transpose();
  // UP = U P and UPU = U P U^T with P = 1/2 a a^T + 1/(2 sn2) V^T B^{-1} V
  const Eigen::MatrixXd UP = 0.5 * Ua * alpha.transpose() + (0.5 / sn2) * UVt * BinvV;
  const Eigen::MatrixXd UPU = 0.5 * Ua * Ua.transpose() + (0.5 / sn2) * UVt * BinvV * U.transpose();

  const Eigen::MatrixXd Hmn = UP.cwiseProduct(s.Kmn);
  const Eigen::MatrixXd Hmm = UPU.cwiseProduct(s.Kmm - s.Lm.jitter * Eigen::MatrixXd::Identity(m, m));
  const Eigen::VectorXd hrow = Hmn.rowwise().sum();
  const Eigen::RowVectorXd hcol = Hmn.colwise().sum();
  const Eigen::VectorXd mrow = Hmm.rowwise().sum();

  res.grad.resize(dim + 2);
  for (Eigen::Index d = 0; d < dim; ++d) {
    const Eigen::VectorXd z = Z.col(d);
    const Eigen::VectorXd x = X.col(d);
    const double mn = z.cwiseAbs2().dot(hrow) - 2.0 * z.dot(Hmn * x) + hcol.dot(x.cwiseAbs2());
    const double mm = 2.0 * z.cwiseAbs2().dot(mrow) - 2.0 * z.dot(Hmm * z);
    const double l2 = hp.lengthscales[d] * hp.lengthscales[d];
    res.grad[d] = (2.0 * mn - mm) / l2;
  }
  // the jitter scales with signal_var, so dK_mm/dlog sf2 includes it
  res.grad[dim] = 2.0 * UP.cwiseProduct(s.Kmn).sum() - UPU.cwiseProduct(s.Kmm).sum() -
                  static_cast<double>(n) * hp.signal_var / (2.0 * sn2);

  Eigen::MatrixXd Binv = Eigen::MatrixXd::Identity(m, m);
  LB.solveInPlace(Binv);
  const double trBinv = Binv.squaredNorm();
  const double dF = 0.5 * alpha.squaredNorm() -
                    0.5 / sn2 * (static_cast<double>(n - m) + sn2 * trBinv) +
                    (static_cast<double>(n) * hp.signal_var - s.V.squaredNorm()) / (2.0 * sn2 * sn2);
  res.grad[dim + 1] = dF * sn2;
  return res;
}

SparseOutput sparse_posterior(const Hyperparams& hp, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z,
                              const Eigen::VectorXd& r) {
  const VfeState s = vfe_state(hp, X, Z, r);
  SparseOutput out;
  out.bound = vfe_value(s, hp, r);
  out.post.hp = hp;
  out.post.outer_chol = s.Lm.L;
  out.post.inner_chol = s.LB;
  out.post.inner_scale = s.noise;
  out.post.weights = s.Lm.L.transpose().triangularView<Eigen::Upper>().solve(
      s.LB.transpose().triangularView<Eigen::Upper>().solve(s.c));
  out.mu_m = s.Kmm * out.post.weights;
  // A_m = sn2 L B^{-1} L^T
  const Eigen::MatrixXd T = s.LB.triangularView<Eigen::Lower>().solve(s.Lm.L.transpose());
  out.A_m = s.noise * T.transpose() * T;
  out.A_m = 0.5 * (out.A_m + out.A_m.transpose()).eval();
  return out;
}

SparseGpModel make_sparse(const Eigen::MatrixXd& X, const Eigen::MatrixXd& R, const Eigen::MatrixXd& Z,
                          const std::vector<Hyperparams>& hps) {
  if (static_cast<Eigen::Index>(hps.size()) != R.cols()) throw InputError("one hyperparameter set per output required");
  SparseGpModel model;
  model.Z = Z;
  for (Eigen::Index a = 0; a < R.cols(); ++a) {
    SparseOutput o = sparse_posterior(hps[static_cast<std::size_t>(a)], X, Z, R.col(a));
    model.outputs.push_back(std::move(o.post));
    model.mu_m.push_back(std::move(o.mu_m));
    model.A_m.push_back(std::move(o.A_m));
    model.bound.push_back(o.bound);
  }
  return model;
}

SparseGpModel train_sparse(const Eigen::MatrixXd& X, const Eigen::MatrixXd& R, const SparseTrainOptions& opts) {
  if (X.rows() != R.rows()) throw InputError("sparse GP inputs and targets have different row counts");
  if (!X.allFinite() || !R.allFinite()) throw InputError("sparse GP training data must be finite");
  const Eigen::MatrixXd Z = select_inducing(X, opts.m, opts.strategy, derive_seed(opts.seed, 0x5a5a));
  const int dim = static_cast<int>(X.cols());

  std::vector<Hyperparams> hps;
  for (Eigen::Index a = 0; a < R.cols(); ++a) {
    const Eigen::VectorXd r = R.col(a);
    const Hyperparams init = opts.init ? *opts.init : default_init(X, r);
    if (init.dim() != dim) throw InputError("initial hyperparameters have the wrong dimension");
    const Objective obj = [&](const Eigen::VectorXd& th, Eigen::VectorXd& g) {
      if (th.cwiseAbs().maxCoeff() > 60.0) return std::numeric_limits<double>::infinity();
      const Hyperparams hp = hp_from_theta(th);
      const LmlResult b = sparse_bound(hp, X, Z, r);
      g = -theta_gradient(hp, th, b.grad);
      return -b.value;
    };
    const Eigen::VectorXd th0 = theta_from_hp(init);
    Rng rng(derive_seed(opts.seed, static_cast<std::uint64_t>(a)));
    double best = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_th = th0;
    for (int k = 0; k < std::max(opts.restarts, 1); ++k) {
      Eigen::VectorXd start = th0;
      if (k > 0) {
        for (Eigen::Index i = 0; i < start.size(); ++i) start[i] += rng.normal();
      }
      const MinimizeResult mr = minimize_bfgs(obj, start, opts.bfgs);
      if (std::isfinite(mr.f) && mr.f < best) {
        best = mr.f;
        best_th = mr.x;
      }
    }
    if (!std::isfinite(best)) throw NumericalError("sparse GP bound optimization failed for every restart");
    hps.push_back(hp_from_theta(best_th));
  }
  return make_sparse(X, R, Z, hps);
}

PosteriorMoments sparse_predict(const SparseGpModel& model, const Eigen::VectorXd& x) {
  return predict(model.view(), x);
}

Eigen::MatrixXd sparse_mean_gradient(const SparseGpModel& model, const Eigen::VectorXd& x) {
  return mean_gradient(model.view(), x);
}

}  // namespace hgp
