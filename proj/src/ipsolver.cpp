#include "hgp/ipsolver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hgp/errors.hpp"

namespace hgp {

namespace {

constexpr double kMaxGrad = 100.0;
constexpr double kSmax = 100.0;

struct Eval {
  double f = 0.0;
  Eigen::VectorXd g;
  Eigen::VectorXd ce, ci;
  Eigen::MatrixXd je, ji;
};

/// Evaluates the scaled problem.
class Scaled {
 public:
  Scaled(const NlpProblem& p, const ProblemScaling& sc) : p_(p), sc_(sc) {}

  double value(const Eigen::VectorXd& x) const { return sc_.obj * p_.objective(x, nullptr); }

  void constraints(const Eigen::VectorXd& x, Eigen::VectorXd& ce, Eigen::VectorXd& ci) const {
    ce.resize(p_.m_eq);
    ci.resize(p_.m_in);
    if (p_.m_eq > 0) {
      p_.equalities(x, ce, nullptr);
      ce.array() *= sc_.eq.array();
    }
    if (p_.m_in > 0) {
      p_.inequalities(x, ci, nullptr);
      ci.array() *= sc_.in.array();
    }
  }

  Eval full(const Eigen::VectorXd& x) const {
    Eval e;
    e.g.resize(p_.n);
    e.f = sc_.obj * p_.objective(x, &e.g);
    e.g *= sc_.obj;
    e.ce.resize(p_.m_eq);
    e.ci.resize(p_.m_in);
    e.je.resize(p_.m_eq, p_.n);
    e.ji.resize(p_.m_in, p_.n);
    if (p_.m_eq > 0) {
      p_.equalities(x, e.ce, &e.je);
      e.ce.array() *= sc_.eq.array();
      e.je = sc_.eq.asDiagonal() * e.je;
    }
    if (p_.m_in > 0) {
      p_.inequalities(x, e.ci, &e.ji);
      e.ci.array() *= sc_.in.array();
      e.ji = sc_.in.asDiagonal() * e.ji;
    }
    return e;
  }

  Eigen::MatrixXd hessian(const Eigen::VectorXd& x, const Eigen::VectorXd& ye, const Eigen::VectorXd& yi) const {
    // L_scaled = s_f f - (s_E y_E)^T c_E - (s_I y_I)^T c_I
    const Eigen::VectorXd ue = sc_.eq.cwiseProduct(ye) / sc_.obj;
    const Eigen::VectorXd ui = sc_.in.cwiseProduct(yi) / sc_.obj;
    return sc_.obj * p_.hessian(x, ue, ui);
  }

 private:
  const NlpProblem& p_;
  const ProblemScaling& sc_;
};

bool finite_eval(const Eval& e) {
  return std::isfinite(e.f) && e.g.allFinite() && e.ce.allFinite() && e.ci.allFinite() && e.je.allFinite() &&
         e.ji.allFinite();
}

double norm_inf(const Eigen::VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }
double norm_1(const Eigen::VectorXd& v) { return v.size() ? v.lpNorm<1>() : 0.0; }

Eigen::VectorXd lagrangian_grad(const Eval& e, const Eigen::VectorXd& ye, const Eigen::VectorXd& yi) {
  Eigen::VectorXd r = e.g;
  if (ye.size()) r -= e.je.transpose() * ye;
  if (yi.size()) r -= e.ji.transpose() * yi;
  return r;
}

double dual_scale(const Eigen::VectorXd& ye, const Eigen::VectorXd& yi) {
  const double m = static_cast<double>(ye.size() + yi.size());
  if (m == 0.0) return 1.0;
  return std::max(kSmax, (norm_1(ye) + norm_1(yi)) / m) / kSmax;
}

double compl_scale(const Eigen::VectorXd& yi) {
  if (yi.size() == 0) return 1.0;
  return std::max(kSmax, norm_1(yi) / static_cast<double>(yi.size())) / kSmax;
}

double barrier_error(const Eval& e, const Eigen::VectorXd& s, const Eigen::VectorXd& ye, const Eigen::VectorXd& yi,
                     double mu) {
  const double stat = norm_inf(lagrangian_grad(e, ye, yi)) / dual_scale(ye, yi);
  const double feas = std::max(norm_inf(e.ce), norm_inf(e.ci - s));
  const double comp = yi.size() ? norm_inf((s.cwiseProduct(yi).array() - mu).matrix()) / compl_scale(yi) : 0.0;
  return std::max({stat, feas, comp});
}

}  // namespace

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::max_iter: return "max_iter";
    case SolveStatus::infeasible: return "infeasible";
  }
  return "max_iter";
}

ProblemScaling compute_scaling(const NlpProblem& p, const Eigen::VectorXd& x) {
  ProblemScaling sc;
  Eigen::VectorXd g(p.n);
  p.objective(x, &g);
  const double gmax = norm_inf(g);
  sc.obj = std::isfinite(gmax) && gmax > kMaxGrad ? kMaxGrad / gmax : 1.0;
  auto rows = [&](int m, const auto& fn) {
    Eigen::VectorXd f = Eigen::VectorXd::Ones(m);
    if (m == 0) return f;
    Eigen::VectorXd c(m);
    Eigen::MatrixXd J(m, p.n);
    fn(x, c, &J);
    for (int i = 0; i < m; ++i) {
      const double r = J.row(i).lpNorm<Eigen::Infinity>();
      if (std::isfinite(r) && r > kMaxGrad) f[i] = kMaxGrad / r;
    }
    return f;
  };
  sc.eq = rows(p.m_eq, p.equalities);
  sc.in = rows(p.m_in, p.inequalities);
  return sc;
}

KktResidual kkt_residual(const NlpProblem& p, const ProblemScaling& scaling, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& y_eq, const Eigen::VectorXd& y_in) {
  const Scaled sp(p, scaling);
  const Eval e = sp.full(x);
  KktResidual r;
  r.stationarity = norm_inf(lagrangian_grad(e, y_eq, y_in)) / dual_scale(y_eq, y_in);
  r.feasibility = norm_inf(e.ce);
  if (p.m_in > 0) r.feasibility = std::max(r.feasibility, norm_inf((-e.ci).cwiseMax(0.0)));
  if (p.m_in > 0) {
    const Eigen::VectorXd s = e.ci.cwiseMax(0.0);
    r.complementarity = norm_inf(s.cwiseProduct(y_in)) / compl_scale(y_in);
    // a negative multiplier is a stationarity defect of the inequality system
    r.complementarity = std::max(r.complementarity, norm_inf((-y_in).cwiseMax(0.0)));
  }
  return r;
}

IpResult solve_ip(const NlpProblem& p, const IpOptions& opts) {
  const int n = p.n;
  const int me = p.m_eq;
  const int mi = p.m_in;
  IpResult res;
  res.scaling = compute_scaling(p, p.x0);
  const Scaled sp(p, res.scaling);

  Eigen::VectorXd x = p.x0;
  Eval e = sp.full(x);
  if (!finite_eval(e)) throw NumericalError("interior-point start is not a finite point of the problem");

  double mu = opts.mu0;
  Eigen::VectorXd s = e.ci.cwiseMax(1e-2);
  Eigen::VectorXd z = (mu / s.array()).matrix();
  Eigen::VectorXd y = Eigen::VectorXd::Zero(me);
  Eigen::MatrixXd B = Eigen::MatrixXd::Identity(n, n);
  double nu = 1.0;
  double delta_w = 0.0;
  const double tau_min = 0.99;
  int stalls = 0;

  res.status = SolveStatus::max_iter;
  for (res.iterations = 0; res.iterations < opts.max_iter; ++res.iterations) {
    const double err0 = barrier_error(e, s, y, z, 0.0);
    if (err0 <= opts.tol) {
      res.status = SolveStatus::optimal;
      break;
    }
    while (mu > opts.tol / 10.0 && barrier_error(e, s, y, z, mu) <= 10.0 * mu) {
      mu = std::max(opts.tol / 10.0, std::min(0.2 * mu, std::pow(mu, 1.5)));
    }

    const Eigen::MatrixXd W = p.hessian ? sp.hessian(x, y, z) : B;
    const Eigen::VectorXd sigma = z.cwiseQuotient(s);
    Eigen::MatrixXd H = W;
    if (mi > 0) H += e.ji.transpose() * sigma.asDiagonal() * e.ji;
    const Eigen::VectorXd rd = lagrangian_grad(e, y, z);
    const Eigen::VectorXd ri = e.ci - s;
    const Eigen::VectorXd rc = (mu - s.cwiseProduct(z).array()).matrix();  // mu e - S z
    Eigen::VectorXd rhs = -rd;
    if (mi > 0) rhs += e.ji.transpose() * (rc.cwiseQuotient(s) - sigma.cwiseProduct(ri));

    // inertia control: the KKT matrix has the right inertia when H is positive
    // definite on the null space of the equality Jacobian
    Eigen::MatrixXd Z;
    if (me > 0) {
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(e.je.transpose());
      qr.setThreshold(1e-10);
      const Eigen::Index r = qr.rank();
      const Eigen::MatrixXd Q = qr.householderQ();
      Z = Q.rightCols(n - r);
    }
    auto reduced_pd = [&](double d) {
      Eigen::MatrixXd Hs = H;
      Hs.diagonal().array() += d;
      if (me > 0) {
        if (Z.cols() == 0) return true;
        Hs = Z.transpose() * Hs * Z;
      }
      Eigen::LLT<Eigen::MatrixXd> llt(Hs);
      return llt.info() == Eigen::Success;
    };
    double shift = 0.0;
    if (!reduced_pd(0.0)) {
      shift = delta_w > 0.0 ? std::max(1e-20, delta_w / 3.0) : 1e-4;
      while (!reduced_pd(shift)) {
        shift *= delta_w > 0.0 ? 8.0 : 100.0;
        if (shift > 1e40) throw NumericalError("interior-point: cannot regularize the KKT system");
      }
      delta_w = shift;
    }
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + me, n + me);
    K.topLeftCorner(n, n) = H;
    K.topLeftCorner(n, n).diagonal().array() += shift;
    if (me > 0) {
      K.topRightCorner(n, me) = e.je.transpose();
      K.bottomLeftCorner(me, n) = e.je;
      K.bottomRightCorner(me, me).diagonal().array() = -1e-12;
    }
    Eigen::VectorXd kr(n + me);
    kr.head(n) = rhs;
    if (me > 0) kr.tail(me) = -e.ce;
    const Eigen::VectorXd sol = K.fullPivLu().solve(kr);
    if (!sol.allFinite()) throw NumericalError("interior-point: singular KKT system");
    const Eigen::VectorXd dx = sol.head(n);
    const Eigen::VectorXd dy = me > 0 ? Eigen::VectorXd(-sol.tail(me)) : Eigen::VectorXd();
    Eigen::VectorXd ds(mi), dz(mi);
    if (mi > 0) {
      ds = e.ji * dx + ri;
      dz = rc.cwiseQuotient(s) - sigma.cwiseProduct(ds);
    }

    const double tau = std::max(tau_min, 1.0 - mu);
    double a_p = 1.0;
    double a_d = 1.0;
    for (int i = 0; i < mi; ++i) {
      if (ds[i] < 0.0) a_p = std::min(a_p, -tau * s[i] / ds[i]);
      if (dz[i] < 0.0) a_d = std::min(a_d, -tau * z[i] / dz[i]);
    }

    // l1 merit line search on (x, s)
    const double y_max = std::max(me ? norm_inf(y + dy) : 0.0, mi ? norm_inf(z + dz) : 0.0);
    nu = std::max(nu, 1.1 * y_max + 1e-3);
    auto infeas = [&](const Eigen::VectorXd& ce, const Eigen::VectorXd& ci, const Eigen::VectorXd& sl) {
      return norm_1(ce) + norm_1(ci - sl);
    };
    const double theta0 = infeas(e.ce, e.ci, s);
    const double phi0 = e.f - mu * s.array().log().sum() + nu * theta0;
    const double dphi = e.g.dot(dx) - mu * (mi ? ds.cwiseQuotient(s).sum() : 0.0) - nu * theta0;
    double alpha = a_p;
    Eigen::VectorXd x_new, s_new, ce_new, ci_new;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = x + alpha * dx;
      s_new = s + alpha * ds;
      const double f_new = sp.value(x_new);
      sp.constraints(x_new, ce_new, ci_new);
      if (std::isfinite(f_new) && ce_new.allFinite() && ci_new.allFinite()) {
        const double phi = f_new - mu * s_new.array().log().sum() + nu * infeas(ce_new, ci_new, s_new);
        // roundoff allowance on the merit comparison
        const double slack = 10.0 * std::numeric_limits<double>::epsilon() * std::abs(phi0);
        if (phi <= phi0 + 1e-4 * alpha * std::min(dphi, 0.0) + slack || (dphi >= 0.0 && phi <= phi0 + slack)) {
          accepted = true;
          break;
        }
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      ++stalls;
      // take a tiny step anyway and restart the quasi-Newton model
      alpha = std::min(a_p, 1e-3);
      x_new = x + alpha * dx;
      s_new = s + alpha * ds;
      B.setIdentity();
      if (stalls > 25) break;
    } else {
      stalls = 0;
    }

    Eval e_new = sp.full(x_new);
    if (!finite_eval(e_new)) break;
    const Eigen::VectorXd y_new = me > 0 ? Eigen::VectorXd(y + alpha * dy) : y;
    Eigen::VectorXd z_new = mi > 0 ? Eigen::VectorXd(z + a_d * dz) : z;
    for (int i = 0; i < mi; ++i) {
      const double lo = mu / (1e10 * s_new[i]);
      const double hi = 1e10 * mu / s_new[i];
      z_new[i] = std::clamp(z_new[i], lo, hi);
    }
    // a slack that the constraint value already exceeds can be reset
    for (int i = 0; i < mi; ++i) s_new[i] = std::max(s_new[i], std::min(e_new.ci[i], s_new[i] * 1e3));

    if (!p.hessian) {
      const Eigen::VectorXd sk = x_new - x;
      const Eigen::VectorXd yk = lagrangian_grad(e_new, y_new, z_new) - lagrangian_grad(e, y_new, z_new);
      const Eigen::VectorXd Bs = B * sk;
      const double sBs = sk.dot(Bs);
      const double sy = sk.dot(yk);
      if (sBs > 1e-16) {
        const double th = sy >= 0.2 * sBs ? 1.0 : 0.8 * sBs / (sBs - sy);
        const Eigen::VectorXd r = th * yk + (1.0 - th) * Bs;
        B += r * r.transpose() / sk.dot(r) - Bs * Bs.transpose() / sBs;
      }
    }

    x = x_new;
    s = s_new;
    y = y_new;
    z = z_new;
    e = std::move(e_new);
  }

  res.x = x;
  res.y_eq = y;
  res.y_in = z;
  res.slack = s;
  res.f = p.objective(x, nullptr);
  res.kkt_residual = barrier_error(e, s, y, z, 0.0);
  if (res.status != SolveStatus::optimal) {
    const double feas = std::max(norm_inf(e.ce), mi ? norm_inf((-e.ci).cwiseMax(0.0)) : 0.0);
    if (feas > 1e-4) res.status = SolveStatus::infeasible;
  }
  return res;
}

std::function<Eigen::MatrixXd(const Eigen::VectorXd&, const Eigen::VectorXd&, const Eigen::VectorXd&)>
fd_lagrangian_hessian(const NlpProblem& p) {
  const NlpProblem base = p;
  return [base](const Eigen::VectorXd& u, const Eigen::VectorXd& ye, const Eigen::VectorXd& yi) {
    auto grad = [&](const Eigen::VectorXd& x) {
      Eigen::VectorXd g(base.n), ce(base.m_eq), ci(base.m_in);
      Eigen::MatrixXd je(base.m_eq, base.n), ji(base.m_in, base.n);
      base.objective(x, &g);
      if (base.m_eq > 0) {
        base.equalities(x, ce, &je);
        g -= je.transpose() * ye;
      }
      if (base.m_in > 0) {
        base.inequalities(x, ci, &ji);
        g -= ji.transpose() * yi;
      }
      return g;
    };
    Eigen::MatrixXd H(base.n, base.n);
    for (int k = 0; k < base.n; ++k) {
      const double h = 1e-6 * std::max(1.0, std::abs(u[k]));
      Eigen::VectorXd up = u, dn = u;
      up[k] += h;
      dn[k] -= h;
      H.col(k) = (grad(up) - grad(dn)) / (2.0 * h);
    }
    return Eigen::MatrixXd(0.5 * (H + H.transpose()));
  };
}

}  // namespace hgp
