#include "hgp/optim.hpp"

#include <cmath>
#include <limits>

#include "hgp/errors.hpp"

namespace hgp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double safe_eval(const Objective& fn, const Eigen::VectorXd& x, Eigen::VectorXd& g) {
  try {
    const double f = fn(x, g);
    if (!std::isfinite(f) || !g.allFinite()) return kInf;
    return f;
  } catch (const NumericalError&) {
    return kInf;
  }
}

/// Minimizer of the cubic through (a, fa, da) and (b, fb, db), safeguarded to
/// the inner part of [a, b].
double cubic_step(double a, double fa, double da, double b, double fb, double db) {
  const double lo = std::min(a, b);
  const double hi = std::max(a, b);
  double t = 0.5 * (a + b);
  if (std::isfinite(fb) && std::isfinite(db)) {
    const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
    const double disc = d1 * d1 - da * db;
    if (disc >= 0.0) {
      const double d2 = std::copysign(std::sqrt(disc), b - a);
      const double c = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
      if (std::isfinite(c)) t = c;
    }
  }
  const double margin = 0.1 * (hi - lo);
  return std::clamp(t, lo + margin, hi - margin);
}

struct Trial {
  double step = 0.0;
  double f = kInf;
  double slope = kInf;
  Eigen::VectorXd x;
  Eigen::VectorXd g;
};

/// Strong-Wolfe line search (bracketing + zoom). Returns false if no point with
/// sufficient decrease was found; `best` then holds the lowest point seen, if any.
bool wolfe_search(const Objective& fn, const Eigen::VectorXd& x0, double f0, double slope0, const Eigen::VectorXd& d,
                  Trial& out) {
  constexpr double c1 = 1e-4;
  constexpr double c2 = 0.9;
  constexpr int kMaxEvals = 30;
  auto eval = [&](double step) {
    Trial t;
    t.step = step;
    t.x = x0 + step * d;
    t.g.resize(x0.size());
    t.f = safe_eval(fn, t.x, t.g);
    t.slope = std::isfinite(t.f) ? t.g.dot(d) : kInf;
    return t;
  };

  Trial prev;
  prev.step = 0.0;
  prev.f = f0;
  prev.slope = slope0;
  Trial lo, hi;
  bool bracketed = false;
  double step = 1.0;
  int evals = 0;
  out = Trial{};
  while (evals < kMaxEvals) {
    Trial cur = eval(step);
    ++evals;
    if (!std::isfinite(cur.f)) {
      // outside the domain: shrink towards the last good point
      step = prev.step + 0.25 * (step - prev.step);
      continue;
    }
    if (cur.f > f0 + c1 * step * slope0 || (evals > 1 && cur.f >= prev.f)) {
      lo = prev;
      hi = cur;
      bracketed = true;
      break;
    }
    if (std::abs(cur.slope) <= -c2 * slope0) {
      out = cur;
      return true;
    }
    if (cur.slope >= 0.0) {
      lo = cur;
      hi = prev;
      bracketed = true;
      break;
    }
    prev = cur;
    out = cur;
    step *= 2.5;
  }
  if (!bracketed) return out.x.size() > 0;

  // zoom: lo satisfies sufficient decrease and has the lower value
  while (evals < kMaxEvals) {
    const double t = cubic_step(lo.step, lo.f, lo.slope, hi.step, hi.f, hi.slope);
    if (std::abs(hi.step - lo.step) < 1e-14 * std::max(1.0, std::abs(lo.step))) break;
    Trial cur = eval(t);
    ++evals;
    if (!std::isfinite(cur.f) || cur.f > f0 + c1 * t * slope0 || cur.f >= lo.f) {
      hi = cur;
      if (!std::isfinite(cur.f)) hi.f = kInf;
    } else {
      if (std::abs(cur.slope) <= -c2 * slope0) {
        out = cur;
        return true;
      }
      if (cur.slope * (hi.step - lo.step) >= 0.0) hi = lo;
      lo = cur;
    }
  }
  if (lo.step > 0.0 && lo.x.size() > 0) {
    out = lo;
    return true;
  }
  return false;
}

}  // namespace

MinimizeResult minimize_bfgs(const Objective& fn, const Eigen::VectorXd& x0, const BfgsOptions& opts) {
  const Eigen::Index n = x0.size();
  MinimizeResult res;
  res.x = x0;
  res.grad.resize(n);
  res.f = safe_eval(fn, res.x, res.grad);
  if (!std::isfinite(res.f)) {
    res.line_search_failed = true;
    return res;
  }
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  bool fresh = true;  // H is an (unscaled) identity

  for (res.iterations = 0; res.iterations < opts.max_iter; ++res.iterations) {
    if (res.grad.lpNorm<Eigen::Infinity>() <= opts.grad_tol) {
      res.converged = true;
      return res;
    }
    Eigen::VectorXd d = -H * res.grad;
    if (!(res.grad.dot(d) < 0.0)) {
      H.setIdentity();
      fresh = true;
      d = -res.grad;
    }
    const double dmax = d.lpNorm<Eigen::Infinity>();
    if (dmax > opts.max_step) d *= opts.max_step / dmax;

    Trial t;
    if (!wolfe_search(fn, res.x, res.f, res.grad.dot(d), d, t)) {
      if (fresh) {
        res.line_search_failed = true;
        break;
      }
      H.setIdentity();
      fresh = true;
      continue;
    }

    const Eigen::VectorXd s = t.x - res.x;
    const Eigen::VectorXd y = t.g - res.grad;
    res.x = t.x;
    res.f = t.f;
    res.grad = t.g;

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (fresh) {
        H *= sy / y.squaredNorm();
        fresh = false;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd Hy = H * y;
      H += (rho * rho * y.dot(Hy) + rho) * (s * s.transpose()) - rho * (Hy * s.transpose() + s * Hy.transpose());
    }
  }
  res.converged = res.grad.lpNorm<Eigen::Infinity>() <= opts.grad_tol;
  return res;
}

}  // namespace hgp
