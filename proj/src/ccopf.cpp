#include "hgp/ccopf.hpp"

#include <chrono>
#include <cmath>

#include "hgp/acpf.hpp"
#include "hgp/log.hpp"
#include "hgp/matrix_json.hpp"

namespace hgp {

CostCoeffs cost_coeffs_pu(const GridCase& grid) {
  const int ng = grid.n_gen();
  CostCoeffs c{Eigen::VectorXd(ng), Eigen::VectorXd(ng), Eigen::VectorXd(ng)};
  const double base = grid.base_mva;
  for (int k = 0; k < ng; ++k) {
    const Generator& g = grid.generators[k];
    c.c2[k] = g.c2 * base * base;
    c.c1[k] = g.c1 * base;
    c.c0[k] = g.c0;
  }
  return c;
}

CostValue expected_cost(const Eigen::VectorXd& p_g, const Eigen::VectorXd& alpha, const Eigen::VectorXd& sigma_d,
                        const CostCoeffs& coeffs) {
  const Eigen::Index ng = p_g.size();
  if (alpha.size() != ng || coeffs.c2.size() != ng || coeffs.c1.size() != ng || coeffs.c0.size() != ng) {
    throw InputError("expected_cost: coefficient vectors must match the generator count");
  }
  const double tr = sigma_d.sum();
  CostValue out;
  out.value = (coeffs.c2.array() * (p_g.array().square() + tr * alpha.array().square()) +
               coeffs.c1.array() * p_g.array() + coeffs.c0.array())
                  .sum();
  out.grad_p = (2.0 * coeffs.c2.array() * p_g.array() + coeffs.c1.array()).matrix();
  out.grad_alpha = (2.0 * tr * coeffs.c2.array() * alpha.array()).matrix();
  return out;
}

int chance_constraint_count(const GridCase& grid, const IoSchema& schema) {
  return 2 * schema.n_y + 2 * grid.n_gen();
}

namespace {

/// Shared data of the chance-constrained program.
struct CcContext {
  const HybridModel* model = nullptr;
  IoSchema schema;
  int ng = 0;
  Eigen::VectorXd x_template;  // forecast inputs; p_g entries overwritten
  Eigen::VectorXd sigma_d;
  Eigen::VectorXd signed_var;  // +var for loads, -var for renewables
  double tr = 0.0;
  Eigen::VectorXd y_min, y_max;
  std::vector<bool> one_sided;  // apparent-power rows
  double tau_y = 0.0;
  double tau_pg = 0.0;
  Eigen::VectorXd p_min, p_max;
  CostCoeffs coeffs;
  double net_load = 0.0;
};

CcContext make_context(const GridCase& grid, const HybridModel& model, const UncertaintySpec& spec, double eps_y,
                       double eps_pg, double margin_scale) {
  if (!(model.schema == io_schema(grid))) throw InputError("model schema does not match the case");
  CcContext c;
  c.model = &model;
  c.schema = model.schema;
  c.ng = grid.n_gen();
  c.x_template = forecast_inputs(grid, c.schema, Eigen::VectorXd::Zero(c.schema.n_pg()));
  c.sigma_d = demand_variances(grid, c.schema, spec);
  c.signed_var = c.sigma_d;
  c.signed_var.tail(c.schema.n_pr()) *= -1.0;
  c.tr = c.sigma_d.sum();
  output_limits(grid, c.schema, c.y_min, c.y_max);
  c.one_sided.assign(static_cast<std::size_t>(c.schema.n_y), false);
  for (int a = c.schema.n_v() + c.schema.n_q(); a < c.schema.n_y; ++a) c.one_sided[static_cast<std::size_t>(a)] = true;
  const Margins m = compute_margins(Eigen::VectorXd::Zero(0), Eigen::VectorXd::Zero(0), c.sigma_d, eps_y, eps_pg);
  c.tau_y = margin_scale * m.tau_y;
  c.tau_pg = margin_scale * m.tau_pg;
  c.p_min.resize(c.ng);
  c.p_max.resize(c.ng);
  for (int k = 0; k < c.ng; ++k) {
    c.p_min[k] = grid.generators[k].p_min;
    c.p_max[k] = grid.generators[k].p_max;
  }
  c.coeffs = cost_coeffs_pu(grid);
  for (const Bus& b : grid.buses) c.net_load += b.p_load - b.p_res;
  return c;
}

struct OutputEval {
  Eigen::VectorXd mu, var;
  Eigen::MatrixXd dmu, dvar;  // n_y x (2 n_g)
};

/// Quadratic form c^T Sigma_x(alpha) c and its alpha-gradient (over every generator).
double quad_form(const CcContext& c, const Eigen::VectorXd& a_g, const Eigen::VectorXd& cg, const Eigen::VectorXd& cd,
                 Eigen::VectorXd* dalpha) {
  const double ga = cg.dot(a_g);
  const double ds = cd.dot(c.signed_var);
  const double val = c.tr * ga * ga + 2.0 * ga * ds + cd.cwiseAbs2().dot(c.sigma_d);
  if (dalpha) {
    dalpha->setZero(c.ng);
    for (int i = 0; i < c.schema.n_pg(); ++i) {
      (*dalpha)[c.schema.gen_inputs[static_cast<std::size_t>(i)]] = 2.0 * c.tr * ga * cg[i] + 2.0 * cg[i] * ds;
    }
  }
  return val;
}

/// Sigma_x for an arbitrary (not necessarily normalized) alpha, as used inside
/// the NLP where the simplex only holds at feasible points.
Eigen::MatrixXd raw_input_cov(const CcContext& c, const Eigen::VectorXd& alpha) {
  const int npg = c.schema.n_pg();
  const int nd = c.schema.n_d();
  Eigen::VectorXd a_g(npg);
  for (int i = 0; i < npg; ++i) a_g[i] = alpha[c.schema.gen_inputs[static_cast<std::size_t>(i)]];
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(npg + nd, npg + nd);
  S.topLeftCorner(npg, npg) = c.tr * a_g * a_g.transpose();
  S.topRightCorner(npg, nd) = a_g * c.signed_var.transpose();
  S.bottomLeftCorner(nd, npg) = S.topRightCorner(npg, nd).transpose();
  S.bottomRightCorner(nd, nd) = c.sigma_d.asDiagonal();
  return S;
}

}  // namespace

NlpProblem assemble_nlp(const GridCase& grid, const HybridModel& model, const UncertaintySpec& spec, double eps_y,
                        double eps_pg, double margin_scale) {
  auto ctx = std::make_shared<CcContext>(make_context(grid, model, spec, eps_y, eps_pg, margin_scale));
  const int ng = ctx->ng;
  const int ny = ctx->schema.n_y;

  // tightened capacity with uniform participation
  const double lam = ctx->tau_pg * std::sqrt(ctx->tr) / ng;
  const double cap_hi = ctx->p_max.sum() - ng * lam;
  const double cap_lo = ctx->p_min.sum() + ng * lam;
  if (ctx->net_load > cap_hi || ctx->net_load < cap_lo) {
    throw InfeasibleError("forecast net load " + std::to_string(ctx->net_load * grid.base_mva) +
                          " MW lies outside the tightened generation range [" +
                          std::to_string(cap_lo * grid.base_mva) + ", " + std::to_string(cap_hi * grid.base_mva) +
                          "] MW");
  }

  NlpProblem p;
  p.n = 2 * ng;
  p.m_eq = 2;
  p.m_in = 2 * ny + 3 * ng;
  p.x0.resize(p.n);
  const double t = (ctx->net_load - ctx->p_min.sum()) / (ctx->p_max.sum() - ctx->p_min.sum());
  p.x0.head(ng) = ctx->p_min + t * (ctx->p_max - ctx->p_min);
  p.x0.tail(ng).setConstant(1.0 / ng);

  p.objective = [ctx](const Eigen::VectorXd& u, Eigen::VectorXd* g) {
    const int n = ctx->ng;
    const CostValue cv = expected_cost(u.head(n), u.tail(n), ctx->sigma_d, ctx->coeffs);
    if (g) {
      g->resize(2 * n);
      g->head(n) = cv.grad_p;
      g->tail(n) = cv.grad_alpha;
    }
    return cv.value;
  };
  p.equalities = [ctx](const Eigen::VectorXd& u, Eigen::VectorXd& c, Eigen::MatrixXd* J) {
    const int n = ctx->ng;
    c.resize(2);
    c[0] = u.tail(n).sum() - 1.0;
    c[1] = u.head(n).sum() - ctx->net_load;
    if (J) {
      J->setZero(2, 2 * n);
      J->row(0).tail(n).setOnes();
      J->row(1).head(n).setOnes();
    }
  };
  p.inequalities = [ctx](const Eigen::VectorXd& u, Eigen::VectorXd& c, Eigen::MatrixXd* J) {
    const int n = ctx->ng;
    const int m = ctx->schema.n_y;
    const CcContext& cx = *ctx;
    // moments without normalizing alpha
    OutputEval oe;
    {
      const int npg = cx.schema.n_pg();
      const int nd = cx.schema.n_d();
      Eigen::VectorXd x = cx.x_template;
      Eigen::VectorXd a_g(npg);
      for (int i = 0; i < npg; ++i) {
        const int k = cx.schema.gen_inputs[static_cast<std::size_t>(i)];
        x[i] = u[k];
        a_g[i] = u[n + k];
      }
      const Eigen::MatrixXd Sx = raw_input_cov(cx, u.tail(n));
      const HybridModel& model = *cx.model;
      oe.mu = linear_part(model, x);
      oe.var = Eigen::VectorXd::Zero(m);
      oe.dmu = Eigen::MatrixXd::Zero(m, 2 * n);
      oe.dvar = Eigen::MatrixXd::Zero(m, 2 * n);
      Eigen::VectorXd da(n);
      if (model.surrogate) {
        const LinearSurrogate& s = *model.surrogate;
        for (int r = 0; r < s.A.rows(); ++r) {
          const int a = s.n_v + r;
          const Eigen::VectorXd row = s.A.row(r).transpose();
          oe.var[a] += quad_form(cx, a_g, row.head(npg), row.tail(nd), &da);
          for (int i = 0; i < npg; ++i) oe.dmu(a, cx.schema.gen_inputs[static_cast<std::size_t>(i)]) += row[i];
          oe.dvar.row(a).tail(n) += da.transpose();
        }
      }
      const PosteriorView view = model.view();
      for (int a = 0; a < m; ++a) {
        const PosteriorPoint pp = evaluate_posterior(*view.support, view.output(a), x, J ? 2 : 0);
        oe.mu[a] += pp.mean;
        if (!J) {
          const Eigen::VectorXd g = evaluate_posterior(*view.support, view.output(a), x, 1).mean_grad;
          oe.var[a] += pp.var + quad_form(cx, a_g, g.head(npg), g.tail(nd), nullptr);
          continue;
        }
        oe.var[a] += pp.var + quad_form(cx, a_g, pp.mean_grad.head(npg), pp.mean_grad.tail(nd), &da);
        const Eigen::VectorXd dq = 2.0 * pp.mean_hess * (Sx * pp.mean_grad);
        for (int i = 0; i < npg; ++i) {
          const int k = cx.schema.gen_inputs[static_cast<std::size_t>(i)];
          oe.dmu(a, k) += pp.mean_grad[i];
          oe.dvar(a, k) += pp.var_grad[i] + dq[i];
        }
        oe.dvar.row(a).tail(n) += da.transpose();
      }
    }

    c.resize(2 * m + 3 * n);
    if (J) J->setZero(2 * m + 3 * n, 2 * n);
    const double sqrt_tr = std::sqrt(cx.tr);
    for (int a = 0; a < m; ++a) {
      const double sd = std::sqrt(std::max(oe.var[a], 1e-300));
      const double lam = cx.tau_y * sd;
      c[a] = cx.y_max[a] - oe.mu[a] - lam;
      const bool one_sided = cx.one_sided[static_cast<std::size_t>(a)];
      c[m + a] = one_sided ? oe.mu[a] - cx.y_min[a] : oe.mu[a] - lam - cx.y_min[a];
      if (J) {
        const Eigen::RowVectorXd dlam = cx.tau_y * oe.dvar.row(a) / (2.0 * sd);
        J->row(a) = -oe.dmu.row(a) - dlam;
        J->row(m + a) = one_sided ? Eigen::RowVectorXd(oe.dmu.row(a)) : Eigen::RowVectorXd(oe.dmu.row(a) - dlam);
      }
    }
    for (int k = 0; k < n; ++k) {
      const double lam = cx.tau_pg * u[n + k] * sqrt_tr;
      c[2 * m + k] = cx.p_max[k] - u[k] - lam;
      c[2 * m + n + k] = u[k] - lam - cx.p_min[k];
      c[2 * m + 2 * n + k] = u[n + k];
      if (J) {
        (*J)(2 * m + k, k) = -1.0;
        (*J)(2 * m + k, n + k) = -cx.tau_pg * sqrt_tr;
        (*J)(2 * m + n + k, k) = 1.0;
        (*J)(2 * m + n + k, n + k) = -cx.tau_pg * sqrt_tr;
        (*J)(2 * m + 2 * n + k, n + k) = 1.0;
      }
    }
  };
  (void)ny;
  p.hessian = fd_lagrangian_hessian(p);
  return p;
}

void evaluate_dispatch(const GridCase& grid, const HybridModel& model, const UncertaintySpec& spec, double eps_y,
                       double eps_pg, DispatchSolution& sol) {
  const IoSchema& schema = model.schema;
  const Eigen::VectorXd p_pu = sol.p_g / grid.base_mva;
  Eigen::VectorXd pg_in(schema.n_pg());
  for (int i = 0; i < schema.n_pg(); ++i) pg_in[i] = p_pu[schema.gen_inputs[static_cast<std::size_t>(i)]];
  const Eigen::VectorXd sigma_d = demand_variances(grid, schema, spec);
  GaussianVector in;
  in.mean = forecast_inputs(grid, schema, pg_in);
  in.cov = build_input_cov(schema, sol.alpha, sigma_d);
  sol.moments = ta1_propagate(model, in);
  sol.margins = compute_margins(sol.moments.var_y, sol.alpha, sigma_d, eps_y, eps_pg);
  // the apparent-power lower bound is not tightened, but the margin vector is symmetric by definition
  sol.cost = expected_cost(p_pu, sol.alpha, sigma_d, cost_coeffs_pu(grid)).value;
}

DispatchSolution solve_ccopf(const GridCase& grid, const HybridModel& model, const UncertaintySpec& spec,
                             const CcopfSettings& settings) {
  const auto t0 = std::chrono::steady_clock::now();
  const int ng = grid.n_gen();
  IpOptions opts;
  opts.tol = settings.tol;
  opts.max_iter = settings.max_iter;

  auto run = [&](double scale, const Eigen::VectorXd* start) {
    NlpProblem p = assemble_nlp(grid, model, spec, settings.eps_y, settings.eps_pg, scale);
    if (start) p.x0 = *start;
    return solve_ip(p, opts);
  };

  IpResult base = run(0.0, nullptr);
  if (base.status != SolveStatus::optimal) log_warning("deterministic surrogate OPF did not converge; continuing");
  Eigen::VectorXd start = base.x;
  start.tail(ng).setConstant(1.0 / ng);
  IpResult res = run(1.0, &start);
  int iterations = base.iterations + res.iterations;
  if (res.status != SolveStatus::optimal) {
    log_warning("direct chance-constrained solve ended with status " + to_string(res.status) +
                "; ramping margins in three steps");
    Eigen::VectorXd x = start;
    for (int step = 1; step <= 3; ++step) {
      res = run(step / 3.0, &x);
      iterations += res.iterations;
      log_info("margin continuation step " + std::to_string(step) + "/3: status " + to_string(res.status) +
               ", KKT residual " + std::to_string(res.kkt_residual));
      x = res.x;
    }
  }

  DispatchSolution sol;
  sol.p_g = res.x.head(ng) * grid.base_mva;
  sol.alpha = res.x.tail(ng);
  sol.kkt_residual = res.kkt_residual;
  sol.iterations = iterations;
  sol.status = res.status;
  // tiny negative participation from the interior iterates is projected back onto the simplex
  Eigen::VectorXd a = sol.alpha.cwiseMax(0.0);
  sol.alpha = a / a.sum();
  evaluate_dispatch(grid, model, spec, settings.eps_y, settings.eps_pg, sol);
  sol.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return sol;
}

// ---------------------------------------------------------------------------
// deterministic AC-OPF

namespace {

struct AcLayout {
  int nb = 0, ng = 0, nl = 0, slack = 0;
  std::vector<int> theta_index;  // bus -> variable offset or -1
  int off_theta = 0, off_pg = 0, off_qg = 0, n = 0;
};

AcLayout ac_layout(const GridCase& grid) {
  AcLayout L;
  L.nb = grid.n_bus();
  L.ng = grid.n_gen();
  L.nl = grid.n_line();
  L.slack = grid.slack_bus();
  L.off_theta = L.nb;
  L.theta_index.assign(static_cast<std::size_t>(L.nb), -1);
  int c = L.off_theta;
  for (int i = 0; i < L.nb; ++i) {
    if (i != L.slack) L.theta_index[static_cast<std::size_t>(i)] = c++;
  }
  L.off_pg = c;
  L.off_qg = c + L.ng;
  L.n = L.off_qg + L.ng;
  return L;
}

void unpack(const AcLayout& L, const Eigen::VectorXd& u, Eigen::VectorXd& v, Eigen::VectorXd& th) {
  v = u.head(L.nb);
  th = Eigen::VectorXd::Zero(L.nb);
  for (int i = 0; i < L.nb; ++i) {
    const int k = L.theta_index[static_cast<std::size_t>(i)];
    if (k >= 0) th[i] = u[k];
  }
}

struct EndFlow {
  double p, q;
  double dp_vi, dp_vj, dp_t, dq_vi, dq_vj, dq_t;
};

/// Flows at both ends of a line as functions of v_i, v_j and t = theta_i - theta_j.
void line_end_flows(const Line& ln, double vi, double vj, double t, EndFlow& f, EndFlow& tt) {
  const double g = ln.g;
  const double b = ln.b;
  const double bh = 0.5 * ln.b_shunt;
  const double c = std::cos(t);
  const double s = std::sin(t);
  f.p = vi * vi * g - vi * vj * (g * c + b * s);
  f.q = -vi * vi * (b + bh) - vi * vj * (g * s - b * c);
  f.dp_vi = 2.0 * vi * g - vj * (g * c + b * s);
  f.dp_vj = -vi * (g * c + b * s);
  f.dp_t = vi * vj * (g * s - b * c);
  f.dq_vi = -2.0 * vi * (b + bh) - vj * (g * s - b * c);
  f.dq_vj = -vi * (g * s - b * c);
  f.dq_t = -vi * vj * (g * c + b * s);
  tt.p = vj * vj * g - vi * vj * (g * c - b * s);
  tt.q = -vj * vj * (b + bh) + vi * vj * (g * s + b * c);
  tt.dp_vi = -vj * (g * c - b * s);
  tt.dp_vj = 2.0 * vj * g - vi * (g * c - b * s);
  tt.dp_t = vi * vj * (g * s + b * c);
  tt.dq_vi = vj * (g * s + b * c);
  tt.dq_vj = -2.0 * vj * (b + bh) + vi * (g * s + b * c);
  tt.dq_t = vi * vj * (g * c - b * s);
}

}  // namespace

NlpProblem acopf_nlp(const GridCase& grid, const OperatingPoint& demand) {
  const AcLayout L = ac_layout(grid);
  auto y = std::make_shared<Admittance>(build_admittance(grid));
  const CostCoeffs coeffs = cost_coeffs_pu(grid);
  const Eigen::VectorXd pd = demand.p_load - demand.p_res;
  const Eigen::VectorXd qd = demand.q_load - demand.q_res;

  NlpProblem p;
  p.n = L.n;
  p.m_eq = 2 * L.nb;
  p.m_in = 2 * L.nb + 4 * L.ng + 2 * L.nl;

  p.objective = [L, coeffs](const Eigen::VectorXd& u, Eigen::VectorXd* g) {
    const Eigen::VectorXd pg = u.segment(L.off_pg, L.ng);
    if (g) {
      g->setZero(L.n);
      g->segment(L.off_pg, L.ng) = (2.0 * coeffs.c2.array() * pg.array() + coeffs.c1.array()).matrix();
    }
    return (coeffs.c2.array() * pg.array().square() + coeffs.c1.array() * pg.array() + coeffs.c0.array()).sum();
  };

  std::vector<int> gen_bus(static_cast<std::size_t>(L.ng));
  for (int k = 0; k < L.ng; ++k) gen_bus[static_cast<std::size_t>(k)] = grid.generators[k].bus;

  p.equalities = [L, y, pd, qd, gen_bus](const Eigen::VectorXd& u, Eigen::VectorXd& c, Eigen::MatrixXd* J) {
    Eigen::VectorXd v, th, P, Q;
    unpack(L, u, v, th);
    bus_power(*y, v, th, P, Q);
    c.resize(2 * L.nb);
    c.head(L.nb) = P + pd;
    c.tail(L.nb) = Q + qd;
    for (int k = 0; k < L.ng; ++k) {
      c[gen_bus[static_cast<std::size_t>(k)]] -= u[L.off_pg + k];
      c[L.nb + gen_bus[static_cast<std::size_t>(k)]] -= u[L.off_qg + k];
    }
    if (!J) return;
    J->setZero(2 * L.nb, L.n);
    for (int i = 0; i < L.nb; ++i) {
      for (int j = 0; j < L.nb; ++j) {
        const double G = y->G(i, j);
        const double B = y->B(i, j);
        const double t = th[i] - th[j];
        const double cs = G * std::cos(t) + B * std::sin(t);
        const double sn = G * std::sin(t) - B * std::cos(t);
        const int tj = L.theta_index[static_cast<std::size_t>(j)];
        if (i == j) {
          (*J)(i, i) += P[i] / v[i] + G * v[i];
          (*J)(L.nb + i, i) += Q[i] / v[i] - B * v[i];
          if (tj >= 0) {
            (*J)(i, tj) += -Q[i] - B * v[i] * v[i];
            (*J)(L.nb + i, tj) += P[i] - G * v[i] * v[i];
          }
        } else if (G != 0.0 || B != 0.0) {
          (*J)(i, j) += v[i] * cs;
          (*J)(L.nb + i, j) += v[i] * sn;
          if (tj >= 0) {
            (*J)(i, tj) += v[i] * v[j] * sn;
            (*J)(L.nb + i, tj) += -v[i] * v[j] * cs;
          }
        }
      }
    }
    for (int k = 0; k < L.ng; ++k) {
      (*J)(gen_bus[static_cast<std::size_t>(k)], L.off_pg + k) = -1.0;
      (*J)(L.nb + gen_bus[static_cast<std::size_t>(k)], L.off_qg + k) = -1.0;
    }
  };

  const GridCase g = grid;
  p.inequalities = [L, g](const Eigen::VectorXd& u, Eigen::VectorXd& c, Eigen::MatrixXd* J) {
    c.resize(2 * L.nb + 4 * L.ng + 2 * L.nl);
    if (J) J->setZero(c.size(), L.n);
    int r = 0;
    for (int i = 0; i < L.nb; ++i) {
      c[r] = g.buses[i].v_max - u[i];
      if (J) (*J)(r, i) = -1.0;
      ++r;
      c[r] = u[i] - g.buses[i].v_min;
      if (J) (*J)(r, i) = 1.0;
      ++r;
    }
    for (int k = 0; k < L.ng; ++k) {
      const Generator& gen = g.generators[k];
      const double pk = u[L.off_pg + k];
      const double qk = u[L.off_qg + k];
      c[r] = gen.p_max - pk;
      if (J) (*J)(r, L.off_pg + k) = -1.0;
      ++r;
      c[r] = pk - gen.p_min;
      if (J) (*J)(r, L.off_pg + k) = 1.0;
      ++r;
      c[r] = gen.q_max - qk;
      if (J) (*J)(r, L.off_qg + k) = -1.0;
      ++r;
      c[r] = qk - gen.q_min;
      if (J) (*J)(r, L.off_qg + k) = 1.0;
      ++r;
    }
    Eigen::VectorXd v, th;
    unpack(L, u, v, th);
    for (int l = 0; l < L.nl; ++l) {
      const Line& ln = g.lines[l];
      const int i = ln.from;
      const int j = ln.to;
      EndFlow f{}, t{};
      line_end_flows(ln, v[i], v[j], th[i] - th[j], f, t);
      const int ti = L.theta_index[static_cast<std::size_t>(i)];
      const int tj = L.theta_index[static_cast<std::size_t>(j)];
      for (const EndFlow* e : {&f, &t}) {
        c[r] = ln.s_max * ln.s_max - e->p * e->p - e->q * e->q;
        if (J) {
          (*J)(r, i) = -2.0 * (e->p * e->dp_vi + e->q * e->dq_vi);
          (*J)(r, j) = -2.0 * (e->p * e->dp_vj + e->q * e->dq_vj);
          const double dt = -2.0 * (e->p * e->dp_t + e->q * e->dq_t);
          if (ti >= 0) (*J)(r, ti) += dt;
          if (tj >= 0) (*J)(r, tj) -= dt;
        }
        ++r;
      }
    }
  };

  p.hessian = fd_lagrangian_hessian(p);

  // start: power flow at a proportional dispatch, flat voltages if that fails
  Eigen::VectorXd pmin(L.ng), pmax(L.ng);
  for (int k = 0; k < L.ng; ++k) {
    pmin[k] = grid.generators[k].p_min;
    pmax[k] = grid.generators[k].p_max;
  }
  const double net = pd.sum();
  const double frac = std::clamp((net - pmin.sum()) / (pmax.sum() - pmin.sum()), 0.0, 1.0);
  OperatingPoint op = demand;
  op.p_gen = pmin + frac * (pmax - pmin);
  p.x0 = Eigen::VectorXd::Zero(L.n);
  p.x0.head(L.nb).setOnes();
  p.x0.segment(L.off_pg, L.ng) = op.p_gen;
  try {
    const PfSolution pf = solve_acpf(grid, make_injections(grid, op));
    p.x0.head(L.nb) = pf.v.cwiseMax(Eigen::VectorXd::Constant(L.nb, 0.0));
    for (int i = 0; i < L.nb; ++i) {
      const int k = L.theta_index[static_cast<std::size_t>(i)];
      if (k >= 0) p.x0[k] = pf.theta[i];
    }
    p.x0[L.off_pg + grid.slack_generator()] = pf.p_slack;
    p.x0.segment(L.off_qg, L.ng) = pf.q_g;
  } catch (const NumericalError&) {
  }
  for (int i = 0; i < L.nb; ++i) {
    p.x0[i] = std::clamp(p.x0[i], grid.buses[i].v_min, grid.buses[i].v_max);
  }
  return p;
}

AcopfSolution solve_det_acopf(const GridCase& grid, const OperatingPoint& demand, double tol, int max_iter) {
  const AcLayout L = ac_layout(grid);
  const NlpProblem p = acopf_nlp(grid, demand);
  IpOptions opts;
  opts.tol = tol;
  opts.max_iter = max_iter;
  const IpResult r = solve_ip(p, opts);
  AcopfSolution sol;
  unpack(L, r.x, sol.v, sol.theta);
  sol.p_g = r.x.segment(L.off_pg, L.ng);
  sol.q_g = r.x.segment(L.off_qg, L.ng);
  sol.cost = r.f;
  sol.kkt_residual = r.kkt_residual;
  sol.iterations = r.iterations;
  sol.status = r.status;
  return sol;
}

AcopfSolution solve_det_acopf(const GridCase& grid, double tol, int max_iter) {
  return solve_det_acopf(grid, forecast_point(grid, Eigen::VectorXd::Zero(grid.n_gen())), tol, max_iter);
}

nlohmann::json to_json(const DispatchSolution& sol, const IoSchema& schema) {
  nlohmann::json j;
  j["p_g"] = vector_json(sol.p_g);
  j["alpha"] = vector_json(sol.alpha);
  j["cost"] = sol.cost;
  j["kkt_residual"] = sol.kkt_residual;
  j["iterations"] = sol.iterations;
  j["status"] = to_string(sol.status);
  j["output_names"] = schema.output_names;
  j["mu_y"] = vector_json(sol.moments.mu_y);
  j["sigma_y"] = vector_json(sol.moments.var_y.cwiseMax(0.0).cwiseSqrt());
  j["var_y"] = vector_json(sol.moments.var_y);
  j["margins"] = {{"lambda_y", vector_json(sol.margins.lambda_y)},
                  {"lambda_pg", vector_json(sol.margins.lambda_pg)},
                  {"tau_y", sol.margins.tau_y},
                  {"tau_pg", sol.margins.tau_pg}};
  return j;
}

DispatchSolution dispatch_from_json(const nlohmann::json& j) {
  try {
    DispatchSolution sol;
    sol.p_g = json_vector(j.at("p_g"));
    sol.alpha = json_vector(j.at("alpha"));
    if (sol.p_g.size() != sol.alpha.size()) throw InputError("solution file: p_g and alpha lengths differ");
    sol.cost = j.at("cost").get<double>();
    sol.kkt_residual = j.at("kkt_residual").get<double>();
    sol.iterations = j.at("iterations").get<int>();
    const std::string st = j.at("status").get<std::string>();
    sol.status = st == "optimal" ? SolveStatus::optimal
                                 : st == "infeasible" ? SolveStatus::infeasible : SolveStatus::max_iter;
    sol.moments.mu_y = json_vector(j.at("mu_y"));
    sol.moments.var_y = json_vector(j.at("var_y"));
    const auto& m = j.at("margins");
    sol.margins.lambda_y = json_vector(m.at("lambda_y"));
    sol.margins.lambda_pg = json_vector(m.at("lambda_pg"));
    sol.margins.tau_y = m.at("tau_y").get<double>();
    sol.margins.tau_pg = m.at("tau_pg").get<double>();
    return sol;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed solution file: ") + e.what());
  }
}

}  // namespace hgp
