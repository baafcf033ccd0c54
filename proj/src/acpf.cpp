#include "hgp/acpf.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace hgp {

namespace {

// Bus roles as seen by the Newton solve.
struct BusRoles {
  int slack = -1;
  std::vector<int> angle_buses;    // every non-slack bus
  std::vector<int> voltage_buses;  // buses without a generator
  std::vector<bool> has_gen;
};

BusRoles bus_roles(const GridCase& grid) {
  BusRoles roles;
  roles.slack = grid.slack_bus();
  roles.has_gen.assign(grid.n_bus(), false);
  for (const Generator& g : grid.generators) roles.has_gen[g.bus] = true;
  for (int i = 0; i < grid.n_bus(); ++i) {
    if (i != roles.slack) roles.angle_buses.push_back(i);
    if (!roles.has_gen[i]) roles.voltage_buses.push_back(i);
  }
  return roles;
}

}  // namespace

OperatingPoint forecast_point(const GridCase& grid, const Eigen::VectorXd& p_gen) {
  OperatingPoint op;
  op.p_gen = p_gen;
  const int n = grid.n_bus();
  op.p_load.resize(n);
  op.q_load.resize(n);
  op.p_res.resize(n);
  op.q_res.resize(n);
  for (int i = 0; i < n; ++i) {
    const Bus& b = grid.buses[i];
    op.p_load[i] = b.p_load;
    op.q_load[i] = b.q_load;
    op.p_res[i] = b.p_res;
    op.q_res[i] = b.q_res;
  }
  return op;
}

OperatingPoint operating_point(const GridCase& grid, const IoSchema& schema,
                               const Eigen::VectorXd& x) {
  if (x.size() != schema.n_x) throw InputError("operating_point: input dimension mismatch");
  Eigen::VectorXd p_gen(grid.n_gen());
  for (int k = 0; k < grid.n_gen(); ++k) p_gen[k] = 0.5 * (grid.generators[k].p_min + grid.generators[k].p_max);
  OperatingPoint op = forecast_point(grid, p_gen);
  int c = 0;
  for (int k : schema.gen_inputs) op.p_gen[k] = x[c++];
  for (int i : schema.load_buses) {
    const Bus& b = grid.buses[i];
    op.p_load[i] = x[c++];
    op.q_load[i] = b.q_load * op.p_load[i] / b.p_load;
  }
  for (int i : schema.res_buses) {
    const Bus& b = grid.buses[i];
    op.p_res[i] = x[c++];
    op.q_res[i] = b.q_res * op.p_res[i] / b.p_res;
  }
  return op;
}

Injections make_injections(const GridCase& grid, const OperatingPoint& op) {
  const int n = grid.n_bus();
  Injections inj;
  inj.p = op.p_res - op.p_load;
  inj.q = op.q_res - op.q_load;
  inj.v_set = Eigen::VectorXd::Ones(n);
  std::vector<bool> seen(n, false);
  const int slack_gen = grid.slack_generator();
  for (int k = 0; k < grid.n_gen(); ++k) {
    const Generator& g = grid.generators[k];
    if (k != slack_gen) inj.p[g.bus] += op.p_gen[k];
    if (!seen[g.bus]) {
      inj.v_set[g.bus] = g.v_set;
      seen[g.bus] = true;
    }
  }
  return inj;
}

void bus_power(const Admittance& y, const Eigen::VectorXd& v, const Eigen::VectorXd& theta,
               Eigen::VectorXd& p, Eigen::VectorXd& q) {
  const int n = static_cast<int>(v.size());
  p.setZero(n);
  q.setZero(n);
  for (int i = 0; i < n; ++i) {
    double pi = 0.0;
    double qi = 0.0;
    for (int j = 0; j < n; ++j) {
      const double gij = y.G(i, j);
      const double bij = y.B(i, j);
      if (gij == 0.0 && bij == 0.0) continue;
      const double t = theta[i] - theta[j];
      const double c = std::cos(t);
      const double s = std::sin(t);
      pi += v[j] * (gij * c + bij * s);
      qi += v[j] * (gij * s - bij * c);
    }
    p[i] = v[i] * pi;
    q[i] = v[i] * qi;
  }
}

namespace {

double mismatch_norm(const BusRoles& roles, const Injections& inj, const Eigen::VectorXd& p,
                     const Eigen::VectorXd& q, Eigen::VectorXd* f) {
  const int na = static_cast<int>(roles.angle_buses.size());
  const int nv = static_cast<int>(roles.voltage_buses.size());
  if (f) f->resize(na + nv);
  double worst = 0.0;
  for (int a = 0; a < na; ++a) {
    const int i = roles.angle_buses[a];
    const double d = p[i] - inj.p[i];
    if (f) (*f)[a] = d;
    worst = std::max(worst, std::abs(d));
  }
  for (int a = 0; a < nv; ++a) {
    const int i = roles.voltage_buses[a];
    const double d = q[i] - inj.q[i];
    if (f) (*f)[na + a] = d;
    worst = std::max(worst, std::abs(d));
  }
  if (!std::isfinite(worst)) worst = std::numeric_limits<double>::infinity();
  return worst;
}

}  // namespace

PfSolution solve_acpf(const GridCase& grid, const Injections& inj, double tol, int max_iter) {
  if (!(tol > 0.0)) throw InputError("solve_acpf: tol must be positive");
  const int n = grid.n_bus();
  if (inj.p.size() != n || inj.q.size() != n || inj.v_set.size() != n) {
    throw InputError("solve_acpf: injection dimension mismatch");
  }
  const Admittance y = build_admittance(grid);
  const BusRoles roles = bus_roles(grid);
  const int na = static_cast<int>(roles.angle_buses.size());
  const int nv = static_cast<int>(roles.voltage_buses.size());

  PfSolution sol;
  sol.v = Eigen::VectorXd::Ones(n);
  sol.theta = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    if (roles.has_gen[i]) sol.v[i] = inj.v_set[i];
  }

  Eigen::VectorXd p, q, f;
  Eigen::MatrixXd jac(na + nv, na + nv);
  std::vector<int> angle_pos(n, -1);
  std::vector<int> volt_pos(n, -1);
  for (int a = 0; a < na; ++a) angle_pos[roles.angle_buses[a]] = a;
  for (int a = 0; a < nv; ++a) volt_pos[roles.voltage_buses[a]] = a;

  int iter = 0;
  for (;; ++iter) {
    bus_power(y, sol.v, sol.theta, p, q);
    const double worst = mismatch_norm(roles, inj, p, q, &f);
    sol.max_mismatch = worst;
    if (worst <= tol) break;
    if (iter >= max_iter || !std::isfinite(worst)) {
      throw PowerFlowError("power flow did not converge after " + std::to_string(iter) +
                               " iterations (mismatch " + std::to_string(worst) + ")",
                           iter, worst);
    }
    jac.setZero();
    for (int i = 0; i < n; ++i) {
      const int rp = angle_pos[i];
      const int rq = volt_pos[i];
      if (rp < 0 && rq < 0) continue;
      for (int j = 0; j < n; ++j) {
        const double gij = y.G(i, j);
        const double bij = y.B(i, j);
        if (i != j && gij == 0.0 && bij == 0.0) continue;
        const int ct = angle_pos[j];
        const int cv = nv > 0 ? volt_pos[j] : -1;
        const double t = sol.theta[i] - sol.theta[j];
        const double c = std::cos(t);
        const double s = std::sin(t);
        double dp_dt, dp_dv, dq_dt, dq_dv;
        if (i == j) {
          dp_dt = -q[i] - y.B(i, i) * sol.v[i] * sol.v[i];
          dp_dv = p[i] / sol.v[i] + y.G(i, i) * sol.v[i];
          dq_dt = p[i] - y.G(i, i) * sol.v[i] * sol.v[i];
          dq_dv = q[i] / sol.v[i] - y.B(i, i) * sol.v[i];
        } else {
          dp_dt = sol.v[i] * sol.v[j] * (gij * s - bij * c);
          dp_dv = sol.v[i] * (gij * c + bij * s);
          dq_dt = -sol.v[i] * sol.v[j] * (gij * c + bij * s);
          dq_dv = sol.v[i] * (gij * s - bij * c);
        }
        if (rp >= 0) {
          if (ct >= 0) jac(rp, ct) = dp_dt;
          if (cv >= 0) jac(rp, na + cv) = dp_dv;
        }
        if (rq >= 0) {
          if (ct >= 0) jac(na + rq, ct) = dq_dt;
          if (cv >= 0) jac(na + rq, na + cv) = dq_dv;
        }
      }
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
    if (!lu.isInvertible()) {
      throw PowerFlowError("singular power-flow Jacobian at iteration " + std::to_string(iter), iter,
                           worst);
    }
    const Eigen::VectorXd dx = lu.solve(-f);
    for (int a = 0; a < na; ++a) sol.theta[roles.angle_buses[a]] += dx[a];
    for (int a = 0; a < nv; ++a) sol.v[roles.voltage_buses[a]] += dx[na + a];
  }
  sol.iterations = iter;

  // Generator outputs from the converged state.
  std::vector<int> gens_at_bus(n, 0);
  for (const Generator& g : grid.generators) ++gens_at_bus[g.bus];
  const Eigen::VectorXd q_units = q - inj.q;
  sol.q_g.resize(grid.n_gen());
  for (int k = 0; k < grid.n_gen(); ++k) {
    const int b = grid.generators[k].bus;
    sol.q_g[k] = q_units[b] / gens_at_bus[b];
  }
  // inj.p excludes the slack unit, so the residual at the slack bus is its output.
  sol.p_slack = p[roles.slack] - inj.p[roles.slack];
  return sol;
}

double max_bus_mismatch(const GridCase& grid, const Injections& inj, const PfSolution& sol) {
  const Admittance y = build_admittance(grid);
  const BusRoles roles = bus_roles(grid);
  Eigen::VectorXd p, q;
  bus_power(y, sol.v, sol.theta, p, q);
  return mismatch_norm(roles, inj, p, q, nullptr);
}

BranchFlows branch_flows(const GridCase& grid, const PfSolution& sol) {
  const int m = grid.n_line();
  BranchFlows bf;
  bf.p_from.resize(m);
  bf.q_from.resize(m);
  bf.p_to.resize(m);
  bf.q_to.resize(m);
  bf.s.resize(m);
  for (int l = 0; l < m; ++l) {
    const Line& ln = grid.lines[l];
    const int i = ln.from;
    const int j = ln.to;
    const double vi = sol.v[i];
    const double vj = sol.v[j];
    const double t = sol.theta[i] - sol.theta[j];
    const double c = std::cos(t);
    const double s = std::sin(t);
    const double bh = 0.5 * ln.b_shunt;
    bf.p_from[l] = vi * vi * ln.g - vi * vj * (ln.g * c + ln.b * s);
    bf.q_from[l] = -vi * vi * (ln.b + bh) - vi * vj * (ln.g * s - ln.b * c);
    bf.p_to[l] = vj * vj * ln.g - vi * vj * (ln.g * c - ln.b * s);
    bf.q_to[l] = -vj * vj * (ln.b + bh) - vi * vj * (-ln.g * s - ln.b * c);
    const double s_from = std::hypot(bf.p_from[l], bf.q_from[l]);
    const double s_to = std::hypot(bf.p_to[l], bf.q_to[l]);
    bf.s[l] = std::max(s_from, s_to);
  }
  return bf;
}

Eigen::VectorXd evaluate_outputs(const GridCase& grid, const IoSchema& schema,
                                 const PfSolution& sol) {
  Eigen::VectorXd y(schema.n_y);
  const BranchFlows bf = branch_flows(grid, sol);
  int c = 0;
  for (int i : schema.v_buses) y[c++] = sol.v[i];
  for (int k : schema.q_gens) y[c++] = sol.q_g[k];
  for (int l : schema.s_lines) y[c++] = bf.s[l];
  return y;
}

nlohmann::json to_json(const PfSolution& sol) {
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return {{"v", vec(sol.v)},
          {"theta", vec(sol.theta)},
          {"q_g", vec(sol.q_g)},
          {"p_slack", sol.p_slack},
          {"iterations", sol.iterations},
          {"max_mismatch", sol.max_mismatch}};
}

}  // namespace hgp
