#include "hgp/validate.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "hgp/acpf.hpp"
#include "hgp/log.hpp"
#include "hgp/matrix_json.hpp"
#include "hgp/rng.hpp"

namespace hgp {

RmseResult rmse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
    throw InputError("rmse: prediction is " + std::to_string(pred.rows()) + "x" + std::to_string(pred.cols()) +
                     " but truth is " + std::to_string(truth.rows()) + "x" + std::to_string(truth.cols()));
  }
  if (pred.rows() < 1 || pred.cols() < 1) throw InputError("rmse: empty input");
  RmseResult r;
  r.per_output = (pred - truth).array().square().colwise().mean().sqrt().transpose();
  r.average = r.per_output.mean();
  return r;
}

double McResult::max_pg_rate() const {
  double m = 0.0;
  for (std::size_t i = 0; i < constraint_names.size(); ++i) {
    if (constraint_names[i].rfind("p_g:", 0) == 0) m = std::max(m, constraint_rates[static_cast<Eigen::Index>(i)]);
  }
  return m;
}

std::uint64_t train_seed(std::uint64_t seed) { return derive_seed(seed, 1); }
std::uint64_t test_seed(std::uint64_t seed) { return derive_seed(seed, 2); }

namespace {

constexpr double kLimitTol = 1e-6;

/// One realization of the forecast errors: realized per-bus loads and renewables (p.u.).
struct Realization {
  Eigen::VectorXd p_load, q_load, p_res;
  double omega = 0.0;  // total imbalance sum dp_l - sum dp_r
};

std::vector<Realization> draw_realizations(const GridCase& grid, const UncertaintySpec& spec, int n,
                                           std::uint64_t seed) {
  const IoSchema schema = io_schema(grid);
  Rng rng(derive_seed(seed, 0x3c));
  std::vector<Realization> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) {
    Realization r;
    r.p_load = Eigen::VectorXd(grid.n_bus());
    r.q_load = Eigen::VectorXd(grid.n_bus());
    r.p_res = Eigen::VectorXd(grid.n_bus());
    for (int i = 0; i < grid.n_bus(); ++i) {
      r.p_load[i] = grid.buses[i].p_load;
      r.q_load[i] = grid.buses[i].q_load;
      r.p_res[i] = grid.buses[i].p_res;
    }
    for (int i : schema.load_buses) {
      const double pl = grid.buses[i].p_load;
      const double real = std::max(0.0, pl + spec.sigma_l * pl * rng.normal());
      r.p_load[i] = real;
      r.q_load[i] += load_gamma(grid, spec, i) * (real - pl);
      r.omega += real - pl;
    }
    for (int i : schema.res_buses) {
      const double pr = grid.buses[i].p_res;
      const double real = std::max(0.0, pr + spec.sigma_r * pr * rng.normal());
      r.p_res[i] = real;
      r.omega -= real - pr;
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<std::string> limit_names(const GridCase& grid) {
  std::vector<std::string> names;
  auto id = [&](int i) { return std::to_string(grid.buses[i].id); };
  for (int i = 0; i < grid.n_bus(); ++i) names.push_back("v:" + id(i));
  for (const Generator& g : grid.generators) names.push_back("p_g:" + id(g.bus));
  for (const Generator& g : grid.generators) names.push_back("q_g:" + id(g.bus));
  for (const Line& l : grid.lines) names.push_back("s:" + id(l.from) + "-" + id(l.to));
  return names;
}

}  // namespace

McResult mc_violation(const GridCase& grid, const Eigen::VectorXd& p_g_mw, const Eigen::VectorXd& alpha,
                      const UncertaintySpec& spec, int n_mc, std::uint64_t seed) {
  if (n_mc < 1) throw InputError("mc_violation: n_mc must be at least 1");
  if (p_g_mw.size() != grid.n_gen() || alpha.size() != grid.n_gen()) {
    throw InputError("mc_violation: dispatch and participation must have one entry per generator");
  }
  const IoSchema schema = io_schema(grid);
  const int nb = grid.n_bus();
  const int ng = grid.n_gen();
  const int nl = grid.n_line();
  const int slack = grid.slack_generator();

  McResult res;
  res.n_mc = n_mc;
  res.constraint_names = limit_names(grid);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(res.constraint_names.size()));
  std::vector<Eigen::VectorXd> outputs;

  const Eigen::VectorXd p_sched = p_g_mw / grid.base_mva;
  for (const Realization& r : draw_realizations(grid, spec, n_mc, seed)) {
    OperatingPoint op;
    op.p_gen = p_sched + alpha * r.omega;
    op.p_load = r.p_load;
    op.q_load = r.q_load;
    op.p_res = r.p_res;
    op.q_res = Eigen::VectorXd(nb);
    for (int i = 0; i < nb; ++i) op.q_res[i] = grid.buses[i].q_res;

    PfSolution pf;
    try {
      pf = solve_acpf(grid, make_injections(grid, op));
    } catch (const PowerFlowError&) {
      ++res.nonconverged;
      ++res.failures;
      continue;
    }
    bool failed = false;
    auto mark = [&](int row, bool violated) {
      if (violated) {
        counts[row] += 1.0;
        failed = true;
      }
    };
    for (int i = 0; i < nb; ++i) {
      mark(i, pf.v[i] > grid.buses[i].v_max + kLimitTol || pf.v[i] < grid.buses[i].v_min - kLimitTol);
    }
    for (int k = 0; k < ng; ++k) {
      const Generator& g = grid.generators[k];
      const double p = k == slack ? pf.p_slack : op.p_gen[k];
      mark(nb + k, p > g.p_max + kLimitTol || p < g.p_min - kLimitTol);
      mark(nb + ng + k, pf.q_g[k] > g.q_max + kLimitTol || pf.q_g[k] < g.q_min - kLimitTol);
    }
    const BranchFlows flows = branch_flows(grid, pf);
    for (int l = 0; l < nl; ++l) mark(nb + 2 * ng + l, flows.s[l] > grid.lines[l].s_max + kLimitTol);
    if (failed) ++res.failures;
    outputs.push_back(evaluate_outputs(grid, schema, pf));
  }
  res.violation_prob = static_cast<double>(res.failures) / n_mc;
  res.constraint_rates = counts / n_mc;
  res.outputs.resize(static_cast<Eigen::Index>(outputs.size()), schema.n_y);
  for (std::size_t s = 0; s < outputs.size(); ++s) res.outputs.row(static_cast<Eigen::Index>(s)) = outputs[s];
  return res;
}

McResult mc_violation(const GridCase& grid, const DispatchSolution& sol, const UncertaintySpec& spec, int n_mc,
                      std::uint64_t seed) {
  return mc_violation(grid, sol.p_g, sol.alpha, spec, n_mc, seed);
}

BaselineResult baseline_base_case(const GridCase& grid, const UncertaintySpec& spec, int n_mc, std::uint64_t seed,
                                  double tol) {
  const AcopfSolution det = solve_det_acopf(grid, tol);
  if (det.status != SolveStatus::optimal) {
    throw NumericalError("baseline B: deterministic AC-OPF ended with status " + to_string(det.status));
  }
  BaselineResult b;
  b.name = "B (base case)";
  b.cost = det.cost;
  b.p_g = det.p_g * grid.base_mva;
  b.n_mc = n_mc;
  const Eigen::VectorXd alpha = Eigen::VectorXd::Constant(grid.n_gen(), 1.0 / grid.n_gen());
  b.violation_prob = mc_violation(grid, b.p_g, alpha, spec, n_mc, seed).violation_prob;
  return b;
}

BaselineResult baseline_full_recourse(const GridCase& grid, const UncertaintySpec& spec, int n_mc,
                                      std::uint64_t seed, double tol) {
  if (n_mc < 1) throw InputError("baseline A: n_mc must be at least 1");
  BaselineResult a;
  a.name = "A (full recourse)";
  a.n_mc = n_mc;
  double total = 0.0;
  int solved = 0;
  for (const Realization& r : draw_realizations(grid, spec, n_mc, seed)) {
    OperatingPoint op;
    op.p_gen = Eigen::VectorXd::Zero(grid.n_gen());
    op.p_load = r.p_load;
    op.q_load = r.q_load;
    op.p_res = r.p_res;
    op.q_res = Eigen::VectorXd(grid.n_bus());
    for (int i = 0; i < grid.n_bus(); ++i) op.q_res[i] = grid.buses[i].q_res;
    try {
      const AcopfSolution s = solve_det_acopf(grid, op, tol);
      if (s.status == SolveStatus::optimal) {
        total += s.cost;
        ++solved;
        continue;
      }
    } catch (const NumericalError&) {
    }
    ++a.failed_solves;
  }
  if (a.failed_solves > 0) {
    log_warning("baseline A: " + std::to_string(a.failed_solves) + " of " + std::to_string(n_mc) +
                " re-dispatch problems failed and were excluded");
  }
  if (solved == 0) throw NumericalError("baseline A: no realization could be re-dispatched");
  a.cost = total / solved;
  // recourse is infeasible exactly when the re-dispatch fails
  a.violation_prob = static_cast<double>(a.failed_solves) / n_mc;
  return a;
}

double RobustnessResult::mean_dropped() const {
  if (rows.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : rows) s += r.dropped_fraction;
  return s / static_cast<double>(rows.size());
}

RobustnessResult robustness_experiment(const GridCase& grid, const RobustnessWindow& window,
                                       const std::vector<std::uint64_t>& seeds, const RobustnessSettings& settings) {
  RobustnessResult out;
  out.window = window;
  for (std::uint64_t seed : seeds) {
    const Dataset train = generate_dataset(grid, sample_inputs(grid, settings.spec, settings.n_train, train_seed(seed)));
    const Dataset test = generate_dataset(grid, sample_inputs(grid, settings.spec, settings.n_test, test_seed(seed)));
    const Corruption c = corrupt(train, window.column, window.lo, window.hi);
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.restarts = settings.restarts;
    RobustnessSeedRow row;
    row.seed = seed;
    row.dropped_fraction = c.dropped_fraction;
    cfg.mode = ModelMode::hybrid;
    row.rmse_hybrid = rmse(predict_means(train_model(c.data, cfg), test.X), test.Y).average;
    cfg.mode = ModelMode::full;
    row.rmse_full = rmse(predict_means(train_model(c.data, cfg), test.X), test.Y).average;
    out.rows.push_back(row);
  }
  return out;
}

ValidationReport validate_solution(const GridCase& grid, const DispatchSolution& sol, const IoSchema& schema,
                                   const UncertaintySpec& spec, int n_mc, std::uint64_t seed, double eps_y,
                                   double eps_pg) {
  ValidationReport rep;
  rep.case_id = grid.name;
  rep.seed = seed;
  rep.output_names = schema.output_names;
  rep.cost = sol.cost;
  rep.status = to_string(sol.status);
  rep.kkt_residual = sol.kkt_residual;
  rep.eps_y = eps_y;
  rep.eps_pg = eps_pg;
  rep.moments = sol.moments;
  rep.margins_analytic = sol.margins;
  rep.mc = mc_violation(grid, sol, spec, n_mc, seed);
  const Eigen::Index ny = schema.n_y;
  rep.coverage_3sigma = Eigen::VectorXd::Zero(ny);
  if (rep.mc.outputs.rows() > 0) {
    rep.margins_empirical = empirical_margins(rep.mc.outputs, sol.moments.mu_y, eps_y);
    const Eigen::VectorXd sd = sol.moments.var_y.cwiseMax(0.0).cwiseSqrt();
    for (Eigen::Index a = 0; a < ny; ++a) {
      const auto dev = (rep.mc.outputs.col(a).array() - sol.moments.mu_y[a]).abs();
      rep.coverage_3sigma[a] = (dev <= 3.0 * sd[a]).cast<double>().mean();
    }
  }
  return rep;
}

nlohmann::json to_json(const ValidationReport& r) {
  nlohmann::json j;
  j["case_id"] = r.case_id;
  j["seed"] = r.seed;
  j["cost"] = r.cost;
  j["status"] = r.status;
  j["kkt_residual"] = r.kkt_residual;
  j["eps_y"] = r.eps_y;
  j["eps_pg"] = r.eps_pg;
  j["n_mc"] = r.mc.n_mc;
  j["violation_prob"] = r.mc.violation_prob;
  j["nonconverged"] = r.mc.nonconverged;
  nlohmann::json rates = nlohmann::json::object();
  for (std::size_t i = 0; i < r.mc.constraint_names.size(); ++i) {
    rates[r.mc.constraint_names[i]] = r.mc.constraint_rates[static_cast<Eigen::Index>(i)];
  }
  j["constraint_rates"] = rates;
  j["output_names"] = r.output_names;
  j["mu_y"] = vector_json(r.moments.mu_y);
  j["sigma_y"] = vector_json(r.moments.var_y.cwiseMax(0.0).cwiseSqrt());
  j["margins_analytic"] = {{"lambda_y", vector_json(r.margins_analytic.lambda_y)},
                           {"lambda_pg", vector_json(r.margins_analytic.lambda_pg)},
                           {"tau_y", r.margins_analytic.tau_y},
                           {"tau_pg", r.margins_analytic.tau_pg}};
  j["margins_empirical"] = {{"upper", vector_json(r.margins_empirical.upper)},
                            {"lower", vector_json(r.margins_empirical.lower)}};
  j["coverage_3sigma"] = vector_json(r.coverage_3sigma);
  if (r.model_rmse) {
    j["rmse_per_output"] = vector_json(r.model_rmse->per_output);
    j["rmse_avg"] = r.model_rmse->average;
  }
  nlohmann::json base = nlohmann::json::array();
  for (const BaselineResult& b : r.baselines) {
    base.push_back({{"name", b.name},
                    {"cost", b.cost},
                    {"violation_prob", b.violation_prob},
                    {"n_mc", b.n_mc},
                    {"failed_solves", b.failed_solves}});
  }
  j["baselines"] = base;
  return j;
}

nlohmann::json to_json(const RobustnessResult& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"seed", row.seed},
                    {"dropped_fraction", row.dropped_fraction},
                    {"rmse_full", row.rmse_full},
                    {"rmse_hybrid", row.rmse_hybrid}});
  }
  return {{"column", r.window.column}, {"lo_mw", r.window.lo}, {"hi_mw", r.window.hi}, {"rows", rows}};
}

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

std::string render_table(const ValidationReport& r) {
  std::ostringstream os;
  os << "case " << r.case_id << ", seed " << r.seed << ", eps_y " << r.eps_y << ", eps_pg " << r.eps_pg << ", "
     << r.mc.n_mc << " Monte-Carlo samples\n\n";
  os << "method                   cost [$]   failure prob\n";
  os << "hybrid GP CC-OPF   " << fmt("%14.2f", r.cost) << fmt("%14.4f", r.mc.violation_prob) << "\n";
  for (const BaselineResult& b : r.baselines) {
    char name[32];
    std::snprintf(name, sizeof name, "%-19s", b.name.c_str());
    os << name << fmt("%14.2f", b.cost) << fmt("%14.4f", b.violation_prob) << "\n";
  }
  if (r.mc.nonconverged > 0) os << "(" << r.mc.nonconverged << " power flows did not converge)\n";
  os << "\noutput        mu_y      sigma_y    lambda_y   emp upper  emp lower  3sigma cover";
  if (r.model_rmse) os << "  rmse";
  os << "\n";
  for (std::size_t a = 0; a < r.output_names.size(); ++a) {
    const auto i = static_cast<Eigen::Index>(a);
    char name[16];
    std::snprintf(name, sizeof name, "%-10s", r.output_names[a].c_str());
    os << name << fmt("%11.5f", r.moments.mu_y[i]) << fmt("%11.5f", std::sqrt(std::max(r.moments.var_y[i], 0.0)))
       << fmt("%11.5f", r.margins_analytic.lambda_y[i]);
    if (r.margins_empirical.upper.size() > i) {
      os << fmt("%11.5f", r.margins_empirical.upper[i]) << fmt("%11.5f", r.margins_empirical.lower[i]);
    } else {
      os << "          -          -";
    }
    os << fmt("%12.4f", r.coverage_3sigma[i]);
    if (r.model_rmse) os << fmt("%12.3e", r.model_rmse->per_output[i]);
    os << "\n";
  }
  os << "\nlimit rates above zero:";
  bool any = false;
  for (std::size_t i = 0; i < r.mc.constraint_names.size(); ++i) {
    const double rate = r.mc.constraint_rates[static_cast<Eigen::Index>(i)];
    if (rate > 0.0) {
      os << " " << r.mc.constraint_names[i] << "=" << fmt("%.4f", rate);
      any = true;
    }
  }
  if (!any) os << " none";
  os << "\n";
  return os.str();
}

std::string render_table(const std::vector<RobustnessResult>& results) {
  std::ostringstream os;
  os << "column      window [MW]        seed   dropped   full GPR RMSE   hybrid RMSE   ratio\n";
  for (const auto& r : results) {
    for (const auto& row : r.rows) {
      char line[160];
      std::snprintf(line, sizeof line, "%-10s [%7.2f, %7.2f]  %6llu   %7.3f   %13.4e  %12.4e  %6.2f\n",
                    r.window.column.c_str(), r.window.lo, r.window.hi, static_cast<unsigned long long>(row.seed),
                    row.dropped_fraction, row.rmse_full, row.rmse_hybrid, row.rmse_full / row.rmse_hybrid);
      os << line;
    }
  }
  return os.str();
}

}  // namespace hgp
