#include <cmath>

#include "doctest.h"
#include "hgp/acpf.hpp"
#include "hgp/errors.hpp"
#include "hgp/grid.hpp"
#include "hgp/rng.hpp"
#include "test_support.hpp"

using namespace hgp;

namespace {

Eigen::VectorXd nominal_dispatch(const GridCase& g) {
  // proportional to capacity, matching the net forecast load
  double net = 0.0, cap = 0.0;
  for (const Bus& b : g.buses) net += b.p_load - b.p_res;
  for (const Generator& gen : g.generators) cap += gen.p_max;
  Eigen::VectorXd p(g.n_gen());
  for (int k = 0; k < g.n_gen(); ++k) p[k] = net * g.generators[k].p_max / cap;
  return p;
}

}  // namespace

TEST_CASE("zero injections on a lossless network stay at the flat start") {
  nlohmann::json doc = test::two_bus_json(false);
  doc["buses"][1]["p_load"] = 0.0;
  const GridCase g = case_from_json(doc);
  const Injections inj = make_injections(g, forecast_point(g, Eigen::VectorXd::Zero(1)));
  const PfSolution sol = solve_acpf(g, inj);
  CHECK(sol.iterations <= 1);
  CHECK(sol.v.isApprox(Eigen::VectorXd::Ones(2)));
  CHECK(sol.theta.cwiseAbs().maxCoeff() == 0.0);
  const BranchFlows f = branch_flows(g, sol);
  CHECK(std::abs(f.p_from[0]) < 1e-14);
  CHECK(std::abs(f.q_from[0]) < 1e-14);
}

TEST_CASE("two-bus closed form with a voltage-controlled load bus") {
  const GridCase g = case_from_json(test::two_bus_json(true));
  const Injections inj = make_injections(g, forecast_point(g, Eigen::VectorXd::Zero(2)));
  const PfSolution sol = solve_acpf(g, inj, 1e-13);
  CHECK(sol.theta[0] == 0.0);
  CHECK(sol.theta[1] == doctest::Approx(-std::asin(0.05)).epsilon(1e-12));
  CHECK(sol.v[1] == doctest::Approx(1.0));
  // substituting back: p_2 = v_2 v_1 B_21 sin(theta_2 - theta_1) = -0.5
  CHECK(10.0 * std::sin(sol.theta[1]) == doctest::Approx(-0.5).epsilon(1e-10));
  const BranchFlows f = branch_flows(g, sol);
  CHECK(std::abs(f.p_from[0] - 0.5) < 1e-10);
  CHECK(std::abs(f.p_from[0] + f.p_to[0]) < 1e-10);
  CHECK(sol.p_slack == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("two-bus closed form with a PQ load bus") {
  // Q_2 = 0 gives v_2 = cos(theta_2) and P_2 = 10 v_2 sin(theta_2) = -0.5
  const GridCase g = case_from_json(test::two_bus_json(false));
  const Injections inj = make_injections(g, forecast_point(g, Eigen::VectorXd::Zero(1)));
  const PfSolution sol = solve_acpf(g, inj, 1e-13);
  const double theta = -0.5 * std::asin(0.1);
  CHECK(sol.theta[1] == doctest::Approx(theta).epsilon(1e-10));
  CHECK(sol.v[1] == doctest::Approx(std::cos(theta)).epsilon(1e-10));
}

TEST_CASE("case9 nominal solve passes the independent residual oracle") {
  const GridCase g = load_case(test::data_path("case9.json"));
  const Injections inj = make_injections(g, forecast_point(g, nominal_dispatch(g)));
  const PfSolution sol = solve_acpf(g, inj);
  CHECK(sol.max_mismatch <= kPfTolerance);
  CHECK(sol.theta[g.slack_bus()] == 0.0);

  // recompute every bus balance from the returned state
  Eigen::VectorXd p, q;
  bus_power(build_admittance(g), sol.v, sol.theta, p, q);
  Eigen::VectorXd p_gen = Eigen::VectorXd::Zero(g.n_bus());
  Eigen::VectorXd q_gen = Eigen::VectorXd::Zero(g.n_bus());
  for (int k = 0; k < g.n_gen(); ++k) {
    const int b = g.generators[k].bus;
    p_gen[b] += k == g.slack_generator() ? sol.p_slack : nominal_dispatch(g)[k];
    q_gen[b] += sol.q_g[k];
  }
  for (int i = 0; i < g.n_bus(); ++i) {
    const Bus& b = g.buses[i];
    CHECK(std::abs(p[i] - (p_gen[i] - b.p_load + b.p_res)) <= 1e-8);
    CHECK(std::abs(q[i] - (q_gen[i] - b.q_load + b.q_res)) <= 1e-8);
  }
  CHECK(max_bus_mismatch(g, inj, sol) <= 1e-8);
}

TEST_CASE("global balance: generation minus demand equals line losses") {
  const GridCase g = load_case(test::data_path("case9.json"));
  const Eigen::VectorXd pg = nominal_dispatch(g);
  const PfSolution sol = solve_acpf(g, make_injections(g, forecast_point(g, pg)));
  double gen = sol.p_slack, demand = 0.0;
  for (int k = 0; k < g.n_gen(); ++k) {
    if (k != g.slack_generator()) gen += pg[k];
  }
  for (const Bus& b : g.buses) demand += b.p_load - b.p_res;
  const BranchFlows f = branch_flows(g, sol);
  const double losses = (f.p_from + f.p_to).sum();
  CHECK(std::abs(gen - demand - losses) <= 10.0 * kPfTolerance);
}

TEST_CASE("lossless network: the two ends of every line cancel") {
  const GridCase base = load_case(test::data_path("case9.json"));
  nlohmann::json j = case_to_json(base);
  for (auto& ln : j["lines"]) {
    ln["r"] = 0.0;
    ln["b_shunt"] = 0.0;
  }
  const GridCase g = case_from_json(j);
  const PfSolution sol = solve_acpf(g, make_injections(g, forecast_point(g, nominal_dispatch(g))));
  const BranchFlows f = branch_flows(g, sol);
  CHECK((f.p_from + f.p_to).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("outputs have the schema layout and non-negative flows") {
  const GridCase g = load_case(test::data_path("case9.json"));
  const IoSchema s = io_schema(g);
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd pg = nominal_dispatch(g);
    for (int k = 0; k < g.n_gen(); ++k) pg[k] *= rng.uniform(0.7, 1.3);
    const PfSolution sol = solve_acpf(g, make_injections(g, forecast_point(g, pg)));
    const Eigen::VectorXd y = evaluate_outputs(g, s, sol);
    REQUIRE(y.size() == 15);
    CHECK((y.tail(s.n_s()).array() >= 0.0).all());
    for (int k = 0; k < s.n_v(); ++k) CHECK(y[k] == sol.v[s.v_buses[static_cast<std::size_t>(k)]]);
    for (int k = 0; k < s.n_q(); ++k) CHECK(y[s.n_v() + k] == sol.q_g[s.q_gens[static_cast<std::size_t>(k)]]);
  }
}

TEST_CASE("flat lossless state gives unit voltages in the output block") {
  nlohmann::json doc = test::two_bus_json(false);
  doc["buses"][1]["p_load"] = 0.0;
  const GridCase g = case_from_json(doc);
  const IoSchema s = io_schema(g);
  const PfSolution sol = solve_acpf(g, make_injections(g, forecast_point(g, Eigen::VectorXd::Zero(1))));
  const Eigen::VectorXd y = evaluate_outputs(g, s, sol);
  CHECK(y.head(s.n_v()).isApprox(Eigen::VectorXd::Ones(s.n_v())));
}

TEST_CASE("apparent power is the larger end") {
  const GridCase g = load_case(test::data_path("case9.json"));
  const PfSolution sol = solve_acpf(g, make_injections(g, forecast_point(g, nominal_dispatch(g))));
  const BranchFlows f = branch_flows(g, sol);
  for (int l = 0; l < g.n_line(); ++l) {
    const double a = std::hypot(f.p_from[l], f.q_from[l]);
    const double b = std::hypot(f.p_to[l], f.q_to[l]);
    CHECK(f.s[l] == doctest::Approx(std::max(a, b)));
  }
}

TEST_CASE("identical inputs reproduce the iteration trajectory bit for bit") {
  const GridCase g = load_case(test::data_path("case39.json"));
  const Injections inj = make_injections(g, forecast_point(g, nominal_dispatch(g)));
  const PfSolution a = solve_acpf(g, inj);
  const PfSolution b = solve_acpf(g, inj);
  CHECK(a.iterations == b.iterations);
  CHECK(a.v == b.v);
  CHECK(a.theta == b.theta);
  CHECK(a.max_mismatch == b.max_mismatch);
}

TEST_CASE("non-convergence reports the final mismatch") {
  const GridCase g = load_case(test::data_path("case9.json"));
  OperatingPoint op = forecast_point(g, nominal_dispatch(g));
  op.p_load *= 40.0;  // far beyond the network's transfer capability
  const Injections inj = make_injections(g, op);
  try {
    solve_acpf(g, inj);
    FAIL("expected a power-flow failure");
  } catch (const PowerFlowError& e) {
    CHECK(e.mismatch > kPfTolerance);
    CHECK(e.iteration >= 0);
  }
  CHECK_THROWS_AS(solve_acpf(g, inj, -1.0), InputError);
}

TEST_CASE("operating point from an input vector") {
  const GridCase g = load_case(test::data_path("case9.json"));
  const IoSchema s = io_schema(g);
  Eigen::VectorXd pg(s.n_pg());
  pg << 1.0, 0.8;
  const Eigen::VectorXd x = forecast_inputs(g, s, pg);
  const OperatingPoint op = operating_point(g, s, x);
  for (int k = 0; k < s.n_pl(); ++k) {
    const int b = s.load_buses[static_cast<std::size_t>(k)];
    CHECK(op.p_load[b] == doctest::Approx(g.buses[b].p_load));
    CHECK(op.q_load[b] == doctest::Approx(g.buses[b].q_load));
  }
  CHECK_THROWS_AS(operating_point(g, s, Eigen::VectorXd::Zero(3)), InputError);
}
