#include <cmath>

#include "doctest.h"
#include "hgp/acpf.hpp"
#include "hgp/ccopf.hpp"
#include "hgp/dataset.hpp"
#include "hgp/model.hpp"
#include "hgp/rng.hpp"
#include "hgp/validate.hpp"
#include "test_support.hpp"

using namespace hgp;

namespace {

const GridCase& case9() {
  static const GridCase g = load_case(test::data_path("case9.json"));
  return g;
}

/// Hybrid model trained once on a small case9 sample.
const HybridModel& case9_model() {
  static const HybridModel m = [] {
    test::QuietLog quiet;
    const UncertaintySpec spec;
    const Dataset d = generate_dataset(case9(), sample_inputs(case9(), spec, 75, train_seed(1)));
    TrainConfig cfg;
    cfg.restarts = 1;
    cfg.seed = 1;
    return train_model(d, cfg);
  }();
  return m;
}

/// Interior decision vector: p_g strictly inside the limits, alpha strictly positive on the simplex.
Eigen::VectorXd random_interior(Rng& rng, const GridCase& g) {
  const int ng = g.n_gen();
  Eigen::VectorXd u(2 * ng);
  double sum = 0.0;
  for (int k = 0; k < ng; ++k) {
    const Generator& gen = g.generators[static_cast<std::size_t>(k)];
    u[k] = gen.p_min + rng.uniform(0.2, 0.8) * (gen.p_max - gen.p_min);
    u[ng + k] = rng.uniform(0.2, 1.0);
    sum += u[ng + k];
  }
  u.tail(ng) /= sum;
  return u;
}

}  // namespace

TEST_CASE("expected cost examples and gradient") {
  CostCoeffs c;
  c.c2 = Eigen::VectorXd::Ones(1);
  c.c1 = Eigen::VectorXd::Zero(1);
  c.c0 = Eigen::VectorXd::Zero(1);
  const CostValue v = expected_cost(Eigen::VectorXd::Constant(1, 2.0), Eigen::VectorXd::Ones(1),
                                    Eigen::Vector2d(0.1, 0.15), c);
  CHECK(v.value == doctest::Approx(4.25).epsilon(1e-14));

  Rng rng(1);
  CostCoeffs r;
  r.c2 = Eigen::Vector3d(0.11, 0.085, 0.1225);
  r.c1 = Eigen::Vector3d(5.0, 1.2, 1.0);
  r.c0 = Eigen::Vector3d(150.0, 600.0, 335.0);
  const Eigen::Vector3d p(0.9, 1.3, 0.8), a(0.2, 0.5, 0.3);
  const CostValue det = expected_cost(p, a, Eigen::VectorXd::Zero(4), r);
  double ref = 0.0;
  for (int k = 0; k < 3; ++k) ref += r.c2[k] * p[k] * p[k] + r.c1[k] * p[k] + r.c0[k];
  CHECK(det.value == doctest::Approx(ref).epsilon(1e-14));

  const Eigen::Vector4d sd(0.01, 0.02, 0.005, 0.03);
  const CostValue cv = expected_cost(p, a, sd, r);
  auto fp = [&](const Eigen::VectorXd& x) { return expected_cost(x, a, sd, r).value; };
  auto fa = [&](const Eigen::VectorXd& x) { return expected_cost(p, x, sd, r).value; };
  CHECK((cv.grad_p - test::fd_gradient(fp, p, 1e-3)).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK((cv.grad_alpha - test::fd_gradient(fa, a, 1e-3)).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK_THROWS_AS(expected_cost(p, a, sd, CostCoeffs{Eigen::VectorXd::Ones(2), r.c1, r.c0}), InputError);
}

TEST_CASE("case9 program layout") {
  const GridCase& g = case9();
  const HybridModel& m = case9_model();
  const NlpProblem p = assemble_nlp(g, m, UncertaintySpec{}, 0.025, 0.001);
  CHECK(p.n == 6);
  CHECK(p.m_eq == 2);
  CHECK(p.m_in == 2 * 15 + 3 * 3);
  CHECK(chance_constraint_count(g, m.schema) == 2 * 15 + 2 * 3);
}

TEST_CASE("program derivatives match finite differences") {
  const GridCase& g = case9();
  const HybridModel& m = case9_model();
  const NlpProblem p = assemble_nlp(g, m, UncertaintySpec{}, 0.025, 0.001);
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::VectorXd u = random_interior(rng, g);
    Eigen::VectorXd grad;
    const double f = p.objective(u, &grad);
    CHECK(std::isfinite(f));
    auto obj = [&](const Eigen::VectorXd& x) { return p.objective(x, nullptr); };
    CHECK(test::rel_error(grad, test::fd_gradient(obj, u, 1e-4)) <= 1e-6);

    for (const auto* fn : {&p.equalities, &p.inequalities}) {
      Eigen::VectorXd c;
      Eigen::MatrixXd J;
      (*fn)(u, c, &J);
      CHECK(c.allFinite());
      auto val = [&](const Eigen::VectorXd& x) {
        Eigen::VectorXd cx;
        (*fn)(x, cx, nullptr);
        return cx;
      };
      // the GP variance carries rounding noise near 1e-11, so a larger step is
      // needed for the truncation error to dominate
      CHECK(test::rel_error(J, test::fd_jacobian(val, u, 1e-4)) <= 1e-6);
    }
  }
}

TEST_CASE("quantile factors of one half remove every margin") {
  const GridCase& g = case9();
  const HybridModel& m = case9_model();
  const NlpProblem half = assemble_nlp(g, m, UncertaintySpec{}, 0.5, 0.5);
  const NlpProblem none = assemble_nlp(g, m, UncertaintySpec{}, 0.025, 0.001, 0.0);
  const NlpProblem full = assemble_nlp(g, m, UncertaintySpec{}, 0.025, 0.001);
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::VectorXd u = random_interior(rng, g);
    Eigen::VectorXd a, b, c;
    half.inequalities(u, a, nullptr);
    none.inequalities(u, b, nullptr);
    full.inequalities(u, c, nullptr);
    CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-14);
    // margins only ever shrink the slack
    CHECK((c.array() <= b.array() + 1e-14).all());
  }
}

TEST_CASE("forecast demand beyond the tightened capacity is rejected") {
  GridCase g = case9();
  for (Bus& b : g.buses) b.p_load *= 5.0;
  CHECK_THROWS_AS(assemble_nlp(g, case9_model(), UncertaintySpec{}, 0.025, 0.001), InfeasibleError);
}

TEST_CASE("case9 chance-constrained dispatch") {
  test::QuietLog quiet;
  const GridCase& g = case9();
  const HybridModel& m = case9_model();
  const UncertaintySpec spec;
  double prev_cost = 0.0;
  for (double eps : {0.5, 0.1, 0.025}) {
    CcopfSettings s;
    s.eps_y = eps;
    const DispatchSolution sol = solve_ccopf(g, m, spec, s);
    REQUIRE(sol.status == SolveStatus::optimal);
    CHECK(sol.kkt_residual <= s.tol);
    CHECK(std::abs(sol.alpha.sum() - 1.0) <= 1e-8);
    CHECK(sol.alpha.minCoeff() >= -1e-10);
    CHECK(sol.p_g.size() == 3);
    // more reliability never gets cheaper
    CHECK(sol.cost >= prev_cost - 1e-6 * std::abs(prev_cost));
    prev_cost = sol.cost;

    // independent re-evaluation of the tightened constraints at the returned point
    const NlpProblem p = assemble_nlp(g, m, spec, s.eps_y, s.eps_pg);
    Eigen::VectorXd u(6);
    u << sol.p_g / g.base_mva, sol.alpha;
    Eigen::VectorXd ce, ci;
    p.equalities(u, ce, nullptr);
    p.inequalities(u, ci, nullptr);
    CHECK(ce.cwiseAbs().maxCoeff() <= s.tol);
    CHECK(ci.minCoeff() >= -s.tol);

    // moments are recomputed at the solution
    DispatchSolution again = sol;
    evaluate_dispatch(g, m, spec, s.eps_y, s.eps_pg, again);
    CHECK((again.moments.var_y - sol.moments.var_y).cwiseAbs().maxCoeff() == 0.0);
    CHECK(again.cost == sol.cost);
    if (eps == 0.5) CHECK(sol.margins.lambda_y.isZero(0.0));
  }
}

TEST_CASE("dispatch is deterministic and survives a JSON round trip") {
  test::QuietLog quiet;
  const DispatchSolution a = solve_ccopf(case9(), case9_model(), UncertaintySpec{});
  const DispatchSolution b = solve_ccopf(case9(), case9_model(), UncertaintySpec{});
  CHECK(a.p_g == b.p_g);
  CHECK(a.alpha == b.alpha);
  CHECK(a.iterations == b.iterations);

  const DispatchSolution back = dispatch_from_json(to_json(a, case9_model().schema));
  CHECK(back.p_g == a.p_g);
  CHECK(back.alpha == a.alpha);
  CHECK(back.cost == a.cost);
  CHECK(back.status == a.status);
  CHECK_THROWS_AS(dispatch_from_json(nlohmann::json{{"p_g", {1.0}}}), InputError);
}

TEST_CASE("deterministic AC-OPF on case9") {
  test::QuietLog quiet;
  const AcopfSolution s = solve_det_acopf(case9());
  REQUIRE(s.status == SolveStatus::optimal);
  CHECK(s.kkt_residual <= 1e-5);
  CHECK(std::abs(s.cost - 3470.0) <= 0.05 * 3470.0);
  // the dispatch is an AC power flow solution within limits
  const GridCase& g = case9();
  for (int k = 0; k < g.n_gen(); ++k) {
    const Generator& gen = g.generators[static_cast<std::size_t>(k)];
    CHECK(s.p_g[k] >= gen.p_min - 1e-6);
    CHECK(s.p_g[k] <= gen.p_max + 1e-6);
    CHECK(s.q_g[k] >= gen.q_min - 1e-6);
    CHECK(s.q_g[k] <= gen.q_max + 1e-6);
  }
  for (int i = 0; i < g.n_bus(); ++i) {
    CHECK(s.v[i] >= g.buses[static_cast<std::size_t>(i)].v_min - 1e-6);
    CHECK(s.v[i] <= g.buses[static_cast<std::size_t>(i)].v_max + 1e-6);
  }
  Eigen::VectorXd p(g.n_gen());
  for (int k = 0; k < g.n_gen(); ++k) p[k] = g.generator_cost(k, s.p_g[k]);
  CHECK(p.sum() == doctest::Approx(s.cost).epsilon(1e-9));
}

TEST_CASE("single generator with open limits serves load plus losses") {
  nlohmann::json j = test::two_bus_json(false);
  j["lines"][0]["r"] = 0.02;
  const GridCase g = case_from_json(j);
  const AcopfSolution s = solve_det_acopf(g, 1e-9, 300);
  REQUIRE(s.status == SolveStatus::optimal);
  // the power flow at the optimal voltages gives the same slack injection
  OperatingPoint op = forecast_point(g, s.p_g);
  Injections inj = make_injections(g, op);
  inj.v_set = s.v;
  const PfSolution pf = solve_acpf(g, inj, 1e-12);
  CHECK(s.p_g[0] == doctest::Approx(pf.p_slack).epsilon(1e-6));
  CHECK(s.p_g[0] > 0.5);
}

TEST_CASE("AC-OPF constraint Jacobians match finite differences") {
  const GridCase& g = case9();
  const NlpProblem p = acopf_nlp(g, forecast_point(g, Eigen::VectorXd::Zero(g.n_gen())));
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd x = p.x0;
    for (int i = 0; i < x.size(); ++i) x[i] += 0.05 * rng.normal();
    for (const auto* fn : {&p.equalities, &p.inequalities}) {
      Eigen::VectorXd c;
      Eigen::MatrixXd J;
      (*fn)(x, c, &J);
      auto val = [&](const Eigen::VectorXd& z) {
        Eigen::VectorXd cz;
        (*fn)(z, cz, nullptr);
        return cz;
      };
      CHECK(test::rel_error(J, test::fd_jacobian(val, x, 1e-6)) <= 1e-6);
    }
  }
}
