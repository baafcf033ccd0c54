#include <cmath>
#include <vector>

#include "doctest.h"
#include "hgp/errors.hpp"
#include "hgp/gp.hpp"
#include "hgp/model.hpp"
#include "hgp/rng.hpp"
#include "hgp/uncertainty.hpp"
#include "test_support.hpp"

using namespace hgp;

namespace {

Eigen::VectorXd random_simplex(Rng& rng, int n) {
  Eigen::VectorXd a(n);
  for (int i = 0; i < n; ++i) a[i] = -std::log(1.0 - rng.uniform());
  return a / a.sum();
}

/// Hybrid model with an affine part on outputs 1.. and a GP on every output.
HybridModel synthetic_model(Rng& rng, int n_x, int n_y, int n_v, bool zero_weights = false) {
  HybridModel m;
  m.schema.n_x = n_x;
  m.schema.n_y = n_y;
  m.mode = ModelMode::hybrid;
  LinearSurrogate sur;
  sur.n_v = n_v;
  sur.A.resize(n_y - n_v, n_x);
  for (int i = 0; i < sur.A.rows(); ++i)
    for (int j = 0; j < n_x; ++j) sur.A(i, j) = rng.normal();
  sur.b = Eigen::VectorXd::Constant(n_y - n_v, 0.3);
  m.surrogate = sur;
  Eigen::MatrixXd X(20, n_x), R(20, n_y);
  for (int i = 0; i < 20; ++i) {
    for (int j = 0; j < n_x; ++j) X(i, j) = rng.normal();
    for (int a = 0; a < n_y; ++a) R(i, a) = zero_weights ? 0.0 : 0.2 * rng.normal();
  }
  Hyperparams hp;
  hp.lengthscales = Eigen::VectorXd::Constant(n_x, 1.2);
  hp.signal_var = 0.05;
  hp.noise_var = 1e-3;
  m.gp = make_gp(X, R, std::vector<Hyperparams>(static_cast<std::size_t>(n_y), hp));
  return m;
}

}  // namespace

TEST_CASE("input covariance blocks") {
  CHECK(build_input_cov(Eigen::Vector2d(0.4, 0.6), Eigen::VectorXd::Zero(3), 2).isZero(0.0));

  // one generator, one load: Sigma_g = sigma^2 and |Sigma_gd| = sigma^2
  const Eigen::MatrixXd one = build_input_cov(Eigen::VectorXd::Ones(1), Eigen::VectorXd::Constant(1, 0.04), 1);
  REQUIRE(one.rows() == 2);
  CHECK(one(0, 0) == doctest::Approx(0.04));
  CHECK(std::abs(one(0, 1)) == doctest::Approx(0.04));
  CHECK(one(1, 1) == doctest::Approx(0.04));

  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const int n_g = 1 + static_cast<int>(rng.below(4));
    const int n_l = 1 + static_cast<int>(rng.below(4));
    const int n_r = static_cast<int>(rng.below(4));
    const Eigen::VectorXd alpha = random_simplex(rng, n_g);
    Eigen::VectorXd var(n_l + n_r);
    for (int i = 0; i < var.size(); ++i) var[i] = rng.uniform(0.0, 0.1);
    const Eigen::MatrixXd S = build_input_cov(alpha, var, n_l);
    REQUIRE(S.rows() == n_g + n_l + n_r);
    CHECK((S - S.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((S.diagonal().array() >= 0.0).all());
    const Eigen::VectorXd eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(S).eigenvalues();
    CHECK(eig.minCoeff() >= -1e-10);
    // rank at most n_d: the generator block is a linear function of the demand deviations
    CHECK((eig.array() > 1e-10).count() <= n_l + n_r);

    const double tr = var.sum();
    for (int i = 0; i < n_g; ++i) {
      for (int j = 0; j < n_g; ++j) CHECK(S(i, j) == doctest::Approx(alpha[i] * alpha[j] * tr));
      for (int j = 0; j < n_l + n_r; ++j) {
        const double sign = j < n_l ? 1.0 : -1.0;
        CHECK(S(i, n_g + j) == doctest::Approx(sign * alpha[i] * var[j]));
      }
    }
    CHECK(S.bottomRightCorner(n_l + n_r, n_l + n_r).isApprox(Eigen::MatrixXd(var.asDiagonal())));
  }

  CHECK_THROWS_AS(build_input_cov(Eigen::Vector2d(0.7, 0.7), Eigen::VectorXd::Ones(2), 1), InputError);
  CHECK_THROWS_AS(build_input_cov(Eigen::Vector2d(1.2, -0.2), Eigen::VectorXd::Ones(2), 1), InputError);
  CHECK_THROWS_AS(build_input_cov(Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d(0.1, -0.1), 1), InputError);
}

TEST_CASE("input covariance on a case layout drops the slack unit") {
  IoSchema s;
  s.gen_inputs = {1, 2};
  s.load_buses = {4, 6};
  s.res_buses = {4};
  const Eigen::Vector3d alpha(0.2, 0.3, 0.5);
  const Eigen::Vector3d var(0.01, 0.02, 0.03);
  const Eigen::MatrixXd S = build_input_cov(s, alpha, var);
  const Eigen::MatrixXd full = build_input_cov(alpha, var, 2);
  CHECK(S == full.bottomRightCorner(5, 5));
}

TEST_CASE("deterministic input reduces to the hybrid prediction") {
  Rng rng(2);
  const HybridModel m = synthetic_model(rng, 3, 4, 1);
  GaussianVector in{Eigen::Vector3d(0.1, -0.2, 0.3), Eigen::MatrixXd::Zero(3, 3)};
  const OutputMoments out = ta1_propagate(m, in);
  const PosteriorMoments pm = predict_model(m, in.mean);
  CHECK((out.mu_y - pm.mean).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK((out.var_y - pm.var).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("zero GP weights leave the linear and posterior variance terms") {
  Rng rng(3);
  const HybridModel m = synthetic_model(rng, 3, 4, 1, true);
  Eigen::MatrixXd L(3, 3);
  L << 0.3, 0, 0, 0.1, 0.2, 0, -0.1, 0.05, 0.25;
  const GaussianVector in{Eigen::Vector3d(0.1, 0.2, -0.1), L * L.transpose()};
  const OutputMoments out = ta1_propagate(m, in);
  const Eigen::VectorXd lin = propagate_linear_cov(*m.surrogate, in.cov);
  const PosteriorMoments gp = predict(m.view(), in.mean);
  CHECK((out.var_y - (lin + gp.var)).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("variance dominates the GP variance and grows with the input covariance") {
  Rng rng(4);
  const HybridModel m = synthetic_model(rng, 3, 5, 2);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::MatrixXd L(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) L(i, j) = 0.2 * rng.normal();
    const GaussianVector in{Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()), L * L.transpose()};
    const OutputMoments base = ta1_propagate(m, in);
    const PosteriorMoments gp = predict(m.view(), in.mean);
    CHECK((base.var_y.array() >= gp.var.array() - 1e-15).all());
    for (double c : {1.0, 1.5, 4.0}) {
      const OutputMoments scaled = ta1_propagate(m, GaussianVector{in.mean, c * in.cov});
      CHECK((scaled.var_y.array() >= base.var_y.array() - 1e-15).all());
      CHECK((scaled.mu_y - base.mu_y).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("first-order propagation of a learned sine matches sampling") {
  test::QuietLog quiet;
  const int n = 40;
  Eigen::MatrixXd X(n, 1), R(n, 1);
  for (int i = 0; i < n; ++i) {
    X(i, 0) = -2.0 + 4.0 * i / (n - 1);
    R(i, 0) = std::sin(X(i, 0));
  }
  HybridModel m;
  m.schema.n_x = 1;
  m.schema.n_y = 1;
  m.mode = ModelMode::full;
  m.gp = train_gp(X, R);
  const GaussianVector in{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 0.01)};
  const OutputMoments out = ta1_propagate(m, in);

  Rng rng(5);
  const int draws = 1000000;
  double sum = 0.0, sq = 0.0;
  Eigen::VectorXd x(1);
  for (int k = 0; k < draws; ++k) {
    x[0] = 0.1 * rng.normal();
    const double mu = predict(m.view(), x).mean[0];
    sum += mu;
    sq += mu * mu;
  }
  const double mc = sq / draws - (sum / draws) * (sum / draws);
  CHECK(std::abs(out.var_y[0] - mc) <= 0.15 * mc);
}

TEST_CASE("normal quantile accuracy") {
  CHECK(normal_quantile(0.5) == 0.0);
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959964).epsilon(1e-6));
  CHECK(normal_quantile(0.999) == doctest::Approx(3.090232).epsilon(1e-6));
  Rng rng(6);
  for (int k = 0; k < 2000; ++k) {
    const double p = k < 1000 ? rng.uniform(1e-12, 1.0 - 1e-12) : std::pow(10.0, -rng.uniform(0.5, 12.0));
    const double t = normal_quantile(p);
    CHECK(std::abs(normal_cdf(t) - p) <= 1e-9);
    // 1 - p rounds; compare against the exactly representable complement
    const double q = 1.0 - p;
    CHECK(std::abs(normal_quantile(1.0 - q) + normal_quantile(q)) <= 1e-12 * std::max(1.0, std::abs(t)));
  }
  CHECK_THROWS_AS(normal_quantile(0.0), InputError);
  CHECK_THROWS_AS(normal_quantile(1.0), InputError);
  CHECK_THROWS_AS(normal_quantile(-0.2), InputError);
}

TEST_CASE("analytic margins") {
  const Eigen::Vector3d var(0.0004, 0.0, 0.01);
  const Eigen::Vector2d alpha(0.25, 0.75);
  const Eigen::Vector3d sd(0.01, 0.02, 0.06);
  const Margins m = compute_margins(var, alpha, sd, 0.025, 0.001);
  CHECK(m.lambda_y[0] == doctest::Approx(0.0392).epsilon(1e-4));
  CHECK(m.lambda_y[1] == 0.0);
  CHECK(m.lambda_pg[1] == doctest::Approx(normal_quantile(0.999) * 0.75 * std::sqrt(0.09)));

  const Margins half = compute_margins(var, alpha, sd, 0.5, 0.5);
  CHECK(half.lambda_y.isZero(0.0));
  CHECK(half.lambda_pg.isZero(0.0));
  const Margins none = compute_margins(Eigen::VectorXd::Zero(3), alpha, Eigen::VectorXd::Zero(3), 0.05, 0.05);
  CHECK(none.lambda_y.isZero(0.0));
  CHECK(none.lambda_pg.isZero(0.0));

  // linear in tau
  const Margins a = compute_margins(var, alpha, sd, 0.1, 0.2);
  const Margins b = compute_margins(var, alpha, sd, 0.01, 0.05);
  for (int i = 0; i < 3; ++i) {
    if (a.lambda_y[i] > 0.0) CHECK(a.lambda_y[i] / b.lambda_y[i] == doctest::Approx(a.tau_y / b.tau_y));
  }
  for (int k = 0; k < 2; ++k) CHECK(a.lambda_pg[k] / b.lambda_pg[k] == doctest::Approx(a.tau_pg / b.tau_pg));
  CHECK((a.lambda_y.array() >= 0.0).all());
  CHECK_THROWS_AS(compute_margins(var, alpha, sd, 0.6, 0.1), InputError);
  CHECK_THROWS_AS(compute_margins(var, alpha, sd, 0.1, 0.0), InputError);
}

TEST_CASE("empirical margins") {
  Rng rng(7);
  const int n = 100000;
  Eigen::MatrixXd S(n, 3);
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    S.row(i) << z, 2.0, (i % 2 == 0 ? 1.0 : -1.0) * std::abs(rng.normal());
  }
  const EmpiricalMargins m = empirical_margins(S, Eigen::Vector3d(0.0, 2.0, 0.0), 0.00135);
  CHECK(m.upper[0] == doctest::Approx(3.0).epsilon(0.1));
  CHECK(m.lower[0] == doctest::Approx(3.0).epsilon(0.1));
  CHECK(m.upper[1] == 0.0);
  CHECK(m.lower[1] == 0.0);
  CHECK(std::abs(m.upper[2] - m.lower[2]) <= 3.0 / std::sqrt(static_cast<double>(n)) * 10.0);

  CHECK(sample_quantile({1.0, 2.0, 3.0, 4.0}, 0.5) == doctest::Approx(2.5));
  CHECK(sample_quantile({5.0}, 0.9) == 5.0);
  CHECK_THROWS_AS(sample_quantile({}, 0.5), InputError);
  CHECK_THROWS_AS(empirical_margins(S, Eigen::Vector2d::Zero(), 0.1), InputError);
}
