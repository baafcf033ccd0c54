#include <numeric>
#include <vector>

#include "doctest.h"
#include "hgp/errors.hpp"
#include "hgp/linmodel.hpp"
#include "hgp/rng.hpp"
#include "test_support.hpp"

using namespace hgp;

namespace {

Eigen::MatrixXd random_matrix(Rng& rng, int r, int c) {
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

Eigen::MatrixXd random_psd(Rng& rng, int n) {
  const Eigen::MatrixXd a = random_matrix(rng, n, n);
  return a * a.transpose() / n;
}

LinearSurrogate make_sur(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, int n_v) {
  LinearSurrogate s;
  s.n_v = n_v;
  s.A = A;
  s.b = b;
  return s;
}

}  // namespace

TEST_CASE("noiseless affine data is recovered exactly") {
  Rng rng(11);
  const int n = 40, n_x = 5, n_v = 2, n_o = 4;
  const Eigen::MatrixXd A0 = random_matrix(rng, n_o, n_x);
  const Eigen::VectorXd b0 = random_matrix(rng, n_o, 1);
  const Eigen::MatrixXd X = random_matrix(rng, n, n_x);
  Eigen::MatrixXd Y(n, n_v + n_o);
  Y.leftCols(n_v).setConstant(0.97);
  Y.rightCols(n_o) = (X * A0.transpose()).rowwise() + b0.transpose();
  const LinearSurrogate s = fit_linear(X, Y, n_v);
  CHECK((s.A - A0).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((s.b - b0).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(s.v_dc == 1.0);
  CHECK(s.n_y() == n_v + n_o);
}

TEST_CASE("a single sample gives A = 0 and b = y") {
  Eigen::MatrixXd X(1, 3);
  X << 0.3, -1.0, 2.0;
  Eigen::MatrixXd Y(1, 3);
  Y << 1.02, 0.4, -0.7;
  const LinearSurrogate s = fit_linear(X, Y, 1);
  CHECK(s.A.isZero(0.0));
  CHECK(s.b[0] == doctest::Approx(0.4));
  CHECK(s.b[1] == doctest::Approx(-0.7));
}

TEST_CASE("zero-variance input column warns and gets a zero coefficient") {
  Rng rng(3);
  Eigen::MatrixXd X = random_matrix(rng, 20, 3);
  X.col(1).setConstant(0.5);
  const Eigen::MatrixXd Y = random_matrix(rng, 20, 2);
  std::vector<std::string> warnings;
  const LogSink prev = set_log_sink([&](LogLevel l, const std::string& m) {
    if (l == LogLevel::warning) warnings.push_back(m);
  });
  const LinearSurrogate s = fit_linear(X, Y, 0);
  set_log_sink(prev);
  CHECK(s.A.col(1).isZero(0.0));
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("column 1") != std::string::npos);
}

TEST_CASE("bad fit inputs") {
  CHECK_THROWS_AS(fit_linear(Eigen::MatrixXd(0, 2), Eigen::MatrixXd(0, 2), 0), InputError);
  CHECK_THROWS_AS(fit_linear(Eigen::MatrixXd::Zero(3, 2), Eigen::MatrixXd::Zero(4, 2), 0), InputError);
  CHECK_THROWS_AS(fit_linear(Eigen::MatrixXd::Zero(3, 2), Eigen::MatrixXd::Zero(3, 2), 3), InputError);
}

TEST_CASE("fitting never does worse than the mean map on the training set") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::MatrixXd X = random_matrix(rng, 15 + trial, 4);
    Eigen::MatrixXd Y = random_matrix(rng, 15 + trial, 5);
    Y.col(2).array() += X.col(0).array().square();
    const LinearSurrogate s = fit_linear(X, Y, 1);
    const Eigen::MatrixXd T = Y.rightCols(4);
    const Eigen::MatrixXd fit = predict_linear(s, X).rightCols(4);
    const Eigen::MatrixXd mean_map = T.rowwise() - T.colwise().mean();
    CHECK((T - fit).squaredNorm() <= mean_map.squaredNorm() + 1e-12);
  }
}

TEST_CASE("prediction layout") {
  const LinearSurrogate zero = make_sur(Eigen::MatrixXd::Zero(3, 2), Eigen::VectorXd::Zero(3), 2);
  Eigen::VectorXd expect(5);
  expect << 1, 1, 0, 0, 0;
  CHECK(predict_linear(zero, Eigen::VectorXd(Eigen::VectorXd::Constant(2, 4.0))) == expect);

  Rng rng(9);
  const Eigen::MatrixXd A = random_matrix(rng, 3, 4);
  const Eigen::VectorXd b = random_matrix(rng, 3, 1);
  const LinearSurrogate s = make_sur(A, b, 1);
  CHECK(predict_linear(s, Eigen::VectorXd(Eigen::VectorXd::Zero(4))).tail(3) == b);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::VectorXd x = random_matrix(rng, 4, 1);
    const Eigen::VectorXd z = predict_linear(s, x);
    for (int r = 0; r < 3; ++r) {
      double acc = b[r];
      for (int c = 0; c < 4; ++c) acc += A(r, c) * x[c];
      CHECK(z[1 + r] == doctest::Approx(acc).epsilon(1e-14));
    }
    // batch and single-row paths agree
    const Eigen::MatrixXd Z = predict_linear(s, Eigen::MatrixXd(x.transpose()));
    CHECK((Z.row(0).transpose() - z).cwiseAbs().maxCoeff() < 1e-14);
  }
  CHECK_THROWS_AS(predict_linear(s, Eigen::VectorXd(Eigen::VectorXd::Zero(3))), InputError);
  CHECK_THROWS_AS(predict_linear(s, Eigen::MatrixXd(Eigen::MatrixXd::Zero(2, 5))), InputError);
}

TEST_CASE("covariance propagation examples") {
  Rng rng(4);
  const LinearSurrogate s = make_sur(random_matrix(rng, 3, 4), Eigen::VectorXd::Zero(3), 2);
  CHECK(propagate_linear_cov(s, Eigen::MatrixXd::Zero(4, 4)).isZero(0.0));

  // row selector picks the selected variances
  Eigen::MatrixXd sel = Eigen::MatrixXd::Zero(2, 3);
  sel(0, 2) = 1.0;
  sel(1, 0) = 1.0;
  const LinearSurrogate ss = make_sur(sel, Eigen::VectorXd::Zero(2), 1);
  const Eigen::Vector3d var(0.1, 0.2, 0.3);
  const Eigen::VectorXd out = propagate_linear_cov(ss, var.asDiagonal().toDenseMatrix());
  CHECK(out[0] == 0.0);
  CHECK(out[1] == doctest::Approx(0.3));
  CHECK(out[2] == doctest::Approx(0.1));
}

TEST_CASE("covariance propagation matches a sampling oracle") {
  Rng rng(21);
  const int n_x = 4;
  const LinearSurrogate s = make_sur(random_matrix(rng, 3, n_x), random_matrix(rng, 3, 1), 1);
  const Eigen::MatrixXd sigma = random_psd(rng, n_x);
  const Eigen::MatrixXd L = sigma.llt().matrixL();
  const int draws = 1000000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(3), sq = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd w(n_x);
  for (int k = 0; k < draws; ++k) {
    for (int i = 0; i < n_x; ++i) w[i] = rng.normal();
    const Eigen::VectorXd z = s.A * (L * w);
    sum += z;
    sq += z.cwiseProduct(z);
  }
  const Eigen::VectorXd mc = sq / draws - (sum / draws).cwiseProduct(sum / draws);
  const Eigen::VectorXd analytic = propagate_linear_cov(s, sigma);
  CHECK(analytic[0] == 0.0);
  for (int r = 0; r < 3; ++r) CHECK(std::abs(mc[r] - analytic[1 + r]) <= 0.01 * analytic[1 + r]);
}

TEST_CASE("propagation is invariant to a consistent permutation") {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const LinearSurrogate s = make_sur(random_matrix(rng, 4, 5), Eigen::VectorXd::Zero(4), 3);
    const Eigen::MatrixXd sigma = random_psd(rng, 5);
    std::vector<int> perm(5);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = 4; i > 0; --i) std::swap(perm[static_cast<std::size_t>(i)], perm[rng.below(static_cast<std::uint64_t>(i + 1))]);
    Eigen::PermutationMatrix<Eigen::Dynamic> P(5);
    for (int i = 0; i < 5; ++i) P.indices()[i] = perm[static_cast<std::size_t>(i)];
    const LinearSurrogate sp = make_sur(s.A * P.transpose(), s.b, 3);
    const Eigen::MatrixXd sigma_p = P * sigma * P.transpose();
    const Eigen::VectorXd a = propagate_linear_cov(s, sigma);
    const Eigen::VectorXd b = propagate_linear_cov(sp, sigma_p);
    CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, a.cwiseAbs().maxCoeff()));
    CHECK(a.head(3).isZero(0.0));
    CHECK((a.array() >= 0.0).all());
  }
}

TEST_CASE("asymmetric covariance handling") {
  Rng rng(2);
  const LinearSurrogate s = make_sur(random_matrix(rng, 2, 3), Eigen::VectorXd::Zero(2), 0);
  Eigen::MatrixXd sigma = random_psd(rng, 3);
  const Eigen::VectorXd ref = propagate_linear_cov(s, sigma);

  int warnings = 0;
  const LogSink prev = set_log_sink([&](LogLevel l, const std::string&) { warnings += l == LogLevel::warning; });
  Eigen::MatrixXd tiny = sigma;
  tiny(0, 1) += 5e-11;
  const Eigen::VectorXd sym = propagate_linear_cov(s, tiny);
  set_log_sink(prev);
  CHECK(warnings == 1);
  CHECK((sym - ref).cwiseAbs().maxCoeff() < 1e-9);

  Eigen::MatrixXd big = sigma;
  big(0, 1) += 1e-6;
  CHECK_THROWS_AS(propagate_linear_cov(s, big), InputError);
  CHECK_THROWS_AS(propagate_linear_cov(s, Eigen::MatrixXd::Zero(2, 2)), InputError);
}

TEST_CASE("json round trip") {
  Rng rng(6);
  const LinearSurrogate s = make_sur(random_matrix(rng, 3, 2), random_matrix(rng, 3, 1), 4);
  const LinearSurrogate back = surrogate_from_json(to_json(s));
  CHECK(back.A == s.A);
  CHECK(back.b == s.b);
  CHECK(back.n_v == 4);
  CHECK_THROWS_AS(surrogate_from_json(nlohmann::json{{"n_v", 1}}), InputError);
}
