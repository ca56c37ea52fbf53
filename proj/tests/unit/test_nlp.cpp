#include "doctest.h"

#include <cmath>
#include <limits>
#include <random>

#include "ftc/nlp.hpp"

using namespace ftc;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

NlpProblem unconstrained(int n) {
  NlpProblem p;
  p.n_vars = n;
  p.lower = VectorXd::Constant(n, -kInf);
  p.upper = VectorXd::Constant(n, kInf);
  return p;
}

// Checks the KKT conditions of a QP solution.
void check_kkt(const QpProblem& qp, const QpResult& res, double tol) {
  VectorXd grad = qp.hessian * res.x + qp.gradient;
  if (qp.eq.rows() > 0) {
    grad -= qp.eq.transpose() * res.eq_multipliers;
    CHECK((qp.eq * res.x - qp.eq_rhs).cwiseAbs().maxCoeff() < tol);
  }
  if (qp.ineq.rows() > 0) {
    grad -= qp.ineq.transpose() * res.ineq_multipliers;
    const VectorXd cx = qp.ineq * res.x;
    for (Eigen::Index i = 0; i < cx.size(); ++i) {
      CHECK(cx[i] >= qp.ineq_lower[i] - tol);
      CHECK(cx[i] <= qp.ineq_upper[i] + tol);
      const double m = res.ineq_multipliers[i];
      if (m > tol) CHECK(std::abs(cx[i] - qp.ineq_lower[i]) < tol);
      if (m < -tol) CHECK(std::abs(cx[i] - qp.ineq_upper[i]) < tol);
    }
  }
  CHECK(grad.cwiseAbs().maxCoeff() < tol);
}

}  // namespace

TEST_CASE("qp: unconstrained and bounded") {
  QpProblem qp;
  qp.hessian = MatrixXd::Identity(2, 2) * 2.0;
  qp.gradient = VectorXd(2);
  qp.gradient << -2.0, -4.0;
  qp.eq.resize(0, 2);
  qp.eq_rhs.resize(0);
  qp.ineq = MatrixXd::Identity(2, 2);
  qp.ineq_lower = VectorXd::Constant(2, -kInf);
  qp.ineq_upper = VectorXd::Constant(2, kInf);
  auto res = solve_qp(qp);
  CHECK(res.status == QpStatus::optimal);
  CHECK(res.x[0] == doctest::Approx(1.0));
  CHECK(res.x[1] == doctest::Approx(2.0));

  qp.ineq_upper << 0.5, 3.0;
  res = solve_qp(qp);
  CHECK(res.x[0] == doctest::Approx(0.5));
  CHECK(res.x[1] == doctest::Approx(2.0));
  CHECK(res.ineq_multipliers[0] < 0.0);
  check_kkt(qp, res, 1e-9);
}

TEST_CASE("qp: infeasible constraints are reported") {
  QpProblem qp;
  qp.hessian = MatrixXd::Identity(1, 1);
  qp.gradient = VectorXd::Zero(1);
  qp.eq.resize(0, 1);
  qp.eq_rhs.resize(0);
  qp.ineq = MatrixXd::Ones(2, 1);
  qp.ineq_lower = VectorXd(2);
  qp.ineq_upper = VectorXd(2);
  qp.ineq_lower << 1.0, -kInf;
  qp.ineq_upper << kInf, 0.0;
  CHECK(solve_qp(qp).status == QpStatus::infeasible);
}

TEST_CASE("qp: random problems satisfy KKT") {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + trial % 8;
    const int me = trial % 3 == 0 ? 1 : 0;
    const int mi = 1 + trial % 6;
    MatrixXd a(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) a(i, j) = g(rng);
    QpProblem qp;
    qp.hessian = a * a.transpose() + 0.1 * MatrixXd::Identity(n, n);
    qp.gradient = VectorXd(n);
    for (int i = 0; i < n; ++i) qp.gradient[i] = 3.0 * g(rng);
    qp.eq = MatrixXd(me, n);
    qp.eq_rhs = VectorXd(me);
    for (int i = 0; i < me; ++i) {
      for (int j = 0; j < n; ++j) qp.eq(i, j) = g(rng);
      qp.eq_rhs[i] = g(rng);
    }
    // Feasible by construction: the box contains a point that meets the equality.
    qp.ineq = MatrixXd(mi, n);
    qp.ineq_lower = VectorXd(mi);
    qp.ineq_upper = VectorXd(mi);
    for (int i = 0; i < mi; ++i) {
      for (int j = 0; j < n; ++j) qp.ineq(i, j) = g(rng);
      qp.ineq_lower[i] = i % 2 == 0 ? -0.5 - std::abs(g(rng)) : -kInf;
      qp.ineq_upper[i] = 0.5 + std::abs(g(rng));
    }
    if (me > 0) qp.eq_rhs.setZero();
    const QpResult res = solve_qp(qp);
    REQUIRE(res.status == QpStatus::optimal);
    check_kkt(qp, res, 1e-8);
  }
}

TEST_CASE("qp: fixed rows and redundant equalities") {
  QpProblem qp;
  qp.hessian = MatrixXd::Identity(3, 3);
  qp.gradient = VectorXd::Constant(3, -1.0);
  qp.eq = MatrixXd(2, 3);
  qp.eq << 1, 1, 0, 2, 2, 0;
  qp.eq_rhs = VectorXd(2);
  qp.eq_rhs << 1, 2;
  qp.ineq = MatrixXd(1, 3);
  qp.ineq << 0, 0, 1;
  qp.ineq_lower = VectorXd::Constant(1, 0.25);
  qp.ineq_upper = VectorXd::Constant(1, 0.25);
  const QpResult res = solve_qp(qp);
  CHECK(res.status == QpStatus::optimal);
  CHECK(res.x[0] == doctest::Approx(0.5));
  CHECK(res.x[1] == doctest::Approx(0.5));
  CHECK(res.x[2] == doctest::Approx(0.25));
}

TEST_CASE("nlp: clipped quadratic") {
  NlpProblem p = unconstrained(1);
  p.residuals = [](const VectorXd& x, VectorXd& r, MatrixXd* j) {
    r = VectorXd::Constant(1, x[0] - 3.0);
    if (j) *j = MatrixXd::Ones(1, 1);
  };
  p.upper[0] = 2.0;
  const NlpResult res = solve_nlp(p, VectorXd::Zero(1));
  CHECK(res.status == SolverStatus::converged);
  CHECK(res.x[0] == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(res.stationarity <= 1e-6);
}

TEST_CASE("nlp: equality-constrained quadratic") {
  NlpProblem p = unconstrained(2);
  p.residuals = [](const VectorXd& x, VectorXd& r, MatrixXd* j) {
    r = x;
    if (j) *j = MatrixXd::Identity(2, 2);
  };
  p.equalities = [](const VectorXd& x, VectorXd& c, MatrixXd* j) {
    c = VectorXd::Constant(1, x[0] + x[1] - 2.0);
    if (j) *j = MatrixXd::Ones(1, 2);
  };
  const NlpResult res = solve_nlp(p, VectorXd::Zero(2));
  CHECK(res.status == SolverStatus::converged);
  CHECK(res.x[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(res.x[1] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(res.violation <= 1e-6);
}

TEST_CASE("nlp: nonlinear equality on a circle") {
  // min (x-2)^2 + (y-1)^2  s.t.  x^2 + y^2 = 1  ->  (2, 1)/sqrt(5)
  NlpProblem p = unconstrained(2);
  p.residuals = [](const VectorXd& x, VectorXd& r, MatrixXd* j) {
    r = VectorXd(2);
    r << x[0] - 2.0, x[1] - 1.0;
    if (j) *j = MatrixXd::Identity(2, 2);
  };
  p.equalities = [](const VectorXd& x, VectorXd& c, MatrixXd* j) {
    c = VectorXd::Constant(1, x.squaredNorm() - 1.0);
    if (j) *j = 2.0 * x.transpose();
  };
  p.equality_curvature = [](const VectorXd&, const VectorXd& lambda) {
    return MatrixXd(2.0 * lambda[0] * MatrixXd::Identity(2, 2));
  };
  VectorXd guess(2);
  guess << 0.1, 0.9;
  const NlpResult res = solve_nlp(p, guess);
  CHECK(res.status == SolverStatus::converged);
  CHECK(res.x[0] == doctest::Approx(2.0 / std::sqrt(5.0)).epsilon(1e-7));
  CHECK(res.x[1] == doctest::Approx(1.0 / std::sqrt(5.0)).epsilon(1e-7));
}

TEST_CASE("nlp: linear inequality rows") {
  NlpProblem p = unconstrained(2);
  p.residuals = [](const VectorXd& x, VectorXd& r, MatrixXd* j) {
    r = x - VectorXd::Constant(2, 3.0);
    if (j) *j = MatrixXd::Identity(2, 2);
  };
  p.linear = MatrixXd(1, 2);
  p.linear << 1, -1;
  p.linear_lower = VectorXd::Constant(1, -0.5);
  p.linear_upper = VectorXd::Constant(1, 0.5);
  p.upper = VectorXd::Constant(2, 2.0);
  p.upper[1] = 1.0;
  const NlpResult res = solve_nlp(p, VectorXd::Zero(2));
  CHECK(res.status == SolverStatus::converged);
  CHECK(res.x[0] == doctest::Approx(1.5));
  CHECK(res.x[1] == doctest::Approx(1.0));
}

TEST_CASE("nlp: warm start at the optimum") {
  NlpProblem p = unconstrained(2);
  p.residuals = [](const VectorXd& x, VectorXd& r, MatrixXd* j) {
    r = VectorXd(2);
    r << x[0] - 2.0, x[1] - 1.0;
    if (j) *j = MatrixXd::Identity(2, 2);
  };
  p.equalities = [](const VectorXd& x, VectorXd& c, MatrixXd* j) {
    c = VectorXd::Constant(1, x.squaredNorm() - 1.0);
    if (j) *j = 2.0 * x.transpose();
  };
  VectorXd guess(2);
  guess << 0.5, 0.5;
  const NlpResult first = solve_nlp(p, guess);
  REQUIRE(first.status == SolverStatus::converged);
  const NlpResult again = solve_nlp(p, first.x);
  CHECK(again.status == SolverStatus::converged);
  CHECK(again.iterations <= 2);
  CHECK(again.objective <= first.objective + 1e-12);
}

TEST_CASE("nlp: infeasible constraints") {
  NlpProblem p = unconstrained(1);
  p.residuals = [](const VectorXd& x, VectorXd& r, MatrixXd* j) {
    r = x;
    if (j) *j = MatrixXd::Ones(1, 1);
  };
  p.equalities = [](const VectorXd& x, VectorXd& c, MatrixXd* j) {
    c = VectorXd::Constant(1, x[0] - 5.0);
    if (j) *j = MatrixXd::Ones(1, 1);
  };
  p.upper[0] = 1.0;
  const NlpResult res = solve_nlp(p, VectorXd::Zero(1));
  CHECK(res.status == SolverStatus::infeasible);
}

TEST_CASE("nlp: max_iter returns the best iterate") {
  NlpProblem p = unconstrained(2);
  // Rosenbrock as least squares.
  p.residuals = [](const VectorXd& x, VectorXd& r, MatrixXd* j) {
    r = VectorXd(2);
    r << 10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0];
    if (j) {
      *j = MatrixXd(2, 2);
      *j << -20.0 * x[0], 10.0, -1.0, 0.0;
    }
  };
  VectorXd guess(2);
  guess << -1.2, 1.0;
  NlpOptions opts;
  opts.max_iter = 2;
  const NlpResult short_run = solve_nlp(p, guess, opts);
  CHECK(short_run.status == SolverStatus::max_iter);
  CHECK(short_run.objective <= p.objective(guess));
  const NlpResult full = solve_nlp(p, guess);
  CHECK(full.status == SolverStatus::converged);
  CHECK(full.x[0] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("nlp: validation") {
  NlpProblem p = unconstrained(2);
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p.residuals = [](const VectorXd& x, VectorXd& r, MatrixXd*) { r = x; };
  p.lower[0] = 1.0;
  p.upper[0] = 0.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  CHECK(to_string(SolverStatus::converged) == "converged");
  CHECK(to_string(SolverStatus::max_iter) == "max_iter");
  CHECK(to_string(SolverStatus::infeasible) == "infeasible");
}
