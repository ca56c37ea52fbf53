#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ftc/nlp.hpp"

namespace ftc {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kArmijo = 1e-4;
constexpr int kMaxBacktracks = 30;

struct Evaluation {
  VectorXd r;
  MatrixXd jr;
  VectorXd c;
  MatrixXd jc;
  double f{0.0};
};

// Null-space decomposition of the equality Jacobian A (m x n): A' P = Q R.
struct NullSpace {
  MatrixXd y;    // range-space basis (n x rank)
  MatrixXd z;    // null-space basis (n x (n - rank))
  MatrixXd r11;  // rank x rank upper triangular
  Eigen::VectorXi perm;
  Eigen::Index rank{0};

  explicit NullSpace(const MatrixXd& a, Eigen::Index n) {
    if (a.rows() == 0) {
      z = MatrixXd::Identity(n, n);
      y.resize(n, 0);
      return;
    }
    Eigen::ColPivHouseholderQR<MatrixXd> qr(a.transpose());
    qr.setThreshold(1e-12);
    rank = qr.rank();
    const MatrixXd q = qr.householderQ();
    y = q.leftCols(rank);
    z = q.rightCols(n - rank);
    r11 = qr.matrixR().topLeftCorner(rank, rank).triangularView<Eigen::Upper>();
    perm = qr.colsPermutation().indices();
  }

  // Minimum-norm particular solution of A d = rhs over the independent rows.
  VectorXd particular(const VectorXd& rhs) const {
    if (rank == 0) return VectorXd::Zero(z.rows());
    VectorXd permuted(rank);
    for (Eigen::Index i = 0; i < rank; ++i) permuted[i] = rhs[perm[i]];
    const VectorXd dy = r11.transpose().triangularView<Eigen::Lower>().solve(permuted);
    return y * dy;
  }

  // Least-squares multipliers: A' lambda ~= v.
  VectorXd multipliers(const VectorXd& v, Eigen::Index m) const {
    VectorXd lambda = VectorXd::Zero(m);
    if (rank == 0) return lambda;
    const VectorXd proj = y.transpose() * v;
    const VectorXd sol = r11.triangularView<Eigen::Upper>().solve(proj);
    for (Eigen::Index i = 0; i < rank; ++i) lambda[perm[i]] = sol[i];
    return lambda;
  }
};

Evaluation evaluate(const NlpProblem& p, const VectorXd& x, bool with_jacobians) {
  Evaluation e;
  p.residuals(x, e.r, with_jacobians ? &e.jr : nullptr);
  e.f = e.r.squaredNorm();
  if (p.equalities) {
    p.equalities(x, e.c, with_jacobians ? &e.jc : nullptr);
  } else {
    e.c.resize(0);
    e.jc.resize(0, x.size());
  }
  return e;
}

double bound_violation(const NlpProblem& p, const VectorXd& x) {
  double v = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    v = std::max({v, p.lower[i] - x[i], x[i] - p.upper[i]});
  }
  if (p.linear.rows() > 0) {
    const VectorXd lx = p.linear * x;
    for (Eigen::Index i = 0; i < lx.size(); ++i) {
      v = std::max({v, p.linear_lower[i] - lx[i], lx[i] - p.linear_upper[i]});
    }
  }
  return v;
}

}  // namespace

std::string_view to_string(SolverStatus status) {
  switch (status) {
    case SolverStatus::converged:
      return "converged";
    case SolverStatus::max_iter:
      return "max_iter";
    case SolverStatus::infeasible:
      return "infeasible";
  }
  return "unknown";
}

double NlpProblem::objective(const VectorXd& x) const {
  VectorXd r;
  residuals(x, r, nullptr);
  return r.squaredNorm();
}

double NlpProblem::violation(const VectorXd& x) const {
  double v = bound_violation(*this, x);
  if (equalities) {
    VectorXd c;
    equalities(x, c, nullptr);
    if (c.size() > 0) v = std::max(v, c.cwiseAbs().maxCoeff());
  }
  return v;
}

void NlpProblem::validate() const {
  if (n_vars <= 0 || !residuals) throw std::invalid_argument("NLP needs variables and residuals");
  if (lower.size() != n_vars || upper.size() != n_vars) {
    throw std::invalid_argument("NLP bound dimensions do not match the variable count");
  }
  if ((lower.array() > upper.array()).any()) throw std::invalid_argument("NLP lower > upper");
  if (linear.rows() > 0 &&
      (linear.cols() != n_vars || linear_lower.size() != linear.rows() ||
       linear_upper.size() != linear.rows())) {
    throw std::invalid_argument("NLP linear constraint dimensions are inconsistent");
  }
}

NlpResult solve_nlp(const NlpProblem& problem, const VectorXd& guess, const NlpOptions& options) {
  problem.validate();
  const Eigen::Index n = problem.n_vars;
  if (guess.size() != n) throw std::invalid_argument("initial guess has the wrong dimension");

  VectorXd x = guess.cwiseMax(problem.lower).cwiseMin(problem.upper);
  const Eigen::Index n_lin = problem.linear.rows();

  double rho = 1.0;
  VectorXd lambda;  // equality multipliers from the previous iteration

  NlpResult best;
  double best_violation = kInf;
  double best_objective = kInf;
  auto consider = [&](const VectorXd& xc, double f, double viol) {
    const bool feasible = viol <= options.tol;
    const bool best_feasible = best_violation <= options.tol;
    const bool better = feasible ? (!best_feasible || f < best_objective) : viol < best_violation;
    if (better) {
      best.x = xc;
      best_violation = viol;
      best_objective = f;
    }
  };

  for (int iter = 1; iter <= options.max_iter; ++iter) {
    const Evaluation ev = evaluate(problem, x, true);
    const Eigen::Index m = ev.c.size();
    const VectorXd g = 2.0 * ev.jr.transpose() * ev.r;
    MatrixXd h = 2.0 * ev.jr.transpose() * ev.jr;

    const NullSpace ns(ev.jc, n);
    const VectorXd dp = ns.particular(-ev.c);
    const Eigen::Index nz = ns.z.cols();

    // Reduced Hessian; constraint curvature is included when it keeps the QP convex.
    const double reg = 1e-10 * std::max(1.0, h.diagonal().cwiseAbs().maxCoeff());
    MatrixXd g_red;
    bool curvature_used = false;
    if (problem.equality_curvature && lambda.size() == m && m > 0) {
      const MatrixXd h_lag = h - problem.equality_curvature(x, lambda);
      MatrixXd candidate = ns.z.transpose() * h_lag * ns.z;
      candidate.diagonal().array() += reg;
      if (Eigen::LLT<MatrixXd>(candidate).info() == Eigen::Success) {
        g_red = std::move(candidate);
        h = h_lag;
        curvature_used = true;
      }
    }
    if (!curvature_used) {
      g_red = ns.z.transpose() * h * ns.z;
      g_red.diagonal().array() += reg;
    }

    QpProblem qp;
    qp.hessian = g_red;
    qp.gradient = ns.z.transpose() * (g + h * dp);
    qp.eq.resize(0, nz);
    qp.eq_rhs.resize(0);

    // Finite variable bounds and linear rows, expressed in the null-space coordinates.
    std::vector<Eigen::Index> bounded;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (std::isfinite(problem.lower[i]) || std::isfinite(problem.upper[i])) bounded.push_back(i);
    }
    const auto n_box = static_cast<Eigen::Index>(bounded.size());
    qp.ineq.resize(n_box + n_lin, nz);
    qp.ineq_lower.resize(n_box + n_lin);
    qp.ineq_upper.resize(n_box + n_lin);
    for (Eigen::Index k = 0; k < n_box; ++k) {
      const Eigen::Index i = bounded[static_cast<std::size_t>(k)];
      qp.ineq.row(k) = ns.z.row(i);
      qp.ineq_lower[k] = problem.lower[i] - x[i] - dp[i];
      qp.ineq_upper[k] = problem.upper[i] - x[i] - dp[i];
    }
    if (n_lin > 0) {
      const VectorXd lx = problem.linear * (x + dp);
      qp.ineq.bottomRows(n_lin) = problem.linear * ns.z;
      qp.ineq_lower.tail(n_lin) = problem.linear_lower - lx;
      qp.ineq_upper.tail(n_lin) = problem.linear_upper - lx;
    }
    // Guard against lower > upper from round-off when a bound is already tight.
    qp.ineq_lower = qp.ineq_lower.cwiseMin(qp.ineq_upper);

    const QpResult sub = solve_qp(qp);
    const double viol = std::max(bound_violation(problem, x),
                                 m > 0 ? ev.c.cwiseAbs().maxCoeff() : 0.0);
    consider(x, ev.f, viol);

    if (sub.status != QpStatus::optimal) {
      best.status = SolverStatus::infeasible;
      best.iterations = iter;
      break;
    }
    const VectorXd d = dp + ns.z * sub.x;

    // Full-space inequality multipliers mapped back to variables.
    VectorXd bound_force = VectorXd::Zero(n);
    for (Eigen::Index k = 0; k < n_box; ++k) {
      bound_force[bounded[static_cast<std::size_t>(k)]] += sub.ineq_multipliers[k];
    }
    if (n_lin > 0) bound_force += problem.linear.transpose() * sub.ineq_multipliers.tail(n_lin);

    lambda = ns.multipliers(g + h * d - bound_force, m);
    VectorXd kkt = g - bound_force;
    if (m > 0) kkt -= ev.jc.transpose() * lambda;
    const double stationarity = kkt.cwiseAbs().maxCoeff();

    if (viol <= options.tol && stationarity <= options.tol) {
      best.x = x;
      best_violation = viol;
      best_objective = ev.f;
      best.stationarity = stationarity;
      best.status = SolverStatus::converged;
      best.iterations = iter;
      best.objective = ev.f;
      best.violation = viol;
      return best;
    }
    best.stationarity = stationarity;

    // l1 merit line search.
    if (m > 0) rho = std::max(rho, 1.1 * lambda.cwiseAbs().maxCoeff() + 1e-3);
    const double c_norm = m > 0 ? ev.c.lpNorm<1>() : 0.0;
    const double merit0 = ev.f + rho * c_norm;
    const double slope = g.dot(d) - rho * c_norm;
    double alpha = 1.0;
    VectorXd trial = x + d;
    for (int k = 0; k < kMaxBacktracks; ++k) {
      trial = x + alpha * d;
      const Evaluation et = evaluate(problem, trial, false);
      const double merit = et.f + rho * (m > 0 ? et.c.lpNorm<1>() : 0.0);
      if (merit <= merit0 + kArmijo * alpha * std::min(slope, 0.0)) break;
      alpha *= 0.5;
    }
    x = trial;
    best.iterations = iter;
    best.status = SolverStatus::max_iter;
  }

  if (best.status != SolverStatus::infeasible) {
    const Evaluation ev = evaluate(problem, x, false);
    const double viol = std::max(bound_violation(problem, x),
                                 ev.c.size() > 0 ? ev.c.cwiseAbs().maxCoeff() : 0.0);
    consider(x, ev.f, viol);
    best.status = SolverStatus::max_iter;
    best.iterations = options.max_iter;
  }
  best.objective = best_objective;
  best.violation = best_violation;
  return best;
}

}  // namespace ftc
