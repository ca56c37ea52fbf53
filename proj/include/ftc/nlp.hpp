#pragma once

// Small dense SQP solver for least-squares objectives with nonlinear equality
// constraints, variable bounds and general linear inequalities.
//
// Each iteration linearises the equalities, eliminates them with a null-space
// basis from a pivoted QR of the constraint Jacobian, and solves the reduced
// inequality-constrained QP with a dual active-set method. The step is
// globalised by backtracking on an l1 merit function.

#include <Eigen/Dense>

#include <functional>
#include <string_view>

namespace ftc {

// -- QP -------------------------------------------------------------------------

/// min 1/2 x'Gx + a'x  s.t.  E x = e,  lower <= C x <= upper  (entries may be infinite)
struct QpProblem {
  Eigen::MatrixXd hessian;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd eq;
  Eigen::VectorXd eq_rhs;
  Eigen::MatrixXd ineq;
  Eigen::VectorXd ineq_lower;
  Eigen::VectorXd ineq_upper;
};

enum class QpStatus { optimal, infeasible, max_iter };

struct QpResult {
  Eigen::VectorXd x;
  /// G x + a = E' lambda + C' mu;  mu_i >= 0 at an active lower bound, <= 0 at an active upper.
  Eigen::VectorXd eq_multipliers;
  Eigen::VectorXd ineq_multipliers;
  QpStatus status{QpStatus::optimal};
  int iterations{0};
};

/// Goldfarb-Idnani dual active-set method. G must be positive definite.
QpResult solve_qp(const QpProblem& qp);

// -- NLP ------------------------------------------------------------------------

/// Fills the vector and, when the matrix pointer is non-null, its Jacobian.
using VectorFunction =
    std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& value, Eigen::MatrixXd* jac)>;

/// Returns sum_i lambda_i * Hessian(c_i)(x).
using ConstraintCurvature =
    std::function<Eigen::MatrixXd(const Eigen::VectorXd& x, const Eigen::VectorXd& lambda)>;

/// minimise ||r(x)||^2  s.t.  c(x) = 0,  lower <= x <= upper,  linear_lower <= L x <= linear_upper
struct NlpProblem {
  int n_vars{0};
  VectorFunction residuals;
  VectorFunction equalities;  ///< may be empty
  ConstraintCurvature equality_curvature;  ///< optional; used when it keeps the QP convex
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  Eigen::MatrixXd linear;
  Eigen::VectorXd linear_lower;
  Eigen::VectorXd linear_upper;

  double objective(const Eigen::VectorXd& x) const;
  /// Max of equality residual and bound / linear-inequality violation.
  double violation(const Eigen::VectorXd& x) const;
  void validate() const;
};

enum class SolverStatus { converged, max_iter, infeasible };

std::string_view to_string(SolverStatus status);

struct NlpOptions {
  double tol{1e-6};
  int max_iter{200};
};

struct NlpResult {
  Eigen::VectorXd x;
  double objective{0.0};
  double violation{0.0};
  double stationarity{0.0};
  SolverStatus status{SolverStatus::max_iter};
  int iterations{0};
};

NlpResult solve_nlp(const NlpProblem& problem, const Eigen::VectorXd& guess,
                    const NlpOptions& options = {});

}  // namespace ftc
