#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "ftc/nlp.hpp"

namespace ftc {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();

// One-sided constraint n'x >= b (or n'x = b for equalities).
struct Constraint {
  VectorXd normal;
  double rhs{0.0};
  int row{0};        // row in E or C
  double sign{1.0};  // +1 lower side, -1 upper side
  bool equality{false};
  bool fixed_row{false};  // equality coming from an inequality row with lower == upper
  VectorXd ginv;          // G^{-1} normal
};

class DualActiveSet {
 public:
  explicit DualActiveSet(const QpProblem& qp) : qp_(qp), llt_(qp.hessian) {
    if (llt_.info() != Eigen::Success) {
      throw std::invalid_argument("QP Hessian is not positive definite");
    }
    n_ = qp.gradient.size();
  }

  QpResult run() {
    build_constraints();
    QpResult out;
    x_ = -llt_.solve(qp_.gradient);

    for (const auto& c : equalities_) {
      if (!add_equality(c)) {
        out.status = QpStatus::infeasible;
        return finish(out);
      }
    }

    const int max_iter = 50 * static_cast<int>(n_ + inequalities_.size() + 1);
    std::vector<bool> is_active(inequalities_.size(), false);
    int iter = 0;
    for (;; ++iter) {
      if (iter >= max_iter) {
        out.status = QpStatus::max_iter;
        break;
      }
      // Most violated inactive constraint.
      int p = -1;
      double worst = 0.0;
      for (std::size_t i = 0; i < inequalities_.size(); ++i) {
        if (is_active[i]) continue;
        const auto& c = inequalities_[i];
        const double s = c.normal.dot(x_) - c.rhs;
        const double tol = 1e-10 * (1.0 + std::abs(c.rhs));
        if (s < -tol && s < worst) {
          worst = s;
          p = static_cast<int>(i);
        }
      }
      if (p < 0) {
        out.status = QpStatus::optimal;
        break;
      }

      const Constraint& cp = inequalities_[static_cast<std::size_t>(p)];
      double u_plus = 0.0;
      bool added = false;
      while (!added) {
        VectorXd z;
        VectorXd r;
        direction(cp.normal, cp.ginv, z, r);

        // Partial (dual) step length: first active inequality multiplier to hit zero.
        double t1 = kInf;
        int drop = -1;
        for (std::size_t j = 0; j < active_.size(); ++j) {
          if (active_[j].equality) continue;
          if (r[static_cast<Eigen::Index>(j)] > 1e-12) {
            const double ratio = mult_[j] / r[static_cast<Eigen::Index>(j)];
            if (ratio < t1) {
              t1 = ratio;
              drop = static_cast<int>(j);
            }
          }
        }
        // Full (primal) step length.
        const double zn = z.dot(cp.normal);
        const double scale = cp.normal.dot(cp.ginv);
        double t2 = kInf;
        if (zn > 1e-13 * std::max(1.0, scale)) t2 = -(cp.normal.dot(x_) - cp.rhs) / zn;

        if (t1 == kInf && t2 == kInf) {
          out.status = QpStatus::infeasible;
          return finish(out);
        }
        if (t2 == kInf) {
          step_multipliers(r, t1);
          u_plus += t1;
          remove_active(static_cast<std::size_t>(drop), is_active);
          continue;
        }
        const double t = std::min(t1, t2);
        x_ += t * z;
        step_multipliers(r, t);
        u_plus += t;
        if (t2 <= t1) {
          push_active(cp);
          mult_.push_back(u_plus);
          is_active[static_cast<std::size_t>(p)] = true;
          added = true;
        } else {
          remove_active(static_cast<std::size_t>(drop), is_active);
        }
      }
    }
    out.iterations = iter;
    return finish(out);
  }

 private:
  void build_constraints() {
    const auto m_eq = qp_.eq.rows();
    for (Eigen::Index i = 0; i < m_eq; ++i) {
      equalities_.push_back(
          {qp_.eq.row(i).transpose(), qp_.eq_rhs[i], static_cast<int>(i), 1.0, true, false, {}});
    }
    const auto m = qp_.ineq.rows();
    for (Eigen::Index i = 0; i < m; ++i) {
      const double lo = qp_.ineq_lower[i];
      const double hi = qp_.ineq_upper[i];
      const VectorXd row = qp_.ineq.row(i).transpose();
      if (lo > hi) throw std::invalid_argument("QP bound lower > upper");
      if (std::isfinite(lo) && std::isfinite(hi) && hi - lo <= 1e-14 * (1.0 + std::abs(lo))) {
        equalities_.push_back({row, lo, static_cast<int>(i), 1.0, true, true, {}});
        continue;
      }
      if (std::isfinite(lo)) {
        inequalities_.push_back({row, lo, static_cast<int>(i), 1.0, false, false, {}});
      }
      if (std::isfinite(hi)) {
        inequalities_.push_back({-row, -hi, static_cast<int>(i), -1.0, false, false, {}});
      }
    }
    for (auto* set : {&equalities_, &inequalities_}) {
      if (set->empty()) continue;
      MatrixXd normals(n_, static_cast<Eigen::Index>(set->size()));
      for (std::size_t j = 0; j < set->size(); ++j) {
        normals.col(static_cast<Eigen::Index>(j)) = (*set)[j].normal;
      }
      const MatrixXd solved = llt_.solve(normals);
      for (std::size_t j = 0; j < set->size(); ++j) {
        (*set)[j].ginv = solved.col(static_cast<Eigen::Index>(j));
      }
    }
  }

  void direction(const VectorXd& normal, const VectorXd& ginv, VectorXd& z, VectorXd& r) const {
    const auto q = static_cast<Eigen::Index>(active_.size());
    const VectorXd& g_inv_n = ginv;
    if (q == 0) {
      z = g_inv_n;
      r.resize(0);
      return;
    }
    VectorXd rhs(q);
    for (Eigen::Index j = 0; j < q; ++j) rhs[j] = active_[static_cast<std::size_t>(j)].ginv.dot(normal);
    r = gram_.ldlt().solve(rhs);
    z = g_inv_n;
    for (Eigen::Index j = 0; j < q; ++j) z -= r[j] * active_[static_cast<std::size_t>(j)].ginv;
  }

  bool add_equality(const Constraint& c) {
    VectorXd z;
    VectorXd r;
    direction(c.normal, c.ginv, z, r);
    const double s = c.normal.dot(x_) - c.rhs;
    const double zn = z.dot(c.normal);
    const double scale = c.normal.dot(c.ginv);
    if (!(zn > 1e-13 * std::max(1.0, scale))) {
      // Linearly dependent on earlier equalities: fine if consistent.
      return std::abs(s) <= 1e-9 * (1.0 + std::abs(c.rhs));
    }
    const double t = -s / zn;
    x_ += t * z;
    step_multipliers(r, t);
    push_active(c);
    mult_.push_back(t);
    return true;
  }

  // Keeps gram_ = N' G^{-1} N in step with the active set.
  void push_active(const Constraint& c) {
    const auto q = static_cast<Eigen::Index>(active_.size());
    gram_.conservativeResize(q + 1, q + 1);
    for (Eigen::Index j = 0; j < q; ++j) {
      const double v = active_[static_cast<std::size_t>(j)].normal.dot(c.ginv);
      gram_(j, q) = v;
      gram_(q, j) = v;
    }
    gram_(q, q) = c.normal.dot(c.ginv);
    active_.push_back(c);
  }

  void step_multipliers(const VectorXd& r, double t) {
    for (std::size_t j = 0; j < mult_.size(); ++j) mult_[j] -= t * r[static_cast<Eigen::Index>(j)];
  }

  void remove_active(std::size_t j, std::vector<bool>& is_active) {
    const Constraint& c = active_[j];
    for (std::size_t i = 0; i < inequalities_.size(); ++i) {
      if (is_active[i] && inequalities_[i].row == c.row && inequalities_[i].sign == c.sign) {
        is_active[i] = false;
        break;
      }
    }
    const auto q = static_cast<Eigen::Index>(active_.size());
    const auto k = static_cast<Eigen::Index>(j);
    MatrixXd reduced(q - 1, q - 1);
    for (Eigen::Index a = 0, ra = 0; a < q; ++a) {
      if (a == k) continue;
      for (Eigen::Index b = 0, rb = 0; b < q; ++b) {
        if (b == k) continue;
        reduced(ra, rb++) = gram_(a, b);
      }
      ++ra;
    }
    gram_ = std::move(reduced);
    active_.erase(active_.begin() + static_cast<std::ptrdiff_t>(j));
    mult_.erase(mult_.begin() + static_cast<std::ptrdiff_t>(j));
  }

  QpResult& finish(QpResult& out) {
    out.x = x_;
    out.eq_multipliers = VectorXd::Zero(qp_.eq.rows());
    out.ineq_multipliers = VectorXd::Zero(qp_.ineq.rows());
    for (std::size_t j = 0; j < active_.size(); ++j) {
      const Constraint& c = active_[j];
      if (c.fixed_row) {
        out.ineq_multipliers[c.row] += mult_[j];
      } else if (c.equality) {
        out.eq_multipliers[c.row] += mult_[j];
      } else {
        out.ineq_multipliers[c.row] += c.sign * mult_[j];
      }
    }
    return out;
  }

  const QpProblem& qp_;
  Eigen::LLT<MatrixXd> llt_;
  Eigen::Index n_{0};
  VectorXd x_;
  std::vector<Constraint> equalities_;
  std::vector<Constraint> inequalities_;
  std::vector<Constraint> active_;
  MatrixXd gram_;
  std::vector<double> mult_;
};

}  // namespace

QpResult solve_qp(const QpProblem& qp) {
  const auto n = qp.gradient.size();
  if (qp.hessian.rows() != n || qp.hessian.cols() != n) {
    throw std::invalid_argument("QP Hessian dimension mismatch");
  }
  if (qp.eq.rows() > 0 && qp.eq.cols() != n) throw std::invalid_argument("QP E dimension");
  if (qp.ineq.rows() > 0 && qp.ineq.cols() != n) throw std::invalid_argument("QP C dimension");
  if (qp.eq.rows() != qp.eq_rhs.size() || qp.ineq.rows() != qp.ineq_lower.size() ||
      qp.ineq.rows() != qp.ineq_upper.size()) {
    throw std::invalid_argument("QP bound vector dimension mismatch");
  }
  DualActiveSet solver(qp);
  return solver.run();
}

}  // namespace ftc
