#include "ftc/pseudospectral.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

namespace ftc {

double legendre(int n, double x) {
  if (n == 0) return 1.0;
  double p_prev = 1.0;
  double p = x;
  for (int k = 2; k <= n; ++k) {
    const double next = ((2.0 * k - 1.0) * x * p - (k - 1.0) * p_prev) / k;
    p_prev = p;
    p = next;
  }
  return p;
}

CollocationBasis lgl_basis(int degree) {
  if (degree < 1) throw BasisError("LGL basis needs degree >= 1");
  const int n = degree;
  const int count = n + 1;

  // Newton iteration on (1 - x^2) P_N'(x) from Chebyshev-Gauss-Lobatto guesses,
  // written via the recurrence identity used by the classic lglnodes routine.
  Eigen::VectorXd x(count);
  for (int i = 0; i < count; ++i) x[i] = std::cos(std::numbers::pi * i / n);

  bool converged = false;
  for (int iter = 0; iter < 100 && !converged; ++iter) {
    double max_step = 0.0;
    for (int i = 0; i < count; ++i) {
      double pm1 = 1.0;
      double p = x[i];
      for (int k = 2; k <= n; ++k) {
        const double next = ((2.0 * k - 1.0) * x[i] * p - (k - 1.0) * pm1) / k;
        pm1 = p;
        p = next;
      }
      const double step = (x[i] * p - pm1) / (count * p);
      x[i] -= step;
      max_step = std::max(max_step, std::abs(step));
    }
    converged = max_step <= 1e-14;
  }
  if (!converged) throw BasisError("LGL node iteration did not converge");

  CollocationBasis basis;
  basis.degree = n;
  basis.nodes.resize(count);
  basis.weights.resize(count);
  // Guesses run from +1 down to -1; store ascending.
  for (int i = 0; i < count; ++i) {
    const int src = n - i;
    basis.nodes[i] = x[src];
  }
  basis.nodes[0] = -1.0;
  basis.nodes[n] = 1.0;

  Eigen::VectorXd pn_at(count);
  for (int i = 0; i < count; ++i) {
    pn_at[i] = legendre(n, basis.nodes[i]);
    basis.weights[i] = 2.0 / (n * (n + 1.0) * pn_at[i] * pn_at[i]);
  }

  basis.d = Eigen::MatrixXd::Zero(count, count);
  for (int i = 0; i < count; ++i) {
    for (int j = 0; j < count; ++j) {
      if (i != j) {
        basis.d(i, j) = pn_at[i] / (pn_at[j] * (basis.nodes[i] - basis.nodes[j]));
      }
    }
  }
  basis.d(0, 0) = -n * (n + 1.0) / 4.0;
  basis.d(n, n) = n * (n + 1.0) / 4.0;
  return basis;
}

const CollocationBasis& cached_lgl_basis(int degree) {
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<CollocationBasis>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[degree];
  if (!slot) slot = std::make_unique<CollocationBasis>(lgl_basis(degree));
  return *slot;
}

TimeMap time_map(const CollocationBasis& basis, double t0, double tf) {
  if (!(tf > t0)) throw std::invalid_argument("time_map needs tf > t0");
  TimeMap out;
  out.scale = 0.5 * (tf - t0);
  out.times = (t0 + tf) * 0.5 + out.scale * basis.nodes.array();
  out.times[0] = t0;
  out.times[basis.degree] = tf;
  return out;
}

double interpolate(const CollocationBasis& basis, const Eigen::VectorXd& values, double tau) {
  // Barycentric form with weights computed from the node set.
  const int count = basis.size();
  double num = 0.0;
  double den = 0.0;
  for (int j = 0; j < count; ++j) {
    const double diff = tau - basis.nodes[j];
    if (diff == 0.0) return values[j];
    double w = 1.0;
    for (int k = 0; k < count; ++k) {
      if (k != j) w /= (basis.nodes[j] - basis.nodes[k]);
    }
    num += w / diff * values[j];
    den += w / diff;
  }
  return num / den;
}

}  // namespace ftc
