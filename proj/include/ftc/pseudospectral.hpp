#pragma once

// Legendre-Gauss-Lobatto collocation: nodes, quadrature weights and the
// differentiation matrix on [-1, 1].

#include <Eigen/Dense>

#include <stdexcept>

namespace ftc {

class BasisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CollocationBasis {
  int degree{0};            ///< N; there are N + 1 nodes
  Eigen::VectorXd nodes;    ///< ascending, nodes[0] = -1, nodes[N] = 1
  Eigen::VectorXd weights;  ///< quadrature weights, sum to 2
  Eigen::MatrixXd d;        ///< (D f)(tau_i) = f'(tau_i) for polynomials of degree <= N

  int size() const { return degree + 1; }
};

CollocationBasis lgl_basis(int degree);

/// Shared immutable basis for a degree; built on first use.
const CollocationBasis& cached_lgl_basis(int degree);

struct TimeMap {
  Eigen::VectorXd times;
  double scale{1.0};  ///< (tf - t0) / 2
};

TimeMap time_map(const CollocationBasis& basis, double t0, double tf);

/// Evaluates the degree-N interpolant of node values at tau in [-1, 1].
double interpolate(const CollocationBasis& basis, const Eigen::VectorXd& values, double tau);

/// Legendre polynomial P_n(x) by recurrence.
double legendre(int n, double x);

}  // namespace ftc
