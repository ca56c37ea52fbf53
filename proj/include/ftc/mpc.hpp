#pragma once

// Receding-horizon tracking controllers on an LGL collocation grid.
//
// Decision vector layout: node-major, five entries per node
//   [x, y, psi, omega_R, omega_L]_j,  j = 0..N
// The nonlinear controller solves the collocated kinematics with the SQP in
// nlp.hpp; the linear controller replaces the kinematics by a single
// linearisation about the current state and reference controls.

#include <Eigen/Dense>

#include <functional>
#include <limits>
#include <optional>

#include "ftc/dynamics.hpp"
#include "ftc/nlp.hpp"
#include "ftc/pseudospectral.hpp"

namespace ftc {

struct OcpWeights {
  double q_x{10.0};
  double q_y{10.0};
  double q_v{1.0};
  double q_psi{1.0};

  void validate() const;
};

struct ReferencePoint {
  double x{0.0};
  double y{0.0};
  double v{0.0};
  double psi_dot{0.0};
  double psi{0.0};  ///< tangent heading; only used to seed initial guesses
};

using ReferenceSignal = std::function<ReferencePoint(double t)>;

/// Counter-clockwise circle traversed at constant speed, starting at angle `phase`.
ReferenceSignal build_reference_circle(double radius, double speed, double center_x = 0.0,
                                       double center_y = 0.0, double phase = 0.0);

/// Straight line through (x0, y0) with the given heading.
ReferenceSignal build_reference_line(double speed, double x0 = 0.0, double y0 = 0.0,
                                     double heading = 0.0);

/// Pose of the reference at time t.
RobotState reference_pose(const ReferenceSignal& ref, double t);

struct OcpBounds {
  double omega_max{kOmegaLimit};
  /// Largest wheel-rate change per controller period (500 deg/s).
  double delta_omega{500.0 * kDegToRad};
  double control_period{0.1};
  Eigen::Vector3d state_lower{Eigen::Vector3d::Constant(-std::numeric_limits<double>::infinity())};
  Eigen::Vector3d state_upper{Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity())};

  void validate() const;
};

namespace layout {
inline constexpr int per_node = 5;
inline constexpr int x = 0;
inline constexpr int y = 1;
inline constexpr int psi = 2;
inline constexpr int omega_right = 3;
inline constexpr int omega_left = 4;
inline int at(int node, int component) { return per_node * node + component; }
}  // namespace layout

struct OcpContext {
  const ReferenceSignal* ref{nullptr};
  double t0{0.0};
  double horizon{5.0};
  RobotState x_now;
  RobotParams params;
  OcpWeights weights;
  OcpBounds bounds;
  std::optional<ControlInput> previous;  ///< last applied control, for the first-node rate bound
};

/// Nonlinear transcription: collocation residuals at every node plus the initial-state pin.
NlpProblem transcribe(const OcpContext& ctx, const CollocationBasis& basis);

/// Continuous-time kinematics linearised at (state, u): f(s, v) ~ f0 + A (s - state) + B (v - u).
struct Linearization {
  Eigen::Vector3d f0;
  Eigen::Matrix3d a;
  Eigen::Matrix<double, 3, 2> b;
};

Linearization linearize(const RobotState& state, const ControlInput& u, const RobotParams& params);

/// Linear transcription about x_now and the reference controls at t0.
NlpProblem transcribe_linear(const OcpContext& ctx, const CollocationBasis& basis);

/// Guess that follows the reference with the controls that realise it for ctx.params.
Eigen::VectorXd reference_guess(const OcpContext& ctx, const CollocationBasis& basis);

struct MpcSolution {
  Eigen::MatrixXd states;    ///< (N+1) x 3
  Eigen::MatrixXd controls;  ///< (N+1) x 2
  Eigen::VectorXd decision;
  Eigen::VectorXd times;     ///< physical node times
  ControlInput first;
  double objective{0.0};
  SolverStatus status{SolverStatus::max_iter};
  int iterations{0};
};

MpcSolution unpack_solution(const NlpResult& result, const CollocationBasis& basis,
                            const TimeMap& times);

enum class ControllerKind { nmpc, lmpc };

struct ControllerConfig {
  ControllerKind kind{ControllerKind::nmpc};
  int nodes{16};  ///< polynomial degree N
  double horizon{5.0};
  OcpWeights weights;
  OcpBounds bounds;
  NlpOptions options;
  /// Consecutive failures after which the controller reports a failure.
  int failure_limit{3};
};

enum class ControllerStatus { ok, held, failed };

class MpcController {
 public:
  MpcController(ControllerConfig config, ReferenceSignal reference);

  /// Solves at time t from x_now with the model radii in params_est and returns the control to apply.
  ControlInput step(const RobotState& x_now, const RobotParams& params_est, double t);

  const MpcSolution& last_solution() const { return solution_; }
  SolverStatus last_solver_status() const { return solution_.status; }
  ControllerStatus status() const { return status_; }
  int consecutive_failures() const { return failures_; }
  const ControllerConfig& config() const { return config_; }
  const CollocationBasis& basis() const { return *basis_; }

  /// Predicted state at time t from the last accepted solution.
  RobotState predict(double t) const;

 private:
  Eigen::VectorXd warm_start(const OcpContext& ctx) const;

  ControllerConfig config_;
  ReferenceSignal reference_;
  const CollocationBasis* basis_;
  MpcSolution solution_;
  std::optional<MpcSolution> accepted_;
  std::optional<ControlInput> applied_;
  ControllerStatus status_{ControllerStatus::ok};
  int failures_{0};
};

std::string_view to_string(ControllerStatus status);

}  // namespace ftc
