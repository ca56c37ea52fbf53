#pragma once

// Extended and unscented Kalman filters with a scalar measurement.
//
// The filters are written against FilterModel, a one-step description of the
// transition and measurement maps, so the same code runs the 5-state robot
// model [x, y, psi, r_R, r_L] and the small linear models used in tests.

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ftc/dynamics.hpp"

namespace ftc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Indices into the robot filter state.
namespace idx {
inline constexpr int x = 0;
inline constexpr int y = 1;
inline constexpr int psi = 2;
inline constexpr int r_right = 3;
inline constexpr int r_left = 4;
inline constexpr int size = 5;
}  // namespace idx

class FilterDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GaussianBelief {
  Vec mean;
  Mat cov;

  /// Throws FilterDivergence unless cov is symmetric and PSD within tolerance.
  void check() const;
};

struct NoiseConfig {
  Mat q;
  double r{0.25};
};

struct InnovationRecord {
  double nu{0.0};
  double s{1.0};
  double t{0.0};
  double predicted{0.0};  ///< z-hat
};

struct SigmaSet {
  Mat points;  ///< one column per sigma point
  Vec weights;
};

struct FilterModel {
  std::function<Vec(const Vec&)> transition;
  std::function<Mat(const Vec&)> transition_jacobian;
  std::function<double(const Vec&)> measure;
  std::function<Vec(const Vec&)> measure_gradient;
};

// -- robot model ------------------------------------------------------------

/// How the radius states evolve inside a filter's process model.
enum class RadiusProcess {
  random_walk,  ///< constant mean, drift absorbed by Q
  pinned,       ///< reset to fixed hypothesis radii every step
  ramp_left,    ///< random walk plus a linear left-radius deflation, clamped at a floor
};

struct RobotProcess {
  double dt{0.01};
  double b{1.0};
  RadiusProcess radius{RadiusProcess::random_walk};
  double pinned_right{2.0};
  double pinned_left{2.0};
  double ramp_rate{0.1};
  double ramp_floor{0.1};
};

/// One Euler step of the kinematics at the belief's own radii.
Vec process_model(const Vec& mean, const ControlInput& u, const RobotProcess& process);
Mat process_jacobian(const Vec& mean, const ControlInput& u, const RobotProcess& process);

/// Predicted speed (r_R wR + r_L wL) / 2.
double measurement_model(const Vec& mean, const ControlInput& u);
Vec measurement_gradient(const ControlInput& u);

FilterModel robot_filter_model(const ControlInput& u, const RobotProcess& process);

/// Q and R used throughout: Q = diag((5dt)^2, (5dt)^2, (0.1dt)^2, (2dt)^2, (2dt)^2), R = 0.5^2.
NoiseConfig default_noise(double dt);

/// x(0) = [x0, y0, psi0, r_R, r_L], P(0) = diag(0.5^2, 0.5^2, (pi/180)^2, 0.5^2, 0.5^2).
GaussianBelief initial_belief(const RobotState& pose, double r_right = 2.0, double r_left = 2.0);

// -- EKF ----------------------------------------------------------------------

GaussianBelief ekf_predict(const GaussianBelief& belief, const FilterModel& model,
                           const NoiseConfig& noise);

struct UpdateResult {
  GaussianBelief belief;
  InnovationRecord innovation;
};

/// Joseph-form measurement update.
UpdateResult ekf_update(const GaussianBelief& belief, const SpeedMeasurement& z,
                        const FilterModel& model, const NoiseConfig& noise);

// -- UKF ----------------------------------------------------------------------

inline constexpr double kDefaultKappa = 0.001;

SigmaSet sigma_points(const GaussianBelief& belief, double kappa);

struct UkfPrediction {
  GaussianBelief belief;
  SigmaSet propagated;
};

UkfPrediction ukf_predict(const GaussianBelief& belief, const FilterModel& model,
                          const NoiseConfig& noise, double kappa = kDefaultKappa);

/// Sigma points are redrawn from the predicted belief so that P_zz carries Q.
UpdateResult ukf_update(const GaussianBelief& predicted, const SpeedMeasurement& z,
                        const FilterModel& model, const NoiseConfig& noise,
                        double kappa = kDefaultKappa);

struct Bounds {
  double lower{0.0};
  double upper{0.0};
};

Bounds two_sigma_bounds(const InnovationRecord& rec);

// -- convenience --------------------------------------------------------------

enum class SingleFilterKind { ekf, ukf };

/// Predict then update with one measurement; the single-filter tick used by the harness.
UpdateResult filter_cycle(SingleFilterKind kind, const GaussianBelief& belief,
                          const SpeedMeasurement& z, const ControlInput& u,
                          const RobotProcess& process, const NoiseConfig& noise,
                          double kappa = kDefaultKappa);

/// Symmetrize in place.
void symmetrize(Mat& m);

}  // namespace ftc
