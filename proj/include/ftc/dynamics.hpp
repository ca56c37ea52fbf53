#pragma once

// Differential-drive truth model with per-wheel radii, wheel-puncture fault
// profiles, and noisy speed measurement synthesis.

#include <cstdint>
#include <numbers>
#include <random>
#include <span>

namespace ftc {

inline constexpr double kDegToRad = std::numbers::pi / 180.0;

/// Wheel angular-rate limit (1000 deg/s) in rad/s.
inline constexpr double kOmegaLimit = 1000.0 * kDegToRad;

/// Planar pose of the axle midpoint. `psi` is kept unwrapped.
struct RobotState {
  double x{0.0};
  double y{0.0};
  double psi{0.0};
};

struct RobotParams {
  double r_right{2.0};
  double r_left{2.0};
  double b{1.0};  ///< half axle distance

  void validate() const;
};

struct ControlInput {
  double omega_right{0.0};
  double omega_left{0.0};
};

struct StateRate {
  double x_dot{0.0};
  double y_dot{0.0};
  double psi_dot{0.0};
};

/// V = (r_R wR + r_L wL) / 2
double forward_speed(const RobotParams& params, const ControlInput& u);

/// psi_dot = (r_R wR - r_L wL) / (2b)
double turn_rate(const RobotParams& params, const ControlInput& u);

/// Wheel rates that realise a body speed and turn rate for the given radii.
ControlInput wheel_rates_for(const RobotParams& params, double speed, double psi_dot);

StateRate derivatives(const RobotState& state, const ControlInput& u, const RobotParams& params);

/// One fixed-step RK4 step with the control and parameters held constant.
RobotState step_truth(const RobotState& state, const ControlInput& u, const RobotParams& params,
                      double dt);

enum class FaultKind { none, step, ramp };
enum class Wheel { left, right };

struct FaultProfile {
  FaultKind kind{FaultKind::none};
  Wheel wheel{Wheel::left};
  double onset{0.0};
  double step_fraction{0.5};
  double ramp_rate{0.1};
  double floor{0.1};
  /// Ramp measured from t = 0 instead of from the onset (r = r0 - rate * t).
  bool absolute_time{false};

  void validate() const;
};

/// Radii in effect at time t for a single fault profile.
RobotParams fault_radius(const FaultProfile& profile, const RobotParams& nominal, double t);

/// Applies several profiles in sequence (each acts on the output of the previous one).
RobotParams apply_faults(std::span<const FaultProfile> profiles, const RobotParams& nominal,
                         double t);

struct SpeedMeasurement {
  double z{0.0};
  double t{0.0};
};

/// Seeded Gaussian noise source. One stream per simulation run.
class NoiseStream {
 public:
  explicit NoiseStream(std::uint64_t seed) : engine_(seed) {}

  double gaussian(double sigma);

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

SpeedMeasurement measure_speed(double speed, double sigma, double t, NoiseStream& noise);

}  // namespace ftc
