#include "ftc/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ftc {
namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw std::invalid_argument(std::string("non-finite ") + what);
  }
}

RobotState advance(const RobotState& s, const StateRate& k, double h) {
  return {s.x + h * k.x_dot, s.y + h * k.y_dot, s.psi + h * k.psi_dot};
}

}  // namespace

void RobotParams::validate() const {
  if (!(r_right > 0.0) || !(r_left > 0.0) || !(b > 0.0) || !std::isfinite(r_right) ||
      !std::isfinite(r_left) || !std::isfinite(b)) {
    throw std::invalid_argument("robot parameters must be finite and positive");
  }
}

double forward_speed(const RobotParams& params, const ControlInput& u) {
  return 0.5 * (params.r_right * u.omega_right + params.r_left * u.omega_left);
}

double turn_rate(const RobotParams& params, const ControlInput& u) {
  return (params.r_right * u.omega_right - params.r_left * u.omega_left) / (2.0 * params.b);
}

ControlInput wheel_rates_for(const RobotParams& params, double speed, double psi_dot) {
  return {(speed + params.b * psi_dot) / params.r_right,
          (speed - params.b * psi_dot) / params.r_left};
}

StateRate derivatives(const RobotState& state, const ControlInput& u, const RobotParams& params) {
  params.validate();
  require_finite(state.x, "x");
  require_finite(state.y, "y");
  require_finite(state.psi, "psi");
  require_finite(u.omega_right, "omega_right");
  require_finite(u.omega_left, "omega_left");

  const double v = forward_speed(params, u);
  return {v * std::cos(state.psi), v * std::sin(state.psi), turn_rate(params, u)};
}

RobotState step_truth(const RobotState& state, const ControlInput& u, const RobotParams& params,
                      double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("step_truth: dt must be positive");
  const StateRate k1 = derivatives(state, u, params);
  const StateRate k2 = derivatives(advance(state, k1, 0.5 * dt), u, params);
  const StateRate k3 = derivatives(advance(state, k2, 0.5 * dt), u, params);
  const StateRate k4 = derivatives(advance(state, k3, dt), u, params);
  const double h = dt / 6.0;
  return {state.x + h * (k1.x_dot + 2.0 * k2.x_dot + 2.0 * k3.x_dot + k4.x_dot),
          state.y + h * (k1.y_dot + 2.0 * k2.y_dot + 2.0 * k3.y_dot + k4.y_dot),
          state.psi + h * (k1.psi_dot + 2.0 * k2.psi_dot + 2.0 * k3.psi_dot + k4.psi_dot)};
}

void FaultProfile::validate() const {
  if (kind == FaultKind::none) return;
  if (!(onset >= 0.0)) throw std::invalid_argument("fault onset must be >= 0");
  if (kind == FaultKind::step && !(step_fraction > 0.0 && step_fraction <= 1.0)) {
    throw std::invalid_argument("step fraction must lie in (0, 1]");
  }
  if (kind == FaultKind::ramp && (!(ramp_rate > 0.0) || !(floor > 0.0))) {
    throw std::invalid_argument("ramp rate and floor must be positive");
  }
}

RobotParams fault_radius(const FaultProfile& profile, const RobotParams& nominal, double t) {
  profile.validate();
  RobotParams out = nominal;
  if (profile.kind == FaultKind::none || t < profile.onset) return out;

  double& radius = profile.wheel == Wheel::left ? out.r_left : out.r_right;
  if (profile.kind == FaultKind::step) {
    radius *= profile.step_fraction;
  } else {
    const double elapsed = profile.absolute_time ? t : t - profile.onset;
    radius = std::max(profile.floor, radius - profile.ramp_rate * elapsed);
  }
  return out;
}

RobotParams apply_faults(std::span<const FaultProfile> profiles, const RobotParams& nominal,
                         double t) {
  RobotParams out = nominal;
  for (const auto& profile : profiles) out = fault_radius(profile, out, t);
  return out;
}

double NoiseStream::gaussian(double sigma) {
  if (sigma == 0.0) return 0.0;
  return sigma * normal_(engine_);
}

SpeedMeasurement measure_speed(double speed, double sigma, double t, NoiseStream& noise) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("measurement sigma must be >= 0");
  return {speed + noise.gaussian(sigma), t};
}

}  // namespace ftc
