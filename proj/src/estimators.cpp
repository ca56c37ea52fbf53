#include "ftc/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ftc {
namespace {

constexpr double kSymmetryTol = 1e-10;
constexpr double kPsdTol = 1e-10;
constexpr double kCholeskyJitter = 1e-12;

void check_dims(const GaussianBelief& belief) {
  const auto n = belief.mean.size();
  if (belief.cov.rows() != n || belief.cov.cols() != n) {
    throw std::invalid_argument("belief covariance does not match mean dimension");
  }
}

}  // namespace

void symmetrize(Mat& m) { m = 0.5 * (m + m.transpose()).eval(); }

void GaussianBelief::check() const {
  check_dims(*this);
  if (!mean.allFinite() || !cov.allFinite()) throw FilterDivergence("non-finite belief");
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > kSymmetryTol * scale) {
    throw FilterDivergence("covariance lost symmetry");
  }
  Eigen::SelfAdjointEigenSolver<Mat> eig(cov, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -kPsdTol * scale) {
    throw FilterDivergence("covariance is not positive semi-definite");
  }
}

// -- robot model ----------------------------------------------------------------

Vec process_model(const Vec& mean, const ControlInput& u, const RobotProcess& process) {
  const double rr = mean[idx::r_right];
  const double rl = mean[idx::r_left];
  const double v = 0.5 * (rr * u.omega_right + rl * u.omega_left);
  const double psi_dot = (rr * u.omega_right - rl * u.omega_left) / (2.0 * process.b);
  const double psi = mean[idx::psi];

  Vec next = mean;
  next[idx::x] += process.dt * v * std::cos(psi);
  next[idx::y] += process.dt * v * std::sin(psi);
  next[idx::psi] += process.dt * psi_dot;

  switch (process.radius) {
    case RadiusProcess::random_walk:
      break;
    case RadiusProcess::pinned:
      next[idx::r_right] = process.pinned_right;
      next[idx::r_left] = process.pinned_left;
      break;
    case RadiusProcess::ramp_left:
      next[idx::r_left] = std::max(process.ramp_floor, rl - process.ramp_rate * process.dt);
      break;
  }
  return next;
}

Mat process_jacobian(const Vec& mean, const ControlInput& u, const RobotProcess& process) {
  const double dt = process.dt;
  const double rr = mean[idx::r_right];
  const double rl = mean[idx::r_left];
  const double v = 0.5 * (rr * u.omega_right + rl * u.omega_left);
  const double c = std::cos(mean[idx::psi]);
  const double s = std::sin(mean[idx::psi]);

  Mat f = Mat::Identity(idx::size, idx::size);
  f(idx::x, idx::psi) = -dt * v * s;
  f(idx::x, idx::r_right) = dt * 0.5 * u.omega_right * c;
  f(idx::x, idx::r_left) = dt * 0.5 * u.omega_left * c;
  f(idx::y, idx::psi) = dt * v * c;
  f(idx::y, idx::r_right) = dt * 0.5 * u.omega_right * s;
  f(idx::y, idx::r_left) = dt * 0.5 * u.omega_left * s;
  f(idx::psi, idx::r_right) = dt * u.omega_right / (2.0 * process.b);
  f(idx::psi, idx::r_left) = -dt * u.omega_left / (2.0 * process.b);

  switch (process.radius) {
    case RadiusProcess::random_walk:
      break;
    case RadiusProcess::pinned:
      f(idx::r_right, idx::r_right) = 0.0;
      f(idx::r_left, idx::r_left) = 0.0;
      break;
    case RadiusProcess::ramp_left:
      if (rl - process.ramp_rate * dt <= process.ramp_floor) f(idx::r_left, idx::r_left) = 0.0;
      break;
  }
  return f;
}

double measurement_model(const Vec& mean, const ControlInput& u) {
  return 0.5 * (mean[idx::r_right] * u.omega_right + mean[idx::r_left] * u.omega_left);
}

Vec measurement_gradient(const ControlInput& u) {
  Vec h = Vec::Zero(idx::size);
  h[idx::r_right] = 0.5 * u.omega_right;
  h[idx::r_left] = 0.5 * u.omega_left;
  return h;
}

FilterModel robot_filter_model(const ControlInput& u, const RobotProcess& process) {
  FilterModel m;
  m.transition = [u, process](const Vec& x) { return process_model(x, u, process); };
  m.transition_jacobian = [u, process](const Vec& x) { return process_jacobian(x, u, process); };
  m.measure = [u](const Vec& x) { return measurement_model(x, u); };
  m.measure_gradient = [u](const Vec&) { return measurement_gradient(u); };
  return m;
}

NoiseConfig default_noise(double dt) {
  NoiseConfig n;
  Vec diag(idx::size);
  diag << std::pow(5.0 * dt, 2), std::pow(5.0 * dt, 2), std::pow(0.1 * dt, 2),
      std::pow(2.0 * dt, 2), std::pow(2.0 * dt, 2);
  n.q = diag.asDiagonal();
  n.r = 0.5 * 0.5;
  return n;
}

GaussianBelief initial_belief(const RobotState& pose, double r_right, double r_left) {
  GaussianBelief b;
  b.mean.resize(idx::size);
  b.mean << pose.x, pose.y, pose.psi, r_right, r_left;
  Vec diag(idx::size);
  const double heading_sd = std::numbers::pi / 180.0;
  diag << 0.25, 0.25, heading_sd * heading_sd, 0.25, 0.25;
  b.cov = diag.asDiagonal();
  return b;
}

// -- EKF --------------------------------------------------------------------------

GaussianBelief ekf_predict(const GaussianBelief& belief, const FilterModel& model,
                           const NoiseConfig& noise) {
  check_dims(belief);
  const Mat f = model.transition_jacobian(belief.mean);
  GaussianBelief out;
  out.mean = model.transition(belief.mean);
  out.cov = noise.q + f * belief.cov * f.transpose();
  symmetrize(out.cov);
  out.check();
  return out;
}

UpdateResult ekf_update(const GaussianBelief& belief, const SpeedMeasurement& z,
                        const FilterModel& model, const NoiseConfig& noise) {
  check_dims(belief);
  const Vec h = model.measure_gradient(belief.mean);
  const double z_hat = model.measure(belief.mean);
  const double nu = z.z - z_hat;
  const Vec ph = belief.cov * h;
  const double s = h.dot(ph) + noise.r;
  if (!(s > 0.0) || !std::isfinite(s)) throw FilterDivergence("innovation variance <= 0");

  const Vec k = ph / s;
  const auto n = belief.mean.size();
  const Mat i_kh = Mat::Identity(n, n) - k * h.transpose();

  UpdateResult out;
  out.belief.mean = belief.mean + k * nu;
  out.belief.cov = i_kh * belief.cov * i_kh.transpose() + noise.r * k * k.transpose();
  symmetrize(out.belief.cov);
  out.belief.check();
  out.innovation = {nu, s, z.t, z_hat};
  return out;
}

// -- UKF --------------------------------------------------------------------------

SigmaSet sigma_points(const GaussianBelief& belief, double kappa) {
  check_dims(belief);
  const auto n = belief.mean.size();
  const double spread = static_cast<double>(n) + kappa;
  if (!(spread > 0.0)) throw std::invalid_argument("n + kappa must be positive");

  Mat scaled = spread * belief.cov;
  Eigen::LLT<Mat> llt(scaled);
  if (llt.info() != Eigen::Success) {
    scaled += kCholeskyJitter * Mat::Identity(n, n);
    llt.compute(scaled);
    if (llt.info() != Eigen::Success) throw FilterDivergence("sigma-point Cholesky failed");
  }
  const Mat root = llt.matrixL();

  SigmaSet set;
  set.points.resize(n, 2 * n + 1);
  set.weights.resize(2 * n + 1);
  set.points.col(0) = belief.mean;
  set.weights[0] = kappa / spread;
  for (Eigen::Index i = 0; i < n; ++i) {
    set.points.col(1 + i) = belief.mean + root.col(i);
    set.points.col(1 + n + i) = belief.mean - root.col(i);
    set.weights[1 + i] = set.weights[1 + n + i] = 0.5 / spread;
  }
  return set;
}

UkfPrediction ukf_predict(const GaussianBelief& belief, const FilterModel& model,
                          const NoiseConfig& noise, double kappa) {
  const SigmaSet prior = sigma_points(belief, kappa);
  UkfPrediction out;
  out.propagated.weights = prior.weights;
  out.propagated.points.resize(prior.points.rows(), prior.points.cols());
  for (Eigen::Index i = 0; i < prior.points.cols(); ++i) {
    out.propagated.points.col(i) = model.transition(prior.points.col(i));
  }
  out.belief.mean = out.propagated.points * prior.weights;
  out.belief.cov = noise.q;
  for (Eigen::Index i = 0; i < prior.points.cols(); ++i) {
    const Vec d = out.propagated.points.col(i) - out.belief.mean;
    out.belief.cov += prior.weights[i] * d * d.transpose();
  }
  symmetrize(out.belief.cov);
  out.belief.check();
  return out;
}

UpdateResult ukf_update(const GaussianBelief& predicted, const SpeedMeasurement& z,
                        const FilterModel& model, const NoiseConfig& noise, double kappa) {
  const SigmaSet set = sigma_points(predicted, kappa);
  const Eigen::Index count = set.points.cols();
  Vec zs(count);
  for (Eigen::Index i = 0; i < count; ++i) zs[i] = model.measure(set.points.col(i));
  const double z_hat = zs.dot(set.weights);

  double p_zz = 0.0;
  Vec p_xz = Vec::Zero(predicted.mean.size());
  for (Eigen::Index i = 0; i < count; ++i) {
    const double dz = zs[i] - z_hat;
    p_zz += set.weights[i] * dz * dz;
    p_xz += set.weights[i] * dz * (set.points.col(i) - predicted.mean);
  }
  const double s = noise.r + p_zz;
  if (!(s > 0.0) || !std::isfinite(s)) throw FilterDivergence("innovation variance <= 0");

  const Vec k = p_xz / s;
  const double nu = z.z - z_hat;
  UpdateResult out;
  out.belief.mean = predicted.mean + k * nu;
  out.belief.cov = predicted.cov - s * k * k.transpose();
  symmetrize(out.belief.cov);
  out.belief.check();
  out.innovation = {nu, s, z.t, z_hat};
  return out;
}

Bounds two_sigma_bounds(const InnovationRecord& rec) {
  if (!(rec.s > 0.0)) throw std::invalid_argument("innovation variance must be positive");
  const double half = 2.0 * std::sqrt(rec.s);
  return {-half, half};
}

UpdateResult filter_cycle(SingleFilterKind kind, const GaussianBelief& belief,
                          const SpeedMeasurement& z, const ControlInput& u,
                          const RobotProcess& process, const NoiseConfig& noise, double kappa) {
  const FilterModel model = robot_filter_model(u, process);
  if (kind == SingleFilterKind::ekf) {
    return ekf_update(ekf_predict(belief, model, noise), z, model, noise);
  }
  return ukf_update(ukf_predict(belief, model, noise, kappa).belief, z, model, noise, kappa);
}

}  // namespace ftc
