#include "ftc/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace ftc {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

int var_count(const CollocationBasis& basis) { return layout::per_node * basis.size(); }
int eq_count(const CollocationBasis& basis) { return 3 * basis.size() + 3; }

double clamp_omega(double w, double limit) { return std::clamp(w, -limit, limit); }

ControlInput clamp_control(const ControlInput& u, double limit) {
  return {clamp_omega(u.omega_right, limit), clamp_omega(u.omega_left, limit)};
}

void check_context(const OcpContext& ctx, const CollocationBasis& basis) {
  if (ctx.ref == nullptr || !*ctx.ref) throw std::invalid_argument("OCP needs a reference signal");
  if (!(ctx.horizon > 0.0)) throw std::invalid_argument("OCP horizon must be positive");
  if (basis.size() < 2 || basis.d.rows() != basis.size()) {
    throw std::invalid_argument("OCP basis is inconsistent");
  }
  ctx.params.validate();
  ctx.weights.validate();
  ctx.bounds.validate();
}

// Weighted tracking residuals; linear in the decision vector, so the Jacobian is fixed.
void add_objective(NlpProblem& p, const OcpContext& ctx, const CollocationBasis& basis,
                   const TimeMap& tm) {
  const int nodes = basis.size();
  VectorXd target(4 * nodes);
  MatrixXd jac = MatrixXd::Zero(4 * nodes, var_count(basis));
  const double rr = ctx.params.r_right;
  const double rl = ctx.params.r_left;
  const double b = ctx.params.b;
  for (int j = 0; j < nodes; ++j) {
    const ReferencePoint ref = (*ctx.ref)(tm.times[j]);
    const double c = std::sqrt(tm.scale * basis.weights[j]);
    const double cx = c * std::sqrt(ctx.weights.q_x);
    const double cy = c * std::sqrt(ctx.weights.q_y);
    const double cv = c * std::sqrt(ctx.weights.q_v);
    const double cw = c * std::sqrt(ctx.weights.q_psi);
    jac(4 * j, layout::at(j, layout::x)) = cx;
    jac(4 * j + 1, layout::at(j, layout::y)) = cy;
    jac(4 * j + 2, layout::at(j, layout::omega_right)) = cv * 0.5 * rr;
    jac(4 * j + 2, layout::at(j, layout::omega_left)) = cv * 0.5 * rl;
    jac(4 * j + 3, layout::at(j, layout::omega_right)) = cw * rr / (2.0 * b);
    jac(4 * j + 3, layout::at(j, layout::omega_left)) = -cw * rl / (2.0 * b);
    target[4 * j] = cx * ref.x;
    target[4 * j + 1] = cy * ref.y;
    target[4 * j + 2] = cv * ref.v;
    target[4 * j + 3] = cw * ref.psi_dot;
  }
  p.residuals = [jac, target](const VectorXd& z, VectorXd& r, MatrixXd* j) {
    r = jac * z - target;
    if (j) *j = jac;
  };
}

void add_bounds(NlpProblem& p, const OcpContext& ctx, const CollocationBasis& basis,
                const TimeMap& tm) {
  const int nodes = basis.size();
  const int n = var_count(basis);
  const double w_max = ctx.bounds.omega_max;
  p.lower.resize(n);
  p.upper.resize(n);
  for (int j = 0; j < nodes; ++j) {
    for (int c = 0; c < 3; ++c) {
      p.lower[layout::at(j, c)] = ctx.bounds.state_lower[c];
      p.upper[layout::at(j, c)] = ctx.bounds.state_upper[c];
    }
    for (int c = layout::omega_right; c <= layout::omega_left; ++c) {
      p.lower[layout::at(j, c)] = -w_max;
      p.upper[layout::at(j, c)] = w_max;
    }
  }
  if (ctx.previous) {
    const double d = ctx.bounds.delta_omega;
    const double prev[2] = {clamp_omega(ctx.previous->omega_right, w_max),
                            clamp_omega(ctx.previous->omega_left, w_max)};
    for (int w = 0; w < 2; ++w) {
      const int k = layout::at(0, layout::omega_right + w);
      p.lower[k] = std::max(p.lower[k], prev[w] - d);
      p.upper[k] = std::min(p.upper[k], prev[w] + d);
    }
  }

  // Rate bound between consecutive nodes, scaled by the node spacing.
  const int rows = 2 * (nodes - 1);
  p.linear = MatrixXd::Zero(rows, n);
  p.linear_lower.resize(rows);
  p.linear_upper.resize(rows);
  for (int j = 0; j + 1 < nodes; ++j) {
    const double gap = tm.times[j + 1] - tm.times[j];
    const double limit = ctx.bounds.delta_omega * gap / ctx.bounds.control_period;
    for (int w = 0; w < 2; ++w) {
      const int row = 2 * j + w;
      p.linear(row, layout::at(j + 1, layout::omega_right + w)) = 1.0;
      p.linear(row, layout::at(j, layout::omega_right + w)) = -1.0;
      p.linear_lower[row] = -limit;
      p.linear_upper[row] = limit;
    }
  }
}

Eigen::Vector3d kinematics(double psi, double wr, double wl, const RobotParams& params) {
  const double v = 0.5 * (params.r_right * wr + params.r_left * wl);
  return {v * std::cos(psi), v * std::sin(psi),
          (params.r_right * wr - params.r_left * wl) / (2.0 * params.b)};
}

}  // namespace

void OcpWeights::validate() const {
  if (!(q_x > 0.0 && q_y > 0.0 && q_v > 0.0 && q_psi > 0.0)) {
    throw std::invalid_argument("OCP weights must be positive");
  }
}

void OcpBounds::validate() const {
  if (!(omega_max > 0.0) || !(delta_omega > 0.0) || !(control_period > 0.0)) {
    throw std::invalid_argument("OCP bounds must be positive");
  }
  if ((state_lower.array() > state_upper.array()).any()) {
    throw std::invalid_argument("OCP state bounds have lower > upper");
  }
}

ReferenceSignal build_reference_circle(double radius, double speed, double center_x,
                                       double center_y, double phase) {
  if (!(radius > 0.0) || !(speed > 0.0)) {
    throw std::invalid_argument("circle reference needs positive radius and speed");
  }
  const double rate = speed / radius;
  return [=](double t) {
    const double theta = phase + rate * t;
    return ReferencePoint{center_x + radius * std::cos(theta), center_y + radius * std::sin(theta),
                          speed, rate, theta + 0.5 * std::numbers::pi};
  };
}

ReferenceSignal build_reference_line(double speed, double x0, double y0, double heading) {
  if (!(speed > 0.0)) throw std::invalid_argument("line reference needs positive speed");
  return [=](double t) {
    return ReferencePoint{x0 + speed * t * std::cos(heading), y0 + speed * t * std::sin(heading),
                          speed, 0.0, heading};
  };
}

RobotState reference_pose(const ReferenceSignal& ref, double t) {
  const ReferencePoint p = ref(t);
  return {p.x, p.y, p.psi};
}

NlpProblem transcribe(const OcpContext& ctx, const CollocationBasis& basis) {
  check_context(ctx, basis);
  const TimeMap tm = time_map(basis, ctx.t0, ctx.t0 + ctx.horizon);
  const int nodes = basis.size();
  NlpProblem p;
  p.n_vars = var_count(basis);
  add_objective(p, ctx, basis, tm);
  add_bounds(p, ctx, basis, tm);

  const MatrixXd d = basis.d;
  const double scale = tm.scale;
  const RobotParams params = ctx.params;
  const RobotState x0 = ctx.x_now;
  const int m = eq_count(basis);
  const int n = p.n_vars;

  p.equalities = [=](const VectorXd& z, VectorXd& c, MatrixXd* jac) {
    c.resize(m);
    if (jac) jac->setZero(m, n);
    for (int comp = 0; comp < 3; ++comp) {
      VectorXd s(nodes);
      for (int k = 0; k < nodes; ++k) s[k] = z[layout::at(k, comp)];
      const VectorXd ds = d * s;
      for (int i = 0; i < nodes; ++i) c[3 * i + comp] = ds[i];
      if (jac) {
        for (int i = 0; i < nodes; ++i)
          for (int k = 0; k < nodes; ++k) (*jac)(3 * i + comp, layout::at(k, comp)) = d(i, k);
      }
    }
    const double rr = params.r_right;
    const double rl = params.r_left;
    for (int i = 0; i < nodes; ++i) {
      const double psi = z[layout::at(i, layout::psi)];
      const double wr = z[layout::at(i, layout::omega_right)];
      const double wl = z[layout::at(i, layout::omega_left)];
      const Eigen::Vector3d f = kinematics(psi, wr, wl, params);
      for (int comp = 0; comp < 3; ++comp) c[3 * i + comp] -= scale * f[comp];
      if (jac) {
        const double v = 0.5 * (rr * wr + rl * wl);
        const double cs = std::cos(psi);
        const double sn = std::sin(psi);
        auto& J = *jac;
        J(3 * i, layout::at(i, layout::psi)) += scale * v * sn;
        J(3 * i, layout::at(i, layout::omega_right)) -= scale * 0.5 * rr * cs;
        J(3 * i, layout::at(i, layout::omega_left)) -= scale * 0.5 * rl * cs;
        J(3 * i + 1, layout::at(i, layout::psi)) -= scale * v * cs;
        J(3 * i + 1, layout::at(i, layout::omega_right)) -= scale * 0.5 * rr * sn;
        J(3 * i + 1, layout::at(i, layout::omega_left)) -= scale * 0.5 * rl * sn;
        J(3 * i + 2, layout::at(i, layout::omega_right)) -= scale * rr / (2.0 * params.b);
        J(3 * i + 2, layout::at(i, layout::omega_left)) += scale * rl / (2.0 * params.b);
      }
    }
    const double pin[3] = {x0.x, x0.y, x0.psi};
    for (int comp = 0; comp < 3; ++comp) {
      c[3 * nodes + comp] = z[layout::at(0, comp)] - pin[comp];
      if (jac) (*jac)(3 * nodes + comp, layout::at(0, comp)) = 1.0;
    }
  };

  p.equality_curvature = [=](const VectorXd& z, const VectorXd& lambda) {
    MatrixXd h = MatrixXd::Zero(n, n);
    const double rr = params.r_right;
    const double rl = params.r_left;
    for (int i = 0; i < nodes; ++i) {
      const int ip = layout::at(i, layout::psi);
      const int ir = layout::at(i, layout::omega_right);
      const int il = layout::at(i, layout::omega_left);
      const double psi = z[ip];
      const double v = 0.5 * (rr * z[ir] + rl * z[il]);
      const double cs = std::cos(psi);
      const double sn = std::sin(psi);
      const double lx = lambda[3 * i];
      const double ly = lambda[3 * i + 1];
      // Constraint is D s - scale f, so its curvature is -scale times that of f.
      h(ip, ip) += -scale * (lx * (-v * cs) + ly * (-v * sn));
      const double cross_r = -scale * (lx * (-0.5 * rr * sn) + ly * (0.5 * rr * cs));
      const double cross_l = -scale * (lx * (-0.5 * rl * sn) + ly * (0.5 * rl * cs));
      h(ip, ir) += cross_r;
      h(ir, ip) += cross_r;
      h(ip, il) += cross_l;
      h(il, ip) += cross_l;
    }
    return h;
  };
  return p;
}

Linearization linearize(const RobotState& state, const ControlInput& u, const RobotParams& params) {
  const double rr = params.r_right;
  const double rl = params.r_left;
  const double v = 0.5 * (rr * u.omega_right + rl * u.omega_left);
  const double cs = std::cos(state.psi);
  const double sn = std::sin(state.psi);
  Linearization lin;
  lin.f0 = kinematics(state.psi, u.omega_right, u.omega_left, params);
  lin.a.setZero();
  lin.a(0, 2) = -v * sn;
  lin.a(1, 2) = v * cs;
  lin.b << 0.5 * rr * cs, 0.5 * rl * cs, 0.5 * rr * sn, 0.5 * rl * sn, rr / (2.0 * params.b),
      -rl / (2.0 * params.b);
  return lin;
}

NlpProblem transcribe_linear(const OcpContext& ctx, const CollocationBasis& basis) {
  check_context(ctx, basis);
  const TimeMap tm = time_map(basis, ctx.t0, ctx.t0 + ctx.horizon);
  const int nodes = basis.size();
  NlpProblem p;
  p.n_vars = var_count(basis);
  add_objective(p, ctx, basis, tm);
  add_bounds(p, ctx, basis, tm);

  const ReferencePoint ref0 = (*ctx.ref)(ctx.t0);
  const ControlInput u_bar = wheel_rates_for(ctx.params, ref0.v, ref0.psi_dot);
  const Linearization lin = linearize(ctx.x_now, u_bar, ctx.params);
  const Eigen::Vector3d s_bar{ctx.x_now.x, ctx.x_now.y, ctx.x_now.psi};
  const Eigen::Vector2d u_vec{u_bar.omega_right, u_bar.omega_left};
  const Eigen::Vector3d offset = lin.f0 - lin.a * s_bar - lin.b * u_vec;

  // c(z) = J z - rhs, constant J.
  const int m = eq_count(basis);
  const int n = p.n_vars;
  const double scale = tm.scale;
  MatrixXd jac = MatrixXd::Zero(m, n);
  VectorXd rhs = VectorXd::Zero(m);
  for (int i = 0; i < nodes; ++i) {
    for (int comp = 0; comp < 3; ++comp) {
      const int row = 3 * i + comp;
      for (int k = 0; k < nodes; ++k) jac(row, layout::at(k, comp)) = basis.d(i, k);
      for (int s = 0; s < 3; ++s) jac(row, layout::at(i, s)) -= scale * lin.a(comp, s);
      for (int w = 0; w < 2; ++w) {
        jac(row, layout::at(i, layout::omega_right + w)) -= scale * lin.b(comp, w);
      }
      rhs[row] = scale * offset[comp];
    }
  }
  for (int comp = 0; comp < 3; ++comp) {
    jac(3 * nodes + comp, layout::at(0, comp)) = 1.0;
    rhs[3 * nodes + comp] = s_bar[comp];
  }
  p.equalities = [jac, rhs](const VectorXd& z, VectorXd& c, MatrixXd* j) {
    c = jac * z - rhs;
    if (j) *j = jac;
  };
  return p;
}

VectorXd reference_guess(const OcpContext& ctx, const CollocationBasis& basis) {
  check_context(ctx, basis);
  const TimeMap tm = time_map(basis, ctx.t0, ctx.t0 + ctx.horizon);
  VectorXd z(var_count(basis));
  for (int j = 0; j < basis.size(); ++j) {
    const ReferencePoint ref = (*ctx.ref)(tm.times[j]);
    const ControlInput u = clamp_control(wheel_rates_for(ctx.params, ref.v, ref.psi_dot),
                                         ctx.bounds.omega_max);
    z[layout::at(j, layout::x)] = ref.x;
    z[layout::at(j, layout::y)] = ref.y;
    z[layout::at(j, layout::psi)] = ref.psi;
    z[layout::at(j, layout::omega_right)] = u.omega_right;
    z[layout::at(j, layout::omega_left)] = u.omega_left;
  }
  return z;
}

MpcSolution unpack_solution(const NlpResult& result, const CollocationBasis& basis,
                            const TimeMap& times) {
  const int nodes = basis.size();
  MpcSolution s;
  s.decision = result.x;
  s.times = times.times;
  s.states.resize(nodes, 3);
  s.controls.resize(nodes, 2);
  for (int j = 0; j < nodes; ++j) {
    for (int c = 0; c < 3; ++c) s.states(j, c) = result.x[layout::at(j, c)];
    for (int w = 0; w < 2; ++w) s.controls(j, w) = result.x[layout::at(j, layout::omega_right + w)];
  }
  s.first = {s.controls(0, 0), s.controls(0, 1)};
  s.objective = result.objective;
  s.status = result.status;
  s.iterations = result.iterations;
  return s;
}

std::string_view to_string(ControllerStatus status) {
  switch (status) {
    case ControllerStatus::ok:
      return "ok";
    case ControllerStatus::held:
      return "held";
    case ControllerStatus::failed:
      return "failed";
  }
  return "unknown";
}

MpcController::MpcController(ControllerConfig config, ReferenceSignal reference)
    : config_(std::move(config)), reference_(std::move(reference)) {
  if (config_.nodes < 2) throw std::invalid_argument("controller needs at least 2 nodes");
  if (!(config_.horizon > 0.0)) throw std::invalid_argument("controller horizon must be positive");
  if (!reference_) throw std::invalid_argument("controller needs a reference");
  config_.weights.validate();
  config_.bounds.validate();
  basis_ = &cached_lgl_basis(config_.nodes);
}

VectorXd MpcController::warm_start(const OcpContext& ctx) const {
  const CollocationBasis& basis = *basis_;
  if (!accepted_) {
    VectorXd z = reference_guess(ctx, basis);
    z[layout::at(0, layout::x)] = ctx.x_now.x;
    z[layout::at(0, layout::y)] = ctx.x_now.y;
    z[layout::at(0, layout::psi)] = ctx.x_now.psi;
    return z;
  }
  // Shift the previous solution onto the new node times, holding its end values past the horizon.
  const MpcSolution& prev = *accepted_;
  const TimeMap tm = time_map(basis, ctx.t0, ctx.t0 + ctx.horizon);
  const double t_start = prev.times[0];
  const double half = 0.5 * (prev.times[basis.degree] - t_start);
  VectorXd z(var_count(basis));
  for (int j = 0; j < basis.size(); ++j) {
    const double tau = std::min(1.0, (tm.times[j] - t_start) / half - 1.0);
    for (int c = 0; c < 3; ++c) z[layout::at(j, c)] = interpolate(basis, prev.states.col(c), tau);
    for (int w = 0; w < 2; ++w) {
      z[layout::at(j, layout::omega_right + w)] =
          clamp_omega(interpolate(basis, prev.controls.col(w), tau), config_.bounds.omega_max);
    }
  }
  const double offset[3] = {ctx.x_now.x - z[layout::at(0, 0)], ctx.x_now.y - z[layout::at(0, 1)],
                            ctx.x_now.psi - z[layout::at(0, 2)]};
  for (int j = 0; j < basis.size(); ++j)
    for (int c = 0; c < 3; ++c) z[layout::at(j, c)] += offset[c];
  return z;
}

ControlInput MpcController::step(const RobotState& x_now, const RobotParams& params_est, double t) {
  OcpContext ctx;
  ctx.ref = &reference_;
  ctx.t0 = t;
  ctx.horizon = config_.horizon;
  ctx.x_now = x_now;
  ctx.params = params_est;
  ctx.weights = config_.weights;
  ctx.bounds = config_.bounds;
  ctx.previous = applied_;

  const CollocationBasis& basis = *basis_;
  const NlpProblem problem = config_.kind == ControllerKind::nmpc ? transcribe(ctx, basis)
                                                                  : transcribe_linear(ctx, basis);
  const NlpResult result = solve_nlp(problem, warm_start(ctx), config_.options);
  solution_ = unpack_solution(result, basis, time_map(basis, t, t + config_.horizon));

  const double limit = config_.bounds.omega_max;
  if (solution_.status == SolverStatus::converged) {
    failures_ = 0;
    status_ = ControllerStatus::ok;
    accepted_ = solution_;
    applied_ = clamp_control(solution_.first, limit);
    return *applied_;
  }

  ++failures_;
  status_ = failures_ > config_.failure_limit ? ControllerStatus::failed : ControllerStatus::held;
  if (config_.kind == ControllerKind::lmpc || !applied_) {
    // Clamp-to-bounds fallback on the best iterate.
    applied_ = clamp_control(solution_.first, limit);
  }
  return *applied_;
}

RobotState MpcController::predict(double t) const {
  if (!accepted_) throw std::logic_error("no accepted solution to predict from");
  const MpcSolution& s = *accepted_;
  const double t0 = s.times[0];
  const double half = 0.5 * (s.times[basis_->degree] - t0);
  const double tau = std::clamp((t - t0) / half - 1.0, -1.0, 1.0);
  return {interpolate(*basis_, s.states.col(0), tau), interpolate(*basis_, s.states.col(1), tau),
          interpolate(*basis_, s.states.col(2), tau)};
}

}  // namespace ftc
