// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
// An optional argument restricts the run to criteria whose name contains it.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ftc/harness.hpp"

using namespace ftc;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Time allowed for mode probabilities to switch after a step fault.
constexpr double kModeConvergence = 0.5;

struct Outcome {
  bool pass{true};
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += (ok ? "" : "[x] ") + what;
  }
};

std::string fmt(const char* format, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, a);
  return buf;
}

std::string fmt(const char* format, double a, double b) {
  char buf[96];
  std::snprintf(buf, sizeof buf, format, a, b);
  return buf;
}

// -- run cache ---------------------------------------------------------------------

std::map<std::string, SimLog> g_runs;
double g_max_abs_control = 0.0;

ScenarioConfig config(int scenario, FilterKind filter, int modes = 4, bool feedback = true,
                      ControllerKind controller = ControllerKind::nmpc, std::uint64_t seed = 1) {
  ScenarioConfig cfg;
  cfg.scenario = scenario;
  cfg.filter = filter;
  cfg.imm_modes = modes;
  cfg.feedback = feedback;
  cfg.controller = controller;
  cfg.seed = seed;
  return cfg;
}

std::string key(const ScenarioConfig& cfg) {
  return std::to_string(cfg.scenario) + "/" + cfg.label() + "/" + (cfg.feedback ? "on" : "off") + "/" +
         std::string(to_string(cfg.controller)) + "/" + std::to_string(cfg.seed);
}

void track_controls(const SimLog& log) {
  for (const auto& row : log.rows) {
    g_max_abs_control = std::max({g_max_abs_control, std::abs(row.omega_right_cmd),
                                  std::abs(row.omega_left_cmd)});
  }
}

const SimLog& run(const ScenarioConfig& cfg) {
  const std::string k = key(cfg);
  auto it = g_runs.find(k);
  if (it != g_runs.end()) return it->second;
  const auto start = std::chrono::steady_clock::now();
  SimLog log = run_scenario(cfg);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::fprintf(stderr, "  ran %s in %.1f s\n", k.c_str(), wall);
  track_controls(log);
  return g_runs.emplace(k, std::move(log)).first->second;
}

std::string csv_text(const SimLog& log) {
  std::ostringstream out;
  write_csv(log, out);
  return out.str();
}

// -- oracle helpers -------------------------------------------------------------------

Mat random_spd(std::mt19937_64& rng, int n, double scale) {
  std::normal_distribution<double> g(0.0, 1.0);
  Mat a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = g(rng);
  return scale * (a * a.transpose() / n + 0.05 * Mat::Identity(n, n));
}

GaussianBelief random_belief(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(-2.0, 2.0);
  std::uniform_real_distribution<double> radius(0.5, 2.5);
  GaussianBelief b;
  b.mean.resize(idx::size);
  b.mean << 10 * uni(rng), 10 * uni(rng), uni(rng), radius(rng), radius(rng);
  b.cov = random_spd(rng, idx::size, 0.1);
  return b;
}

FilterModel linear_model(const Mat& a, const Vec& c) {
  FilterModel m;
  m.transition = [a](const Vec& x) { return Vec(a * x); };
  m.transition_jacobian = [a](const Vec&) { return a; };
  m.measure = [c](const Vec& x) { return c.dot(x); };
  m.measure_gradient = [c](const Vec&) { return c; };
  return m;
}

// Two-mode scalar IMM for x' = a_j x + w, z = x + v, written directly from the recursion.
struct ScalarImm {
  std::array<double, 2> x;
  std::array<double, 2> p;
  std::array<double, 2> mu;
  std::array<std::array<double, 2>, 2> trans;
  std::array<double, 2> a;
  std::array<double, 2> q;
  double r;

  double step(double z) {
    std::array<double, 2> cbar{};
    for (int j = 0; j < 2; ++j) cbar[j] = trans[0][j] * mu[0] + trans[1][j] * mu[1];
    double w[2][2];
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) w[i][j] = trans[i][j] * mu[i] / cbar[j];
    std::array<double, 2> x0{};
    std::array<double, 2> p0{};
    for (int j = 0; j < 2; ++j) {
      x0[j] = w[0][j] * x[0] + w[1][j] * x[1];
      for (int i = 0; i < 2; ++i) {
        const double d = x[i] - x0[j];
        p0[j] += w[i][j] * (p[i] + d * d);
      }
    }
    std::array<double, 2> lik{};
    for (int j = 0; j < 2; ++j) {
      const double xp = a[j] * x0[j];
      const double pp = a[j] * p0[j] * a[j] + q[j];
      const double s = pp + r;
      const double k = pp / s;
      const double nu = z - xp;
      x[j] = xp + k * nu;
      p[j] = (1 - k) * pp * (1 - k) + k * r * k;
      lik[j] = std::exp(-0.5 * nu * nu / s) / std::sqrt(2.0 * M_PI * s);
    }
    const double c = lik[0] * cbar[0] + lik[1] * cbar[1];
    for (int j = 0; j < 2; ++j) mu[j] = lik[j] * cbar[j] / c;
    return mu[0] * x[0] + mu[1] * x[1];
  }
};

NlpProblem unconstrained(int n) {
  NlpProblem p;
  p.n_vars = n;
  p.lower = VectorXd::Constant(n, -kInf);
  p.upper = VectorXd::Constant(n, kInf);
  return p;
}

// -- criteria ---------------------------------------------------------------------------

Outcome quadrature() {
  Outcome out;
  double worst_quad = 0.0;
  double worst_diff = 0.0;
  for (int n = 2; n <= 12; ++n) {
    const CollocationBasis b = lgl_basis(n);
    for (int k = 0; k <= 2 * n - 1; ++k) {
      const double exact = (k % 2 == 1) ? 0.0 : 2.0 / (k + 1);
      const double q = b.weights.dot(b.nodes.array().pow(k).matrix());
      worst_quad = std::max(worst_quad, exact == 0.0 ? std::abs(q) : std::abs(q - exact) / exact);
    }
    for (int k = 1; k <= n; ++k) {
      const VectorXd f = b.nodes.array().pow(k);
      const VectorXd df = k * b.nodes.array().pow(k - 1);
      worst_diff = std::max(worst_diff, (b.d * f - df).cwiseAbs().maxCoeff() /
                                            std::max(1.0, df.cwiseAbs().maxCoeff()));
    }
  }
  out.require(worst_quad < 1e-9, fmt("quadrature error %.2e", worst_quad));
  out.require(worst_diff < 1e-9, fmt("differentiation error %.2e", worst_diff));
  const CollocationBasis b2 = lgl_basis(2);
  const double hand = std::max({std::abs(b2.nodes[0] + 1.0), std::abs(b2.nodes[1]),
                                std::abs(b2.nodes[2] - 1.0), std::abs(b2.weights[0] - 1.0 / 3.0),
                                std::abs(b2.weights[1] - 4.0 / 3.0), std::abs(b2.weights[2] - 1.0 / 3.0)});
  out.require(hand < 1e-14, fmt("N=2 hand values error %.2e", hand));
  return out;
}

Outcome filter_oracles() {
  Outcome out;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);

  double linear_gap = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    Mat a = Mat::Identity(5, 5);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) a(i, j) += 0.1 * g(rng);
    Vec c(5);
    for (int i = 0; i < 5; ++i) c[i] = g(rng);
    const FilterModel model = linear_model(a, c);
    const NoiseConfig noise{random_spd(rng, 5, 0.01), 0.3};
    GaussianBelief ekf = random_belief(rng);
    GaussianBelief ukf = ekf;
    for (int step = 0; step < 10; ++step) {
      const SpeedMeasurement z{g(rng), step * 0.01};
      const auto ue = ekf_update(ekf_predict(ekf, model, noise), z, model, noise);
      const auto uu = ukf_update(ukf_predict(ukf, model, noise).belief, z, model, noise);
      linear_gap = std::max({linear_gap, (ue.belief.mean - uu.belief.mean).cwiseAbs().maxCoeff(),
                             (ue.belief.cov - uu.belief.cov).cwiseAbs().maxCoeff(),
                             std::abs(ue.innovation.s - uu.innovation.s)});
      ekf = ue.belief;
      ukf = uu.belief;
    }
  }
  out.require(linear_gap < 1e-9, fmt("EKF vs UKF on a linear model %.2e", linear_gap));

  double moment_gap = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const GaussianBelief b = random_belief(rng);
    const SigmaSet s = sigma_points(b, kDefaultKappa);
    const Vec mean = s.points * s.weights;
    Mat cov = Mat::Zero(5, 5);
    for (Eigen::Index i = 0; i < s.points.cols(); ++i) {
      const Vec d = s.points.col(i) - mean;
      cov += s.weights[i] * d * d.transpose();
    }
    moment_gap = std::max({moment_gap, (mean - b.mean).cwiseAbs().maxCoeff(),
                           (cov - b.cov).cwiseAbs().maxCoeff()});
  }
  out.require(moment_gap < 1e-9, fmt("unscented moment identity %.2e", moment_gap));

  double jac_gap = 0.0;
  std::uniform_real_distribution<double> w(-15.0, 15.0);
  for (int trial = 0; trial < 100; ++trial) {
    const GaussianBelief b = random_belief(rng);
    const ControlInput u{w(rng), w(rng)};
    const RobotProcess proc;
    const Mat f = process_jacobian(b.mean, u, proc);
    const Vec hgrad = measurement_gradient(u);
    Mat fd(5, 5);
    Vec hd(5);
    for (int j = 0; j < 5; ++j) {
      const double h = 1e-6 * std::max(1.0, std::abs(b.mean[j]));
      Vec lo = b.mean;
      Vec hi = b.mean;
      lo[j] -= h;
      hi[j] += h;
      fd.col(j) = (process_model(hi, u, proc) - process_model(lo, u, proc)) / (2 * h);
      hd[j] = (measurement_model(hi, u) - measurement_model(lo, u)) / (2 * h);
    }
    jac_gap = std::max({jac_gap, (f - fd).cwiseAbs().maxCoeff() / std::max(1.0, f.cwiseAbs().maxCoeff()),
                        (hgrad - hd).cwiseAbs().maxCoeff() / std::max(1.0, hgrad.cwiseAbs().maxCoeff())});
  }
  out.require(jac_gap < 1e-6, fmt("Jacobians vs finite differences %.2e", jac_gap));

  const std::array<double, 2> a{1.0, 0.9};
  const std::array<double, 2> q{0.01, 0.05};
  const double r = 0.2;
  ImmBank bank;
  for (int j = 0; j < 2; ++j) {
    GaussianBelief bj;
    bj.mean = Vec::Constant(1, j == 0 ? 0.0 : 1.0);
    bj.cov = Mat::Constant(1, 1, j == 0 ? 1.0 : 2.0);
    bank.specs.push_back({"m", bj.mean, ModeProcess::nominal});
    bank.beliefs.push_back(bj);
  }
  bank.mu = Vec(2);
  bank.mu << 0.6, 0.4;
  bank.p = Mat(2, 2);
  bank.p << 0.95, 0.05, 0.1, 0.9;
  ScalarImm oracle{{0.0, 1.0}, {1.0, 2.0}, {0.6, 0.4}, {{{0.95, 0.05}, {0.1, 0.9}}}, a, q, r};
  std::mt19937_64 zrng(77);
  double truth = 0.5;
  double imm_gap = 0.0;
  for (int k = 0; k < 100; ++k) {
    truth = (k < 50 ? a[0] : a[1]) * truth + 0.1 * g(zrng) + 0.05;
    const double z = truth + std::sqrt(r) * g(zrng);
    const auto res = imm_cycle(bank, [&](std::size_t j, const GaussianBelief& mixed) {
      FilterModel m;
      const double aj = a[j];
      m.transition = [aj](const Vec& x) { return Vec(aj * x); };
      m.transition_jacobian = [aj](const Vec&) { return Mat::Constant(1, 1, aj); };
      m.measure = [](const Vec& x) { return x[0]; };
      m.measure_gradient = [](const Vec&) { return Vec::Ones(1); };
      const NoiseConfig noise{Mat::Constant(1, 1, q[j]), r};
      return ekf_update(ekf_predict(mixed, m, noise), {z, 0.0}, m, noise);
    });
    bank = res.bank;
    const double expected = oracle.step(z);
    imm_gap = std::max({imm_gap, std::abs(res.combined.mean[0] - expected),
                        std::abs(bank.mu[0] - oracle.mu[0])});
  }
  out.require(imm_gap < 1e-12, fmt("IMM vs scalar recursion %.2e", imm_gap));
  return out;
}

Outcome consistency() {
  Outcome out;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const double c = innovation_coverage(run(config(1, FilterKind::ukf, 4, true, ControllerKind::nmpc, seed)), {});
    out.require(c >= 0.93, "seed " + std::to_string(seed) + fmt(" coverage %.3f", c));
  }
  return out;
}

Outcome fault_identification() {
  Outcome out;
  const double onset = first_onset(2);
  for (FilterKind f : {FilterKind::ekf, FilterKind::ukf, FilterKind::imm_ekf, FilterKind::imm_ukf}) {
    const SimLog& log = run(config(2, f));
    const double settle = settle_time(log, RadiusChannel::left, {onset});
    out.require(settle <= onset + 5.0, std::string(to_string(f)) + fmt(" left settle %.2f s", settle));
    if (log.mode_count > 0) {
      const double end = log.rows.back().t;
      const Window steady{end - 5.0, end};
      const double frac = mode_fraction(log, 3, steady);
      const double mu3 = mean_mode_probability(log, 3, steady);
      const double mu4 = mean_mode_probability(log, 4, steady);
      out.require(frac == 1.0 && mu3 > mu4, std::string(to_string(f)) +
                                                fmt(" argmax=3 fraction %.3f", frac) +
                                                fmt(", mean mu3 %.3f vs mu4 %.3f", mu3, mu4));
    }
  }
  return out;
}

Outcome reconfiguration() {
  Outcome out;
  for (FilterKind f : {FilterKind::ekf, FilterKind::ukf, FilterKind::imm_ekf, FilterKind::imm_ukf}) {
    const SimLog& on = run(config(2, f, 4, true));
    const SimLog& off = run(config(2, f, 4, false));
    const double end = on.rows.back().t;
    const double e_on = tracking_rms(on, {end - 5.0, end});
    const double e_off = tracking_rms(off, {end - 5.0, end});
    out.require(e_on < 1.0 && e_off > 3.0 * e_on,
                std::string(to_string(f)) + fmt(" last-5s RMS on %.3f m, off %.3f m", e_on, e_off));
  }
  return out;
}

Outcome sequential_faults() {
  Outcome out;
  bool any = false;
  std::string detail;
  for (FilterKind f : {FilterKind::imm_ekf, FilterKind::imm_ukf}) {
    const SimLog& log = run(config(3, f));
    const double f3 = mode_fraction(log, 3, {5.0 + kModeConvergence, 10.0 - 0.005});
    const double f4 = mode_fraction(log, 4, {10.0 + kModeConvergence, log.rows.back().t});
    const bool ok = f3 == 1.0 && f4 == 1.0;
    any = any || ok;
    if (!detail.empty()) detail += "; ";
    detail += std::string(to_string(f)) + fmt(" mode 3 fraction %.3f, mode 4 fraction %.3f", f3, f4);
  }
  out.pass = any;
  out.detail = detail;
  return out;
}

Outcome breakdown_pattern() {
  Outcome out;
  const double onset = first_onset(4);
  const SimLog& ekf = run(config(4, FilterKind::ekf));
  const SimLog& ukf = run(config(4, FilterKind::ukf));
  const double end = ukf.rows.back().t;
  const Window post{onset, end};
  const double c_ekf = innovation_coverage(ekf, post);
  const double c_ukf = innovation_coverage(ukf, post);
  out.require(c_ekf < 0.9, fmt("EKF coverage %.3f", c_ekf));
  out.require(c_ukf >= 0.93, fmt("UKF coverage %.3f", c_ukf));
  const double rmse_ukf = radius_rmse(ukf, RadiusChannel::both, post);
  for (FilterKind f : {FilterKind::imm_ekf, FilterKind::imm_ukf}) {
    const double rmse = radius_rmse(run(config(4, f, 4)), RadiusChannel::both, post);
    out.require(rmse > 5.0 * rmse_ukf, std::string(to_string(f)) + "4" +
                                           fmt(" RMSE %.3f m vs UKF %.3f m", rmse, rmse_ukf));
  }
  for (FilterKind f : {FilterKind::imm_ekf, FilterKind::imm_ukf}) {
    const SimLog& log = run(config(4, f, 5));
    const double settle = settle_time(log, RadiusChannel::left, post);
    double ratio = kInf;
    if (std::isfinite(settle)) {
      const Window tail{settle, end};
      ratio = radius_rmse(log, RadiusChannel::left, tail) / radius_rms(log, RadiusChannel::left, tail);
    }
    out.require(ratio < 0.1, std::string(to_string(f)) + "5" +
                                 fmt(" settle %.2f s, left RMSE/RMS %.3f", settle, ratio));
  }
  return out;
}

Outcome linear_vs_nonlinear() {
  Outcome out;
  const SimLog& nmpc = run(config(2, FilterKind::ukf, 4, true, ControllerKind::nmpc));
  const SimLog& lmpc = run(config(2, FilterKind::ukf, 4, true, ControllerKind::lmpc));
  const Window post{first_onset(2), nmpc.rows.back().t};
  const double e_n = tracking_rms(nmpc, post);
  const double e_l = tracking_rms(lmpc, post);
  const double s_n = saturation_duty(nmpc, post);
  const double s_l = saturation_duty(lmpc, post);
  out.require(e_l >= 2.0 * e_n, fmt("post-fault RMS LMPC %.3f m vs NMPC %.3f m", e_l, e_n));
  out.require(s_l > s_n, fmt("saturation duty LMPC %.3f vs NMPC %.3f", s_l, s_n));
  return out;
}

Outcome nlp_solver() {
  Outcome out;
  {
    NlpProblem p = unconstrained(1);
    p.residuals = [](const VectorXd& x, VectorXd& r, MatrixXd* j) {
      r = VectorXd::Constant(1, x[0] - 3.0);
      if (j) *j = MatrixXd::Ones(1, 1);
    };
    p.upper[0] = 2.0;
    const NlpResult res = solve_nlp(p, VectorXd::Zero(1));
    out.require(res.status == SolverStatus::converged && std::abs(res.x[0] - 2.0) < 1e-6,
                fmt("clipped quadratic u* = %.9f", res.x[0]));
  }
  {
    NlpProblem p = unconstrained(2);
    p.residuals = [](const VectorXd& x, VectorXd& r, MatrixXd* j) {
      r = x;
      if (j) *j = MatrixXd::Identity(2, 2);
    };
    p.equalities = [](const VectorXd& x, VectorXd& c, MatrixXd* j) {
      c = VectorXd::Constant(1, x[0] + x[1] - 2.0);
      if (j) *j = MatrixXd::Ones(1, 2);
    };
    const NlpResult res = solve_nlp(p, VectorXd::Zero(2));
    out.require(res.status == SolverStatus::converged && std::abs(res.x[0] - 1.0) < 1e-6 &&
                    std::abs(res.x[1] - 1.0) < 1e-6,
                fmt("equality quadratic (%.9f, %.9f)", res.x[0], res.x[1]));
  }
  {
    const ReferenceSignal ref = build_reference_line(10.0);
    const CollocationBasis& basis = cached_lgl_basis(8);
    OcpContext ctx;
    ctx.ref = &ref;
    ctx.x_now = {0.0, 0.0, 0.0};
    const NlpProblem p = transcribe(ctx, basis);
    VectorXd guess = VectorXd::Zero(p.n_vars);
    for (int j = 0; j < basis.size(); ++j) {
      guess[layout::at(j, layout::omega_right)] = 3.0;
      guess[layout::at(j, layout::omega_left)] = 4.0;
    }
    const NlpResult res = solve_nlp(p, guess);
    double gap = 0.0;
    for (int j = 0; j < basis.size(); ++j) {
      gap = std::max({gap, std::abs(res.x[layout::at(j, layout::omega_right)] - 5.0),
                      std::abs(res.x[layout::at(j, layout::omega_left)] - 5.0)});
    }
    out.require(res.status == SolverStatus::converged && gap < 1e-4,
                fmt("straight-line OCP wheel-rate error %.2e", gap));
  }
  {
    const ReferenceSignal ref = build_reference_circle(50.0, 10.0);
    const CollocationBasis& basis = cached_lgl_basis(16);
    OcpContext ctx;
    ctx.ref = &ref;
    ctx.t0 = 1.0;
    ctx.x_now = reference_pose(ref, 1.0);
    ctx.x_now.x += 1.5;
    ctx.x_now.psi += 0.1;
    ctx.params.r_left = 1.0;
    const NlpProblem p = transcribe(ctx, basis);
    const NlpResult first = solve_nlp(p, reference_guess(ctx, basis));
    const NlpResult again = solve_nlp(p, first.x);
    out.require(first.status == SolverStatus::converged && again.status == SolverStatus::converged &&
                    again.iterations <= 2,
                "warm-start re-solve iterations " + std::to_string(again.iterations));
  }
  // Every closed-loop run made by this suite contributes to the bound check.
  run(config(4, FilterKind::ukf, 4, true, ControllerKind::lmpc));
  out.require(g_max_abs_control <= kOmegaLimit * (1.0 + 1e-12),
              fmt("max |omega| over %.0f runs ", static_cast<double>(g_runs.size())) +
                  fmt("%.3f deg/s", g_max_abs_control / kDegToRad));
  return out;
}

Outcome determinism() {
  Outcome out;
  const std::vector<ScenarioConfig> configs = {
      config(1, FilterKind::ukf), config(2, FilterKind::imm_ukf),
      config(3, FilterKind::imm_ekf), config(4, FilterKind::ekf),
      config(2, FilterKind::ukf, 4, true, ControllerKind::lmpc)};
  for (const auto& cfg : configs) {
    const std::string first = csv_text(run(cfg));
    const SimLog again = run_scenario(cfg);
    track_controls(again);
    out.require(first == csv_text(again), "scenario " + std::to_string(cfg.scenario) + " " + cfg.label() +
                                              " " + std::string(to_string(cfg.controller)) + " identical");
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string filter = argc > 1 ? argv[1] : "";
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"quadrature_differentiation", quadrature},
      {"filter_oracles", filter_oracles},
      {"consistency_s1", consistency},
      {"fault_identification_s2", fault_identification},
      {"reconfiguration_necessity_s2", reconfiguration},
      {"sequential_faults_s3", sequential_faults},
      {"breakdown_pattern_s4", breakdown_pattern},
      {"linear_vs_nonlinear_mpc", linear_vs_nonlinear},
      {"nlp_solver", nlp_solver},
      {"determinism", determinism},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    if (!filter.empty() && name.find(filter) == std::string::npos) continue;
    Outcome outcome;
    try {
      outcome = check();
    } catch (const std::exception& e) {
      outcome.pass = false;
      outcome.detail = std::string("exception: ") + e.what();
    }
    if (!outcome.pass) ++failures;
    std::printf("%s %s: %s\n", outcome.pass ? "PASS" : "FAIL", name.c_str(), outcome.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
