#include "ftc/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace ftc {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMinRadius = 0.05;
constexpr double kMaxRadius = 10.0;
constexpr double kTimeTol = 1e-9;

const RobotParams kNominal{};

bool in_window(double t, const Window& w) {
  return t >= w.begin - kTimeTol && t <= w.end + kTimeTol;
}

std::vector<const LogRow*> rows_in(const SimLog& log, const Window& window) {
  std::vector<const LogRow*> out;
  for (const auto& row : log.rows) {
    if (in_window(row.t, window)) out.push_back(&row);
  }
  if (out.empty()) throw std::invalid_argument("metric window contains no log rows");
  return out;
}

double left_error(const LogRow& r) { return r.mean[idx::r_left] - r.r_left_true; }
double right_error(const LogRow& r) { return r.mean[idx::r_right] - r.r_right_true; }

double squared_error(const LogRow& r, RadiusChannel channel) {
  switch (channel) {
    case RadiusChannel::left:
      return left_error(r) * left_error(r);
    case RadiusChannel::right:
      return right_error(r) * right_error(r);
    case RadiusChannel::both:
      return 0.5 * (left_error(r) * left_error(r) + right_error(r) * right_error(r));
  }
  return kNaN;
}

bool within(const LogRow& r, RadiusChannel channel, double threshold) {
  const bool left = std::abs(left_error(r)) <= threshold * r.r_left_true;
  const bool right = std::abs(right_error(r)) <= threshold * r.r_right_true;
  switch (channel) {
    case RadiusChannel::left:
      return left;
    case RadiusChannel::right:
      return right;
    case RadiusChannel::both:
      return left && right;
  }
  return false;
}

int controller_ratio(const ScenarioConfig& cfg) { return cfg.filter_hz / cfg.controller_hz; }

long tick_count(const ScenarioConfig& cfg) {
  return std::lround(cfg.effective_duration() * cfg.filter_hz);
}

RobotParams clamp_radii(double r_right, double r_left) {
  RobotParams p = kNominal;
  p.r_right = std::clamp(r_right, kMinRadius, kMaxRadius);
  p.r_left = std::clamp(r_left, kMinRadius, kMaxRadius);
  return p;
}

void append_flag(std::string& status, std::string_view flag) {
  status += '+';
  status += flag;
}

// The closed loop. Either a single filter or an IMM bank is live.
class Simulation {
 public:
  explicit Simulation(const ScenarioConfig& cfg)
      : cfg_(cfg),
        faults_(scenario_faults(cfg)),
        reference_(scenario_reference(cfg)),
        noise_(cfg.seed),
        filter_noise_(default_noise(1.0 / cfg.filter_hz)),
        controller_(controller_config(cfg), reference_) {
    filter_noise_.r = cfg.noise_sigma * cfg.noise_sigma;
    process_.dt = 1.0 / cfg.filter_hz;
    process_.b = kNominal.b;
    truth_ = reference_pose(reference_, 0.0);
    kind_ = (cfg.filter == FilterKind::ekf || cfg.filter == FilterKind::imm_ekf)
                ? SingleFilterKind::ekf
                : SingleFilterKind::ukf;
    reset_estimator(truth_);
  }

  SimLog run() {
    SimLog log;
    log.config = cfg_;
    log.mode_count = cfg_.is_imm() ? static_cast<int>(bank_.size()) : 0;
    const long ticks = tick_count(cfg_);
    const int ratio = controller_ratio(cfg_);
    const double dt = 1.0 / cfg_.filter_hz;
    log.rows.reserve(static_cast<std::size_t>(ticks) + 1);

    u_ = controller_.step(truth_, params_estimate(), 0.0);
    controller_status_ = controller_flags();
    log.rows.push_back(make_row(0.0, apply_faults(faults_, kNominal, 0.0), kNaN,
                                InnovationRecord{kNaN, kNaN, 0.0, kNaN}, ""));

    for (long k = 1; k <= ticks; ++k) {
      const double t_prev = static_cast<double>(k - 1) / cfg_.filter_hz;
      const double t = static_cast<double>(k) / cfg_.filter_hz;
      truth_ = step_truth(truth_, u_, apply_faults(faults_, kNominal, t_prev), dt);
      const RobotParams radii = apply_faults(faults_, kNominal, t);
      const SpeedMeasurement z = measure_speed(forward_speed(radii, u_), cfg_.noise_sigma, t, noise_);

      std::string filter_flags;
      const InnovationRecord innovation = filter_step(z, filter_flags);

      if (k % ratio == 0) {
        u_ = controller_.step(truth_, params_estimate(), t);
        controller_status_ = controller_flags();
      }
      log.rows.push_back(make_row(t, radii, z.z, innovation, filter_flags));
    }
    return log;
  }

 private:
  static ControllerConfig controller_config(const ScenarioConfig& cfg) {
    ControllerConfig c;
    c.kind = cfg.controller;
    c.nodes = cfg.nodes;
    c.horizon = cfg.horizon;
    c.bounds.delta_omega = cfg.delta_omega_deg * kDegToRad;
    c.bounds.control_period = 1.0 / cfg.controller_hz;
    return c;
  }

  void reset_estimator(const RobotState& pose) {
    if (cfg_.is_imm()) {
      bank_ = cfg_.imm_modes == 5 ? five_mode_bank(pose) : four_mode_bank(pose);
      estimate_ = combine(bank_);
    } else {
      estimate_ = initial_belief(pose);
    }
  }

  InnovationRecord filter_step(const SpeedMeasurement& z, std::string& flags) {
    if (!cfg_.is_imm()) {
      try {
        UpdateResult res = filter_cycle(kind_, estimate_, z, u_, process_, filter_noise_);
        estimate_ = std::move(res.belief);
        return res.innovation;
      } catch (const FilterDivergence&) {
        // Restart from the last mean with the initial covariance.
        GaussianBelief restart = initial_belief(
            {estimate_.mean[idx::x], estimate_.mean[idx::y], estimate_.mean[idx::psi]},
            std::clamp(estimate_.mean[idx::r_right], kMinRadius, kMaxRadius),
            std::clamp(estimate_.mean[idx::r_left], kMinRadius, kMaxRadius));
        estimate_ = std::move(restart);
        append_flag(flags, "filter_diverged");
        return {kNaN, kNaN, z.t, kNaN};
      }
    }
    try {
      ImmCycleResult res = imm_cycle(bank_, z, u_, filter_noise_, process_, kind_);
      if (std::any_of(res.diverged.begin(), res.diverged.end(), [](bool d) { return d; })) {
        append_flag(flags, "mode_diverged");
      }
      bank_ = std::move(res.bank);
      estimate_ = std::move(res.combined);
      return res.mixture_innovation;
    } catch (const DegenerateBank&) {
      reset_estimator({estimate_.mean[idx::x], estimate_.mean[idx::y], estimate_.mean[idx::psi]});
      append_flag(flags, "bank_reset");
      return {kNaN, kNaN, z.t, kNaN};
    }
  }

  RobotParams params_estimate() const {
    if (!cfg_.feedback) return kNominal;
    return clamp_radii(estimate_.mean[idx::r_right], estimate_.mean[idx::r_left]);
  }

  std::string controller_flags() const {
    std::string s(to_string(controller_.last_solver_status()));
    if (controller_.status() != ControllerStatus::ok) {
      append_flag(s, to_string(controller_.status()));
    }
    return s;
  }

  LogRow make_row(double t, const RobotParams& radii, double z, const InnovationRecord& innovation,
                  const std::string& filter_flags) const {
    LogRow row;
    row.t = t;
    row.x = truth_.x;
    row.y = truth_.y;
    row.psi = truth_.psi;
    row.r_right_true = radii.r_right;
    row.r_left_true = radii.r_left;
    row.omega_right_cmd = u_.omega_right;
    row.omega_left_cmd = u_.omega_left;
    row.z = z;
    for (int i = 0; i < idx::size; ++i) {
      row.mean[static_cast<std::size_t>(i)] = estimate_.mean[i];
      row.cov_diag[static_cast<std::size_t>(i)] = estimate_.cov(i, i);
    }
    row.nu = innovation.nu;
    row.s = innovation.s;
    if (cfg_.is_imm()) row.mu.assign(bank_.mu.data(), bank_.mu.data() + bank_.mu.size());
    row.solver_status = controller_status_ + filter_flags;
    return row;
  }

  ScenarioConfig cfg_;
  std::vector<FaultProfile> faults_;
  ReferenceSignal reference_;
  NoiseStream noise_;
  NoiseConfig filter_noise_;
  RobotProcess process_;
  SingleFilterKind kind_{SingleFilterKind::ukf};
  MpcController controller_;
  RobotState truth_;
  ControlInput u_;
  GaussianBelief estimate_;
  ImmBank bank_;
  std::string controller_status_;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

void format_value(std::ostream& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  out << buf;
}

double parse_double(const std::string& text, const std::string& what) {
  const std::string s = trim(text);
  if (s == "nan" || s == "-nan") return kNaN;
  if (s == "inf") return kInf;
  if (s == "-inf") return -kInf;
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("cannot parse '" + s + "' as a number for " + what);
  }
}

long parse_long(const std::string& text, const std::string& what) {
  const std::string s = trim(text);
  try {
    std::size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("cannot parse '" + s + "' as an integer for " + what);
  }
}

bool parse_bool(const std::string& text, const std::string& what) {
  const std::string s = trim(text);
  if (s == "on" || s == "true" || s == "1" || s == "yes") return true;
  if (s == "off" || s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("cannot parse '" + s + "' as on/off for " + what);
}

}  // namespace

// -- enums and configuration -----------------------------------------------------------

std::string_view to_string(FilterKind kind) {
  switch (kind) {
    case FilterKind::ekf:
      return "ekf";
    case FilterKind::ukf:
      return "ukf";
    case FilterKind::imm_ekf:
      return "imm-ekf";
    case FilterKind::imm_ukf:
      return "imm-ukf";
  }
  return "unknown";
}

std::string_view to_string(ControllerKind kind) {
  return kind == ControllerKind::nmpc ? "nmpc" : "lmpc";
}

FilterKind parse_filter_kind(std::string_view text) {
  for (auto kind : {FilterKind::ekf, FilterKind::ukf, FilterKind::imm_ekf, FilterKind::imm_ukf}) {
    if (text == to_string(kind)) return kind;
  }
  if (text == "imm_ekf") return FilterKind::imm_ekf;
  if (text == "imm_ukf") return FilterKind::imm_ukf;
  throw ConfigError("unknown filter '" + std::string(text) + "'");
}

ControllerKind parse_controller_kind(std::string_view text) {
  if (text == "nmpc") return ControllerKind::nmpc;
  if (text == "lmpc") return ControllerKind::lmpc;
  throw ConfigError("unknown controller '" + std::string(text) + "'");
}

double default_duration(int scenario) {
  if (scenario < 1 || scenario > 4) throw ConfigError("scenario must be 1-4");
  return scenario == 4 ? 40.0 : 20.0;
}

double first_onset(int scenario) {
  switch (scenario) {
    case 1:
      return kInf;
    case 2:
      return 10.0;
    case 3:
      return 5.0;
    case 4:
      return 10.0;
    default:
      throw ConfigError("scenario must be 1-4");
  }
}

double ScenarioConfig::effective_duration() const {
  return duration > 0.0 ? duration : default_duration(scenario);
}

void ScenarioConfig::validate() const {
  if (scenario < 1 || scenario > 4) throw ConfigError("scenario must be 1-4");
  if (imm_modes != 4 && imm_modes != 5) throw ConfigError("modes must be 4 or 5");
  if (filter_hz <= 0 || controller_hz <= 0) throw ConfigError("rates must be positive");
  if (filter_hz % controller_hz != 0) {
    throw ConfigError("filter rate must be a multiple of the controller rate");
  }
  double last_onset = 0.0;
  for (const auto& f : scenario_faults(*this)) last_onset = std::max(last_onset, f.onset);
  if (!(effective_duration() > last_onset)) {
    throw ConfigError("duration must exceed every fault onset");
  }
  if (nodes < 2) throw ConfigError("nodes must be at least 2");
  if (!(horizon > 0.0)) throw ConfigError("horizon must be positive");
  if (!(path_radius > 0.0) || !(path_speed > 0.0)) {
    throw ConfigError("path radius and speed must be positive");
  }
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise sigma must be non-negative");
  if (!(delta_omega_deg > 0.0)) throw ConfigError("rate bound must be positive");
}

std::string ScenarioConfig::label() const {
  std::string s(to_string(filter));
  if (is_imm()) s += std::to_string(imm_modes);
  return s;
}

std::vector<FaultProfile> scenario_faults(const ScenarioConfig& cfg) {
  FaultProfile left_step{FaultKind::step, Wheel::left, 10.0};
  switch (cfg.scenario) {
    case 1:
      return {};
    case 2:
      return {left_step};
    case 3: {
      FaultProfile early = left_step;
      early.onset = 5.0;
      FaultProfile right{FaultKind::step, Wheel::right, 10.0};
      return {early, right};
    }
    case 4: {
      FaultProfile ramp{FaultKind::ramp, Wheel::left, 10.0};
      ramp.absolute_time = cfg.ramp_absolute_time;
      return {ramp};
    }
    default:
      throw ConfigError("scenario must be 1-4");
  }
}

ReferenceSignal scenario_reference(const ScenarioConfig& cfg) {
  return build_reference_circle(cfg.path_radius, cfg.path_speed, cfg.center_x, cfg.center_y);
}

SimLog run_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  return Simulation(cfg).run();
}

// -- metrics ---------------------------------------------------------------------------

double innovation_coverage(const SimLog& log, const Window& window) {
  std::size_t total = 0;
  std::size_t inside = 0;
  for (const LogRow* r : rows_in(log, window)) {
    if (!std::isfinite(r->nu) || !(r->s > 0.0)) continue;
    ++total;
    if (std::abs(r->nu) <= 2.0 * std::sqrt(r->s)) ++inside;
  }
  if (total == 0) throw std::invalid_argument("metric window contains no innovations");
  return static_cast<double>(inside) / static_cast<double>(total);
}

double settle_time(const SimLog& log, RadiusChannel channel, const Window& window,
                   double threshold, double hold) {
  double start = kNaN;
  for (const LogRow* r : rows_in(log, window)) {
    if (!within(*r, channel, threshold)) {
      start = kNaN;
      continue;
    }
    if (std::isnan(start)) start = r->t;
    if (r->t - start >= hold - kTimeTol) return start;
  }
  return kInf;
}

double radius_rmse(const SimLog& log, RadiusChannel channel, const Window& window) {
  double sum = 0.0;
  const auto rows = rows_in(log, window);
  for (const LogRow* r : rows) sum += squared_error(*r, channel);
  return std::sqrt(sum / static_cast<double>(rows.size()));
}

double radius_rms(const SimLog& log, RadiusChannel channel, const Window& window) {
  double sum = 0.0;
  const auto rows = rows_in(log, window);
  for (const LogRow* r : rows) {
    const double l = r->r_left_true * r->r_left_true;
    const double rr = r->r_right_true * r->r_right_true;
    sum += channel == RadiusChannel::left ? l : channel == RadiusChannel::right ? rr : 0.5 * (l + rr);
  }
  return std::sqrt(sum / static_cast<double>(rows.size()));
}

ConsistencyStats consistency_stats(const SimLog& log, const Window& window, RadiusChannel channel) {
  ConsistencyStats out;
  out.fraction_within_2sigma = innovation_coverage(log, window);
  out.settle_time = settle_time(log, channel, window);
  Window tail = window;
  if (std::isfinite(out.settle_time)) tail.begin = out.settle_time;
  out.radius_rmse_post_convergence = radius_rmse(log, channel, tail);
  return out;
}

double tracking_rms(const SimLog& log, const Window& window) {
  const ReferenceSignal ref = scenario_reference(log.config);
  double sum = 0.0;
  const auto rows = rows_in(log, window);
  for (const LogRow* r : rows) {
    const ReferencePoint p = ref(r->t);
    sum += (r->x - p.x) * (r->x - p.x) + (r->y - p.y) * (r->y - p.y);
  }
  return std::sqrt(sum / static_cast<double>(rows.size()));
}

double saturation_duty(const SimLog& log, const Window& window) {
  const int ratio = controller_ratio(log.config);
  const double limit = kOmegaLimit * (1.0 - 1e-6);
  std::size_t ticks = 0;
  std::size_t saturated = 0;
  for (std::size_t k = 0; k < log.rows.size(); k += static_cast<std::size_t>(ratio)) {
    const LogRow& r = log.rows[k];
    if (!in_window(r.t, window)) continue;
    ++ticks;
    if (std::abs(r.omega_right_cmd) >= limit || std::abs(r.omega_left_cmd) >= limit) ++saturated;
  }
  if (ticks == 0) throw std::invalid_argument("metric window contains no controller ticks");
  return static_cast<double>(saturated) / static_cast<double>(ticks);
}

int argmax_mode(const LogRow& row) {
  if (row.mu.empty()) throw std::invalid_argument("row carries no mode probabilities");
  return static_cast<int>(std::max_element(row.mu.begin(), row.mu.end()) - row.mu.begin()) + 1;
}

double mode_fraction(const SimLog& log, int mode, const Window& window) {
  const auto rows = rows_in(log, window);
  std::size_t hits = 0;
  for (const LogRow* r : rows) hits += argmax_mode(*r) == mode ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(rows.size());
}

double mean_mode_probability(const SimLog& log, int mode, const Window& window) {
  if (mode < 1 || mode > log.mode_count) throw std::invalid_argument("mode index out of range");
  const auto rows = rows_in(log, window);
  double sum = 0.0;
  for (const LogRow* r : rows) sum += r->mu.at(static_cast<std::size_t>(mode - 1));
  return sum / static_cast<double>(rows.size());
}

// -- comparison ------------------------------------------------------------------------

ComparisonTable compare_runs(const std::vector<SimLog>& logs) {
  if (logs.empty()) throw std::invalid_argument("no logs to compare");
  ComparisonTable table;
  table.scenario = logs.front().config.scenario;
  table.seed = logs.front().config.seed;
  for (const auto& log : logs) {
    if (log.config.scenario != table.scenario || log.config.seed != table.seed) {
      throw std::invalid_argument("compared logs must share scenario and seed");
    }
    if (log.rows.size() != logs.front().rows.size()) {
      throw std::invalid_argument("compared logs must have the same length");
    }
  }
  for (const auto& row : logs.front().rows) table.times.push_back(row.t);

  const double onset = first_onset(table.scenario);
  const Window window{std::isfinite(onset) ? onset : 0.0};
  for (const auto& log : logs) {
    ComparisonRow row;
    row.label = log.config.label();
    row.settle_time = settle_time(log, RadiusChannel::both, window);
    row.radius_rmse = radius_rmse(log, RadiusChannel::both, window);
    row.coverage = innovation_coverage(log, window);
    row.tracking_rms = tracking_rms(log, window);
    for (const auto& r : log.rows) {
      row.left_error.push_back(left_error(r));
      row.right_error.push_back(right_error(r));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_comparison(const ComparisonTable& table, std::ostream& summary, std::ostream& series) {
  summary << "label,settle_time,radius_rmse,coverage,tracking_rms\n";
  for (const auto& row : table.rows) {
    summary << row.label;
    for (double v : {row.settle_time, row.radius_rmse, row.coverage, row.tracking_rms}) {
      summary << ',';
      format_value(summary, v);
    }
    summary << '\n';
  }
  series << 't';
  for (const auto& row : table.rows) {
    series << ',' << row.label << "_rL_err," << row.label << "_rR_err";
  }
  series << '\n';
  for (std::size_t k = 0; k < table.times.size(); ++k) {
    format_value(series, table.times[k]);
    for (const auto& row : table.rows) {
      series << ',';
      format_value(series, row.left_error[k]);
      series << ',';
      format_value(series, row.right_error[k]);
    }
    series << '\n';
  }
  if (!summary || !series) throw IoError("failed to write comparison output");
}

std::vector<ScenarioConfig> comparison_configs(int scenario, std::uint64_t seed) {
  std::vector<ScenarioConfig> out;
  auto add = [&](FilterKind kind, int modes) {
    ScenarioConfig c;
    c.scenario = scenario;
    c.seed = seed;
    c.filter = kind;
    c.imm_modes = modes;
    out.push_back(c);
  };
  add(FilterKind::ekf, 4);
  add(FilterKind::ukf, 4);
  for (int modes : {4, 5}) {
    add(FilterKind::imm_ekf, modes);
    add(FilterKind::imm_ukf, modes);
  }
  return out;
}

std::vector<ScenarioConfig> sweep_configs(std::uint64_t seed) {
  std::vector<ScenarioConfig> out;
  for (int scenario = 1; scenario <= 4; ++scenario) {
    for (bool feedback : {true, false}) {
      for (auto kind : {FilterKind::ekf, FilterKind::ukf, FilterKind::imm_ekf, FilterKind::imm_ukf}) {
        for (int modes : {4, 5}) {
          const bool imm = kind == FilterKind::imm_ekf || kind == FilterKind::imm_ukf;
          if (modes == 5 && (!imm || scenario != 4)) continue;
          ScenarioConfig c;
          c.scenario = scenario;
          c.seed = seed;
          c.filter = kind;
          c.imm_modes = modes;
          c.feedback = feedback;
          out.push_back(c);
        }
      }
    }
  }
  ScenarioConfig linear;
  linear.scenario = 2;
  linear.seed = seed;
  linear.controller = ControllerKind::lmpc;
  out.push_back(linear);
  return out;
}

// -- CSV -------------------------------------------------------------------------------

std::vector<std::string> csv_header(int mode_count) {
  std::vector<std::string> h = {"t",      "x",      "y",      "psi",   "rR_true", "rL_true",
                                "wR_cmd", "wL_cmd", "z",      "xhat",  "yhat",    "psihat",
                                "rRhat",  "rLhat",  "P11",    "P22",   "P33",     "P44",
                                "P55",    "nu",     "S"};
  for (int j = 1; j <= mode_count; ++j) h.push_back("mu" + std::to_string(j));
  h.emplace_back("solver_status");
  return h;
}

void write_csv(const SimLog& log, std::ostream& out) {
  const auto header = csv_header(log.mode_count);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& r : log.rows) {
    std::vector<double> values = {r.t,  r.x, r.y, r.psi, r.r_right_true, r.r_left_true,
                                  r.omega_right_cmd, r.omega_left_cmd, r.z};
    values.insert(values.end(), r.mean.begin(), r.mean.end());
    values.insert(values.end(), r.cov_diag.begin(), r.cov_diag.end());
    values.push_back(r.nu);
    values.push_back(r.s);
    values.insert(values.end(), r.mu.begin(), r.mu.end());
    for (double v : values) {
      format_value(out, v);
      out << ',';
    }
    out << r.solver_status << '\n';
  }
}

void export_csv(const SimLog& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  write_csv(log, out);
  out.flush();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

SimLog read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) throw IoError("CSV is empty");
  const auto header = split(trim(line), ',');

  int modes = 0;
  for (const auto& name : header) {
    if (name.size() > 2 && name.rfind("mu", 0) == 0) ++modes;
  }
  const auto expected = csv_header(modes);
  for (const auto& name : expected) {
    if (std::find(header.begin(), header.end(), name) == header.end()) {
      throw IoError("CSV is missing column '" + name + "'");
    }
  }
  if (header != expected) throw IoError("CSV columns are not in the expected order");

  SimLog log;
  log.mode_count = modes;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split(trim(line), ',');
    if (fields.size() != expected.size()) {
      throw IoError("CSV line " + std::to_string(line_no) + " has " +
                    std::to_string(fields.size()) + " fields, expected " +
                    std::to_string(expected.size()));
    }
    std::vector<double> v(fields.size() - 1);
    try {
      for (std::size_t i = 0; i + 1 < fields.size(); ++i) v[i] = parse_double(fields[i], expected[i]);
    } catch (const ConfigError& e) {
      throw IoError("CSV line " + std::to_string(line_no) + ": " + e.what());
    }
    LogRow r;
    r.t = v[0];
    r.x = v[1];
    r.y = v[2];
    r.psi = v[3];
    r.r_right_true = v[4];
    r.r_left_true = v[5];
    r.omega_right_cmd = v[6];
    r.omega_left_cmd = v[7];
    r.z = v[8];
    std::copy(v.begin() + 9, v.begin() + 14, r.mean.begin());
    std::copy(v.begin() + 14, v.begin() + 19, r.cov_diag.begin());
    r.nu = v[19];
    r.s = v[20];
    r.mu.assign(v.begin() + 21, v.begin() + 21 + modes);
    r.solver_status = fields.back();
    log.rows.push_back(std::move(r));
  }
  return log;
}

SimLog parse_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  try {
    return read_csv(in);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

// -- configuration files ---------------------------------------------------------------

std::map<std::string, std::string> parse_key_values(std::istream& in) {
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string body = trim(line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + " has no '='");
    }
    std::string key = trim(body.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + " has no key");
    std::replace(key.begin(), key.end(), '-', '_');
    out[key] = trim(body.substr(eq + 1));
  }
  return out;
}

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  return parse_key_values(in);
}

void apply_config(const std::map<std::string, std::string>& values, ScenarioConfig& cfg,
                  std::string* out_path) {
  for (const auto& [raw_key, value] : values) {
    std::string key = raw_key;
    std::replace(key.begin(), key.end(), '-', '_');
    if (key == "scenario") {
      cfg.scenario = static_cast<int>(parse_long(value, key));
    } else if (key == "filter") {
      cfg.filter = parse_filter_kind(trim(value));
    } else if (key == "modes" || key == "imm_modes") {
      cfg.imm_modes = static_cast<int>(parse_long(value, key));
    } else if (key == "feedback") {
      cfg.feedback = parse_bool(value, key);
    } else if (key == "controller") {
      cfg.controller = parse_controller_kind(trim(value));
    } else if (key == "nodes") {
      cfg.nodes = static_cast<int>(parse_long(value, key));
    } else if (key == "seed") {
      const long seed = parse_long(value, key);
      if (seed < 0) throw ConfigError("seed must be non-negative");
      cfg.seed = static_cast<std::uint64_t>(seed);
    } else if (key == "duration") {
      cfg.duration = parse_double(value, key);
    } else if (key == "horizon") {
      cfg.horizon = parse_double(value, key);
    } else if (key == "filter_hz") {
      cfg.filter_hz = static_cast<int>(parse_long(value, key));
    } else if (key == "controller_hz") {
      cfg.controller_hz = static_cast<int>(parse_long(value, key));
    } else if (key == "path_radius") {
      cfg.path_radius = parse_double(value, key);
    } else if (key == "path_speed") {
      cfg.path_speed = parse_double(value, key);
    } else if (key == "center_x") {
      cfg.center_x = parse_double(value, key);
    } else if (key == "center_y") {
      cfg.center_y = parse_double(value, key);
    } else if (key == "noise_sigma") {
      cfg.noise_sigma = parse_double(value, key);
    } else if (key == "delta_omega_deg") {
      cfg.delta_omega_deg = parse_double(value, key);
    } else if (key == "ramp_absolute_time") {
      cfg.ramp_absolute_time = parse_bool(value, key);
    } else if (key == "out") {
      if (out_path) *out_path = trim(value);
    } else {
      throw ConfigError("unknown config key '" + raw_key + "'");
    }
  }
}

}  // namespace ftc
