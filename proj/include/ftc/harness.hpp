#pragma once

// Closed-loop scenarios: truth at the filter rate, fault injection, speed
// measurements, a single or IMM filter, and an MPC controller at a lower rate
// whose model radii come from the filter when feedback is on.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ftc/dynamics.hpp"
#include "ftc/imm.hpp"
#include "ftc/mpc.hpp"

namespace ftc {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class FilterKind { ekf, ukf, imm_ekf, imm_ukf };

std::string_view to_string(FilterKind kind);
std::string_view to_string(ControllerKind kind);
FilterKind parse_filter_kind(std::string_view text);
ControllerKind parse_controller_kind(std::string_view text);

struct ScenarioConfig {
  int scenario{1};
  FilterKind filter{FilterKind::ukf};
  int imm_modes{4};
  bool feedback{true};
  ControllerKind controller{ControllerKind::nmpc};
  double duration{0.0};  ///< <= 0 selects the scenario default
  std::uint64_t seed{1};
  int filter_hz{100};
  int controller_hz{10};
  int nodes{16};
  double horizon{5.0};
  double path_radius{50.0};
  double path_speed{10.0};
  double center_x{0.0};
  double center_y{0.0};
  double noise_sigma{0.5};
  double delta_omega_deg{500.0};  ///< per controller period
  bool ramp_absolute_time{false};

  double effective_duration() const;
  bool is_imm() const { return filter == FilterKind::imm_ekf || filter == FilterKind::imm_ukf; }
  void validate() const;
  /// Short run label such as "ukf" or "imm-ekf5".
  std::string label() const;
};

/// 20 s for scenarios 1-3, 40 s for scenario 4.
double default_duration(int scenario);

std::vector<FaultProfile> scenario_faults(const ScenarioConfig& cfg);

/// Onset of the first fault, or +inf for the no-fault scenario.
double first_onset(int scenario);

ReferenceSignal scenario_reference(const ScenarioConfig& cfg);

struct LogRow {
  double t{0.0};
  double x{0.0};
  double y{0.0};
  double psi{0.0};
  double r_right_true{0.0};
  double r_left_true{0.0};
  double omega_right_cmd{0.0};
  double omega_left_cmd{0.0};
  double z{0.0};
  std::array<double, 5> mean{};
  std::array<double, 5> cov_diag{};
  double nu{0.0};
  double s{0.0};
  std::vector<double> mu;
  std::string solver_status;
};

struct SimLog {
  ScenarioConfig config;
  int mode_count{0};  ///< zero for single filters
  std::vector<LogRow> rows;
};

SimLog run_scenario(const ScenarioConfig& cfg);

// -- metrics --------------------------------------------------------------------

struct Window {
  double begin{0.0};
  double end{std::numeric_limits<double>::infinity()};
};

enum class RadiusChannel { left, right, both };

struct ConsistencyStats {
  double fraction_within_2sigma{0.0};
  double radius_rmse_post_convergence{0.0};
  double settle_time{std::numeric_limits<double>::infinity()};  ///< +inf when never settled
};

/// Fraction of |nu| <= 2 sqrt(S) over rows in the window that carry an innovation.
double innovation_coverage(const SimLog& log, const Window& window);

/// First time in the window after which the estimate stays within `threshold` (relative)
/// of the truth for `hold` seconds.
double settle_time(const SimLog& log, RadiusChannel channel, const Window& window,
                   double threshold = 0.05, double hold = 1.0);

double radius_rmse(const SimLog& log, RadiusChannel channel, const Window& window);

/// RMS of the radius truth over the window.
double radius_rms(const SimLog& log, RadiusChannel channel, const Window& window);

/// Coverage, settle time, and radius RMSE from the settle time (or the window start) onward.
ConsistencyStats consistency_stats(const SimLog& log, const Window& window,
                                   RadiusChannel channel = RadiusChannel::both);

/// RMS distance between the robot and the time-indexed reference point.
double tracking_rms(const SimLog& log, const Window& window);

/// Fraction of controller ticks in the window where a wheel rate sits on its bound.
double saturation_duty(const SimLog& log, const Window& window);

/// 1-based index of the most probable mode in a row.
int argmax_mode(const LogRow& row);

/// Fraction of rows in the window whose most probable mode is `mode` (1-based).
double mode_fraction(const SimLog& log, int mode, const Window& window);

/// Mean of mu_mode over the window.
double mean_mode_probability(const SimLog& log, int mode, const Window& window);

// -- comparison ------------------------------------------------------------------

struct ComparisonRow {
  std::string label;
  double settle_time{0.0};
  double radius_rmse{0.0};
  double coverage{0.0};
  double tracking_rms{0.0};
  std::vector<double> left_error;   ///< rLhat - rL_true per row
  std::vector<double> right_error;  ///< rRhat - rR_true per row
};

struct ComparisonTable {
  int scenario{0};
  std::uint64_t seed{0};
  std::vector<double> times;
  std::vector<ComparisonRow> rows;
};

/// Summary statistics measured from the first fault onset (or t = 0) to the end of each run.
ComparisonTable compare_runs(const std::vector<SimLog>& logs);

void write_comparison(const ComparisonTable& table, std::ostream& summary,
                      std::ostream& series);

/// Configurations for `compare`: every filter with feedback on (IMMs with 4 and 5 modes).
std::vector<ScenarioConfig> comparison_configs(int scenario, std::uint64_t seed);

/// Configurations for `sweep`: scenarios 1-4, all filters, feedback on and off, and the
/// linear controller on scenario 2.
std::vector<ScenarioConfig> sweep_configs(std::uint64_t seed);

// -- CSV ------------------------------------------------------------------------

std::vector<std::string> csv_header(int mode_count);
void write_csv(const SimLog& log, std::ostream& out);
void export_csv(const SimLog& log, const std::filesystem::path& path);
SimLog read_csv(std::istream& in);
SimLog parse_csv(const std::filesystem::path& path);

// -- configuration files ----------------------------------------------------------

/// Flat `key = value` lines; `#` starts a comment. Throws ConfigError on malformed lines.
std::map<std::string, std::string> parse_key_values(std::istream& in);
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

/// Applies recognised keys to cfg; unknown keys or bad values throw ConfigError.
/// The `out` key is returned through `out_path` when non-null.
void apply_config(const std::map<std::string, std::string>& values, ScenarioConfig& cfg,
                  std::string* out_path = nullptr);

}  // namespace ftc
