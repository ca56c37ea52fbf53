#pragma once

// Interacting Multiple Model combinator.
//
// A cycle runs: mixing probabilities, mixed initial conditions, mode-matched
// filtering (one filter per mode), mode probability update, and moment-matched
// combination. The mode-matched step is supplied as a callable so the same
// cycle drives the robot EKF/UKF banks and small linear test systems.

#include <functional>
#include <string>
#include <vector>

#include "ftc/estimators.hpp"

namespace ftc {

class DegenerateBank : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// What a mode hypothesises about the wheel radii.
enum class ModeProcess {
  nominal,     ///< shared random-walk radii; the hypothesis lives only in the initial mean
  hypothesis,  ///< radii pinned to the initial-mean radii every step
  ramp_left,   ///< random-walk radii with a linear left-wheel deflation
};

struct ModeSpec {
  std::string label;
  Vec initial_mean;
  ModeProcess process{ModeProcess::hypothesis};
};

struct ImmBank {
  std::vector<ModeSpec> specs;
  std::vector<GaussianBelief> beliefs;
  Vec mu;
  Mat p;  ///< p(i, j) = P(mode j at k | mode i at k-1); rows sum to one

  std::size_t size() const { return beliefs.size(); }
  void validate() const;
};

struct MixResult {
  Mat mu_cond;  ///< mu_cond(i, j) = mu_{i|j}; columns sum to one
  Vec cbar;
};

MixResult mixing_probabilities(const ImmBank& bank);

std::vector<GaussianBelief> mix_initial_conditions(const ImmBank& bank, const MixResult& mix);

inline constexpr double kLikelihoodFloor = 1e-300;

/// Gaussian density of the innovation under its variance, floored at 1e-300.
double mode_likelihood(const InnovationRecord& rec);

Vec mode_probability_update(const Vec& likelihood, const Vec& cbar);

/// Moment-matched Gaussian of the bank under its current mode probabilities.
GaussianBelief combine(const ImmBank& bank);
GaussianBelief combine(const std::vector<GaussianBelief>& beliefs, const Vec& weights);

/// Mode-matched filter: mode index and mixed prior in, posterior and innovation out.
/// Throw FilterDivergence to mark the mode as diverged.
using ModeFilter = std::function<UpdateResult(std::size_t mode, const GaussianBelief& mixed)>;

struct ImmCycleResult {
  ImmBank bank;
  GaussianBelief combined;
  std::vector<InnovationRecord> innovations;
  std::vector<bool> diverged;
  /// Predictive innovation of the mixture (weights cbar), used for logging and consistency.
  InnovationRecord mixture_innovation;
};

ImmCycleResult imm_cycle(const ImmBank& bank, const ModeFilter& filter);

/// Robot bank cycle: each mode runs predict+update with its own radius process.
ImmCycleResult imm_cycle(const ImmBank& bank, const SpeedMeasurement& z, const ControlInput& u,
                         const NoiseConfig& noise, const RobotProcess& base,
                         SingleFilterKind kind, double kappa = kDefaultKappa);

/// Robot process for one mode of the bank.
RobotProcess mode_process(const ModeSpec& spec, const RobotProcess& base);

/// Four fault hypotheses: radii (2,2), (1,2), (2,1), (1,1); mu = 1/4; p = 0.97 / 0.01.
ImmBank four_mode_bank(const RobotState& pose, ModeProcess fault_modes = ModeProcess::hypothesis);

/// Four-mode bank plus a ramp-deflation mode at (2,2); mu = 1/5; p = 0.96 / 0.01.
ImmBank five_mode_bank(const RobotState& pose, ModeProcess fault_modes = ModeProcess::hypothesis);

/// Uniform-diagonal transition matrix with `stay` on the diagonal.
Mat transition_matrix(std::size_t modes, double stay, double switch_prob);

}  // namespace ftc
