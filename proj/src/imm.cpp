#include "ftc/imm.hpp"

#include <cmath>
#include <numbers>

namespace ftc {
namespace {

constexpr double kProbTol = 1e-12;

}  // namespace

void ImmBank::validate() const {
  const auto r = beliefs.size();
  if (r == 0) throw std::invalid_argument("IMM bank has no modes");
  if (specs.size() != r || static_cast<std::size_t>(mu.size()) != r ||
      static_cast<std::size_t>(p.rows()) != r || static_cast<std::size_t>(p.cols()) != r) {
    throw std::invalid_argument("IMM bank dimensions are inconsistent");
  }
  if ((mu.array() < 0.0).any() || std::abs(mu.sum() - 1.0) > kProbTol) {
    throw std::invalid_argument("mode probabilities must form a probability vector");
  }
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    if ((p.row(i).array() < 0.0).any() || std::abs(p.row(i).sum() - 1.0) > kProbTol) {
      throw std::invalid_argument("transition matrix rows must sum to one");
    }
  }
}

namespace {

// Columns with a vanishing normaliser are left zero when `allow_dormant` is set.
MixResult mix(const ImmBank& bank, bool allow_dormant) {
  const auto r = static_cast<Eigen::Index>(bank.size());
  MixResult out;
  out.cbar = bank.p.transpose() * bank.mu;
  out.mu_cond = Mat::Zero(r, r);
  if (!(out.cbar.maxCoeff() > 0.0)) throw DegenerateBank("mixing normaliser vanished");
  for (Eigen::Index j = 0; j < r; ++j) {
    if (!(out.cbar[j] > 0.0)) {
      if (!allow_dormant) throw DegenerateBank("mixing normaliser vanished");
      continue;
    }
    for (Eigen::Index i = 0; i < r; ++i) {
      out.mu_cond(i, j) = bank.p(i, j) * bank.mu[i] / out.cbar[j];
    }
  }
  return out;
}

}  // namespace

MixResult mixing_probabilities(const ImmBank& bank) { return mix(bank, false); }

std::vector<GaussianBelief> mix_initial_conditions(const ImmBank& bank, const MixResult& mix) {
  const auto r = bank.size();
  std::vector<GaussianBelief> out;
  out.reserve(r);
  for (std::size_t j = 0; j < r; ++j) {
    out.push_back(combine(bank.beliefs, mix.mu_cond.col(static_cast<Eigen::Index>(j))));
  }
  return out;
}

double mode_likelihood(const InnovationRecord& rec) {
  if (!(rec.s > 0.0)) throw std::invalid_argument("innovation variance must be positive");
  const double density =
      std::exp(-0.5 * rec.nu * rec.nu / rec.s) / std::sqrt(2.0 * std::numbers::pi * rec.s);
  return std::max(density, kLikelihoodFloor);
}

Vec mode_probability_update(const Vec& likelihood, const Vec& cbar) {
  if (likelihood.size() != cbar.size()) throw std::invalid_argument("size mismatch");
  if ((likelihood.array() < 0.0).any()) throw std::invalid_argument("negative likelihood");
  const Vec unnormalised = likelihood.cwiseProduct(cbar);
  const double c = unnormalised.sum();
  if (!(c > 0.0)) throw DegenerateBank("all mode likelihoods vanished");
  return unnormalised / c;
}

GaussianBelief combine(const std::vector<GaussianBelief>& beliefs, const Vec& weights) {
  const auto n = beliefs.front().mean.size();
  GaussianBelief out;
  out.mean = Vec::Zero(n);
  for (std::size_t j = 0; j < beliefs.size(); ++j) {
    out.mean += weights[static_cast<Eigen::Index>(j)] * beliefs[j].mean;
  }
  out.cov = Mat::Zero(n, n);
  for (std::size_t j = 0; j < beliefs.size(); ++j) {
    const double w = weights[static_cast<Eigen::Index>(j)];
    if (w == 0.0) continue;
    const Vec d = beliefs[j].mean - out.mean;
    out.cov += w * (beliefs[j].cov + d * d.transpose());
  }
  symmetrize(out.cov);
  return out;
}

GaussianBelief combine(const ImmBank& bank) { return combine(bank.beliefs, bank.mu); }

ImmCycleResult imm_cycle(const ImmBank& bank, const ModeFilter& filter) {
  bank.validate();
  const auto r = bank.size();

  // A mode nobody can switch into (cbar = 0) is dormant: it filters its own belief.
  const MixResult mix = ftc::mix(bank, true);
  std::vector<GaussianBelief> mixed;
  mixed.reserve(r);
  for (std::size_t j = 0; j < r; ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    mixed.push_back(mix.cbar[col] > 0.0 ? combine(bank.beliefs, mix.mu_cond.col(col))
                                        : bank.beliefs[j]);
  }

  ImmCycleResult out;
  out.bank = bank;
  out.innovations.resize(r);
  out.diverged.assign(r, false);
  Vec likelihood = Vec::Zero(static_cast<Eigen::Index>(r));
  for (std::size_t j = 0; j < r; ++j) {
    try {
      UpdateResult res = filter(j, mixed[j]);
      out.bank.beliefs[j] = std::move(res.belief);
      out.innovations[j] = res.innovation;
      likelihood[static_cast<Eigen::Index>(j)] = mode_likelihood(res.innovation);
    } catch (const FilterDivergence&) {
      out.diverged[j] = true;
      out.bank.beliefs[j] = mixed[j];
    }
  }

  out.bank.mu = mode_probability_update(likelihood, mix.cbar);
  out.combined = combine(out.bank);

  // Diverged modes restart from the combined estimate with zero probability.
  for (std::size_t j = 0; j < r; ++j) {
    if (out.diverged[j]) out.bank.beliefs[j] = out.combined;
  }

  double z_hat = 0.0;
  double weight = 0.0;
  std::size_t first_live = r;
  for (std::size_t j = 0; j < r; ++j) {
    if (out.diverged[j]) continue;
    if (first_live == r) first_live = j;
    const double w = mix.cbar[static_cast<Eigen::Index>(j)];
    z_hat += w * out.innovations[j].predicted;
    weight += w;
  }
  z_hat /= weight;
  double s = 0.0;
  for (std::size_t j = 0; j < r; ++j) {
    if (out.diverged[j]) continue;
    const double w = mix.cbar[static_cast<Eigen::Index>(j)] / weight;
    const double d = out.innovations[j].predicted - z_hat;
    s += w * (out.innovations[j].s + d * d);
  }
  const auto& ref = out.innovations[first_live];
  const double z = ref.predicted + ref.nu;
  out.mixture_innovation = {z - z_hat, s, ref.t, z_hat};
  return out;
}

RobotProcess mode_process(const ModeSpec& spec, const RobotProcess& base) {
  RobotProcess p = base;
  switch (spec.process) {
    case ModeProcess::nominal:
      p.radius = RadiusProcess::random_walk;
      break;
    case ModeProcess::hypothesis:
      p.radius = RadiusProcess::pinned;
      p.pinned_right = spec.initial_mean[idx::r_right];
      p.pinned_left = spec.initial_mean[idx::r_left];
      break;
    case ModeProcess::ramp_left:
      p.radius = RadiusProcess::ramp_left;
      break;
  }
  return p;
}

ImmCycleResult imm_cycle(const ImmBank& bank, const SpeedMeasurement& z, const ControlInput& u,
                         const NoiseConfig& noise, const RobotProcess& base,
                         SingleFilterKind kind, double kappa) {
  return imm_cycle(bank, [&](std::size_t j, const GaussianBelief& mixed) {
    return filter_cycle(kind, mixed, z, u, mode_process(bank.specs[j], base), noise, kappa);
  });
}

Mat transition_matrix(std::size_t modes, double stay, double switch_prob) {
  const auto r = static_cast<Eigen::Index>(modes);
  Mat p = Mat::Constant(r, r, switch_prob);
  p.diagonal().setConstant(stay);
  return p;
}

namespace {

ImmBank make_bank(const RobotState& pose, const std::vector<std::pair<double, double>>& radii,
                  const std::vector<ModeProcess>& processes, double stay, double switch_prob) {
  ImmBank bank;
  const auto r = radii.size();
  for (std::size_t j = 0; j < r; ++j) {
    GaussianBelief b = initial_belief(pose, radii[j].first, radii[j].second);
    bank.specs.push_back({"mode " + std::to_string(j + 1), b.mean, processes[j]});
    bank.beliefs.push_back(std::move(b));
  }
  bank.mu = Vec::Constant(static_cast<Eigen::Index>(r), 1.0 / static_cast<double>(r));
  bank.p = transition_matrix(r, stay, switch_prob);
  return bank;
}

}  // namespace

ImmBank four_mode_bank(const RobotState& pose, ModeProcess fault_modes) {
  return make_bank(pose, {{2.0, 2.0}, {1.0, 2.0}, {2.0, 1.0}, {1.0, 1.0}},
                   std::vector<ModeProcess>(4, fault_modes), 0.97, 0.01);
}

ImmBank five_mode_bank(const RobotState& pose, ModeProcess fault_modes) {
  std::vector<ModeProcess> processes(4, fault_modes);
  processes.push_back(ModeProcess::ramp_left);
  ImmBank bank = make_bank(pose, {{2.0, 2.0}, {1.0, 2.0}, {2.0, 1.0}, {1.0, 1.0}, {2.0, 2.0}},
                           processes, 0.96, 0.01);
  bank.specs.back().label = "mode 5 (left ramp)";
  return bank;
}

}  // namespace ftc
