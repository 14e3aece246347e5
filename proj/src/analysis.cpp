#include "qcap/analysis.hpp"

#include <stdexcept>

namespace qcap {

void AnalysisConfig::validate() const {
  params.validate();
  // An inverted box is an empty target region; analysis reports it as EmptyResult.
  if (!target_lo.allFinite() || !target_hi.allFinite()) throw std::invalid_argument("target region must be finite");
  if (!(position_inflation >= 1.0) || !(velocity_inflation >= 1.0))
    throw std::invalid_argument("constraint set inflation must be >= 1");
  if (balance_max_iter < 1) throw std::invalid_argument("balance_max_iter must be >= 1");
  if (capture_horizon < 1) throw std::invalid_argument("capture_horizon must be >= 1");
  if (volume_samples < 1) throw std::invalid_argument("volume_samples must be >= 1");
  lip::GaitSchedule::by_name(gait, params.period_steps, phase_offset);
}

lip::SwitchedLipSystem AnalysisConfig::system() const {
  return lip::SwitchedLipSystem(params, lip::GaitSchedule::by_name(gait, params.period_steps, phase_offset),
                                footsteps);
}

Polytope AnalysisConfig::target_region() const { return Polytope::box(target_lo, target_hi); }

Polytope AnalysisConfig::constraint_set() const {
  const Eigen::Vector4d c = 0.5 * (target_lo + target_hi);
  Eigen::Vector4d r = 0.5 * (target_hi - target_lo);
  r(lip::kCx) *= position_inflation;
  r(lip::kCy) *= position_inflation;
  r(lip::kVx) *= velocity_inflation;
  r(lip::kVy) *= velocity_inflation;
  return Polytope::box(c - r, c + r);
}

const Polytope& Analysis::balance_slice(int k) const {
  const int T = period();
  return balance.slices[static_cast<size_t>(((k % T) + T) % T)];
}

const Polytope& Analysis::capturable_slice(int k) const {
  const int t = cap::terminal_phase_for(k, horizon(), period());
  return capturable[static_cast<size_t>(t)].slices.back();
}

const cap::QuadraticSurrogate& Analysis::surrogate_for(int k) const {
  return surrogates[static_cast<size_t>(cap::terminal_phase_for(k, horizon(), period()))];
}

Analysis analyze(const AnalysisConfig& cfg) {
  cfg.validate();
  Analysis out;
  out.config = cfg;
  const lip::SwitchedLipSystem sys = cfg.system();
  const lip::PhaseDynamics dyn = sys.phase_dynamics();
  const Polytope X = cfg.constraint_set();

  cap::BalanceOptions bo;
  bo.max_iter = cfg.balance_max_iter;
  bo.volume_samples = cfg.volume_samples;
  bo.seed = cfg.seed;
  cap::BalanceResult br = cap::balance_tube(cfg.target_region(), dyn, bo);
  out.balance = std::move(br.tube);
  out.balance.gait = cfg.gait;
  out.balance.footsteps = cfg.footsteps;
  out.balance_iterations = br.iterations;
  out.balance_iterate_volumes = std::move(br.iterate_volumes);

  cap::CapturableOptions co;
  co.horizon = cfg.capture_horizon;
  co.volume_samples = cfg.volume_samples;
  co.seed = cfg.seed;
  cap::SurrogateOptions so = cfg.surrogate;
  so.horizon = cfg.capture_horizon;
  const int T = cfg.params.period_steps;
  for (int t = 0; t < T; ++t) {
    out.capturable.push_back(cap::capturable_tube(out.balance, t, X, dyn, co));
    const int phase = ((t - cfg.capture_horizon) % T + T) % T;
    cap::SurrogateFit fit = cap::fit_surrogate(out.capturable.back().slices.back(), phase, X,
                                               out.balance.slices[static_cast<size_t>(t)], dyn, so);
    out.surrogates.push_back(std::move(fit.surrogate));
    out.surrogate_holdout_violations.push_back(fit.holdout_violations);
  }
  return out;
}

}  // namespace qcap
