#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qcap/capturability.hpp"
#include "qcap/lip.hpp"

namespace qcap {

/// Everything needed to rebuild the switched system and its capturability objects.
struct AnalysisConfig {
  std::string gait = "trot";
  /// Period origin relative to the touchdown of the first stance pair, in steps.
  int phase_offset = 1;
  lip::LipParams params;
  lip::Footsteps footsteps = lip::nominal_footsteps();
  /// Target region X_T bounds over (c_x, cdot_x, c_y, cdot_y).
  Eigen::Vector4d target_lo = Eigen::Vector4d(-0.19, -0.2, -0.11, -0.2);
  Eigen::Vector4d target_hi = Eigen::Vector4d(0.19, 0.2, 0.11, 0.2);
  /// General constraint set X: X_T scaled about its center by these factors.
  double position_inflation = 3.0;
  double velocity_inflation = 10.0;
  int balance_max_iter = 30;
  int capture_horizon = 12;
  cap::SurrogateOptions surrogate;  // horizon is forced to capture_horizon
  int volume_samples = 20000;
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument on inconsistent values.
  void validate() const;
  lip::SwitchedLipSystem system() const;
  Polytope target_region() const;
  Polytope constraint_set() const;
};

/// Offline capturability objects for one gait.
struct Analysis {
  AnalysisConfig config;
  cap::Tube balance;
  int balance_iterations = 0;
  std::vector<double> balance_iterate_volumes;
  /// capturable[t]: C(0..T; B_t) for terminal phase t in [0, T_G).
  std::vector<cap::Tube> capturable;
  /// surrogates[t]: fitted over capturable[t].slices[T].
  std::vector<cap::QuadraticSurrogate> surrogates;
  std::vector<int> surrogate_holdout_violations;

  lip::SwitchedLipSystem system() const { return config.system(); }
  Polytope constraint_set() const { return config.constraint_set(); }
  int period() const { return config.params.period_steps; }
  int horizon() const { return config.capture_horizon; }
  /// Balance slice for a state at phase k (any integer).
  const Polytope& balance_slice(int k) const;
  /// Capturable slice C(T; B_t) applying to a state at phase k, with t = (k + T) mod T_G.
  const Polytope& capturable_slice(int k) const;
  const cap::QuadraticSurrogate& surrogate_for(int k) const;
};

/// Runs the balance-tube fixed point, the capturable tubes for every terminal phase and the
/// surrogate fits. Propagates cap::EmptyResult / cap::NonConvergence / cap::FitFailure.
Analysis analyze(const AnalysisConfig& cfg);

}  // namespace qcap
