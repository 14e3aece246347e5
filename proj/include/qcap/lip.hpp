#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qcap/polytope.hpp"

namespace qcap::lip {

/// CoM state layout used everywhere: (c_x, cdot_x, c_y, cdot_y).
enum StateIndex : int { kCx = 0, kVx = 1, kCy = 2, kVy = 3 };
inline constexpr int kStateDim = 4;
inline constexpr int kNumLegs = 4;

using Matrix4d = Eigen::Matrix4d;
using Matrix42d = Eigen::Matrix<double, 4, 2>;
using Vector4d = Eigen::Vector4d;
using Vector2d = Eigen::Vector2d;
/// Planar foot positions, one column per leg (FR, FL, RL, RR).
using Footsteps = Eigen::Matrix<double, 2, kNumLegs>;
using Contacts = std::array<bool, kNumLegs>;

struct LipParams {
  double height = 0.29;
  double gravity = 9.81;
  double dt = 0.05;
  int period_steps = 6;

  /// Throws std::invalid_argument on non-positive height, gravity, dt or period.
  void validate() const;
  double omega() const;
};

/// Periodic contact schedule; phase k of the period has contacts[k].
class GaitSchedule {
 public:
  GaitSchedule() = default;
  GaitSchedule(std::string name, std::vector<Contacts> contacts);

  /// Two-beat gaits: the first pair is in stance for the first half of the period.
  /// Legs are FR=0, FL=1, RL=2, RR=3; trot pairs the diagonals {FR, RL} / {FL, RR}.
  static GaitSchedule trot(int period_steps);
  static GaitSchedule bound(int period_steps);
  static GaitSchedule pace(int period_steps);
  /// Every leg always in stance.
  static GaitSchedule stand(int period_steps);
  /// "trot", "bound", "pace" or "stand"; throws std::invalid_argument otherwise.
  static GaitSchedule by_name(const std::string& name, int period_steps, int phase_offset = 0);

  /// Same gait with the period origin moved: new phase k is old phase k + offset.
  GaitSchedule rotated(int offset) const;

  const std::string& name() const { return name_; }
  int period() const { return static_cast<int>(contacts_.size()); }
  /// Contacts at phase k, any integer k (periodic).
  const Contacts& contacts(int k) const;
  std::vector<int> stance_legs(int k) const;
  /// True when some leg goes from swing to stance entering phase k.
  bool is_touchdown(int k) const;
  /// Legs touching down entering phase k.
  std::vector<int> touchdown_legs(int k) const;

 private:
  std::string name_;
  std::vector<Contacts> contacts_;
};

/// Default foot rectangle: (+-0.19, +-0.11) m about the CoM, FR/FL/RL/RR order.
Footsteps nominal_footsteps();

struct ContinuousLip {
  Matrix4d A;
  Matrix42d B;
};
ContinuousLip build_continuous(const LipParams& p);

struct DiscreteLip {
  Matrix4d A;
  Matrix42d B;
};

/// Matrix exponential by scaling and squaring of the Taylor series.
Eigen::MatrixXd expm(const Eigen::MatrixXd& M);

/// A = e^{A_c dt}, B = A_c^{-1}(A - I) B_c. Throws std::domain_error for singular A_c.
DiscreteLip discretize(const ContinuousLip& c, double dt);
/// Per-axis cosh/sinh blocks; used as the reference form.
DiscreteLip discretize_closed_form(const LipParams& p);

/// Instantaneous capture point c + sqrt(h/g) cdot.
Vector2d icp(const Vector4d& x, const LipParams& p);

/// Phase-indexed affine dynamics x+ = A x + e, e in conv(effects[k]).
/// Dimension-generic so the single-axis model shares the reachability code.
struct PhaseDynamics {
  Eigen::MatrixXd A;
  std::vector<std::vector<Eigen::VectorXd>> effects;

  int dim() const { return static_cast<int>(A.rows()); }
  int period() const { return static_cast<int>(effects.size()); }
  const std::vector<Eigen::VectorXd>& phase_effects(int k) const;
};

/// One-period map x+ = A_bar x + B_bar v, with v stacking the per-phase simplex weights.
struct LiftedSystem {
  Eigen::MatrixXd A_bar;
  Eigen::MatrixXd B_bar;
  std::vector<int> block_sizes;  // simplex dimension for each phase, in time order
};
LiftedSystem lift_period(const PhaseDynamics& dyn);

class SwitchedLipSystem {
 public:
  SwitchedLipSystem(LipParams params, GaitSchedule schedule, Footsteps footsteps);

  const LipParams& params() const { return params_; }
  const GaitSchedule& schedule() const { return schedule_; }
  const Footsteps& footsteps() const { return footsteps_; }
  const Matrix4d& A() const { return A_; }
  const Matrix42d& B() const { return B_; }
  int period() const { return schedule_.period(); }

  /// CoP candidates at phase k: stance-foot positions of `w` (default: own footsteps).
  VPolytope input_set(int k) const;
  VPolytope input_set(int k, const Footsteps& w) const;
  /// Same system with footsteps w.
  SwitchedLipSystem with_footsteps(const Footsteps& w) const;
  /// Effects B p for every stance foot p at every phase.
  PhaseDynamics phase_dynamics() const;
  /// x+ = A x + B * (stance CoP for weights lambda over the stance legs of phase k).
  Vector4d step(const Vector4d& x, int k, const Eigen::VectorXd& lambda) const;
  Vector4d step(const Vector4d& x, int k, const Eigen::VectorXd& lambda, const Footsteps& w) const;

 private:
  LipParams params_;
  GaitSchedule schedule_;
  Footsteps footsteps_;
  Matrix4d A_;
  Matrix42d B_;
};

/// Single-axis (c, cdot) model: stance CoP positions per phase along one axis.
PhaseDynamics single_axis_dynamics(const LipParams& p, const std::vector<std::vector<double>>& stance_positions);

/// (dx, 0, dy, 0): the state-space shift matching a planar footstep shift.
Vector4d planar_shift(const Vector2d& dw);

}  // namespace qcap::lip
