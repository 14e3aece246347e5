#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qcap/analysis.hpp"
#include "qcap/capturability.hpp"
#include "qcap/lip.hpp"
#include "qcap/polytope.hpp"

namespace qcap::plan {

using lip::Footsteps;
using lip::Vector2d;
using lip::Vector4d;

struct PlanConfig {
  int horizon = 12;  // N_P, in steps
  /// Candidate numbers of upcoming touchdown events used to reach the target footsteps.
  int step_count_min = 2;
  int step_count_max = 4;
  int max_iter = 20;
  double q = 1.0;     // running CoM weight
  double r = 0.1;     // stance-weight weight, on deviation from the even split
  double qf = 10.0;   // terminal CoM weight
  double q_fh = 1.0;  // step-length weight of the footstep subproblem
  /// Landing foot minus (CoM + nominal offset of that leg), per axis.
  Vector2d kin_lo = Vector2d(-0.15, -0.15);
  Vector2d kin_hi = Vector2d(0.15, 0.15);
  /// Stop when the cost changes by less than this, relative.
  double rel_tol = 1e-6;
  /// Replaces the default desired state (center of the shifted terminal balance slice, at rest).
  std::optional<Vector4d> x_desired;

  /// Throws std::invalid_argument; `period` is T_G.
  void validate(int period) const;
};

/// Touchdown of `leg` entering step `step` (relative to the plan start) at `pos`.
struct Landing {
  int leg = 0;
  int step = 0;
  bool pinned = false;  // fixed to the target footsteps
  Vector2d pos = Vector2d::Zero();
};

struct PlanResult {
  bool noop = false;
  int phase = 0;  // gait phase of the first planned step
  Vector2d delta_w_star = Vector2d::Zero();
  Footsteps target_footsteps = Footsteps::Zero();
  Vector4d x_desired = Vector4d::Zero();
  std::vector<Landing> landings;
  /// Footsteps in effect during step k, k = 0..N_P-1 (stance columns are the ones used).
  std::vector<Footsteps> footstep_sequence;
  std::vector<Vector4d> com_trajectory;       // N_P + 1 states
  std::vector<Eigen::VectorXd> cop_weights;   // per step, over the stance legs in index order
  int iterations_used = 0;
  std::vector<double> costs;  // joint cost after each iteration (index 0: initialization)
  int chosen_step_count = 0;
  bool iter_limit = false;

  double cost() const { return costs.empty() ? 0.0 : costs.back(); }
};

/// No translation of the capturable slice contains the state.
class NotCapturable : public std::runtime_error {
 public:
  NotCapturable(const std::string& what, double d) : std::runtime_error(what), distance(d) {}
  double distance;  // smallest uniform relaxation of the normalized slice rows that admits a shift
};

/// A subproblem or every candidate step count is infeasible.
class PlanInfeasible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TargetResult {
  Vector2d delta_w = Vector2d::Zero();
  Footsteps target = Footsteps::Zero();
  double surrogate_cost = 0.0;
};

/// Planar shift minimizing the surrogate of the shifted state subject to membership in C, kept
/// `margin` (row-normalized) inside C when possible. Throws NotCapturable when no shift works.
TargetResult plan_target(const Vector4d& x, const Polytope& C, const cap::QuadraticSurrogate& s,
                         const Footsteps& w_nominal, double margin = 0.01);

/// 0 when some shift of C contains x, else the relaxation reported by NotCapturable.
double capture_distance(const Vector4d& x, const Polytope& C);

/// Constraints shared by both subproblems; all in world coordinates.
struct PlanConstraints {
  Polytope path;      // states 1..N_P-1; universe to disable
  Polytope terminal;  // state N_P; universe to disable
  Footsteps nominal = lip::nominal_footsteps();
  Vector2d kin_lo = Vector2d(-0.15, -0.15);
  Vector2d kin_hi = Vector2d(0.15, 0.15);
  bool kinematics = true;  // enforce the landing boxes
};

struct ComPlan {
  std::vector<Vector4d> states;
  std::vector<Eigen::VectorXd> weights;
  double cost = 0.0;  // tracking plus stance-weight cost
};

/// Stance weights over `footstep_seq` (one entry per step) minimizing the tracking cost.
/// The CoM at each of `landings` is kept inside that landing's box. Throws PlanInfeasible.
ComPlan plan_com(const lip::SwitchedLipSystem& sys, int phase, const Vector4d& x0,
                 const std::vector<Footsteps>& footstep_seq, const Vector4d& x_desired, const PlanConfig& cfg,
                 const PlanConstraints& cons, const std::vector<Landing>& landings = {});

/// Footsteps in effect at each step given the current feet and a set of landings.
std::vector<Footsteps> footstep_sequence(const Footsteps& current, const std::vector<Landing>& landings,
                                         int horizon);

/// q_fh times the summed squared distance between successive placements of each leg.
double step_length_cost(const Footsteps& current, const std::vector<Landing>& landings, double q_fh);

/// Moves the unpinned landings with the stance weights held fixed: minimizes the tracking cost
/// plus the step-length cost under the same constraints. Pinned landings and stance feet stay put.
/// Throws PlanInfeasible.
std::vector<Landing> plan_footsteps(const lip::SwitchedLipSystem& sys, int phase, const Vector4d& x0,
                                    const Footsteps& current, const std::vector<Landing>& landings,
                                    const std::vector<Eigen::VectorXd>& weights, const Vector4d& x_desired,
                                    const PlanConfig& cfg, const PlanConstraints& cons);

/// Landings within the horizon for a given step count: touchdown events 1..N may be free, the
/// last landing of each leg among them and every later landing are pinned to `target`.
std::vector<Landing> schedule_landings(const lip::GaitSchedule& schedule, int phase, int horizon, int step_count,
                                       const Footsteps& target);

/// Target and remaining step count carried between receding-horizon re-plans, so that the
/// pinned landings do not slide later with the horizon.
struct Commitment {
  Vector2d delta_w = Vector2d::Zero();
  int step_count = 1;
};

/// Full recovery plan from state x at gait phase `phase` with feet `current`.
/// Returns a no-op plan when the feet are in nominal shape and x is in the matching balance slice.
/// Targets are tried in order until one admits a plan: the commitment (step counts 1..its count),
/// the plan_target optimum, the current footstep frame when it captures the state, and a few
/// other capturing shifts in order of surrogate cost.
/// Throws NotCapturable or PlanInfeasible.
PlanResult plan_recovery(const Vector4d& x, int phase, const Footsteps& current, const Analysis& archive,
                         const PlanConfig& cfg = {}, const std::optional<Commitment>& committed = std::nullopt);

/// Common planar shift if `w` is the nominal shape shifted, else nullopt.
std::optional<Vector2d> nominal_shift(const Footsteps& w, const Footsteps& nominal, double tol = 1e-9);

}  // namespace qcap::plan
