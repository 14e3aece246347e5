#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qcap/analysis.hpp"
#include "qcap/lip.hpp"
#include "qcap/planner.hpp"

namespace qcap::sim {

using lip::Footsteps;
using lip::Vector2d;
using lip::Vector4d;

/// Gait phase for push timing 1..4: 1 is the touchdown of the pair holding leg 0 (FR),
/// 3 the touchdown of the other pair, 2 and 4 one step after each.
int timing_phase(const lip::GaitSchedule& schedule, int timing);

/// Instantaneous CoM velocity change applied at the start of a step of phase `phase_index`.
struct PushEvent {
  int phase_index = 0;
  Vector2d dv = Vector2d::Zero();
};

struct RolloutOptions {
  double horizon_s = 3.0;
  /// Pre-push state relative to the footstep frame, and the feet.
  Vector4d x_rest = Vector4d::Zero();
  Footsteps feet = lip::nominal_footsteps();
};

struct RolloutResult {
  bool success = false;
  std::string reason;  // "ok", "not_capturable", "plan_infeasible", "left_constraint_set", "not_settled"
  /// Parallel arrays over the visited states x_0..x_K: phase, feet in effect, and balance membership.
  std::vector<Vector4d> states;
  std::vector<int> phases;
  std::vector<Footsteps> feet;
  std::vector<bool> balanced;
  int plans = 0;  // planner invocations that were not no-ops
};

/// Receding-horizon closed loop: re-plans every step, uses the balance-tube controller once the
/// state is in the shifted balance slice with the feet in nominal shape. Success means every state
/// of the last gait period is balanced and the CoM never leaves X about the current footstep frame.
RolloutResult rollout(const Analysis& archive, const plan::PlanConfig& cfg, const PushEvent& push,
                      const RolloutOptions& opts = {});

/// Stance weights putting the next state deepest inside the next shifted balance slice.
/// Returns false when the next state cannot stay in that slice.
bool balance_control(const Analysis& archive, const Vector4d& x, int phase, const Vector2d& dw, Eigen::VectorXd& lambda);

/// Inclusive ranges "x0:x1:dx,y0:y1:dy".
struct Grid {
  double x0 = -1.5, x1 = 1.5, dx = 0.1;
  double y0 = -1.5, y1 = 1.5, dy = 0.1;

  /// Throws std::invalid_argument on malformed text or non-positive spacing.
  static Grid parse(const std::string& text);
  int nx() const;
  int ny() const;
  /// Cell coordinates, rounded to 1e-12 so decimal grids hit their decimal values (and 0) exactly.
  double x(int i) const { return snap(x0 + i * dx); }
  double y(int j) const { return snap(y0 + j * dy); }
  static double snap(double v) { return std::round(v * 1e12) / 1e12 + 0.0; }  // + 0.0 drops -0
};

struct SweepResult {
  Grid grid;
  std::string gait;
  int timing = 1;
  int phase = 0;
  /// Row-major with dv_y outer: cell (i, j) at j * nx + i.
  std::vector<std::uint8_t> success;
  std::vector<std::string> reason;

  bool at(int i, int j) const { return success[static_cast<size_t>(j * grid.nx() + i)] != 0; }
  int successes() const;
};

struct SweepOptions {
  int jobs = 1;
  RolloutOptions rollout;
};

/// One rollout per grid cell; independent of `jobs`.
SweepResult sweep(const Analysis& archive, const plan::PlanConfig& cfg, int timing, const Grid& grid,
                  const SweepOptions& opts = {});

/// Success cells without a 4-neighbour success (0 for a single-cell grid).
int isolated_successes(const SweepResult& r);

}  // namespace qcap::sim
