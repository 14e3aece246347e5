#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "qcap/planner.hpp"
#include "test_archive.hpp"

using namespace qcap;
using namespace qcap::plan;
using Eigen::VectorXd;
using lip::Footsteps;
using lip::Vector2d;
using lip::Vector4d;

namespace {

const Analysis& A() { return test::trot_analysis(); }

// Lateral push just after the FR/RL touchdown, and a mixed push just after the other pair's.
const Vector4d kLateral(0.0, 0.0, 0.0, 0.6);
constexpr int kLateralPhase = 5;
const Vector4d kMixed(0.1, -0.7, 0.0, 0.3);
constexpr int kMixedPhase = 2;

Footsteps shifted(const Footsteps& w, const Vector2d& d) { return w.colwise() + d; }

/// Stance CoP of step j in a plan.
Vector2d cop(const lip::SwitchedLipSystem& sys, int phase, const Footsteps& w, const VectorXd& lambda) {
  const std::vector<int> legs = sys.schedule().stance_legs(phase);
  Vector2d p = Vector2d::Zero();
  for (size_t i = 0; i < legs.size(); ++i) p += lambda(static_cast<Eigen::Index>(i)) * w.col(legs[i]);
  return p;
}

void expect_consistent_plan(const PlanResult& p, const Analysis& a, const PlanConfig& cfg) {
  const lip::SwitchedLipSystem sys = a.system();
  ASSERT_EQ(static_cast<int>(p.com_trajectory.size()), cfg.horizon + 1);
  ASSERT_EQ(static_cast<int>(p.cop_weights.size()), cfg.horizon);
  ASSERT_EQ(static_cast<int>(p.footstep_sequence.size()), cfg.horizon);
  const Vector4d W = lip::planar_shift(p.delta_w_star);
  const Polytope X = translate(a.constraint_set(), W);
  for (int k = 0; k < cfg.horizon; ++k) {
    const VectorXd& lam = p.cop_weights[static_cast<size_t>(k)];
    EXPECT_GE(lam.minCoeff(), -1e-9);
    EXPECT_NEAR(lam.sum(), 1.0, 1e-9);
    const Vector4d next = sys.A() * p.com_trajectory[static_cast<size_t>(k)] +
                          sys.B() * cop(sys, p.phase + k, p.footstep_sequence[static_cast<size_t>(k)], lam);
    EXPECT_LE((next - p.com_trajectory[static_cast<size_t>(k + 1)]).cwiseAbs().maxCoeff(), 1e-9) << "step " << k;
    if (k >= 1) {
      EXPECT_TRUE(contains_point(X, p.com_trajectory[static_cast<size_t>(k)], 1e-6)) << "step " << k;
    }
  }
  const Polytope terminal = translate(a.capturable_slice(p.phase + cfg.horizon), W);
  EXPECT_TRUE(contains_point(terminal, p.com_trajectory.back(), 1e-6));
  for (const Landing& l : p.landings) {
    if (l.step < 1 || l.step >= cfg.horizon) continue;
    const Vector4d& c = p.com_trajectory[static_cast<size_t>(l.step)];
    const Vector2d rel = l.pos - Vector2d(c(lip::kCx), c(lip::kCy)) - a.config.footsteps.col(l.leg);
    EXPECT_TRUE(((rel - cfg.kin_lo).array() >= -1e-7).all() && ((cfg.kin_hi - rel).array() >= -1e-7).all())
        << "leg " << l.leg << " step " << l.step;
  }
}

}  // namespace

TEST(PlanTarget, NeverWorseThanStayingPut) {
  const Vector4d x = Vector4d::Zero();
  const Polytope& C = A().capturable_slice(0);
  const cap::QuadraticSurrogate& s = A().surrogate_for(0);
  ASSERT_TRUE(contains_point(C, x));
  const TargetResult t = plan_target(x, C, s, A().config.footsteps, 0.0);
  EXPECT_LE(t.surrogate_cost, s(x) + 1e-9);
  EXPECT_TRUE(contains_point(C, x - lip::planar_shift(t.delta_w), 1e-7));
  EXPECT_LE((t.target - shifted(A().config.footsteps, t.delta_w)).norm(), 1e-15);
}

TEST(PlanTarget, MatchesGridSearchOverShifts) {
  const int phase = kLateralPhase;
  const Polytope& C = A().capturable_slice(phase);
  const cap::QuadraticSurrogate& s = A().surrogate_for(phase);
  const TargetResult t = plan_target(kLateral, C, s, A().config.footsteps, 0.0);
  double best = std::numeric_limits<double>::infinity();
  const int n = 301;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const Vector2d d(-1.5 + 3.0 * i / (n - 1), -1.5 + 3.0 * j / (n - 1));
      const Vector4d y = kLateral - lip::planar_shift(d);
      if (contains_point(C, y, 0.0)) best = std::min(best, s(y));
    }
  ASSERT_TRUE(std::isfinite(best));
  EXPECT_LE(t.surrogate_cost, best + 1e-9);
  EXPECT_GE(t.surrogate_cost, best - 0.02 * std::max(1.0, best));
}

TEST(PlanTarget, RecoversAKnownShift) {
  const Polytope& C = A().capturable_slice(kMixedPhase);
  const cap::QuadraticSurrogate& s = A().surrogate_for(kMixedPhase);
  const TargetResult base = plan_target(kMixed, C, s, A().config.footsteps);
  const Vector2d d(0.37, -0.21);
  const TargetResult moved = plan_target(kMixed + lip::planar_shift(d), C, s, A().config.footsteps);
  EXPECT_LE((moved.delta_w - base.delta_w - d).norm(), 1e-6);
  EXPECT_NEAR(moved.surrogate_cost, base.surrogate_cost, 1e-6 * std::max(1.0, base.surrogate_cost));
}

TEST(PlanTarget, VelocityBeyondTheSliceIsNotCapturable) {
  const Polytope& C = A().capturable_slice(0);
  const Vector4d x(0.0, 6.0, 0.0, 0.0);
  try {
    plan_target(x, C, A().surrogate_for(0), A().config.footsteps);
    FAIL() << "expected NotCapturable";
  } catch (const NotCapturable& e) {
    EXPECT_GT(e.distance, 0.0);
    EXPECT_NEAR(e.distance, capture_distance(x, C), 1e-12);
  }
  EXPECT_EQ(capture_distance(Vector4d::Zero(), C), 0.0);
}

TEST(PlanCom, UnconstrainedPlanFollowsTheDynamics) {
  const lip::SwitchedLipSystem sys = A().system();
  PlanConfig cfg;
  cfg.horizon = 6;
  const std::vector<Footsteps> seq(6, A().config.footsteps);
  PlanConstraints cons;
  cons.path = Polytope::universe(4);
  cons.terminal = Polytope::universe(4);
  const Vector4d x0(0.02, 0.1, -0.01, 0.05);
  const ComPlan p = plan_com(sys, 0, x0, seq, Vector4d::Zero(), cfg, cons);
  ASSERT_EQ(p.states.size(), 7u);
  EXPECT_EQ(p.states[0], x0);
  for (int k = 0; k < 6; ++k) {
    const Vector4d next = sys.step(p.states[static_cast<size_t>(k)], k, p.weights[static_cast<size_t>(k)]);
    EXPECT_LE((next - p.states[static_cast<size_t>(k + 1)]).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(PlanCom, TwoStepCostMatchesGridOracle) {
  const lip::SwitchedLipSystem sys = A().system();
  PlanConfig cfg;
  cfg.q = 1.0;
  cfg.r = 0.3;
  cfg.qf = 5.0;
  const std::vector<Footsteps> seq(2, A().config.footsteps);
  PlanConstraints cons;
  cons.path = Polytope::universe(4);
  cons.terminal = Polytope::universe(4);
  const Vector4d x0(0.03, 0.4, 0.03, 0.3);
  const Vector4d xd(0.01, 0.0, -0.02, 0.0);
  const ComPlan p = plan_com(sys, 0, x0, seq, xd, cfg, cons);
  // Each trot step has two stance legs, so the weights are (t, 1 - t) per step.
  auto cost = [&](double t0, double t1) {
    VectorXd l0(2), l1(2);
    l0 << t0, 1.0 - t0;
    l1 << t1, 1.0 - t1;
    const Vector4d x1 = sys.step(x0, 0, l0);
    const Vector4d x2 = sys.step(x1, 1, l1);
    return cfg.q * ((x0 - xd).squaredNorm() + (x1 - xd).squaredNorm()) + cfg.qf * (x2 - xd).squaredNorm() +
           cfg.r * (std::pow(t0 - 0.5, 2) * 2.0 + std::pow(t1 - 0.5, 2) * 2.0);
  };
  double best = std::numeric_limits<double>::infinity();
  const int n = 401;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) best = std::min(best, cost(static_cast<double>(i) / (n - 1), static_cast<double>(j) / (n - 1)));
  EXPECT_NEAR(p.cost, cost(p.weights[0](0), p.weights[1](0)), 1e-9);
  EXPECT_LE(p.cost, best + 1e-9);
  EXPECT_GE(p.cost, best - 1e-4);
}

TEST(PlanCom, UnreachableTerminalSetIsInfeasible) {
  const lip::SwitchedLipSystem sys = A().system();
  PlanConfig cfg;
  const std::vector<Footsteps> seq(2, A().config.footsteps);
  PlanConstraints cons;
  cons.path = Polytope::universe(4);
  cons.terminal = translate(A().config.target_region(), Vector4d(3.0, 0.0, 0.0, 0.0));
  EXPECT_THROW(plan_com(sys, 0, Vector4d::Zero(), seq, Vector4d::Zero(), cfg, cons), PlanInfeasible);
}

TEST(Landings, ScheduleAndSequence) {
  const lip::GaitSchedule s = A().system().schedule();
  const Footsteps target = shifted(A().config.footsteps, Vector2d(0.2, 0.1));
  // From phase 5 with a 12-step horizon, touchdowns happen at steps 3, 6 and 9.
  const std::vector<Landing> ls = schedule_landings(s, 5, 12, 3, target);
  ASSERT_EQ(ls.size(), 6u);
  EXPECT_EQ(ls[0].step, 3);
  EXPECT_EQ(ls[2].step, 6);
  EXPECT_EQ(ls[4].step, 9);
  EXPECT_FALSE(ls[0].pinned);  // first event stays free: the pair lands again at step 9
  EXPECT_TRUE(ls[2].pinned);   // the other pair lands only once
  EXPECT_TRUE(ls[4].pinned);   // last landing of the first pair
  const std::vector<Footsteps> seq = footstep_sequence(A().config.footsteps, ls, 12);
  ASSERT_EQ(seq.size(), 12u);
  EXPECT_EQ(seq[2], A().config.footsteps);
  EXPECT_EQ(seq[11], target);
  EXPECT_NEAR(step_length_cost(A().config.footsteps, ls, 2.0), 2.0 * 4 * 0.05, 1e-12);
}

TEST(PlanFootsteps, AllPinnedReturnsLandingsUnchanged) {
  const lip::SwitchedLipSystem sys = A().system();
  PlanConfig cfg;
  const std::vector<Landing> ls = schedule_landings(sys.schedule(), 0, 12, 1, A().config.footsteps);
  for (const Landing& l : ls) ASSERT_TRUE(l.pinned);
  std::vector<VectorXd> w(12, VectorXd::Constant(2, 0.5));
  PlanConstraints cons;
  cons.path = Polytope::universe(4);
  cons.terminal = Polytope::universe(4);
  const std::vector<Landing> out =
      plan_footsteps(sys, 0, Vector4d::Zero(), A().config.footsteps, ls, w, Vector4d::Zero(), cfg, cons);
  ASSERT_EQ(out.size(), ls.size());
  for (size_t i = 0; i < ls.size(); ++i) EXPECT_EQ(out[i].pos, ls[i].pos);
}

TEST(PlanFootsteps, StepLengthAloneSpacesAChainEvenly) {
  const lip::SwitchedLipSystem sys = A().system();
  PlanConfig cfg;
  cfg.q = cfg.qf = 0.0;
  cfg.q_fh = 1.0;
  const Footsteps cur = A().config.footsteps;
  const Vector2d d(0.6, 0.3);
  // FR lands at steps 1 and 7 (free) and once beyond the horizon on the target (pinned).
  std::vector<Landing> ls{{0, 1, false, cur.col(0)}, {0, 7, false, cur.col(0)}, {0, 13, true, cur.col(0) + d}};
  std::vector<VectorXd> w(12, VectorXd::Constant(2, 0.5));
  PlanConstraints cons;
  cons.path = Polytope::universe(4);
  cons.terminal = Polytope::universe(4);
  cons.kinematics = false;
  const std::vector<Landing> out = plan_footsteps(sys, 5, Vector4d::Zero(), cur, ls, w, Vector4d::Zero(), cfg, cons);
  EXPECT_LE((out[0].pos - (cur.col(0) + d / 3.0)).norm(), 1e-8);
  EXPECT_LE((out[1].pos - (cur.col(0) + 2.0 * d / 3.0)).norm(), 1e-8);
  EXPECT_EQ(out[2].pos, cur.col(0) + d);
}

TEST(PlanFootsteps, TargetBeyondReachIsInfeasible) {
  const lip::SwitchedLipSystem sys = A().system();
  PlanConfig cfg;
  const Footsteps far = shifted(A().config.footsteps, Vector2d(2.0, 0.0));
  // Every landing pinned 2 m away while the CoM starts at rest: the landing boxes cannot hold.
  const std::vector<Landing> ls = schedule_landings(sys.schedule(), 5, 12, 1, far);
  PlanConstraints cons;
  cons.path = Polytope::universe(4);
  cons.terminal = Polytope::universe(4);
  EXPECT_THROW(plan_com(sys, 5, Vector4d::Zero(), footstep_sequence(A().config.footsteps, ls, 12), Vector4d::Zero(),
                        cfg, cons, ls),
               PlanInfeasible);
}

TEST(PlanRecovery, BalancedStateIsANoOp) {
  const PlanResult p = plan_recovery(Vector4d::Zero(), 0, A().config.footsteps, A());
  EXPECT_TRUE(p.noop);
  EXPECT_EQ(p.delta_w_star, Vector2d::Zero());
  EXPECT_EQ(p.com_trajectory.size(), 1u);
}

TEST(PlanRecovery, PerturbedStatesGetConsistentPlans) {
  PlanConfig cfg;
  for (const auto& [x, phase] : {std::pair{kLateral, kLateralPhase}, std::pair{kMixed, kMixedPhase}}) {
    const PlanResult p = plan_recovery(x, phase, A().config.footsteps, A(), cfg);
    EXPECT_FALSE(p.noop);
    EXPECT_GE(p.chosen_step_count, cfg.step_count_min);
    EXPECT_LE(p.chosen_step_count, cfg.step_count_max);
    expect_consistent_plan(p, A(), cfg);
  }
}

TEST(PlanRecovery, JointCostIsMonotone) {
  const PlanResult p = plan_recovery(kMixed, kMixedPhase, A().config.footsteps, A());
  ASSERT_FALSE(p.costs.empty());
  for (size_t i = 1; i < p.costs.size(); ++i) EXPECT_LE(p.costs[i], p.costs[i - 1] + 1e-9);
  EXPECT_EQ(p.iterations_used, static_cast<int>(p.costs.size()) - 1);
}

TEST(PlanRecovery, TranslationEquivariant) {
  const Vector2d d(0.8, -0.5);
  const PlanResult a = plan_recovery(kLateral, kLateralPhase, A().config.footsteps, A());
  const PlanResult b = plan_recovery(kLateral + lip::planar_shift(d), kLateralPhase,
                                     shifted(A().config.footsteps, d), A());
  EXPECT_LE((b.delta_w_star - a.delta_w_star - d).norm(), 1e-6);
  ASSERT_EQ(a.com_trajectory.size(), b.com_trajectory.size());
  for (size_t k = 0; k < a.com_trajectory.size(); ++k)
    EXPECT_LE((b.com_trajectory[k] - a.com_trajectory[k] - lip::planar_shift(d)).norm(), 1e-6);
  ASSERT_EQ(a.landings.size(), b.landings.size());
  for (size_t i = 0; i < a.landings.size(); ++i) EXPECT_LE((b.landings[i].pos - a.landings[i].pos - d).norm(), 1e-6);
}

TEST(PlanRecovery, Deterministic) {
  const PlanResult a = plan_recovery(kMixed, kMixedPhase, A().config.footsteps, A());
  const PlanResult b = plan_recovery(kMixed, kMixedPhase, A().config.footsteps, A());
  EXPECT_EQ(a.delta_w_star, b.delta_w_star);
  EXPECT_EQ(a.costs, b.costs);
  for (size_t k = 0; k < a.com_trajectory.size(); ++k) EXPECT_EQ(a.com_trajectory[k], b.com_trajectory[k]);
}

TEST(PlanRecovery, FallsBackToAnotherShiftWhenTheSurrogateOptimumIsOutOfReach) {
  // Deep in the capturable slice, but the landing boxes rule out the surrogate-optimal target.
  const Vector4d x(0.319, -1.511, 0.165, -1.398);
  const PlanConfig cfg = test::trot_run_config().planner;
  const TargetResult t = plan_target(x, A().capturable_slice(4), A().surrogate_for(4), A().config.footsteps);
  const PlanResult p = plan_recovery(x, 4, A().config.footsteps, A(), cfg);
  EXPECT_GT((p.delta_w_star - t.delta_w).norm(), 1e-6);
  expect_consistent_plan(p, A(), cfg);
}

TEST(PlanRecovery, FarOutsideEveryShiftThrowsNotCapturable) {
  EXPECT_THROW(plan_recovery(Vector4d(0.0, 0.0, 0.0, 50.0), 2, A().config.footsteps, A()), NotCapturable);
}

TEST(PlanConfig, ValidateRejectsBadValues) {
  PlanConfig c;
  c.horizon = 3;
  EXPECT_THROW(c.validate(6), std::invalid_argument);
  c = PlanConfig{};
  c.step_count_min = 3;
  c.step_count_max = 2;
  EXPECT_THROW(c.validate(6), std::invalid_argument);
  c = PlanConfig{};
  c.q = -1.0;
  EXPECT_THROW(c.validate(6), std::invalid_argument);
}
