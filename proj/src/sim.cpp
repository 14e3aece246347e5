#include "qcap/sim.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "qcap/solver.hpp"

namespace qcap::sim {

using Eigen::MatrixXd;
using Eigen::VectorXd;

int timing_phase(const lip::GaitSchedule& s, int timing) {
  if (timing < 1 || timing > 4) throw std::invalid_argument("timing must be in 1..4");
  const int T = s.period();
  auto has = [](const std::vector<int>& legs, int leg) {
    for (int l : legs)
      if (l == leg) return true;
    return false;
  };
  int first = -1;
  for (int k = 0; k < T && first < 0; ++k)
    if (has(s.touchdown_legs(k), 0)) first = k;
  if (first < 0) throw std::invalid_argument("timing_phase: leg 0 never touches down");
  if (timing <= 2) return (first + timing - 1) % T;
  int other = -1;
  for (int d = 1; d < T && other < 0; ++d) {
    const std::vector<int> legs = s.touchdown_legs(first + d);
    if (!legs.empty() && !has(legs, 0)) other = (first + d) % T;
  }
  if (other < 0) throw std::invalid_argument("timing_phase: gait has a single touchdown event");
  return (other + timing - 3) % T;
}

bool balance_control(const Analysis& archive, const Vector4d& x, int phase, const Vector2d& dw, VectorXd& lambda) {
  const lip::SwitchedLipSystem sys = archive.system();
  const std::vector<int> legs = sys.schedule().stance_legs(phase);
  const int n = static_cast<int>(legs.size());
  const Polytope next = translate(archive.balance_slice(phase + 1), lip::planar_shift(dw));
  const int m = next.num_rows();
  MatrixXd E(4, n);
  for (int i = 0; i < n; ++i) E.col(i) = sys.B() * (archive.config.footsteps.col(legs[static_cast<size_t>(i)]) + dw);
  // max s  s.t.  H (A x + E lambda) + s |H_i| <= h,  lambda in the simplex
  MatrixXd G = MatrixXd::Zero(m + n, n + 1);
  VectorXd g = VectorXd::Zero(m + n);
  G.topLeftCorner(m, n) = next.normals() * E;
  G.col(n).head(m) = next.normals().rowwise().norm();
  g.head(m) = next.offsets() - next.normals() * (sys.A() * x);
  G.bottomLeftCorner(n, n) = -MatrixXd::Identity(n, n);
  VectorXd c = VectorXd::Zero(n + 1);
  c(n) = -1.0;
  MatrixXd A = MatrixXd::Zero(1, n + 1);
  A.leftCols(n).setOnes();
  const solver::QpSolution s = solver::solve_lp(c, G, g, A, VectorXd::Ones(1));
  if (!s.optimal() || s.x_opt(n) < -kMembershipTol) return false;
  lambda = s.x_opt.head(n);
  return true;
}

namespace {

Vector2d frame_shift(const Footsteps& w, const Footsteps& nominal) {
  return (w.rowwise().mean() - nominal.rowwise().mean());
}

}  // namespace

RolloutResult rollout(const Analysis& archive, const plan::PlanConfig& cfg, const PushEvent& push,
                      const RolloutOptions& opts) {
  if (!(opts.horizon_s > 0.0)) throw std::invalid_argument("rollout: horizon must be positive");
  const int T = archive.period();
  if (push.phase_index < 0 || push.phase_index >= T) throw std::invalid_argument("rollout: push phase out of range");
  const lip::SwitchedLipSystem sys = archive.system();
  const Footsteps& nominal = archive.config.footsteps;
  const Polytope X = archive.constraint_set();
  const int K = std::max(T, static_cast<int>(std::lround(opts.horizon_s / archive.config.params.dt)));

  RolloutResult r;
  Footsteps w = opts.feet;
  Vector4d x = opts.x_rest + lip::planar_shift(frame_shift(w, nominal));
  x(lip::kVx) += push.dv(0);
  x(lip::kVy) += push.dv(1);
  r.states.push_back(x);

  auto balanced = [&](const Vector4d& s, int phase, const Footsteps& feet) {
    const auto dw = plan::nominal_shift(feet, nominal);
    return dw && contains_point(translate(archive.balance_slice(phase), lip::planar_shift(*dw)), s);
  };
  auto inside_x = [&](const Vector4d& s, const Footsteps& feet) {
    return contains_point(translate(X, lip::planar_shift(frame_shift(feet, nominal))), s);
  };

  std::optional<plan::Commitment> committed;
  for (int k = 0; k < K; ++k) {
    const int phase = (push.phase_index + k) % T;
    r.phases.push_back(phase);
    r.feet.push_back(w);
    r.balanced.push_back(balanced(x, phase, w));
    VectorXd lambda;
    Footsteps w_next = w;
    try {
      const plan::PlanResult p = plan::plan_recovery(x, phase, w, archive, cfg, committed);
      if (p.noop)
        committed.reset();
      else
        committed = plan::Commitment{p.delta_w_star, p.chosen_step_count};
      if (p.noop) {
        if (!balance_control(archive, x, phase, p.delta_w_star, lambda)) {
          const int n = static_cast<int>(sys.schedule().stance_legs(phase).size());
          lambda = VectorXd::Constant(n, 1.0 / n);
        }
      } else {
        ++r.plans;
        lambda = p.cop_weights.front();
        if (p.footstep_sequence.size() > 1) w_next = p.footstep_sequence[1];
      }
    } catch (const plan::NotCapturable&) {
      r.reason = "not_capturable";
      return r;
    } catch (const plan::PlanInfeasible&) {
      r.reason = "plan_infeasible";
      return r;
    }
    // Checked after planning so that a state beyond every tube reports not_capturable.
    if (!inside_x(x, w)) {
      r.reason = "left_constraint_set";
      return r;
    }
    x = sys.step(x, phase, lambda, w);
    w = w_next;
    if (committed && sys.schedule().is_touchdown(phase + 1))
      committed->step_count = std::max(1, committed->step_count - 1);
    r.states.push_back(x);
  }
  r.phases.push_back((push.phase_index + K) % T);
  r.feet.push_back(w);
  r.balanced.push_back(balanced(x, (push.phase_index + K) % T, w));
  if (!inside_x(x, w)) {
    r.reason = "left_constraint_set";
    return r;
  }
  for (int k = K - T + 1; k <= K; ++k)
    if (!r.balanced[static_cast<size_t>(k)]) {
      r.reason = "not_settled";
      return r;
    }
  r.success = true;
  r.reason = "ok";
  return r;
}

Grid Grid::parse(const std::string& text) {
  Grid g;
  char c1, c2, comma, c3, c4;
  std::istringstream in(text);
  if (!(in >> g.x0 >> c1 >> g.x1 >> c2 >> g.dx >> comma >> g.y0 >> c3 >> g.y1 >> c4 >> g.dy) || c1 != ':' ||
      c2 != ':' || comma != ',' || c3 != ':' || c4 != ':')
    throw std::invalid_argument("grid must look like x0:x1:dx,y0:y1:dy, got '" + text + "'");
  in >> std::ws;
  if (!in.eof()) throw std::invalid_argument("trailing characters in grid '" + text + "'");
  if (!(g.dx > 0.0) || !(g.dy > 0.0) || g.x1 < g.x0 || g.y1 < g.y0)
    throw std::invalid_argument("grid needs positive spacing and ordered bounds");
  return g;
}

int Grid::nx() const { return static_cast<int>(std::floor((x1 - x0) / dx + 1e-9)) + 1; }
int Grid::ny() const { return static_cast<int>(std::floor((y1 - y0) / dy + 1e-9)) + 1; }

int SweepResult::successes() const {
  int n = 0;
  for (auto s : success) n += s;
  return n;
}

SweepResult sweep(const Analysis& archive, const plan::PlanConfig& cfg, int timing, const Grid& grid,
                  const SweepOptions& opts) {
  SweepResult out;
  out.grid = grid;
  out.gait = archive.config.gait;
  out.timing = timing;
  const lip::SwitchedLipSystem sys = archive.system();
  out.phase = timing_phase(sys.schedule(), timing);
  const int nx = grid.nx();
  const int ny = grid.ny();
  const size_t cells = static_cast<size_t>(nx) * static_cast<size_t>(ny);
  out.success.assign(cells, 0);
  out.reason.assign(cells, "");

  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t c = next++; c < cells; c = next++) {
      PushEvent push;
      push.phase_index = out.phase;
      push.dv = Vector2d(grid.x(static_cast<int>(c % static_cast<size_t>(nx))),
                         grid.y(static_cast<int>(c / static_cast<size_t>(nx))));
      try {
        const RolloutResult r = rollout(archive, cfg, push, opts.rollout);
        out.success[c] = r.success ? 1 : 0;
        out.reason[c] = r.reason;
      } catch (const std::exception& e) {
        out.reason[c] = std::string("error: ") + e.what();
      }
    }
  };
  const int jobs = std::max(1, opts.jobs);
  std::vector<std::thread> pool;
  for (int i = 1; i < jobs; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return out;
}

int isolated_successes(const SweepResult& r) {
  const int nx = r.grid.nx();
  const int ny = r.grid.ny();
  if (nx * ny == 1) return 0;
  int n = 0;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      if (!r.at(i, j)) continue;
      const bool nb = (i > 0 && r.at(i - 1, j)) || (i + 1 < nx && r.at(i + 1, j)) || (j > 0 && r.at(i, j - 1)) ||
                      (j + 1 < ny && r.at(i, j + 1));
      n += nb ? 0 : 1;
    }
  return n;
}

}  // namespace qcap::sim
