#include "qcap/planner.hpp"

#include <algorithm>
#include <cmath>

#include "qcap/solver.hpp"

namespace qcap::plan {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void PlanConfig::validate(int period) const {
  if (horizon < period) throw std::invalid_argument("PlanConfig: horizon must cover one gait period");
  if (step_count_min < 1 || step_count_max < step_count_min)
    throw std::invalid_argument("PlanConfig: step count range must satisfy 1 <= min <= max");
  if (max_iter < 1) throw std::invalid_argument("PlanConfig: max_iter must be >= 1");
  if (!(q >= 0.0) || !(r >= 0.0) || !(qf >= 0.0) || !(q_fh >= 0.0))
    throw std::invalid_argument("PlanConfig: weights must be nonnegative");
  if ((kin_hi.array() < kin_lo.array()).any()) throw std::invalid_argument("PlanConfig: empty kinematic box");
  if (!(rel_tol > 0.0)) throw std::invalid_argument("PlanConfig: rel_tol must be positive");
}

std::optional<Vector2d> nominal_shift(const Footsteps& w, const Footsteps& nominal, double tol) {
  const Vector2d d = w.col(0) - nominal.col(0);
  for (int i = 1; i < lip::kNumLegs; ++i)
    if ((w.col(i) - nominal.col(i) - d).cwiseAbs().maxCoeff() > tol) return std::nullopt;
  return d;
}

namespace {

// Relaxation of the state-constraint rows, well inside the membership tolerance of the plans.
constexpr double kStateSlack = 1e-8;

// Shift matrix mapping a planar displacement into state space.
Eigen::Matrix<double, 4, 2> shift_matrix() {
  Eigen::Matrix<double, 4, 2> S = Eigen::Matrix<double, 4, 2>::Zero();
  S(lip::kCx, 0) = 1.0;
  S(lip::kCy, 1) = 1.0;
  return S;
}

Eigen::Matrix<double, 2, 4> position_rows() { return shift_matrix().transpose(); }

// States x_k = a_k + M_k z for k = 0..N, given CoP_j = cop_c[j] + cop_M[j] z.
struct Affine {
  std::vector<VectorXd> a;
  std::vector<MatrixXd> M;
};

Affine propagate(const lip::SwitchedLipSystem& sys, const Vector4d& x0, const std::vector<Vector2d>& cop_c,
                 const std::vector<MatrixXd>& cop_M, int nz) {
  Affine t;
  t.a.push_back(x0);
  t.M.push_back(MatrixXd::Zero(4, nz));
  for (size_t j = 0; j < cop_c.size(); ++j) {
    t.a.push_back(sys.A() * t.a.back() + sys.B() * cop_c[j]);
    t.M.push_back(sys.A() * t.M.back() + sys.B() * cop_M[j]);
  }
  return t;
}

// Accumulates a dense QP in z with a constant term.
struct Builder {
  explicit Builder(int n) : H(MatrixXd::Zero(n, n)), f(VectorXd::Zero(n)) {}

  // w * |m z + v|^2
  void add_square(const MatrixXd& m, const VectorXd& v, double w) {
    if (w == 0.0) return;
    H += 2.0 * w * m.transpose() * m;
    f += 2.0 * w * m.transpose() * v;
    constant += w * v.squaredNorm();
  }
  void add_rows(const MatrixXd& G, const VectorXd& g) {
    if (G.rows() == 0) return;
    Gs.push_back(G);
    gs.push_back(g);
  }
  // P.H (a + M z) <= P.h
  void add_polytope(const Polytope& P, const VectorXd& a, const MatrixXd& M) {
    if (P.num_rows() == 0) return;
    add_rows(P.normals() * M, P.offsets() - P.normals() * a + kStateSlack * P.normals().rowwise().norm());
  }

  solver::QpProblem problem() const {
    solver::QpProblem p;
    p.hessian = 0.5 * (H + H.transpose());
    p.linear = f;
    Eigen::Index rows = 0;
    for (const auto& G : Gs) rows += G.rows();
    p.ineq_G.resize(rows, H.cols());
    p.ineq_g.resize(rows);
    Eigen::Index r = 0;
    for (size_t i = 0; i < Gs.size(); ++i) {
      p.ineq_G.middleRows(r, Gs[i].rows()) = Gs[i];
      p.ineq_g.segment(r, Gs[i].rows()) = gs[i];
      r += Gs[i].rows();
    }
    p.eq_A = eq_A;
    p.eq_b = eq_b;
    if (p.eq_A.size() == 0) {
      p.eq_A.resize(0, H.cols());
      p.eq_b.resize(0);
    }
    return p;
  }

  MatrixXd H;
  VectorXd f;
  double constant = 0.0;
  std::vector<MatrixXd> Gs;
  std::vector<VectorXd> gs;
  MatrixXd eq_A;
  VectorXd eq_b;
};

void add_tracking(Builder& b, const Affine& t, const Vector4d& x_desired, const PlanConfig& cfg) {
  const size_t N = t.a.size() - 1;
  for (size_t k = 0; k <= N; ++k) b.add_square(t.M[k], t.a[k] - x_desired, k == N ? cfg.qf : cfg.q);
}

void add_state_constraints(Builder& b, const Affine& t, const PlanConstraints& cons) {
  const size_t N = t.a.size() - 1;
  for (size_t k = 1; k < N; ++k) b.add_polytope(cons.path, t.a[k], t.M[k]);
  b.add_polytope(cons.terminal, t.a[N], t.M[N]);
}

// Landing position pc + PM z minus the CoM at its step stays in nominal offset + box.
void add_kinematic(Builder& b, const Affine& t, const Landing& l, const Vector2d& pc, const MatrixXd& PM,
                   const PlanConstraints& cons) {
  const size_t j = static_cast<size_t>(l.step);
  const Eigen::Matrix<double, 2, 4> S = position_rows();
  const MatrixXd D = PM - S * t.M[j];
  const Vector2d d = pc - S * t.a[j] - cons.nominal.col(l.leg);
  MatrixXd G(4, D.cols());
  VectorXd g(4);
  G << D, -D;
  g << cons.kin_hi - d, d - cons.kin_lo;
  b.add_rows(G, g);
}

solver::QpSolution solve(const Builder& b, const char* what) {
  const solver::QpSolution s = solver::solve_qp(b.problem());
  if (s.status != solver::Status::Optimal)
    throw PlanInfeasible(std::string(what) + ": QP " + std::string(solver::to_string(s.status)));
  return s;
}

}  // namespace

double capture_distance(const Vector4d& x, const Polytope& C) {
  const int m = C.num_rows();
  MatrixXd Hn = C.normals();
  VectorXd hn = C.offsets();
  for (int i = 0; i < m; ++i) {
    const double nrm = Hn.row(i).norm();
    if (nrm > 0.0) {
      Hn.row(i) /= nrm;
      hn(i) /= nrm;
    }
  }
  // min s  s.t.  Hn (x - S d) <= hn + s
  MatrixXd G(m, 3);
  G.leftCols(2) = -Hn * shift_matrix();
  G.col(2).setConstant(-1.0);
  const VectorXd g = hn - Hn * x;
  const solver::QpSolution s = solver::solve_lp(Eigen::Vector3d(0.0, 0.0, 1.0), G, g);
  if (s.status != solver::Status::Optimal)
    throw std::runtime_error("capture_distance: LP " + std::string(solver::to_string(s.status)));
  return std::max(0.0, s.x_opt(2));
}

TargetResult plan_target(const Vector4d& x, const Polytope& C, const cap::QuadraticSurrogate& s,
                         const Footsteps& w_nominal, double margin) {
  if (is_empty(C).empty) throw std::invalid_argument("plan_target: empty capturable slice");
  if (s.P.rows() != 5 || s.P.cols() != 5) throw std::invalid_argument("plan_target: surrogate must be 5x5");
  const Eigen::Matrix<double, 4, 2> S = shift_matrix();
  const Eigen::Matrix4d P11 = s.P.topLeftCorner<4, 4>();
  const Vector4d p12 = s.P.topRightCorner<4, 1>();
  solver::QpProblem p;
  p.hessian = 2.0 * S.transpose() * P11 * S;
  p.hessian = 0.5 * (p.hessian + p.hessian.transpose()).eval();
  p.linear = -2.0 * S.transpose() * (P11 * x + p12);
  p.ineq_G = -C.normals() * S;
  p.eq_A.resize(0, 2);
  p.eq_b.resize(0);
  const VectorXd norms = C.normals().rowwise().norm();
  const VectorXd slack = C.offsets() - C.normals() * x;
  // The surrogate minimum tends to sit on the boundary, where capture paths are tight; keep the
  // shifted state inside by `margin` when some shift allows it.
  solver::QpSolution sol;
  for (double m : {margin, 0.0}) {
    p.ineq_g = slack - m * norms;
    sol = solver::solve_qp(p);
    if (sol.status != solver::Status::Infeasible || m == 0.0) break;
  }
  if (sol.status == solver::Status::Infeasible) {
    const double d = capture_distance(x, C);
    throw NotCapturable("plan_target: no planar shift captures the state (distance " + std::to_string(d) + ")", d);
  }
  if (sol.status != solver::Status::Optimal)
    throw std::runtime_error("plan_target: QP " + std::string(solver::to_string(sol.status)));
  TargetResult out;
  out.delta_w = sol.x_opt;
  for (int i = 0; i < lip::kNumLegs; ++i) out.target.col(i) = w_nominal.col(i) + out.delta_w;
  out.surrogate_cost = s(x - S * out.delta_w);
  return out;
}

ComPlan plan_com(const lip::SwitchedLipSystem& sys, int phase, const Vector4d& x0,
                 const std::vector<Footsteps>& footstep_seq, const Vector4d& x_desired, const PlanConfig& cfg,
                 const PlanConstraints& cons, const std::vector<Landing>& landings) {
  const int N = static_cast<int>(footstep_seq.size());
  if (N < 1) throw std::invalid_argument("plan_com: empty footstep sequence");
  if (!x0.allFinite()) throw std::invalid_argument("plan_com: non-finite initial state");
  const lip::GaitSchedule& sched = sys.schedule();
  std::vector<int> start, size;
  int nz = 0;
  for (int j = 0; j < N; ++j) {
    start.push_back(nz);
    size.push_back(static_cast<int>(sched.stance_legs(phase + j).size()));
    nz += size.back();
  }
  std::vector<Vector2d> cop_c(static_cast<size_t>(N), Vector2d::Zero());
  std::vector<MatrixXd> cop_M;
  for (int j = 0; j < N; ++j) {
    MatrixXd m = MatrixXd::Zero(2, nz);
    const std::vector<int> legs = sched.stance_legs(phase + j);
    for (size_t i = 0; i < legs.size(); ++i)
      m.col(start[static_cast<size_t>(j)] + static_cast<int>(i)) = footstep_seq[static_cast<size_t>(j)].col(legs[i]);
    cop_M.push_back(std::move(m));
  }
  const Affine t = propagate(sys, x0, cop_c, cop_M, nz);

  Builder b(nz);
  add_tracking(b, t, x_desired, cfg);
  VectorXd even(nz);
  for (int j = 0; j < N; ++j)
    even.segment(start[static_cast<size_t>(j)], size[static_cast<size_t>(j)])
        .setConstant(1.0 / size[static_cast<size_t>(j)]);
  b.add_square(MatrixXd::Identity(nz, nz), -even, cfg.r);
  add_state_constraints(b, t, cons);
  if (cons.kinematics)
    for (const Landing& l : landings)
      if (l.step >= 1 && l.step < N) add_kinematic(b, t, l, l.pos, MatrixXd::Zero(2, nz), cons);
  b.add_rows(-MatrixXd::Identity(nz, nz), VectorXd::Zero(nz));
  b.eq_A = MatrixXd::Zero(N, nz);
  b.eq_b = VectorXd::Ones(N);
  for (int j = 0; j < N; ++j) b.eq_A.block(j, start[static_cast<size_t>(j)], 1, size[static_cast<size_t>(j)]).setOnes();

  const solver::QpSolution s = solve(b, "plan_com");
  ComPlan out;
  for (int k = 0; k <= N; ++k) out.states.push_back(t.a[static_cast<size_t>(k)] + t.M[static_cast<size_t>(k)] * s.x_opt);
  for (int j = 0; j < N; ++j)
    out.weights.push_back(s.x_opt.segment(start[static_cast<size_t>(j)], size[static_cast<size_t>(j)]));
  out.cost = s.objective + b.constant;
  return out;
}

std::vector<Footsteps> footstep_sequence(const Footsteps& current, const std::vector<Landing>& landings,
                                         int horizon) {
  std::vector<Footsteps> seq;
  Footsteps w = current;
  for (int j = 0; j < horizon; ++j) {
    for (const Landing& l : landings)
      if (l.step == j) w.col(l.leg) = l.pos;
    seq.push_back(w);
  }
  return seq;
}

double step_length_cost(const Footsteps& current, const std::vector<Landing>& landings, double q_fh) {
  std::vector<Landing> sorted = landings;
  std::stable_sort(sorted.begin(), sorted.end(), [](const Landing& a, const Landing& b) { return a.step < b.step; });
  Footsteps prev = current;
  double c = 0.0;
  for (const Landing& l : sorted) {
    c += (l.pos - prev.col(l.leg)).squaredNorm();
    prev.col(l.leg) = l.pos;
  }
  return q_fh * c;
}

std::vector<Landing> plan_footsteps(const lip::SwitchedLipSystem& sys, int phase, const Vector4d& x0,
                                    const Footsteps& current, const std::vector<Landing>& landings,
                                    const std::vector<VectorXd>& weights, const Vector4d& x_desired,
                                    const PlanConfig& cfg, const PlanConstraints& cons) {
  const int N = static_cast<int>(weights.size());
  if (N < 1) throw std::invalid_argument("plan_footsteps: empty weight sequence");
  std::vector<size_t> order(landings.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return landings[a].step < landings[b].step; });
  // Variable columns for each free landing.
  std::vector<int> col(landings.size(), -1);
  int nz = 0;
  for (size_t i : order)
    if (!landings[i].pinned) {
      col[i] = nz;
      nz += 2;
    }
  std::vector<Landing> out = landings;
  if (nz == 0) return out;

  // Position of each leg as an affine function of z, advanced through the landings in step order.
  struct Pos {
    Vector2d c;
    MatrixXd M;
  };
  auto fixed = [&](const Vector2d& p) { return Pos{p, MatrixXd::Zero(2, nz)}; };
  auto of_landing = [&](size_t i) {
    if (col[i] < 0) return fixed(landings[i].pos);
    Pos p{Vector2d::Zero(), MatrixXd::Zero(2, nz)};
    p.M.block(0, col[i], 2, 2).setIdentity();
    return p;
  };
  std::vector<Pos> leg;
  for (int i = 0; i < lip::kNumLegs; ++i) leg.push_back(fixed(current.col(i)));

  Builder b(nz);
  std::vector<Vector2d> cop_c;
  std::vector<MatrixXd> cop_M;
  std::vector<std::pair<size_t, Pos>> placed;  // landing index and its affine position
  size_t next = 0;
  const lip::GaitSchedule& sched = sys.schedule();
  for (int j = 0; j < N; ++j) {
    while (next < order.size() && landings[order[next]].step <= j) {
      const size_t i = order[next++];
      Pos p = of_landing(i);
      Pos& prev = leg[static_cast<size_t>(landings[i].leg)];
      b.add_square(p.M - prev.M, p.c - prev.c, cfg.q_fh);
      placed.emplace_back(i, p);
      prev = p;
    }
    const std::vector<int> legs = sched.stance_legs(phase + j);
    const VectorXd& lam = weights[static_cast<size_t>(j)];
    if (lam.size() != static_cast<Eigen::Index>(legs.size()))
      throw std::invalid_argument("plan_footsteps: weight count differs from stance leg count");
    Vector2d c = Vector2d::Zero();
    MatrixXd M = MatrixXd::Zero(2, nz);
    for (size_t s = 0; s < legs.size(); ++s) {
      c += lam(static_cast<Eigen::Index>(s)) * leg[static_cast<size_t>(legs[s])].c;
      M += lam(static_cast<Eigen::Index>(s)) * leg[static_cast<size_t>(legs[s])].M;
    }
    cop_c.push_back(c);
    cop_M.push_back(M);
  }
  // Landings beyond the horizon only carry step-length cost.
  while (next < order.size()) {
    const size_t i = order[next++];
    Pos p = of_landing(i);
    Pos& prev = leg[static_cast<size_t>(landings[i].leg)];
    b.add_square(p.M - prev.M, p.c - prev.c, cfg.q_fh);
    prev = p;
  }

  const Affine t = propagate(sys, x0, cop_c, cop_M, nz);
  add_tracking(b, t, x_desired, cfg);
  add_state_constraints(b, t, cons);
  if (cons.kinematics)
    for (const auto& [i, p] : placed)
      if (landings[i].step >= 1 && landings[i].step < N) add_kinematic(b, t, landings[i], p.c, p.M, cons);

  const solver::QpSolution s = solve(b, "plan_footsteps");
  for (size_t i = 0; i < out.size(); ++i)
    if (col[i] >= 0) out[i].pos = s.x_opt.segment<2>(col[i]);
  return out;
}

std::vector<Landing> schedule_landings(const lip::GaitSchedule& schedule, int phase, int horizon, int step_count,
                                       const Footsteps& target) {
  std::vector<Landing> out;
  std::vector<int> last_free_event(lip::kNumLegs, 0);
  int event = 0;
  for (int j = 1; j < horizon; ++j) {
    const std::vector<int> legs = schedule.touchdown_legs(phase + j);
    if (legs.empty()) continue;
    ++event;
    for (int leg : legs) {
      Landing l;
      l.leg = leg;
      l.step = j;
      l.pos = target.col(leg);
      l.pinned = event > step_count;
      if (!l.pinned) last_free_event[static_cast<size_t>(leg)] = static_cast<int>(out.size()) + 1;
      out.push_back(l);
    }
  }
  // The last placement of each leg within the first step_count events lands on the target.
  for (int leg = 0; leg < lip::kNumLegs; ++leg)
    if (last_free_event[static_cast<size_t>(leg)] > 0) out[static_cast<size_t>(last_free_event[static_cast<size_t>(leg)] - 1)].pinned = true;
  return out;
}

namespace {

int count_events(const lip::GaitSchedule& schedule, int phase, int horizon) {
  int n = 0;
  for (int j = 1; j < horizon; ++j) n += schedule.is_touchdown(phase + j) ? 1 : 0;
  return n;
}

/// Up to kFallbackShifts points of a 5x5 grid over the shifts dw with x - (dw, 0) in C, cheapest first.
constexpr int kFallbackShifts = 8;
std::vector<Vector2d> fallback_shifts(const Vector4d& x, const Polytope& C, const cap::QuadraticSurrogate& s) {
  const Eigen::Matrix<double, 4, 2> S = shift_matrix();
  const Polytope shifts(-C.normals() * S, C.offsets() - C.normals() * x);
  std::vector<std::pair<double, Vector2d>> scored;
  if (is_empty(shifts).empty) return {};
  const BoundingBox bb = bounding_box(shifts);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      const Vector2d dw(bb.lo(0) + (bb.hi(0) - bb.lo(0)) * (0.1 + 0.2 * i), bb.lo(1) + (bb.hi(1) - bb.lo(1)) * (0.1 + 0.2 * j));
      if (contains_point(shifts, dw)) scored.emplace_back(s(x - S * dw), dw);
    }
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Vector2d> out;
  for (size_t k = 0; k < scored.size() && k < static_cast<size_t>(kFallbackShifts); ++k) out.push_back(scored[k].second);
  return out;
}

struct Candidate {
  std::vector<Landing> landings;
  ComPlan com;
  std::vector<double> costs;
  bool iter_limit = false;
};

Candidate run_candidate(const lip::SwitchedLipSystem& sys, int phase, const Vector4d& x, const Footsteps& current,
                        const Footsteps& target, int step_count, const Vector4d& x_desired, const PlanConfig& cfg,
                        const PlanConstraints& cons) {
  const int N = cfg.horizon;
  std::vector<Landing> at_target = schedule_landings(sys.schedule(), phase, N, step_count, target);

  // Free landings start at the nominal offsets from a CoM plan that ignores the landing boxes.
  Candidate c;
  bool ok = false;
  try {
    PlanConstraints relaxed = cons;
    relaxed.kinematics = false;
    const ComPlan guess = plan_com(sys, phase, x, footstep_sequence(current, at_target, N), x_desired, cfg, relaxed);
    c.landings = at_target;
    for (Landing& l : c.landings)
      if (!l.pinned)
        l.pos = position_rows() * guess.states[static_cast<size_t>(l.step)] + cons.nominal.col(l.leg);
    c.com = plan_com(sys, phase, x, footstep_sequence(current, c.landings, N), x_desired, cfg, cons, c.landings);
    ok = true;
  } catch (const PlanInfeasible&) {
  }
  if (!ok) {
    c.landings = at_target;
    c.com = plan_com(sys, phase, x, footstep_sequence(current, c.landings, N), x_desired, cfg, cons, c.landings);
  }
  c.costs.push_back(c.com.cost + step_length_cost(current, c.landings, cfg.q_fh));

  bool converged = false;
  for (int it = 0; it < cfg.max_iter && !converged; ++it) {
    std::vector<Landing> next;
    ComPlan com;
    try {
      next = plan_footsteps(sys, phase, x, current, c.landings, c.com.weights, x_desired, cfg, cons);
      com = plan_com(sys, phase, x, footstep_sequence(current, next, N), x_desired, cfg, cons, next);
    } catch (const PlanInfeasible&) {
      break;  // the previous iterate stands
    }
    const double prev = c.costs.back();
    const double cost = com.cost + step_length_cost(current, next, cfg.q_fh);
    // Each block step cannot increase the joint cost; a rise is solver noise and ends the loop.
    if (cost > prev) break;
    c.landings = std::move(next);
    c.com = std::move(com);
    c.costs.push_back(cost);
    converged = prev - cost <= cfg.rel_tol * std::max(std::abs(prev), 1e-12);
  }
  c.iter_limit = !converged && static_cast<int>(c.costs.size()) > cfg.max_iter;
  return c;
}

}  // namespace

PlanResult plan_recovery(const Vector4d& x, int phase, const Footsteps& current, const Analysis& archive,
                         const PlanConfig& cfg, const std::optional<Commitment>& committed) {
  const int T = archive.period();
  cfg.validate(T);
  phase = ((phase % T) + T) % T;
  const lip::SwitchedLipSystem sys = archive.system();
  const Footsteps& nominal = archive.config.footsteps;
  PlanResult res;
  res.phase = phase;

  const std::optional<Vector2d> frame = nominal_shift(current, nominal);
  if (frame && contains_point(translate(archive.balance_slice(phase), lip::planar_shift(*frame)), x)) {
    res.noop = true;
    res.delta_w_star = *frame;
    res.target_footsteps = current;
    res.x_desired = x;
    res.footstep_sequence.push_back(current);
    res.com_trajectory.push_back(x);
    res.costs.push_back(0.0);
    return res;
  }

  const Polytope& C = archive.capturable_slice(phase);
  const int events = count_events(sys.schedule(), phase, cfg.horizon);
  std::string last_error = "no touchdown within the horizon";
  std::vector<Vector2d> tried;

  // Best plan over step counts n_min..n_max towards shift dw; false if none is feasible.
  auto attempt = [&](const Vector2d& dw, int n_min, int n_max) {
    for (const Vector2d& t : tried)
      if ((t - dw).cwiseAbs().maxCoeff() <= 1e-12 && n_min == cfg.step_count_min) return false;
    tried.push_back(dw);
    const Vector4d W = lip::planar_shift(dw);
    PlanConstraints cons;
    cons.path = translate(archive.constraint_set(), W);
    cons.terminal = translate(archive.capturable_slice(phase + cfg.horizon), W);
    cons.nominal = nominal;
    cons.kin_lo = cfg.kin_lo;
    cons.kin_hi = cfg.kin_hi;
    Vector4d x_desired;
    if (cfg.x_desired) {
      x_desired = *cfg.x_desired;
    } else {
      x_desired = is_empty(translate(archive.balance_slice(phase + cfg.horizon), W)).witness;
      x_desired(lip::kVx) = 0.0;
      x_desired(lip::kVy) = 0.0;
    }
    Footsteps target = nominal;
    for (int i = 0; i < lip::kNumLegs; ++i) target.col(i) += dw;

    std::optional<Candidate> best;
    int best_n = 0;
    for (int n = n_min; n <= n_max; ++n) {
      if (n > events && n > n_min) break;  // same landings as a smaller count
      try {
        Candidate c = run_candidate(sys, phase, x, current, target, n, x_desired, cfg, cons);
        if (!best || c.costs.back() < best->costs.back()) {
          best = std::move(c);
          best_n = n;
        }
      } catch (const PlanInfeasible& e) {
        last_error = e.what();
      }
    }
    if (!best) return false;
    res.delta_w_star = dw;
    res.target_footsteps = target;
    res.x_desired = x_desired;
    res.landings = best->landings;
    res.footstep_sequence = footstep_sequence(current, best->landings, cfg.horizon);
    res.com_trajectory = best->com.states;
    res.cop_weights = best->com.weights;
    res.costs = best->costs;
    res.iterations_used = static_cast<int>(best->costs.size()) - 1;
    res.chosen_step_count = best_n;
    res.iter_limit = best->iter_limit;
    return true;
  };

  // A committed target stays as long as it admits a plan; its step count only shrinks.
  if (committed && attempt(committed->delta_w, 1, std::max(1, committed->step_count))) return res;
  if (attempt(plan_target(x, C, archive.surrogate_for(phase), nominal).delta_w, cfg.step_count_min,
              cfg.step_count_max))
    return res;
  // The current frame needs no foot motion where it captures the state.
  if (frame && contains_point(translate(C, lip::planar_shift(*frame)), x) &&
      attempt(*frame, cfg.step_count_min, cfg.step_count_max))
    return res;
  // Last resort: other capturing shifts, lowest surrogate cost first. The kinematic boxes are not
  // part of the capturable slice, so the surrogate optimum can be out of reach while a nearby
  // shift is not.
  for (const Vector2d& dw : fallback_shifts(x, C, archive.surrogate_for(phase)))
    if (attempt(dw, cfg.step_count_min, cfg.step_count_max)) return res;
  throw PlanInfeasible("plan_recovery: no step count admits a feasible plan (" + last_error + ")");
}

}  // namespace qcap::plan
