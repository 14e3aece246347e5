// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit when any fails.
// Tolerances and sample counts are fixed here and printed with each result.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "qcap/analysis.hpp"
#include "qcap/capturability.hpp"
#include "qcap/lip.hpp"
#include "qcap/planner.hpp"
#include "qcap/polytope.hpp"
#include "qcap/sim.hpp"
#include "qcap/solver.hpp"
#include "test_archive.hpp"
#include "test_oracles.hpp"

using namespace qcap;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using lip::Footsteps;
using lip::Vector2d;
using lip::Vector4d;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int failures = 0;

void run(const std::string& name, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  failures += o.pass ? 0 : 1;
  std::printf("%s  %-28s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

double elapsed_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Hyperbolic reference for the discrete LIP, built without the library.
void hyperbolic_reference(double h, double g, double dt, lip::Matrix4d& A, lip::Matrix42d& B) {
  const double w = std::sqrt(g / h);
  const double ch = std::cosh(w * dt);
  const double sh = std::sinh(w * dt);
  A.setZero();
  B.setZero();
  for (int axis = 0; axis < 2; ++axis) {
    const int p = 2 * axis;
    A(p, p) = ch;
    A(p, p + 1) = sh / w;
    A(p + 1, p) = w * sh;
    A(p + 1, p + 1) = ch;
    B(p, axis) = 1.0 - ch;
    B(p + 1, axis) = -w * sh;
  }
}

VectorXd random_in_box(int n, double r, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-r, r);
  VectorXd x(n);
  for (int i = 0; i < n; ++i) x(i) = u(rng);
  return x;
}

/// Bounded random polytope containing a ball around the origin.
Polytope random_polytope(int n, int rows, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> u(0.3, 1.0);
  MatrixXd H(rows + 2 * n, n);
  VectorXd h(rows + 2 * n);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < n; ++j) H(i, j) = nd(rng);
    H.row(i).normalize();
    h(i) = u(rng);
  }
  H.bottomRows(2 * n) << MatrixXd::Identity(n, n), -MatrixXd::Identity(n, n);
  h.tail(2 * n).setConstant(1.5);
  return Polytope(H, h);
}

/// Brute force: some simplex-grid combination of the phase effects moves x into X.
bool pre_oracle(const Polytope& X, const lip::PhaseDynamics& dyn, int k, const VectorXd& x, int res) {
  const auto& eff = dyn.phase_effects(k);
  const VectorXd ax = dyn.A * x;
  for (int i = 0; i <= res; ++i) {
    const double t = static_cast<double>(i) / res;
    if (contains_point(X, ax + (1.0 - t) * eff[0] + t * eff[1], 0.0)) return true;
  }
  return false;
}

/// {x : H x <= 0.95 h + 0.05 H c}: P shrunk by 5% about its Chebyshev center c.
Polytope shrink(const Polytope& P, double margin) {
  const VectorXd c = is_empty(P).witness;
  return Polytope(P.normals(), (1.0 - margin) * P.offsets() + margin * (P.normals() * c));
}

/// Uniform point of a bounded polytope by rejection from its bounding box.
Vector4d uniform_sample(const Polytope& P, std::mt19937_64& rng) {
  const BoundingBox bb = bounding_box(P);
  Vector4d x;
  do {
    for (int d = 0; d < 4; ++d) x(d) = std::uniform_real_distribution<double>(bb.lo(d), bb.hi(d))(rng);
  } while (!contains_point(P, x, 0.0));
  return x;
}

Analysis analysis_for(const std::string& gait) {
  AnalysisConfig c = test::trot_run_config().analysis;
  c.gait = gait;
  Analysis a;
  a.config = c;
  cap::BalanceOptions o;
  o.max_iter = c.balance_max_iter;
  o.volume_samples = c.volume_samples;
  o.seed = c.seed;
  a.balance = cap::balance_tube(c.target_region(), c.system().phase_dynamics(), o).tube;
  return a;
}

// ---------------------------------------------------------------------------

Outcome discretization() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> uh(0.1, 1.5), udt(0.001, 0.2);
  double worst = 0.0;
  for (int i = 0; i <= 20; ++i) {
    lip::LipParams p;
    if (i > 0) {
      p.height = uh(rng);
      p.dt = udt(rng);
    }
    const lip::DiscreteLip d = lip::discretize(lip::build_continuous(p), p.dt);
    lip::Matrix4d A;
    lip::Matrix42d B;
    hyperbolic_reference(p.height, p.gravity, p.dt, A, B);
    worst = std::max({worst, (d.A - A).cwiseAbs().maxCoeff(), (d.B - B).cwiseAbs().maxCoeff()});
  }
  const double secs = elapsed_since(t0);
  return {worst <= 1e-10 && secs < 1.0, fmt("max elementwise error %.2e (<= 1e-10) over defaults + 20 random, %.3f s (< 1 s)", worst, secs)};
}

Outcome footstep_state_shift() {
  const lip::LipParams p;
  const lip::DiscreteLip d = lip::discretize(lip::build_continuous(p), p.dt);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Vector2d dw(u(rng), u(rng));
    const Vector4d lhs = (d.A - lip::Matrix4d::Identity()) * lip::planar_shift(dw);
    worst = std::max(worst, (lhs + d.B * dw).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-10, fmt("max residual %.2e (<= 1e-10) over 100 random shifts", worst)};
}

Outcome set_identities() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(13);
  int ok[3] = {0, 0, 0};
  for (int t = 0; t < 50; ++t) {
    const Polytope P = random_polytope(4, 8, rng);
    VPolytope Q;
    for (int i = 0; i < 3; ++i) Q.vertices.push_back(random_in_box(4, 0.5, rng));
    const VectorXd w = random_in_box(4, 1.0, rng);
    const MatrixXd A = MatrixXd::Random(4, 4) + 2.0 * MatrixXd::Identity(4, 4);
    ok[0] += set_equal(minkowski_sum(translate(P, w), Q), translate(minkowski_sum(P, Q), w), 1e-7);
    ok[1] += set_equal(affine_preimage(translate(P, w), A), Polytope(P.normals() * A, P.offsets() + P.normals() * w), 1e-7);
    ok[2] += set_equal(translate(affine_preimage(P, A), w), Polytope(P.normals() * A, P.offsets() + P.normals() * A * w), 1e-7);
  }
  const double secs = elapsed_since(t0);
  return {ok[0] == 50 && ok[1] == 50 && ok[2] == 50 && secs < 30.0,
          fmt("sum/translate %d/50, preimage of translate %d/50, translate of preimage %d/50 (set_equal 1e-7), %.1f s (< 30 s)",
              ok[0], ok[1], ok[2], secs)};
}

Outcome pre_oracle_agreement() {
  const auto t0 = std::chrono::steady_clock::now();
  const lip::PhaseDynamics dyn = lip::single_axis_dynamics(lip::LipParams{}, {{-0.19, 0.19}});
  const Polytope X = Polytope::box(Eigen::Vector2d(-0.2, -0.5), Eigen::Vector2d(0.2, 0.5));
  const Polytope P = cap::pre(X, dyn, 0);
  const int n = 200;
  int agree = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      VectorXd x(2);
      x << -0.4 + 0.8 * i / (n - 1), -1.0 + 2.0 * j / (n - 1);
      agree += contains_point(P, x) == pre_oracle(X, dyn, 0, x, 200) ? 1 : 0;
    }
  const double frac = static_cast<double>(agree) / (n * n);
  const double secs = elapsed_since(t0);
  return {frac >= 0.99 && secs < 120.0, fmt("agreement %.4f (>= 0.99) on a 200x200 grid, %.1f s (< 120 s)", frac, secs)};
}

Outcome balance_contract() {
  const auto t0 = std::chrono::steady_clock::now();
  const AnalysisConfig c = test::trot_run_config().analysis;
  const lip::PhaseDynamics dyn = c.system().phase_dynamics();
  cap::BalanceOptions o;
  o.max_iter = c.balance_max_iter;
  o.volume_samples = c.volume_samples;
  const cap::BalanceResult r = cap::balance_tube(c.target_region(), dyn, o);
  const int T = c.params.period_steps;
  const bool nonempty = !is_empty(r.tube.slices[static_cast<size_t>(T)]).empty;
  const bool periodic = set_equal(r.tube.slices[0], r.tube.slices[static_cast<size_t>(T)], 1e-6);
  int viable = 0, total = 0;
  for (int k = 0; k < T; ++k) {
    const auto xs = cap::sample_interior(r.tube.slices[static_cast<size_t>(k)], 200, 100 + static_cast<std::uint64_t>(k));
    for (const auto& x : xs) viable += cap::one_step_viable(r.tube.slices[static_cast<size_t>(k + 1)], dyn, k, x) ? 1 : 0;
    total += static_cast<int>(xs.size());
  }
  const double secs = elapsed_since(t0);
  return {nonempty && periodic && viable == total && total == 200 * T && secs < 600.0,
          fmt("converged in %d iterations, nonempty %d, B_0 == B_T (1e-6) %d, viable %d/%d, %.1f s (< 600 s)",
              r.iterations, nonempty, periodic, viable, total, secs)};
}

Outcome capturable_convergence() {
  // One backward iteration is half a gait period (3 steps at the default timing).
  const Analysis& a = test::trot_analysis();
  const int half = a.period() / 2;
  const int max_iter = 10;
  cap::CapturableOptions o;
  o.horizon = half * max_iter;
  o.volume_samples = 1;
  const cap::Tube t = cap::capturable_tube(a.balance, 0, a.constraint_set(), a.system().phase_dynamics(), o);
  std::vector<double> v;
  for (int i = 0; i <= max_iter; ++i) v.push_back(volume_mc(t.slices[static_cast<size_t>(half * i)], 200000, 3));
  int converged = -1;
  double change = 0.0;
  for (int i = 1; i <= max_iter && converged < 0; ++i) {
    change = std::abs(v[static_cast<size_t>(i)] - v[static_cast<size_t>(i - 1)]) / v[static_cast<size_t>(i - 1)];
    if (change < 0.02) converged = i;
  }
  std::string vols;
  for (double x : v) vols += fmt("%.4f ", x);
  return {converged > 0, fmt("relative change %.4f (< 0.02) at iteration %d (<= 10, %d steps each); volumes %s",
                             change, converged, half, vols.c_str())};
}

Outcome translation_symmetry() {
  const AnalysisConfig c = test::trot_run_config().analysis;
  const Analysis& a = test::trot_analysis();
  const Polytope X = c.constraint_set();
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  cap::BalanceOptions bo;
  bo.max_iter = c.balance_max_iter;
  bo.volume_samples = 100;
  cap::CapturableOptions co;
  co.horizon = c.capture_horizon;
  co.volume_samples = 100;
  int ok = 0, total = 0;
  for (int trial = 0; trial < 5; ++trial) {
    const Vector2d dw(u(rng), u(rng));
    const Vector4d W = lip::planar_shift(dw);
    const lip::PhaseDynamics moved = c.system().with_footsteps(c.footsteps.colwise() + dw).phase_dynamics();
    const cap::Tube B = cap::balance_tube(translate(c.target_region(), W), moved, bo).tube;
    const cap::Tube C = cap::capturable_tube(B, 0, translate(X, W), moved, co);
    const cap::Tube Bs = cap::translate_tube(a.balance, dw);
    const cap::Tube Cs = cap::translate_tube(a.capturable[0], dw);
    for (size_t k = 0; k < B.slices.size(); ++k, ++total) ok += set_equal(B.slices[k], Bs.slices[k], 1e-6);
    for (size_t k = 0; k < C.slices.size(); ++k, ++total) ok += set_equal(C.slices[k], Cs.slices[k], 1e-6);
  }
  return {ok == total, fmt("%d/%d balance and capturable slices equal (set_equal 1e-6) over 5 random shifts", ok, total)};
}

Outcome gait_differentiation() {
  const Analysis& trot = test::trot_analysis();
  const Analysis bound = analysis_for("bound");
  const Analysis pace = analysis_for("pace");
  auto differ = [](const cap::Tube& p, const cap::Tube& q) {
    for (size_t k = 0; k < p.slices.size(); ++k)
      if (!set_equal(p.slices[k], q.slices[k])) return true;
    return false;
  };
  auto in_some = [](const cap::Tube& t, const Vector4d& x) {
    for (const Polytope& s : t.slices)
      if (contains_point(s, x)) return true;
    return false;
  };
  const bool tb = differ(trot.balance, bound.balance);
  const bool tp = differ(trot.balance, pace.balance);
  const bool bp = differ(bound.balance, pace.balance);
  const Vector4d marked(0.03, 0.4, 0.03, 0.3);
  const bool in_trot = in_some(trot.balance, marked);
  const bool in_bound = in_some(bound.balance, marked);
  const bool in_pace = in_some(pace.balance, marked);
  return {tb && tp && bp && in_trot && !in_bound && !in_pace,
          fmt("differ trot/bound %d trot/pace %d bound/pace %d; marked state in trot %d, bound %d, pace %d; "
              "fixed-point volumes trot %.4f bound %.4f pace %.4f",
              tb, tp, bp, in_trot, in_bound, in_pace, trot.balance.volumes.back(), bound.balance.volumes.back(),
              pace.balance.volumes.back())};
}

Outcome planner_soundness() {
  const Analysis& a = test::trot_analysis();
  const plan::PlanConfig& cfg = test::trot_run_config().planner;
  const Footsteps& nominal = a.config.footsteps;
  const int T = a.period();
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> uphase(0, T - 1);
  std::uniform_real_distribution<double> ushift(-0.5, 0.5);
  int planned = 0, recovered = 0;
  std::string first_failure;
  for (int i = 0; i < 100; ++i) {
    const int phase = uphase(rng);
    const Vector2d dw(ushift(rng), ushift(rng));
    const Polytope inner = shrink(a.capturable_slice(phase), 0.05);
    const Vector4d rel = uniform_sample(inner, rng);
    const Footsteps feet = nominal.colwise() + dw;
    bool ok_plan = false;
    try {
      plan::plan_recovery(rel + lip::planar_shift(dw), phase, feet, a, cfg);
      ok_plan = true;
    } catch (const std::exception&) {
    }
    planned += ok_plan;
    sim::PushEvent push;
    push.phase_index = phase;
    sim::RolloutOptions ro;
    ro.x_rest = rel;
    ro.feet = feet;
    const sim::RolloutResult r = sim::rollout(a, cfg, push, ro);
    recovered += r.success;
    if ((!ok_plan || !r.success) && first_failure.empty()) first_failure = fmt("; first failure #%d: %s", i, r.reason.c_str());
  }
  int rejected = 0;
  std::uniform_real_distribution<double> uang(0.0, 2.0 * M_PI), umag(2.2, 5.0), upos(-0.19, 0.19);
  for (int i = 0; i < 100; ++i) {
    const int phase = uphase(rng);
    const double th = uang(rng);
    Vector2d v(std::cos(th), std::sin(th));
    v *= umag(rng) / v.cwiseAbs().maxCoeff();  // largest component in [2.2, 5]
    const Vector4d x(upos(rng), v(0), upos(rng), v(1));
    try {
      plan::plan_target(x, a.capturable_slice(phase), a.surrogate_for(phase), nominal);
    } catch (const plan::NotCapturable&) {
      ++rejected;
    }
  }
  return {planned == 100 && recovered == 100 && rejected == 100,
          fmt("inner (5%% margin): planned %d/100, recovered %d/100; velocity overflow rejected %d/100%s", planned,
              recovered, rejected, first_failure.c_str())};
}

Outcome solvers() {
  std::mt19937_64 rng(2024);
  int kkt_ok = 0;
  double worst_kkt = 0.0;
  for (int i = 0; i < 500; ++i) {
    const solver::QpProblem p = test::random_convex_qp(rng);
    const solver::QpSolution s = solver::solve_qp(p);
    const bool ok = s.optimal() && s.kkt_residual <= 1e-8;
    kkt_ok += ok;
    if (s.optimal()) worst_kkt = std::max(worst_kkt, s.kkt_residual);
  }
  int qp2 = 0, lp2 = 0;
  double worst_gap = 0.0;
  for (int i = 0; i < 100; ++i) {
    const solver::QpProblem p = test::random_polygon_qp(rng);
    const solver::QpSolution s = solver::solve_qp(p);
    const double oracle = test::qp2d_enumeration_oracle(p);
    const double gap = std::abs(s.objective - oracle);
    worst_gap = std::max(worst_gap, gap);
    qp2 += s.optimal() && gap <= 1e-6 && test::qp2d_grid_min(p, 201) >= s.objective - 1e-9;
    const test::Lp2d l = test::random_polygon_lp(rng);
    const solver::QpSolution t = solver::solve_lp(l.c, l.G, l.g);
    const double lo = test::lp2d_vertex_oracle(l.c, l.G, l.g);
    const double lgap = std::abs(t.objective - lo);
    worst_gap = std::max(worst_gap, lgap);
    lp2 += t.optimal() && lgap <= 1e-6 && test::lp2d_grid_min(l.c, l.G, l.g, 201) >= t.objective - 1e-9;
  }
  return {kkt_ok == 500 && qp2 == 100 && lp2 == 100,
          fmt("KKT <= 1e-8 on %d/500 (worst %.1e); 2D QP %d/100, 2D LP %d/100 match oracles (worst gap %.1e <= 1e-6)",
              kkt_ok, worst_kkt, qp2, lp2, worst_gap)};
}

Outcome desk_sweep() {
  const Analysis& a = test::trot_analysis();
  const plan::PlanConfig& cfg = test::trot_run_config().planner;
  const sim::Grid grid = sim::Grid::parse("-1.5:1.5:0.1,-1.5:1.5:0.1");
  const sim::SweepResult t1 = sim::sweep(a, cfg, 1, grid);
  const sim::SweepResult t3 = sim::sweep(a, cfg, 3, grid);
  int ox = -1, oy = -1;
  for (int i = 0; i < grid.nx(); ++i)
    if (grid.x(i) == 0.0) ox = i;
  for (int j = 0; j < grid.ny(); ++j)
    if (grid.y(j) == 0.0) oy = j;
  const bool origin = ox >= 0 && oy >= 0 && t1.at(ox, oy);
  const bool differs = t1.success != t3.success;
  return {t1.successes() > 0 && origin && differs,
          fmt("T1 successes %d/%d, origin %d, T3 successes %d, masks differ %d", t1.successes(),
              grid.nx() * grid.ny(), origin, t3.successes(), differs)};
}

}  // namespace

int main() {
  run("discretization", discretization);
  run("footstep_state_shift", footstep_state_shift);
  run("set_identities", set_identities);
  run("pre_oracle", pre_oracle_agreement);
  run("balance_tube_contract", balance_contract);
  run("capturable_convergence", capturable_convergence);
  run("translation_symmetry", translation_symmetry);
  run("gait_differentiation", gait_differentiation);
  run("planner_soundness", planner_soundness);
  run("qp_lp_solvers", solvers);
  run("desk_sweep", desk_sweep);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
