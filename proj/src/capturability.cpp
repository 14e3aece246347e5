#include "qcap/capturability.hpp"

#include <cmath>
#include <random>

#include "qcap/solver.hpp"

namespace qcap::cap {

using Eigen::MatrixXd;
using Eigen::VectorXd;

Polytope pre(const Polytope& X, const lip::PhaseDynamics& dyn, int k) {
  if (X.dim() != dyn.dim()) throw std::invalid_argument("pre: dimension mismatch");
  if (is_empty(X).empty) return Polytope::empty(X.dim());
  VPolytope neg;
  for (const auto& e : dyn.phase_effects(k)) neg.vertices.push_back(-e);
  return affine_preimage(minkowski_sum(X, neg), dyn.A);
}

namespace {

// Interval over-approximation of the states reachable from `box` in one step of phase k.
BoundingBox forward_box(const BoundingBox& box, const lip::PhaseDynamics& dyn, int k) {
  const VectorXd c = 0.5 * (box.lo + box.hi);
  const VectorXd r = 0.5 * (box.hi - box.lo);
  const VectorXd c2 = dyn.A * c;
  const VectorXd r2 = dyn.A.cwiseAbs() * r;
  const auto& eff = dyn.phase_effects(k);
  VectorXd elo = eff.front(), ehi = eff.front();
  for (const auto& e : eff) {
    elo = elo.cwiseMin(e);
    ehi = ehi.cwiseMax(e);
  }
  return BoundingBox{c2 - r2 + elo, c2 + r2 + ehi};
}

}  // namespace

Polytope pre_period(const Polytope& X, const lip::PhaseDynamics& dyn, const Polytope* domain) {
  const int T = dyn.period();
  // Intermediate sets only matter where trajectories from `domain` can be; clipping them
  // to an outer box of that forward reach keeps rows few without changing the result on `domain`.
  std::vector<BoundingBox> reach;
  if (domain != nullptr && !is_empty(*domain).empty) {
    reach.push_back(bounding_box(*domain));
    for (int k = 0; k + 1 < T; ++k) reach.push_back(forward_box(reach.back(), dyn, k));
  }
  Polytope cur = X;
  for (int k = T - 1; k >= 0; --k) {
    cur = pre(cur, dyn, k);
    if (k > 0 && !reach.empty()) {
      const BoundingBox& b = reach[static_cast<size_t>(k)];
      cur = intersect(cur, Polytope::box(b.lo, b.hi));
    }
  }
  return cur;
}

BalanceResult balance_tube(const Polytope& X_T, const lip::PhaseDynamics& dyn, const BalanceOptions& opts) {
  if (X_T.dim() != dyn.dim()) throw std::invalid_argument("balance_tube: dimension mismatch");
  if (is_empty(X_T).empty) throw EmptyResult("balance_tube: target region is empty");

  BalanceResult out;
  Polytope omega = reduce(X_T);
  out.iterate_volumes.push_back(volume_mc(omega, opts.volume_samples, opts.seed));
  bool converged = false;
  for (int k = 0; k < opts.max_iter; ++k) {
    Polytope next = intersect(pre_period(omega, dyn, &omega), omega);
    ++out.iterations;
    if (is_empty(next).empty) throw EmptyResult("balance_tube: iterate became empty");
    out.iterate_volumes.push_back(volume_mc(next, opts.volume_samples, opts.seed));
    const bool same = set_equal(next, omega, opts.tol);
    omega = std::move(next);
    if (same) {
      converged = true;
      break;
    }
  }
  if (!converged) throw NonConvergence("balance_tube: no fixed point within max_iter", omega);

  const int T = dyn.period();
  std::vector<Polytope> slices(static_cast<size_t>(T + 1));
  slices[static_cast<size_t>(T)] = omega;
  for (int t = T - 1; t >= 1; --t) {
    slices[static_cast<size_t>(t)] = pre(slices[static_cast<size_t>(t + 1)], dyn, t);
  }
  slices[0] = intersect(pre(slices[1], dyn, 0), omega);
  out.tube.slices = std::move(slices);
  for (const auto& s : out.tube.slices) out.tube.volumes.push_back(volume_mc(s, opts.volume_samples, opts.seed));
  return out;
}

int terminal_phase_for(int phase, int horizon, int period) { return (((phase + horizon) % period) + period) % period; }

Tube capturable_tube(const Tube& balance, int terminal_phase, const Polytope& X, const lip::PhaseDynamics& dyn,
                     const CapturableOptions& opts) {
  const int T = dyn.period();
  if (terminal_phase < 0 || terminal_phase > T || static_cast<int>(balance.slices.size()) != T + 1)
    throw std::invalid_argument("capturable_tube: terminal phase outside balance tube");
  Tube out;
  out.gait = balance.gait;
  out.footsteps = balance.footsteps;
  out.terminal_phase = terminal_phase % T;
  out.slices.push_back(balance.slices[static_cast<size_t>(terminal_phase)]);
  out.volumes.push_back(volume_mc(out.slices.back(), opts.volume_samples, opts.seed));
  for (int k = 0; k < opts.horizon; ++k) {
    const int phase = (((terminal_phase - k - 1) % T) + T) % T;
    out.slices.push_back(intersect(pre(out.slices.back(), dyn, phase), X));
    out.volumes.push_back(volume_mc(out.slices.back(), opts.volume_samples, opts.seed));
  }
  return out;
}

bool gamma_nonempty(const Polytope& X, const lip::PhaseDynamics& dyn) {
  if (X.dim() != dyn.dim()) throw std::invalid_argument("gamma_nonempty: dimension mismatch");
  if (is_empty(X).empty) return false;
  const lip::LiftedSystem L = lift_period(dyn);
  const int n = dyn.dim();
  const int nv = static_cast<int>(L.B_bar.cols());
  const int m = X.num_rows();
  MatrixXd G = MatrixXd::Zero(2 * m + nv, n + nv);
  VectorXd g = VectorXd::Zero(2 * m + nv);
  G.topLeftCorner(m, n) = X.normals();
  g.head(m) = X.offsets();
  G.block(m, 0, m, n) = X.normals() * L.A_bar;
  G.block(m, n, m, nv) = X.normals() * L.B_bar;
  g.segment(m, m) = X.offsets();
  G.bottomRightCorner(nv, nv) = -MatrixXd::Identity(nv, nv);
  const int blocks = static_cast<int>(L.block_sizes.size());
  MatrixXd A = MatrixXd::Zero(blocks, n + nv);
  VectorXd b = VectorXd::Ones(blocks);
  for (int j = 0, col = n; j < blocks; ++j) {
    A.block(j, col, 1, L.block_sizes[static_cast<size_t>(j)]).setOnes();
    col += L.block_sizes[static_cast<size_t>(j)];
  }
  const solver::QpSolution s = solver::solve_lp(VectorXd::Zero(n + nv), G, g, A, b);
  return s.status == solver::Status::Optimal;
}

Tube translate_tube(const Tube& T, const lip::Vector2d& dw) {
  Tube out = T;
  const lip::Vector4d shift = lip::planar_shift(dw);
  for (auto& s : out.slices) {
    if (s.dim() == lip::kStateDim) s = translate(s, shift);
  }
  for (int leg = 0; leg < lip::kNumLegs; ++leg) out.footsteps.col(leg) += dw;
  return out;
}

bool one_step_viable(const Polytope& to, const lip::PhaseDynamics& dyn, int k, const VectorXd& x) {
  const auto& eff = dyn.phase_effects(k);
  const int ne = static_cast<int>(eff.size());
  const int m = to.num_rows();
  MatrixXd E(dyn.dim(), ne);
  for (int j = 0; j < ne; ++j) E.col(j) = eff[static_cast<size_t>(j)];
  MatrixXd G(m + ne, ne);
  VectorXd g(m + ne);
  G.topRows(m) = to.normals() * E;
  g.head(m) = to.offsets() - to.normals() * (dyn.A * x) + VectorXd::Constant(m, kRedundancyTol);
  G.bottomRows(ne) = -MatrixXd::Identity(ne, ne);
  g.tail(ne).setZero();
  const MatrixXd A = MatrixXd::Ones(1, ne);
  const VectorXd b = VectorXd::Ones(1);
  return solver::solve_lp(VectorXd::Zero(ne), G, g, A, b).status == solver::Status::Optimal;
}

}  // namespace qcap::cap
