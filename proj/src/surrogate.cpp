#include <cmath>
#include <random>

#include "qcap/capturability.hpp"
#include "qcap/solver.hpp"

namespace qcap::cap {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double QuadraticSurrogate::operator()(const VectorXd& x) const {
  VectorXd z(x.size() + 1);
  z << x, 1.0;
  return z.dot(P * z);
}

std::vector<VectorXd> sample_interior(const Polytope& P, int count, std::uint64_t seed, double shrink) {
  std::vector<VectorXd> out;
  const EmptinessResult e = is_empty(P);
  if (e.empty || count <= 0) return out;
  const int n = P.dim();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  out.push_back(e.witness);
  while (static_cast<int>(out.size()) < count) {
    VectorXd d(n);
    for (int i = 0; i < n; ++i) d(i) = nd(rng);
    d.normalize();
    const double t = ray_extent(P, e.witness, d);
    const double u = std::pow(u01(rng), 1.0 / n);
    out.push_back(e.witness + shrink * u * t * d);
  }
  return out;
}

namespace {

// Condensed horizon problem: x_k = a_k + M_k * lambda for k = 0..N.
struct Condensed {
  std::vector<VectorXd> a;
  std::vector<MatrixXd> M;
  std::vector<int> block_start, block_size;
  int nl = 0;
};

Condensed condense(const VectorXd& x0, int phase, int N, const lip::PhaseDynamics& dyn) {
  Condensed c;
  for (int k = 0; k < N; ++k) {
    c.block_start.push_back(c.nl);
    c.block_size.push_back(static_cast<int>(dyn.phase_effects(phase + k).size()));
    c.nl += c.block_size.back();
  }
  const int n = dyn.dim();
  c.a.push_back(x0);
  c.M.push_back(MatrixXd::Zero(n, c.nl));
  for (int k = 0; k < N; ++k) {
    VectorXd a = dyn.A * c.a.back();
    MatrixXd M = dyn.A * c.M.back();
    const auto& eff = dyn.phase_effects(phase + k);
    for (size_t j = 0; j < eff.size(); ++j) M.col(c.block_start[static_cast<size_t>(k)] + static_cast<int>(j)) += eff[j];
    c.a.push_back(std::move(a));
    c.M.push_back(std::move(M));
  }
  return c;
}

}  // namespace

std::optional<double> horizon_cost(const VectorXd& x, int phase, const Polytope& X, const Polytope& terminal,
                                   const lip::PhaseDynamics& dyn, const SurrogateOptions& opts) {
  const int N = opts.horizon;
  if (N < 1) throw std::invalid_argument("horizon_cost: horizon must be >= 1");
  const Condensed c = condense(x, phase, N, dyn);
  const int nl = c.nl;

  solver::QpProblem p;
  p.hessian = 2.0 * opts.r * MatrixXd::Identity(nl, nl);
  // Stance weights are penalized for leaving the even split.
  VectorXd even(nl);
  for (int k = 0; k < N; ++k)
    even.segment(c.block_start[static_cast<size_t>(k)], c.block_size[static_cast<size_t>(k)])
        .setConstant(1.0 / c.block_size[static_cast<size_t>(k)]);
  p.linear = -2.0 * opts.r * even;
  double constant = opts.q * x.squaredNorm() + opts.r * even.squaredNorm();
  for (int k = 1; k <= N; ++k) {
    const double w = k == N ? opts.qf : opts.q;
    p.hessian += 2.0 * w * c.M[static_cast<size_t>(k)].transpose() * c.M[static_cast<size_t>(k)];
    p.linear += 2.0 * w * c.M[static_cast<size_t>(k)].transpose() * c.a[static_cast<size_t>(k)];
    constant += w * c.a[static_cast<size_t>(k)].squaredNorm();
  }

  const int mx = X.num_rows();
  const int mt = terminal.num_rows();
  const int rows = mx * (N - 1) + mt + nl;
  p.ineq_G.resize(rows, nl);
  p.ineq_g.resize(rows);
  int r = 0;
  for (int k = 1; k < N; ++k) {
    p.ineq_G.middleRows(r, mx) = X.normals() * c.M[static_cast<size_t>(k)];
    p.ineq_g.segment(r, mx) = X.offsets() - X.normals() * c.a[static_cast<size_t>(k)];
    r += mx;
  }
  p.ineq_G.middleRows(r, mt) = terminal.normals() * c.M.back();
  p.ineq_g.segment(r, mt) = terminal.offsets() - terminal.normals() * c.a.back();
  r += mt;
  p.ineq_G.bottomRows(nl) = -MatrixXd::Identity(nl, nl);
  p.ineq_g.tail(nl).setZero();
  p.eq_A = MatrixXd::Zero(N, nl);
  p.eq_b = VectorXd::Ones(N);
  for (int k = 0; k < N; ++k)
    p.eq_A.block(k, c.block_start[static_cast<size_t>(k)], 1, c.block_size[static_cast<size_t>(k)]).setOnes();

  const solver::QpSolution s = solver::solve_qp(p);
  if (s.status == solver::Status::Infeasible) return std::nullopt;
  if (s.status != solver::Status::Optimal)
    throw std::runtime_error(std::string("horizon_cost: QP ") + std::string(solver::to_string(s.status)));
  return s.objective + constant;
}

SurrogateFit fit_surrogate(const Polytope& C, int phase, const Polytope& X, const Polytope& terminal,
                           const lip::PhaseDynamics& dyn, const SurrogateOptions& opts) {
  const EmptinessResult e = is_empty(C);
  if (e.empty) throw FitFailure("fit_surrogate: empty capturable slice");
  const int n = C.dim();
  const int nz = n + 1;
  const int np = nz * (nz + 1) / 2;

  // Parameter p holds the upper triangle of P row by row; z'Pz = coef(z)'p.
  std::vector<std::pair<int, int>> idx;
  for (int i = 0; i < nz; ++i)
    for (int j = i; j < nz; ++j) idx.emplace_back(i, j);
  auto coef = [&](const VectorXd& z) {
    VectorXd out(np);
    for (int t = 0; t < np; ++t) {
      const auto [i, j] = idx[static_cast<size_t>(t)];
      out(t) = (i == j ? 1.0 : 2.0) * z(i) * z(j);
    }
    return out;
  };
  auto unpack = [&](const VectorXd& p) {
    MatrixXd P(nz, nz);
    for (int t = 0; t < np; ++t) {
      const auto [i, j] = idx[static_cast<size_t>(t)];
      P(i, j) = P(j, i) = p(t);
    }
    return P;
  };
  auto homog = [&](const VectorXd& x) {
    VectorXd z(nz);
    z << x, 1.0;
    return z;
  };

  std::vector<VectorXd> rows;
  std::vector<double> rhs;
  int used = 0;
  // Interior samples and near-boundary samples, where the cost is largest.
  std::vector<VectorXd> pts = sample_interior(C, opts.samples / 2, opts.seed);
  for (const auto& x : sample_interior(C, opts.samples - opts.samples / 2, opts.seed + 1000)) {
    const VectorXd d = x - e.witness;
    const double nrm = d.norm();
    if (nrm < 1e-12) continue;
    pts.push_back(e.witness + 0.98 * ray_extent(C, e.witness, d / nrm) * d / nrm);
  }
  for (VectorXd x : pts) {
    std::optional<double> v;
    for (int attempt = 0; attempt < 10 && !v; ++attempt) {
      v = horizon_cost(x, phase, X, terminal, dyn, opts);
      if (!v) x = e.witness + 0.9 * (x - e.witness);
    }
    if (!v) continue;
    rows.push_back(-coef(homog(x)));
    rhs.push_back(-*v - 1e-9 * std::max(1.0, std::abs(*v)));
    ++used;
  }
  if (used == 0) throw FitFailure("fit_surrogate: no feasible sample");

  // PSD outer approximation by cuts v'Pv >= 0, refined with negative eigenvectors.
  for (int i = 0; i < nz; ++i) {
    rows.push_back(-coef(VectorXd::Unit(nz, i)));
    rhs.push_back(0.0);
    for (int j = i + 1; j < nz; ++j) {
      rows.push_back(-coef(VectorXd::Unit(nz, i) + VectorXd::Unit(nz, j)));
      rhs.push_back(0.0);
      rows.push_back(-coef(VectorXd::Unit(nz, i) - VectorXd::Unit(nz, j)));
      rhs.push_back(0.0);
    }
  }
  VectorXd c = VectorXd::Zero(np);
  for (int t = 0; t < np; ++t)
    if (idx[static_cast<size_t>(t)].first == idx[static_cast<size_t>(t)].second) c(t) = 1.0;

  MatrixXd P = MatrixXd::Zero(nz, nz);
  for (int iter = 0; iter < 200; ++iter) {
    MatrixXd G(static_cast<Eigen::Index>(rows.size()), np);
    VectorXd g(static_cast<Eigen::Index>(rows.size()));
    for (size_t r = 0; r < rows.size(); ++r) {
      G.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
      g(static_cast<Eigen::Index>(r)) = rhs[r];
    }
    const solver::QpSolution s = solver::solve_lp(c, G, g);
    if (s.status != solver::Status::Optimal)
      throw FitFailure(std::string("fit_surrogate: LP ") + std::string(solver::to_string(s.status)));
    P = unpack(s.x_opt);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(P);
    const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    if (es.eigenvalues()(0) >= -1e-10 * scale) break;
    for (int i = 0; i < nz; ++i) {
      if (es.eigenvalues()(i) >= -1e-10 * scale) break;
      rows.push_back(-coef(es.eigenvectors().col(i)));
      rhs.push_back(0.0);
    }
  }
  // Any remaining tiny negative curvature is lifted; z'z >= 1 keeps the bound valid.
  const double lmin = Eigen::SelfAdjointEigenSolver<MatrixXd>(P).eigenvalues()(0);
  if (lmin < 0.0) P += (-lmin + 1e-12) * MatrixXd::Identity(nz, nz);

  SurrogateFit out;
  out.surrogate.P = P;
  out.samples_used = used;
  for (const auto& x : sample_interior(C, opts.holdout, opts.seed + 7919)) {
    const std::optional<double> v = horizon_cost(x, phase, X, terminal, dyn, opts);
    if (!v) continue;
    ++out.holdout_total;
    if (out.surrogate(x) < *v - 1e-6) ++out.holdout_violations;
  }
  if (out.holdout_violations * 100 > out.holdout_total)
    throw FitFailure("fit_surrogate: " + std::to_string(out.holdout_violations) + " of " +
                     std::to_string(out.holdout_total) + " held-out samples exceed the bound");
  return out;
}

}  // namespace qcap::cap
