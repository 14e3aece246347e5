#include "qcap/polytope.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "qcap/solver.hpp"

namespace qcap {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

void require_dim(int a, int b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}

struct RowSet {
  MatrixXd H;
  VectorXd h;
  bool infeasible = false;
};

// Unit-normalizes rows, dropping zero rows (a negative offset on a zero row means infeasible).
RowSet normalize_rows(const MatrixXd& H, const VectorXd& h) {
  RowSet out;
  const int n = static_cast<int>(H.cols());
  std::vector<int> keep;
  VectorXd norms(H.rows());
  for (int i = 0; i < H.rows(); ++i) {
    norms(i) = H.row(i).norm();
    if (norms(i) < 1e-13) {
      if (h(i) < -kRedundancyTol) out.infeasible = true;
    } else {
      keep.push_back(i);
    }
  }
  out.H.resize(static_cast<Eigen::Index>(keep.size()), n);
  out.h.resize(static_cast<Eigen::Index>(keep.size()));
  for (size_t r = 0; r < keep.size(); ++r) {
    out.H.row(r) = H.row(keep[r]) / norms(keep[r]);
    out.h(r) = h(keep[r]) / norms(keep[r]);
  }
  return out;
}

// Merges rows with identical unit normals, keeping the tightest offset.
RowSet dedupe_rows(const RowSet& in) {
  const int m = static_cast<int>(in.H.rows());
  const int n = static_cast<int>(in.H.cols());
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    for (int j = 0; j < n; ++j) {
      if (in.H(a, j) != in.H(b, j)) return in.H(a, j) < in.H(b, j);
    }
    return a < b;
  });
  std::vector<char> dead(m, 0);
  VectorXd off = in.h;
  for (int ii = 0; ii < m; ++ii) {
    const int i = order[ii];
    if (dead[i]) continue;
    for (int jj = ii + 1; jj < m; ++jj) {
      const int j = order[jj];
      if (in.H(j, 0) - in.H(i, 0) > 1e-12) break;
      if (dead[j]) continue;
      if ((in.H.row(i) - in.H.row(j)).cwiseAbs().maxCoeff() <= 1e-12) {
        off(i) = std::min(off(i), off(j));
        dead[j] = 1;
      }
    }
  }
  RowSet out;
  out.infeasible = in.infeasible;
  std::vector<int> keep;
  for (int i = 0; i < m; ++i)
    if (!dead[i]) keep.push_back(i);
  out.H.resize(static_cast<Eigen::Index>(keep.size()), n);
  out.h.resize(static_cast<Eigen::Index>(keep.size()));
  for (size_t r = 0; r < keep.size(); ++r) {
    out.H.row(r) = in.H.row(keep[r]);
    out.h(r) = off(keep[r]);
  }
  return out;
}

EmptinessResult chebyshev(const MatrixXd& Hn, const VectorXd& hn, int dim) {
  // max r  s.t.  H_i x + r <= h_i (unit rows),  r <= cap.
  constexpr double kRadiusCap = 1e6;
  const int m = static_cast<int>(Hn.rows());
  MatrixXd G = MatrixXd::Zero(m + 1, dim + 1);
  VectorXd g(m + 1);
  G.topLeftCorner(m, dim) = Hn;
  G.col(dim).head(m).setOnes();
  g.head(m) = hn;
  G(m, dim) = 1.0;
  g(m) = kRadiusCap;
  VectorXd c = VectorXd::Zero(dim + 1);
  c(dim) = -1.0;
  solver::QpSolution s = solver::solve_lp(c, G, g);
  EmptinessResult out;
  if (s.status != solver::Status::Optimal)
    throw std::runtime_error("is_empty: Chebyshev LP failed (" + std::string(solver::to_string(s.status)) + ")");
  out.radius = s.x_opt(dim);
  out.empty = out.radius < -1e-10;
  if (!out.empty) out.witness = s.x_opt.head(dim);
  return out;
}

}  // namespace

Polytope::Polytope(MatrixXd H, VectorXd h) : H_(std::move(H)), h_(std::move(h)) {
  if (H_.rows() != h_.size()) throw std::invalid_argument("Polytope: row count of H must equal length of h");
}

Polytope Polytope::universe(int dim) { return Polytope(MatrixXd(0, dim), VectorXd(0)); }

Polytope Polytope::empty(int dim) {
  MatrixXd H = MatrixXd::Zero(1, dim);
  VectorXd h(1);
  h(0) = -1.0;
  return Polytope(std::move(H), std::move(h));
}

Polytope Polytope::box(const VectorXd& lo, const VectorXd& hi) {
  require_dim(static_cast<int>(lo.size()), static_cast<int>(hi.size()), "Polytope::box");
  const int n = static_cast<int>(lo.size());
  MatrixXd H = MatrixXd::Zero(2 * n, n);
  VectorXd h(2 * n);
  for (int i = 0; i < n; ++i) {
    H(2 * i, i) = 1.0;
    h(2 * i) = hi(i);
    H(2 * i + 1, i) = -1.0;
    h(2 * i + 1) = -lo(i);
  }
  return Polytope(std::move(H), std::move(h));
}

bool Polytope::contains(const VectorXd& x, double tol) const {
  require_dim(static_cast<int>(x.size()), dim(), "Polytope::contains");
  if (num_rows() == 0) return true;
  return ((H_ * x - h_).array() <= tol).all();
}

bool contains_point(const Polytope& P, const VectorXd& x, double tol) { return P.contains(x, tol); }

Polytope translate(const Polytope& P, const VectorXd& w) {
  require_dim(static_cast<int>(w.size()), P.dim(), "translate");
  if (P.num_rows() == 0) return P;
  return Polytope(P.normals(), P.offsets() + P.normals() * w);
}

Polytope intersect(const Polytope& P, const Polytope& Q) {
  require_dim(P.dim(), Q.dim(), "intersect");
  MatrixXd H(P.num_rows() + Q.num_rows(), P.dim());
  VectorXd h(P.num_rows() + Q.num_rows());
  H << P.normals(), Q.normals();
  h << P.offsets(), Q.offsets();
  return reduce(Polytope(std::move(H), std::move(h)));
}

Polytope affine_preimage(const Polytope& P, const MatrixXd& A) {
  if (A.rows() != P.dim()) throw std::invalid_argument("affine_preimage: shape mismatch");
  return reduce(Polytope(P.normals() * A, P.offsets()));
}

VPolytope affine_image(const VPolytope& V, const MatrixXd& A) {
  VPolytope out;
  for (const auto& v : V.vertices) {
    if (A.cols() != v.size()) throw std::invalid_argument("affine_image: shape mismatch");
    out.vertices.push_back(A * v);
  }
  return out;
}

EmptinessResult is_empty(const Polytope& P) {
  RowSet rs = normalize_rows(P.normals(), P.offsets());
  if (rs.infeasible) return EmptinessResult{};
  return chebyshev(rs.H, rs.h, P.dim());
}

std::optional<double> support(const Polytope& P, const VectorXd& d) {
  require_dim(static_cast<int>(d.size()), P.dim(), "support");
  solver::QpSolution s = solver::solve_lp(-d, P.normals(), P.offsets());
  switch (s.status) {
    case solver::Status::Optimal: return -s.objective;
    case solver::Status::Unbounded: return std::nullopt;
    case solver::Status::Infeasible: throw std::domain_error("support: empty polytope");
    case solver::Status::IterLimit: break;
  }
  throw std::runtime_error("support: LP iteration limit");
}

Polytope reduce(const Polytope& P) {
  const int n = P.dim();
  if (P.num_rows() == 0) return P;
  RowSet rs = normalize_rows(P.normals(), P.offsets());
  if (rs.infeasible) return Polytope::empty(n);
  rs = dedupe_rows(rs);
  const int m = static_cast<int>(rs.H.rows());
  if (m == 0) return Polytope::universe(n);
  if (chebyshev(rs.H, rs.h, n).empty) return Polytope::empty(n);

  std::vector<char> keep(m, 1);
  MatrixXd G(m, n);
  VectorXd g(m);
  for (int r = 0; r < m; ++r) {
    // max H_r x over the kept rows with row r relaxed by one unit.
    int k = 0;
    for (int i = 0; i < m; ++i) {
      if (!keep[i]) continue;
      G.row(k) = rs.H.row(i);
      g(k) = i == r ? rs.h(i) + 1.0 : rs.h(i);
      ++k;
    }
    solver::QpSolution s = solver::solve_lp(-rs.H.row(r).transpose(), G.topRows(k), g.head(k));
    if (s.status != solver::Status::Optimal) continue;
    if (-s.objective <= rs.h(r) + kRedundancyTol) keep[r] = 0;
  }
  int kept = static_cast<int>(std::count(keep.begin(), keep.end(), 1));
  MatrixXd H(kept, n);
  VectorXd h(kept);
  for (int i = 0, k = 0; i < m; ++i) {
    if (!keep[i]) continue;
    H.row(k) = rs.H.row(i);
    h(k++) = rs.h(i);
  }
  return Polytope(std::move(H), std::move(h));
}

bool is_subset(const Polytope& P, const Polytope& Q, double tol) {
  require_dim(P.dim(), Q.dim(), "is_subset");
  if (is_empty(P).empty) return true;
  RowSet rs = normalize_rows(Q.normals(), Q.offsets());
  if (rs.infeasible) return false;
  for (int i = 0; i < rs.H.rows(); ++i) {
    std::optional<double> s = support(P, rs.H.row(i).transpose());
    if (!s || *s > rs.h(i) + tol) return false;
  }
  return true;
}

bool set_equal(const Polytope& P, const Polytope& Q, double tol) {
  require_dim(P.dim(), Q.dim(), "set_equal");
  const bool ep = is_empty(P).empty;
  const bool eq = is_empty(Q).empty;
  if (ep || eq) return ep == eq;
  return is_subset(P, Q, tol) && is_subset(Q, P, tol);
}

BoundingBox bounding_box(const Polytope& P) {
  const int n = P.dim();
  BoundingBox bb{VectorXd(n), VectorXd(n)};
  for (int i = 0; i < n; ++i) {
    VectorXd e = VectorXd::Zero(n);
    e(i) = 1.0;
    std::optional<double> hi = support(P, e);
    std::optional<double> lo = support(P, -e);
    if (!hi || !lo) throw std::domain_error("bounding_box: unbounded polytope");
    bb.hi(i) = *hi;
    bb.lo(i) = -*lo;
  }
  return bb;
}

double volume_mc(const Polytope& P, int samples, std::uint64_t seed) {
  if (samples <= 0) throw std::invalid_argument("volume_mc: samples must be positive");
  EmptinessResult e = is_empty(P);
  if (e.empty || e.radius <= 1e-9) return 0.0;
  const BoundingBox bb = bounding_box(P);
  const int n = P.dim();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  VectorXd x(n);
  long hits = 0;
  for (int s = 0; s < samples; ++s) {
    for (int i = 0; i < n; ++i) x(i) = bb.lo(i) + unit(rng) * (bb.hi(i) - bb.lo(i));
    if (P.contains(x, 0.0)) ++hits;
  }
  return static_cast<double>(hits) / samples * (bb.hi - bb.lo).prod();
}

double ray_extent(const Polytope& P, const VectorXd& x, const VectorXd& d, double t_max) {
  double t = t_max;
  for (int i = 0; i < P.num_rows(); ++i) {
    const double a = P.normals().row(i).dot(d);
    if (a <= 1e-14) continue;
    t = std::min(t, (P.offsets()(i) - P.normals().row(i).dot(x)) / a);
  }
  return std::max(t, 0.0);
}

Polytope minkowski_sum(const Polytope& P, const VPolytope& Q, const MinkowskiOptions& opts) {
  if (Q.vertices.empty()) throw std::invalid_argument("minkowski_sum: empty vertex set");
  const int n = P.dim();
  for (const auto& v : Q.vertices) require_dim(static_cast<int>(v.size()), n, "minkowski_sum");
  const int k = static_cast<int>(Q.vertices.size());
  if (k == 1) return reduce(translate(P, Q.vertices.front()));

  Polytope base = reduce(P);
  if (is_empty(base).empty) return Polytope::empty(n);

  // Lift to z = (x, l_1..l_{k-1}) with the last weight eliminated through sum(l) = 1:
  //   H (x - v_k) - sum_i l_i H (v_i - v_k) <= h,   l_i >= 0,   sum_i l_i <= 1.
  const int m = base.num_rows();
  const int nl = k - 1;
  const VectorXd& vk = Q.vertices.back();
  MatrixXd D(n, nl);
  for (int i = 0; i < nl; ++i) D.col(i) = Q.vertices[i] - vk;
  MatrixXd Hl = MatrixXd::Zero(m + nl + 1, n + nl);
  VectorXd hl(m + nl + 1);
  Hl.topLeftCorner(m, n) = base.normals();
  Hl.topRightCorner(m, nl) = -base.normals() * D;
  hl.head(m) = base.offsets() + base.normals() * vk;
  for (int i = 0; i < nl; ++i) {
    Hl(m + i, n + i) = -1.0;
    hl(m + i) = 0.0;
  }
  Hl.bottomRightCorner(1, nl).setOnes();
  hl(m + nl) = 1.0;
  Polytope lifted = reduce(Polytope(std::move(Hl), std::move(hl)));

  for (int e = n + nl - 1; e >= n; --e) {
    const MatrixXd& H = lifted.normals();
    const VectorXd& h = lifted.offsets();
    const int d = lifted.dim();
    std::vector<int> pos, neg, zero;
    for (int i = 0; i < H.rows(); ++i) {
      const double a = H(i, e);
      if (a > 1e-12) pos.push_back(i);
      else if (a < -1e-12) neg.push_back(i);
      else zero.push_back(i);
    }
    const size_t count = zero.size() + pos.size() * neg.size();
    if (count > static_cast<size_t>(opts.max_rows))
      throw ResourceError("minkowski_sum: elimination produced " + std::to_string(count) +
                          " rows (cap " + std::to_string(opts.max_rows) + ")");

    auto drop_col = [&](const VectorXd& row) {
      VectorXd out(d - 1);
      out << row.head(e), row.tail(d - 1 - e);
      return out;
    };
    std::vector<VectorXd> rows;
    std::vector<double> offs;
    for (int i : zero) {
      rows.push_back(drop_col(H.row(i).transpose()));
      offs.push_back(h(i));
    }
    for (int i : pos) {
      for (int j : neg) {
        const double ai = H(i, e), aj = -H(j, e);
        VectorXd comb = aj * H.row(i).transpose() + ai * H.row(j).transpose();
        rows.push_back(drop_col(comb));
        offs.push_back(aj * h(i) + ai * h(j));
      }
    }

    // Discard candidates that do not touch the projection: support of the lifted set
    // along (c, 0) strictly below the offset.
    MatrixXd Hc(static_cast<Eigen::Index>(rows.size()), d - 1);
    VectorXd hc(static_cast<Eigen::Index>(rows.size()));
    int kept = 0;
    for (size_t r = 0; r < rows.size(); ++r) {
      const double nrm = rows[r].norm();
      if (nrm < 1e-13) {
        if (offs[r] < -kRedundancyTol) return Polytope::empty(n);
        continue;
      }
      VectorXd dir = VectorXd::Zero(d);
      dir.head(e) = rows[r].head(e);
      dir.tail(d - 1 - e) = rows[r].tail(d - 1 - e);
      std::optional<double> s = support(lifted, dir);
      if (s && *s < offs[r] - kRedundancyTol * nrm) continue;
      Hc.row(kept) = rows[r].transpose() / nrm;
      hc(kept) = offs[r] / nrm;
      ++kept;
    }
    lifted = reduce(Polytope(Hc.topRows(kept), hc.head(kept)));
  }
  return lifted;
}

}  // namespace qcap
