#include "qcap/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace qcap::solver {

std::string_view to_string(Status s) {
  switch (s) {
    case Status::Optimal: return "Optimal";
    case Status::Infeasible: return "Infeasible";
    case Status::Unbounded: return "Unbounded";
    case Status::IterLimit: return "IterLimit";
  }
  return "Unknown";
}

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class StdStatus { Optimal, Infeasible, Unbounded, IterLimit };

struct StdResult {
  StdStatus status = StdStatus::IterLimit;
  VectorXd y;             // primal of the standard form, length N
  VectorXd pi;            // simplex multipliers, length n
  std::vector<int> basis; // final basis (indices >= N are artificials)
  int iterations = 0;
};

// Revised simplex for  min f'y  s.t.  M y = r,  y >= 0.
// Artificial columns N..N+n-1 carry sign(r_i) e_i; they never re-enter after leaving.
class StandardSimplex {
 public:
  StandardSimplex(const MatrixXd& M, const VectorXd& f, const VectorXd& r, const LpOptions& o)
      : M_(M), f_(f), r_(r), opts_(o), n_(static_cast<int>(M.rows())), N_(static_cast<int>(M.cols())) {
    sign_.resize(n_);
    for (int i = 0; i < n_; ++i) sign_[i] = r_(i) >= 0.0 ? 1.0 : -1.0;
    basis_.resize(n_);
    for (int i = 0; i < n_; ++i) basis_[i] = N_ + i;
    max_iter_ = opts_.max_iter > 0 ? opts_.max_iter : 50 * (n_ + N_) + 1000;
  }

  StdResult run() {
    StdResult out;
    if (n_ == 0) {
      // No rows: y = 0 is feasible; any negative cost column is an unbounded ray.
      out.y = VectorXd::Zero(N_);
      out.pi = VectorXd();
      out.status = StdStatus::Optimal;
      for (int j = 0; j < N_; ++j)
        if (f_(j) < -opts_.optimality_tol) out.status = StdStatus::Unbounded;
      return out;
    }

    // Phase one.
    VectorXd cost1 = VectorXd::Zero(N_ + n_);
    cost1.tail(n_).setOnes();
    StdStatus s1 = iterate(cost1, /*phase_two=*/false);
    out.iterations = iters_;
    if (s1 == StdStatus::IterLimit) {
      out.status = s1;
      return out;
    }
    refresh(cost1);
    double infeas = 0.0;
    for (int i = 0; i < n_; ++i)
      if (basis_[i] >= N_) infeas += std::max(0.0, yB_(i));
    const double rscale = std::max(1.0, r_.cwiseAbs().maxCoeff());
    if (infeas > 1e-9 * rscale) {
      out.status = StdStatus::Infeasible;
      return out;
    }

    // Phase two.
    VectorXd cost2 = VectorXd::Zero(N_ + n_);
    cost2.head(N_) = f_;
    StdStatus s2 = iterate(cost2, /*phase_two=*/true);
    out.iterations = iters_;
    refresh(cost2);
    out.status = s2;
    out.y = VectorXd::Zero(N_);
    for (int i = 0; i < n_; ++i)
      if (basis_[i] < N_) out.y(basis_[i]) = std::max(0.0, yB_(i));
    out.pi = pi_;
    out.basis = basis_;
    return out;
  }

 private:
  VectorXd column(int j) const {
    if (j < N_) return M_.col(j);
    VectorXd e = VectorXd::Zero(n_);
    e(j - N_) = sign_[j - N_];
    return e;
  }

  void refresh(const VectorXd& cost) {
    MatrixXd B(n_, n_);
    VectorXd cB(n_);
    for (int i = 0; i < n_; ++i) {
      B.col(i) = column(basis_[i]);
      cB(i) = cost(basis_[i]);
    }
    Binv_ = B.partialPivLu().inverse();
    yB_ = Binv_ * r_;
    pi_ = Binv_.transpose() * cB;
  }

  StdStatus iterate(const VectorXd& cost, bool phase_two) {
    int degenerate_run = 0;
    std::vector<char> in_basis(N_ + n_, 0);
    for (int b : basis_) in_basis[b] = 1;

    while (true) {
      if (iters_ >= max_iter_) return StdStatus::IterLimit;
      refresh(cost);
      const bool bland = degenerate_run >= opts_.bland_after;

      // Pricing over original columns only.
      VectorXd d = cost.head(N_) - M_.transpose() * pi_;
      int q = -1;
      double best = 0.0;
      for (int j = 0; j < N_; ++j) {
        if (in_basis[j]) continue;
        const double tol = opts_.optimality_tol * (1.0 + std::abs(cost(j)));
        if (d(j) >= -tol) continue;
        if (bland) {
          q = j;
          break;
        }
        if (d(j) < best) {
          best = d(j);
          q = j;
        }
      }
      if (q < 0) return StdStatus::Optimal;

      VectorXd u = Binv_ * M_.col(q);
      int leave = -1;
      double ratio = std::numeric_limits<double>::infinity();
      double leave_u = 0.0;
      for (int i = 0; i < n_; ++i) {
        const bool artificial = basis_[i] >= N_;
        double cand;
        if (phase_two && artificial) {
          if (std::abs(u(i)) <= opts_.pivot_tol) continue;
          cand = 0.0;
        } else {
          if (u(i) <= opts_.pivot_tol) continue;
          cand = std::max(0.0, yB_(i)) / u(i);
        }
        bool take = false;
        if (leave < 0 || cand < ratio - 1e-14) {
          take = true;
        } else if (cand <= ratio + 1e-14) {
          // Tie: Bland picks the lowest variable index; otherwise prefer the larger pivot.
          if (bland) take = basis_[i] < basis_[leave];
          else take = std::abs(u(i)) > std::abs(leave_u);
        }
        if (take) {
          leave = i;
          ratio = cand;
          leave_u = u(i);
        }
      }
      if (leave < 0) return StdStatus::Unbounded;

      degenerate_run = ratio <= 1e-13 ? degenerate_run + 1 : 0;
      in_basis[basis_[leave]] = 0;
      basis_[leave] = q;
      in_basis[q] = 1;
      ++iters_;
    }
  }

  const MatrixXd& M_;
  const VectorXd& f_;
  const VectorXd& r_;
  LpOptions opts_;
  int n_, N_;
  std::vector<double> sign_;
  std::vector<int> basis_;
  MatrixXd Binv_;
  VectorXd yB_, pi_;
  int iters_ = 0;
  int max_iter_ = 0;
};

bool all_finite(const MatrixXd& m) { return m.size() == 0 || m.allFinite(); }

}  // namespace

double kkt_residual(const QpProblem& p, const VectorXd& x, const VectorXd& mu, const VectorXd& nu) {
  const int n = p.num_vars();
  VectorXd stat = p.linear;
  if (p.hessian.size() > 0) stat += p.hessian * x;
  if (p.ineq_G.rows() > 0) stat += p.ineq_G.transpose() * mu;
  if (p.eq_A.rows() > 0) stat += p.eq_A.transpose() * nu;
  double res = n > 0 ? stat.cwiseAbs().maxCoeff() : 0.0;
  if (p.ineq_G.rows() > 0) {
    VectorXd slack = p.ineq_G * x - p.ineq_g;
    res = std::max(res, slack.maxCoeff());
    res = std::max(res, (-mu).maxCoeff());
    res = std::max(res, mu.cwiseProduct(slack).cwiseAbs().maxCoeff());
  }
  if (p.eq_A.rows() > 0) res = std::max(res, (p.eq_A * x - p.eq_b).cwiseAbs().maxCoeff());
  return std::max(res, 0.0);
}

void QpProblem::validate() const {
  const int n = num_vars();
  auto bad = [](const char* what) { throw std::invalid_argument(std::string("QpProblem: ") + what); };
  if (hessian.size() > 0 && (hessian.rows() != n || hessian.cols() != n)) bad("hessian shape");
  if (eq_A.rows() > 0 && eq_A.cols() != n) bad("eq_A shape");
  if (eq_A.rows() != eq_b.size()) bad("eq_b length");
  if (ineq_G.rows() > 0 && ineq_G.cols() != n) bad("ineq_G shape");
  if (ineq_G.rows() != ineq_g.size()) bad("ineq_g length");
  if (!all_finite(hessian) || !all_finite(linear) || !all_finite(eq_A) || !all_finite(eq_b) ||
      !all_finite(ineq_G) || !all_finite(ineq_g))
    bad("non-finite data");
}

QpSolution solve_lp(const VectorXd& c, const MatrixXd& G, const VectorXd& g, const MatrixXd& A,
                    const VectorXd& b, const LpOptions& opts) {
  const int n = static_cast<int>(c.size());
  const int m = static_cast<int>(G.rows());
  const int p = static_cast<int>(A.rows());
  QpProblem prob;
  prob.linear = c;
  prob.ineq_G = m > 0 ? G : MatrixXd(0, n);
  prob.ineq_g = g;
  prob.eq_A = p > 0 ? A : MatrixXd(0, n);
  prob.eq_b = b.size() > 0 ? b : VectorXd(0);
  prob.validate();

  MatrixXd M(n, m + 2 * p);
  VectorXd f(m + 2 * p);
  if (m > 0) {
    M.leftCols(m) = G.transpose();
    f.head(m) = g;
  }
  if (p > 0) {
    M.middleCols(m, p) = A.transpose();
    M.rightCols(p) = -A.transpose();
    f.segment(m, p) = b;
    f.tail(p) = -b;
  }
  const VectorXd r = -c;

  QpSolution sol;
  StdResult res = StandardSimplex(M, f, r, opts).run();
  sol.iterations = res.iterations;
  switch (res.status) {
    case StdStatus::Optimal: {
      sol.status = Status::Optimal;
      sol.x_opt = res.pi.size() == n ? res.pi : VectorXd::Zero(n);
      sol.dual_ineq = res.y.head(m);
      sol.dual_eq = res.y.segment(m, p) - res.y.tail(p);
      sol.objective = c.dot(sol.x_opt);
      for (int bidx : res.basis)
        if (bidx < m) sol.active_set.push_back(bidx);
      std::sort(sol.active_set.begin(), sol.active_set.end());
      sol.kkt_residual = kkt_residual(prob, sol.x_opt, sol.dual_ineq, sol.dual_eq);
      return sol;
    }
    case StdStatus::Unbounded:
      sol.status = Status::Infeasible;
      return sol;
    case StdStatus::IterLimit:
      sol.status = Status::IterLimit;
      return sol;
    case StdStatus::Infeasible: {
      // Dual infeasible: primal is unbounded unless it is also infeasible.
      const VectorXd zero = VectorXd::Zero(n);
      StdResult feas = StandardSimplex(M, f, zero, opts).run();
      sol.iterations += feas.iterations;
      if (feas.status == StdStatus::Unbounded) {
        sol.status = Status::Infeasible;
      } else if (feas.status == StdStatus::Optimal) {
        sol.status = Status::Unbounded;
        sol.x_opt = feas.pi.size() == n ? feas.pi : VectorXd::Zero(n);
        sol.objective = -std::numeric_limits<double>::infinity();
      } else {
        sol.status = Status::IterLimit;
      }
      return sol;
    }
  }
  return sol;
}

}  // namespace qcap::solver
