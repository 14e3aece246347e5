#include "qcap/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace qcap::solver {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Incrementally tracks an orthonormal basis of the span of accepted rows.
class RowSpan {
 public:
  explicit RowSpan(int n) : n_(n) {}
  bool try_add(const VectorXd& row) {
    const double norm = row.norm();
    if (norm == 0.0 || static_cast<int>(basis_.size()) >= n_) return false;
    VectorXd v = row / norm;
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& b : basis_) v -= b.dot(v) * b;
    const double rn = v.norm();
    if (rn <= 1e-9) return false;
    basis_.push_back(v / rn);
    return true;
  }

 private:
  int n_;
  std::vector<VectorXd> basis_;
};

struct Step {
  VectorXd p;
  bool zero_curvature = false;  // p is a descent ray with no curvature along it
};

class ActiveSetQp {
 public:
  ActiveSetQp(const QpProblem& prob, const MatrixXd& Q, const QpOptions& opts)
      : p_(prob), Q_(Q), opts_(opts), n_(prob.num_vars()) {
    qscale_ = std::max(1.0, Q_.size() > 0 ? Q_.cwiseAbs().maxCoeff() : 0.0);
    RowSpan span(n_);
    for (int i = 0; i < p_.eq_A.rows(); ++i)
      if (span.try_add(p_.eq_A.row(i).transpose())) eq_rows_.push_back(i);
  }

  // Matrix of working-set rows: independent equalities followed by the working inequalities.
  MatrixXd working_matrix(const std::vector<int>& W) const {
    MatrixXd Aw(eq_rows_.size() + W.size(), n_);
    int r = 0;
    for (int i : eq_rows_) Aw.row(r++) = p_.eq_A.row(i);
    for (int i : W) Aw.row(r++) = p_.ineq_G.row(i);
    return Aw;
  }

  VectorXd working_rhs(const std::vector<int>& W) const {
    VectorXd b(eq_rows_.size() + W.size());
    int r = 0;
    for (int i : eq_rows_) b(r++) = p_.eq_b(i);
    for (int i : W) b(r++) = p_.ineq_g(i);
    return b;
  }

  std::vector<int> independent_subset(const std::vector<int>& candidates) const {
    RowSpan span(n_);
    for (int i : eq_rows_) span.try_add(p_.eq_A.row(i).transpose());
    std::vector<int> out;
    for (int i : candidates)
      if (span.try_add(p_.ineq_G.row(i).transpose())) out.push_back(i);
    return out;
  }

  // Minimizer direction of the model restricted to {p : A_W p = 0}.
  Step step(const VectorXd& x, const std::vector<int>& W) const {
    const VectorXd grad = gradient(x);
    const MatrixXd Aw = working_matrix(W);
    MatrixXd Z;
    const int k = static_cast<int>(Aw.rows());
    if (k == 0) {
      Z = MatrixXd::Identity(n_, n_);
    } else {
      Eigen::HouseholderQR<MatrixXd> qr(Aw.transpose());
      MatrixXd Qfull = qr.householderQ() * MatrixXd::Identity(n_, n_);
      Z = Qfull.rightCols(n_ - k);
    }
    Step s;
    s.p = VectorXd::Zero(n_);
    if (Z.cols() == 0) return s;
    const MatrixXd Hr = Z.transpose() * Q_ * Z;
    const VectorXd gr = Z.transpose() * grad;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (Hr + Hr.transpose()));
    const VectorXd& ev = es.eigenvalues();
    const MatrixXd& V = es.eigenvectors();
    const double curv_tol = 1e-11 * qscale_;
    VectorXd flat = VectorXd::Zero(gr.size());
    VectorXd newton = VectorXd::Zero(gr.size());
    for (int i = 0; i < ev.size(); ++i) {
      const double gi = V.col(i).dot(gr);
      if (ev(i) <= curv_tol) flat += gi * V.col(i);
      else newton -= (gi / ev(i)) * V.col(i);
    }
    const double gscale = std::max(1.0, grad.cwiseAbs().maxCoeff());
    if (flat.norm() > 1e-10 * gscale) {
      s.p = -(Z * flat);
      s.zero_curvature = true;
    } else {
      s.p = Z * newton;
    }
    return s;
  }

  VectorXd gradient(const VectorXd& x) const { return Q_ * x + p_.linear; }

  // Least-squares multipliers for the working set; returns (nu_indep, mu_W).
  VectorXd multipliers(const VectorXd& x, const std::vector<int>& W) const {
    const MatrixXd Aw = working_matrix(W);
    if (Aw.rows() == 0) return VectorXd();
    const VectorXd grad = gradient(x);
    return Aw.transpose().colPivHouseholderQr().solve(-grad);
  }

  bool feasible(const VectorXd& x) const {
    const double tol = opts_.feas_tol;
    if (p_.ineq_G.rows() > 0) {
      VectorXd viol = p_.ineq_G * x - p_.ineq_g;
      for (int i = 0; i < viol.size(); ++i)
        if (viol(i) > tol * std::max(1.0, std::abs(p_.ineq_g(i)))) return false;
    }
    if (p_.eq_A.rows() > 0) {
      VectorXd r = p_.eq_A * x - p_.eq_b;
      for (int i = 0; i < r.size(); ++i)
        if (std::abs(r(i)) > tol * std::max(1.0, std::abs(p_.eq_b(i)))) return false;
    }
    return true;
  }

  bool warm_start(std::span<const int> initial, VectorXd& x, std::vector<int>& W) const {
    std::vector<int> cand;
    for (int i : initial) {
      if (i < 0 || i >= p_.ineq_G.rows()) throw std::invalid_argument("solve_qp: bad warm-start index");
      cand.push_back(i);
    }
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
    W = independent_subset(cand);
    const MatrixXd Aw = working_matrix(W);
    VectorXd x0 = VectorXd::Zero(n_);
    if (Aw.rows() > 0) x0 = Aw.completeOrthogonalDecomposition().solve(working_rhs(W));
    Step s = step(x0, W);
    if (s.zero_curvature) return false;
    x = x0 + s.p;
    return feasible(x);
  }

  bool cold_start(VectorXd& x, std::vector<int>& W, Status& status) const {
    QpSolution lp = solve_lp(VectorXd::Zero(n_), p_.ineq_G, p_.ineq_g, p_.eq_A, p_.eq_b);
    if (lp.status != Status::Optimal) {
      status = lp.status == Status::Unbounded ? Status::IterLimit : lp.status;
      return false;
    }
    x = lp.x_opt;
    std::vector<int> active;
    if (p_.ineq_G.rows() > 0) {
      VectorXd slack = p_.ineq_g - p_.ineq_G * x;
      for (int i = 0; i < slack.size(); ++i)
        if (std::abs(slack(i)) <= opts_.feas_tol * std::max(1.0, std::abs(p_.ineq_g(i)))) active.push_back(i);
    }
    W = independent_subset(active);
    return true;
  }

  QpSolution solve(std::span<const int> initial) {
    QpSolution sol;
    VectorXd x;
    std::vector<int> W;
    bool started = false;
    if (!initial.empty()) started = warm_start(initial, x, W);
    if (!started) {
      Status st = Status::Infeasible;
      if (!cold_start(x, W, st)) {
        sol.status = st;
        return sol;
      }
    }

    const int m = static_cast<int>(p_.ineq_G.rows());
    const int max_iter = opts_.max_iter > 0 ? opts_.max_iter : 50 * (n_ + m) + 200;
    std::vector<char> in_w(m, 0);
    for (int i : W) in_w[i] = 1;
    bool at_face_min = false;
    int it = 0;
    for (; it < max_iter; ++it) {
      Step s;
      if (!at_face_min) s = step(x, W);
      const double pnorm = at_face_min ? 0.0 : s.p.cwiseAbs().maxCoeff();
      if (at_face_min || pnorm <= 1e-13 * std::max(1.0, x.cwiseAbs().maxCoeff())) {
        at_face_min = false;
        VectorXd lam = multipliers(x, W);
        const int ne = static_cast<int>(eq_rows_.size());
        int drop = -1;
        double most_neg = -opts_.dual_tol * std::max(1.0, gradient(x).cwiseAbs().maxCoeff());
        for (size_t j = 0; j < W.size(); ++j) {
          const double mu = lam(ne + static_cast<int>(j));
          if (mu < most_neg) {
            most_neg = mu;
            drop = static_cast<int>(j);
          }
        }
        if (drop < 0) {
          sol.status = Status::Optimal;
          break;
        }
        in_w[W[drop]] = 0;
        W.erase(W.begin() + drop);
        continue;
      }

      double alpha = s.zero_curvature ? std::numeric_limits<double>::infinity() : 1.0;
      int block = -1;
      if (m > 0) {
        const VectorXd Gp = p_.ineq_G * s.p;
        const VectorXd Gx = p_.ineq_G * x;
        for (int i = 0; i < m; ++i) {
          if (in_w[i]) continue;
          if (Gp(i) <= 1e-12 * p_.ineq_G.row(i).norm() * s.p.norm()) continue;
          const double a = std::max(0.0, p_.ineq_g(i) - Gx(i)) / Gp(i);
          if (a < alpha) {
            alpha = a;
            block = i;
          }
        }
      }
      if (!std::isfinite(alpha)) {
        sol.status = Status::Unbounded;
        sol.x_opt = x;
        sol.iterations = it;
        return sol;
      }
      x += alpha * s.p;
      if (block >= 0) {
        W.push_back(block);
        in_w[block] = 1;
      } else if (!s.zero_curvature) {
        at_face_min = true;
      }
    }
    sol.iterations = it;
    if (sol.status != Status::Optimal) sol.status = Status::IterLimit;

    // Assemble full multipliers.
    sol.x_opt = x;
    sol.dual_ineq = VectorXd::Zero(m);
    sol.dual_eq = VectorXd::Zero(p_.eq_A.rows());
    VectorXd lam = multipliers(x, W);
    const int ne = static_cast<int>(eq_rows_.size());
    for (int j = 0; j < ne; ++j) sol.dual_eq(eq_rows_[j]) = lam(j);
    for (size_t j = 0; j < W.size(); ++j) sol.dual_ineq(W[j]) = std::max(0.0, lam(ne + static_cast<int>(j)));
    sol.active_set = W;
    std::sort(sol.active_set.begin(), sol.active_set.end());
    sol.objective = 0.5 * x.dot(Q_ * x) + p_.linear.dot(x);
    return sol;
  }

 private:
  const QpProblem& p_;
  const MatrixXd& Q_;
  QpOptions opts_;
  int n_;
  double qscale_ = 1.0;
  std::vector<int> eq_rows_;
};

}  // namespace

QpSolution solve_qp(const QpProblem& prob, std::span<const int> initial_active, const QpOptions& opts) {
  prob.validate();
  const int n = prob.num_vars();
  MatrixXd Q = prob.hessian.size() > 0 ? prob.hessian : MatrixXd::Zero(n, n);
  const double scale = std::max(1.0, n > 0 ? Q.cwiseAbs().maxCoeff() : 0.0);
  if (n > 0 && (Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw std::invalid_argument("solve_qp: hessian is not symmetric");
  Q = 0.5 * (Q + Q.transpose());

  bool repaired = false;
  if (n > 0) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(Q);
    const double lmin = es.eigenvalues().minCoeff();
    if (lmin < opts.psd_floor * scale) throw std::invalid_argument("solve_qp: hessian is not PSD");
    if (lmin < 0.0) {
      VectorXd ev = es.eigenvalues().cwiseMax(0.0);
      Q = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
      Q = 0.5 * (Q + Q.transpose());
      repaired = true;
    }
  }

  ActiveSetQp qp(prob, Q, opts);
  QpSolution sol = qp.solve(initial_active);
  sol.hessian_repaired = repaired;
  if (sol.status == Status::Optimal || sol.status == Status::IterLimit) {
    QpProblem repaired_prob = prob;
    repaired_prob.hessian = Q;
    sol.kkt_residual = kkt_residual(repaired_prob, sol.x_opt, sol.dual_ineq, sol.dual_eq);
  }
  return sol;
}

}  // namespace qcap::solver
