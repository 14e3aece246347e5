#pragma once

#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace qcap::solver {

enum class Status { Optimal, Infeasible, Unbounded, IterLimit };

std::string_view to_string(Status s);

/// Dense convex QP:  min 1/2 x'Qx + q'x  s.t.  eq_A x = eq_b,  ineq_G x <= ineq_g.
struct QpProblem {
  Eigen::MatrixXd hessian;
  Eigen::VectorXd linear;
  Eigen::MatrixXd eq_A;
  Eigen::VectorXd eq_b;
  Eigen::MatrixXd ineq_G;
  Eigen::VectorXd ineq_g;

  int num_vars() const { return static_cast<int>(linear.size()); }
  /// Throws std::invalid_argument on inconsistent shapes or a non-finite entry.
  void validate() const;
};

struct QpSolution {
  Eigen::VectorXd x_opt;
  double objective = 0.0;
  Status status = Status::IterLimit;
  Eigen::VectorXd dual_ineq;  // mu >= 0, one per row of ineq_G
  Eigen::VectorXd dual_eq;    // nu, one per row of eq_A
  double kkt_residual = 0.0;  // max of stationarity, primal and complementarity violations
  int iterations = 0;
  bool hessian_repaired = false;
  std::vector<int> active_set;  // inequality rows in the final working set

  bool optimal() const { return status == Status::Optimal; }
};

struct LpOptions {
  int max_iter = 0;  // 0: automatic cap proportional to problem size
  double optimality_tol = 1e-11;
  double pivot_tol = 1e-10;
  int bland_after = 30;  // consecutive degenerate pivots before switching to Bland's rule
};

struct QpOptions {
  int max_iter = 0;  // 0: automatic
  double feas_tol = 1e-9;
  double dual_tol = 1e-10;
  double psd_floor = -1e-10;  // relative to max(1, |Q|)
};

/// min c'x  s.t.  G x <= g,  A x = b.
///
/// Solved through the standard-form dual with a revised simplex (Dantzig pricing,
/// falling back to Bland's lowest-index rule after a run of degenerate pivots).
/// The primal point is read off the simplex multipliers of the final basis, so on
/// Optimal it is a basic solution and the duality gap is zero up to rounding.
QpSolution solve_lp(const Eigen::VectorXd& c, const Eigen::MatrixXd& G, const Eigen::VectorXd& g,
                    const Eigen::MatrixXd& A = Eigen::MatrixXd(),
                    const Eigen::VectorXd& b = Eigen::VectorXd(), const LpOptions& opts = {});

/// Primal active-set method for convex (PSD) QPs.
///
/// Starts from a phase-one LP point unless `initial_active` names a working set whose
/// equality-constrained minimizer is feasible, in which case that point is used.
/// Throws std::invalid_argument when Q is asymmetric or clearly indefinite.
QpSolution solve_qp(const QpProblem& p, std::span<const int> initial_active = {},
                    const QpOptions& opts = {});

/// Stationarity/feasibility/complementarity measure of a candidate (x, mu, nu).
double kkt_residual(const QpProblem& p, const Eigen::VectorXd& x, const Eigen::VectorXd& mu,
                    const Eigen::VectorXd& nu);

}  // namespace qcap::solver
