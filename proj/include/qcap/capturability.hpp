#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qcap/lip.hpp"
#include "qcap/polytope.hpp"

namespace qcap::cap {

/// Phase-indexed sequence of polytopes.
/// Balance tubes hold slices for phases 0..T_G; capturable tubes hold C(0..T) for one terminal phase.
struct Tube {
  std::string gait;
  std::vector<Polytope> slices;
  std::vector<double> volumes;
  lip::Footsteps footsteps = lip::Footsteps::Zero();
  int terminal_phase = 0;  // capturable tubes only
};

/// One-step backward reachable set: {x : exists e in conv(effects_k), A x + e in X}.
Polytope pre(const Polytope& X, const lip::PhaseDynamics& dyn, int k);

/// Pre_0 o Pre_1 o ... o Pre_{T-1}: states at phase 0 that can reach X one period later.
/// When `domain` is given the result is exact only on `domain` (intermediate sets are clipped
/// to an outer box of the forward reach of `domain`); callers intersect with it afterwards.
Polytope pre_period(const Polytope& X, const lip::PhaseDynamics& dyn, const Polytope* domain = nullptr);

struct BalanceOptions {
  int max_iter = 30;
  double tol = kSetEqualTol;
  int volume_samples = 20000;
  std::uint64_t seed = 1;
};

struct BalanceResult {
  Tube tube;
  int iterations = 0;
  std::vector<double> iterate_volumes;  // volume of Omega_k, k = 0..iterations
};

class NonConvergence : public std::runtime_error {
 public:
  NonConvergence(const std::string& what, Polytope last) : std::runtime_error(what), last_iterate(std::move(last)) {}
  Polytope last_iterate;
};

class EmptyResult : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fixed point of Omega <- PRE(Omega) cap Omega from X_T, then the phase slices by backward Pre.
/// Only the period boundary is held to X_T; intermediate slices are not clipped.
/// slices[T_G] is the fixed point; slices[t] = Pre_t(slices[t+1]) for 0 < t < T_G, and
/// slices[0] = Pre_0(slices[1]) cap slices[T_G], which equals slices[T_G] at a true fixed point.
BalanceResult balance_tube(const Polytope& X_T, const lip::PhaseDynamics& dyn, const BalanceOptions& opts = {});

struct CapturableOptions {
  int horizon = 10;
  int volume_samples = 20000;
  std::uint64_t seed = 1;
};

/// C(0) = B_t, C(k+1) = Pre_{(t-k-1) mod T_G}(C(k)) cap X.
/// C(k) holds states at phase (t - k) mod T_G that reach B_t in k steps while staying in X.
Tube capturable_tube(const Tube& balance, int terminal_phase, const Polytope& X, const lip::PhaseDynamics& dyn,
                     const CapturableOptions& opts = {});

/// Terminal phase whose capturable tube applies to a state at `phase` with horizon T.
int terminal_phase_for(int phase, int horizon, int period);

/// Feasibility of {(x, v) : x in X, v in product of simplices, A_bar x + B_bar v in X}.
bool gamma_nonempty(const Polytope& X, const lip::PhaseDynamics& dyn);

/// Every slice shifted by (dx, 0, dy, 0); footsteps shifted by dw.
Tube translate_tube(const Tube& T, const lip::Vector2d& dw);

/// Exists a stance weight vector moving x from `from` phase k into `to`; LP-certified.
bool one_step_viable(const Polytope& to, const lip::PhaseDynamics& dyn, int k, const Eigen::VectorXd& x);

/// Homogeneous quadratic cost bound z' P z with z = (x, 1).
struct QuadraticSurrogate {
  Eigen::MatrixXd P;
  double operator()(const Eigen::VectorXd& x) const;
};

struct SurrogateOptions {
  int horizon = 6;
  double q = 1.0;    // running state weight, times identity
  double r = 0.1;    // weight on the stance weights minus the even split
  double qf = 10.0;  // terminal state weight, times identity
  int samples = 200;
  int holdout = 500;
  std::uint64_t seed = 7;
};

/// Sampled finite-horizon cost and certified upper-bound fit.
struct SurrogateFit {
  QuadraticSurrogate surrogate;
  int samples_used = 0;
  int holdout_violations = 0;
  int holdout_total = 0;
};

class FitFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Optimal cost of reaching `terminal` from x at phase `phase` in N steps with running constraint X.
/// Returns nullopt when infeasible.
std::optional<double> horizon_cost(const Eigen::VectorXd& x, int phase, const Polytope& X, const Polytope& terminal,
                                   const lip::PhaseDynamics& dyn, const SurrogateOptions& opts);

/// Fits P (min trace, PSD, z'Pz >= V(x) on samples) over the capturable slice C.
/// Throws FitFailure when more than 1% of the held-out samples violate the bound.
SurrogateFit fit_surrogate(const Polytope& C, int phase, const Polytope& X, const Polytope& terminal,
                           const lip::PhaseDynamics& dyn, const SurrogateOptions& opts = {});

/// Uniform-ish samples in P: Chebyshev center plus random rays scaled to the boundary.
std::vector<Eigen::VectorXd> sample_interior(const Polytope& P, int count, std::uint64_t seed, double shrink = 1.0);

}  // namespace qcap::cap
