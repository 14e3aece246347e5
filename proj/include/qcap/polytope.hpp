#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace qcap {

/// Tolerance ladder shared by the set computations.
inline constexpr double kRedundancyTol = 1e-9;
inline constexpr double kSetEqualTol = 1e-7;
inline constexpr double kMembershipTol = 1e-8;

/// Raised when Fourier-Motzkin elimination exceeds its configured row cap.
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Convex polyhedron {x : H x <= h}.
///
/// Values are immutable; every operation returns a new polytope. A polytope with
/// zero rows is the whole space. The canonical empty set is the single row 0'x <= -1.
class Polytope {
 public:
  Polytope() = default;
  Polytope(Eigen::MatrixXd H, Eigen::VectorXd h);

  static Polytope universe(int dim);
  static Polytope empty(int dim);
  static Polytope box(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi);

  int dim() const { return static_cast<int>(H_.cols()); }
  int num_rows() const { return static_cast<int>(H_.rows()); }
  const Eigen::MatrixXd& normals() const { return H_; }
  const Eigen::VectorXd& offsets() const { return h_; }

  /// H x <= h + tol on every row.
  bool contains(const Eigen::VectorXd& x, double tol = kMembershipTol) const;

 private:
  Eigen::MatrixXd H_;
  Eigen::VectorXd h_;
};

/// Finite point set whose convex hull is the polytope.
struct VPolytope {
  std::vector<Eigen::VectorXd> vertices;

  int dim() const { return vertices.empty() ? 0 : static_cast<int>(vertices.front().size()); }
};

struct EmptinessResult {
  bool empty = true;
  Eigen::VectorXd witness;  // Chebyshev center when nonempty
  double radius = 0.0;      // inscribed-ball radius (row-normalized); capped for unbounded sets
};

Polytope intersect(const Polytope& P, const Polytope& Q);
Polytope affine_preimage(const Polytope& P, const Eigen::MatrixXd& A);
VPolytope affine_image(const VPolytope& V, const Eigen::MatrixXd& A);
Polytope translate(const Polytope& P, const Eigen::VectorXd& w);

struct MinkowskiOptions {
  int max_rows = 200000;  // cap on candidate rows produced by one elimination round
};
Polytope minkowski_sum(const Polytope& P, const VPolytope& Q, const MinkowskiOptions& opts = {});

/// Phase-one feasibility through the Chebyshev-center LP.
EmptinessResult is_empty(const Polytope& P);

/// Minimal H-representation: row-normalized, duplicates merged, LP-redundant rows dropped.
Polytope reduce(const Polytope& P);

/// max_{x in P} d'x; nullopt when unbounded. Throws std::domain_error on an empty P.
std::optional<double> support(const Polytope& P, const Eigen::VectorXd& d);

/// Mutual containment by support functions on each side's normalized rows.
bool set_equal(const Polytope& P, const Polytope& Q, double tol = kSetEqualTol);
/// P subset of Q (support of P along each row of Q within tol).
bool is_subset(const Polytope& P, const Polytope& Q, double tol = kSetEqualTol);

struct BoundingBox {
  Eigen::VectorXd lo, hi;
};
/// Axis-aligned bounds from 2n support LPs. Throws std::domain_error if unbounded or empty.
BoundingBox bounding_box(const Polytope& P);

/// Monte Carlo volume; deterministic for a fixed seed. Returns 0 for empty or flat sets.
double volume_mc(const Polytope& P, int samples, std::uint64_t seed);

bool contains_point(const Polytope& P, const Eigen::VectorXd& x, double tol = kMembershipTol);

/// Largest t in [0, t_max] with x + t d in P (ray shooting from an interior point).
double ray_extent(const Polytope& P, const Eigen::VectorXd& x, const Eigen::VectorXd& d,
                  double t_max = 1e6);

}  // namespace qcap
