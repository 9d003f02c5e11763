#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mpsc/linsys.hpp"

namespace mpsc {

/// Halfspace set {x : A x <= b}.
struct Polytope {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;

  Polytope(Eigen::MatrixXd A_in, Eigen::VectorXd b_in);

  int dim() const { return static_cast<int>(A.cols()); }
  int rows() const { return static_cast<int>(A.rows()); }
  bool contains(const Eigen::VectorXd& x, double tol) const;

  /// Axis-aligned box helper: lb <= x <= ub.
  static Polytope box(const Eigen::VectorXd& lb, const Eigen::VectorXd& ub);
};

/// Origin-centered ellipsoid {e : e'P e <= 1}, P symmetric positive definite.
class Ellipsoid {
 public:
  explicit Ellipsoid(Eigen::MatrixXd P_in);

  const Eigen::MatrixXd& P() const { return P_; }
  int dim() const { return static_cast<int>(P_.rows()); }

  bool contains(const Eigen::VectorXd& e, double tol) const;

  /// Support function max{a.e : e in set} = sqrt(a' P^{-1} a).
  double support(const Eigen::VectorXd& a) const;

  /// Maps the unit ball onto the ellipsoid (P^{-1/2}); boundary point for a
  /// unit direction u is shape_map() * u.
  const Eigen::MatrixXd& shape_map() const { return inv_sqrt_; }

 private:
  Eigen::MatrixXd P_;
  Eigen::MatrixXd Pinv_;
  Eigen::MatrixXd inv_sqrt_;
};

/// Convex hull of an explicit vertex list.
struct VertexHull {
  std::vector<Eigen::VectorXd> vertices;

  explicit VertexHull(std::vector<Eigen::VectorXd> v);

  int dim() const { return static_cast<int>(vertices.front().size()); }
  int count() const { return static_cast<int>(vertices.size()); }

  /// Vertices as columns of an n x K matrix.
  Eigen::MatrixXd matrix() const;
};

enum class TightenStatus { ok, empty_interior, empty };

struct TightenResult {
  Polytope poly;
  TightenStatus status = TightenStatus::ok;
  /// Chebyshev-style interior slack of the tightened set (negative = strictly
  /// feasible interior exists, measured in the most binding normalized facet).
  double interior_slack = 0.0;
};

/// Per-facet exact Pontryagin difference poly (-) omega: offsets shrink by the
/// support of omega in each facet normal direction.
TightenResult tighten_state(const Polytope& poly, const Ellipsoid& omega);

/// Per-facet exact Pontryagin difference poly (-) K*omega for the input set.
TightenResult tighten_input(const Polytope& poly, const TubeGain& gain,
                            const Ellipsoid& omega);

bool ellipsoid_contains(const Ellipsoid& omega, const Eigen::VectorXd& e, double tol);
bool polytope_contains(const Polytope& poly, const Eigen::VectorXd& x, double tol);
double ellipsoid_support(const Ellipsoid& omega, const Eigen::VectorXd& a);

struct HullWeights {
  bool inside = false;
  Eigen::VectorXd weights;  // nonnegative, sums to one, reproduces z when inside
  double residual = std::numeric_limits<double>::infinity();  // inf-norm reconstruction error
};

/// Convex-combination certificate for z over the hull vertices. When z is in
/// the hull, returns the minimum-Euclidean-norm weight vector (deterministic
/// tie-break); otherwise reports outside (not an error).
HullWeights hull_membership_weights(const VertexHull& hull, const Eigen::VectorXd& z,
                                    double tol = 1e-7);

/// Hull of the union of `hull` and `points`, pruned so that no stored vertex is
/// a convex combination of the others (within tol).
VertexHull hull_add_points(const VertexHull& hull,
                           const std::vector<Eigen::VectorXd>& points, double tol = 1e-7);

struct SumDecomposition {
  bool inside = false;
  Eigen::VectorXd z;        // hull component
  Eigen::VectorXd weights;  // convex weights producing z
  double quad_form = std::numeric_limits<double>::infinity();  // (x-z)'P(x-z)
};

/// Splits x into z + e with z in the hull and e measured by the ellipsoid
/// quadratic form, minimizing e'Pe over the hull (a small convex program).
/// `inside` reports membership of x in hull (+) omega at the given tolerance.
SumDecomposition decompose_hull_ellipsoid(const VertexHull& hull, const Ellipsoid& omega,
                                          const Eigen::VectorXd& x, double tol = 1e-7);

/// Monte Carlo area estimate for 2-D hulls (reporting only).
double hull_area_monte_carlo(const VertexHull& hull, int samples, std::uint64_t seed);

}  // namespace mpsc
