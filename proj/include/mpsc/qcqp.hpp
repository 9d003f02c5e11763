#pragma once

#include <Eigen/Dense>
#include <limits>
#include <optional>

namespace mpsc::qcqp {

/// One convex quadratic inequality 0.5 w'Aq w + bq'w + c <= 0 (Aq PSD).
struct QuadConstraint {
  Eigen::MatrixXd Aq;
  Eigen::VectorXd bq;
  double c = 0.0;
};

/// minimize    0.5 w'Q w + q'w
/// subject to  E w = d,  G w <= h,  optional quadratic constraint.
///
/// Q must be positive semidefinite. Either constraint block may be empty.
struct Problem {
  Eigen::MatrixXd Q;
  Eigen::VectorXd q;
  Eigen::MatrixXd E;
  Eigen::VectorXd d;
  Eigen::MatrixXd G;
  Eigen::VectorXd h;
  std::optional<QuadConstraint> quad;

  int num_vars() const { return static_cast<int>(Q.rows()); }
  int num_eq() const { return static_cast<int>(E.rows()); }
  int num_ineq() const {
    return static_cast<int>(G.rows()) + (quad.has_value() ? 1 : 0);
  }
};

enum class SolveStatus { optimal, max_iterations, numerical_failure };

struct Solution {
  SolveStatus status = SolveStatus::numerical_failure;
  Eigen::VectorXd w;
  Eigen::VectorXd eq_dual;
  Eigen::VectorXd ineq_dual;  // one multiplier per G row, quadratic last if present
  double objective = std::numeric_limits<double>::quiet_NaN();
  double gap = std::numeric_limits<double>::infinity();
  double primal_residual = std::numeric_limits<double>::infinity();
  double dual_residual = std::numeric_limits<double>::infinity();
  int iterations = 0;

  bool ok() const { return status == SolveStatus::optimal; }
};

struct Options {
  int max_iter = 80;
  double tol_primal = 1e-9;
  double tol_dual = 1e-9;
  double tol_gap = 1e-10;
  double reg = 1e-11;
  std::optional<Eigen::VectorXd> w_start;  // optional primal starting point
};

/// Mehrotra-style primal-dual interior-point method, dense linear algebra.
Solution solve(const Problem& p, const Options& opts = {});

/// Minimum constraint violation of the inequality system over the equality
/// manifold: min t s.t. G w <= h + t, quad(w) <= t, E w = d, t >= floor.
/// A value <= 0 certifies feasibility (the returned w is then feasible for p);
/// a clearly positive value certifies infeasibility of the inequality system.
struct FeasibilityResult {
  double min_violation = std::numeric_limits<double>::infinity();
  Eigen::VectorXd w;
  SolveStatus status = SolveStatus::numerical_failure;
};

FeasibilityResult min_violation(const Problem& p, const Options& opts = {},
                                double floor = -1.0);

}  // namespace mpsc::qcqp
