#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "mpsc/geometry.hpp"
#include "mpsc/linsys.hpp"

namespace mpsc {

namespace detail {
struct Condensed;  // precomputed problem template, see mpsc_core.cpp
}

struct MpscTolerances {
  double solver_residual = 1e-8;  // primal/dual residual target
  double solver_gap = 1e-10;
  int solver_max_iter = 60;
  double pass_tol = 1e-10;     // ||u_L - u~|| threshold for interference
  double validate_tol = 1e-7;  // accepted constraint violation on solutions
  double membership_tol = 1e-7;

  /// Feasibility verdict edge: half the accepted violation, so every state
  /// declared feasible carries a point that passes validation.
  double verdict_margin() const { return 0.5 * validate_tol; }
};

/// Problem data for the online certification program: belief model, tube
/// gain, invariant error set, tightened constraint sets, terminal vertex set
/// and horizon. Construction validates consistency and precomputes the
/// condensed program template; configs are cheap to copy.
class MpscConfig {
 public:
  MpscConfig(LinearModel model, TubeGain gain, Ellipsoid omega, Polytope x_bar,
             Polytope u_bar, VertexHull terminal, int horizon,
             MpscTolerances tol = {});

  /// Same configuration with a replaced terminal vertex set (revalidates).
  MpscConfig with_terminal(VertexHull terminal) const;

  const LinearModel& model() const { return model_; }
  const TubeGain& gain() const { return gain_; }
  const Ellipsoid& omega() const { return omega_; }
  const Polytope& x_bar() const { return x_bar_; }
  const Polytope& u_bar() const { return u_bar_; }
  const VertexHull& terminal() const { return terminal_; }
  int horizon() const { return horizon_; }
  const MpscTolerances& tol() const { return tol_; }
  const detail::Condensed& condensed() const { return *condensed_; }

 private:
  LinearModel model_;
  TubeGain gain_;
  Ellipsoid omega_;
  Polytope x_bar_;
  Polytope u_bar_;
  VertexHull terminal_;
  int horizon_;
  MpscTolerances tol_;
  std::shared_ptr<const detail::Condensed> condensed_;
};

enum class SolveVerdict { feasible, infeasible, unknown };

struct MpscSolution {
  SolveVerdict verdict = SolveVerdict::unknown;
  bool feasible = false;
  std::vector<Eigen::VectorXd> z_traj;  // N+1 nominal states
  std::vector<Eigen::VectorXd> v_traj;  // N nominal inputs
  Eigen::VectorXd u_tilde;              // certified input
  Eigen::VectorXd hull_weights;         // terminal convex multipliers
  double objective = std::numeric_limits<double>::infinity();  // ||u_L - u~||^2
  double kkt_residual = std::numeric_limits<double>::infinity();
  bool pass_through = false;            // u~ equals u_L exactly
  double infeasibility_margin = 0.0;    // min constraint violation when infeasible
};

/// Per-constraint-family residual report, recomputed with plain arithmetic.
struct ValidationReport {
  double dynamics = 0.0;   // ||z_{i+1} - A z_i - B v_i||_inf
  double state = 0.0;      // tightened state constraint violation
  double input = 0.0;      // tightened input constraint violation
  double terminal = 0.0;   // hull equality / simplex / nonnegativity violation
  double ellipsoid = 0.0;  // (x - z0)'P(x - z0) - 1, positive part
  double input_def = 0.0;  // ||u~ - v0 - K(x - z0)||_inf

  double max_violation() const;
  bool ok(double tol) const { return max_violation() <= tol; }
};

/// Solves the certification program at state x for proposed input u_L:
///   minimize ||u_L - u~||^2 over nominal trajectory, u~ and hull weights
///   s.t. nominal dynamics, tightened constraints, terminal hull membership,
///        x - z0 in omega, u~ = v0 + K (x - z0).
/// Feasible verdicts always carry a solution re-validated by plain
/// arithmetic; unresolved solves surface as `unknown` (callers treat this as
/// infeasible, the safe direction).
MpscSolution solve_mpsc(const MpscConfig& cfg, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& u_learning);

/// Feasibility-only probe of the same constraint system (u_L-independent).
struct FeasibilityProbe {
  SolveVerdict verdict = SolveVerdict::unknown;
  double margin = 0.0;  // signed min violation (negative = strictly feasible)
};
FeasibilityProbe probe_feasibility(const MpscConfig& cfg, const Eigen::VectorXd& x);

/// True iff the learning input is certified unmodified.
bool certify_pass_through(const MpscConfig& cfg, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& u_learning);

/// Independent recomputation of every constraint residual of a solution.
ValidationReport validate_solution(const MpscConfig& cfg, const Eigen::VectorXd& x,
                                   const MpscSolution& sol);

}  // namespace mpsc
