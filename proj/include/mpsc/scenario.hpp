#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "mpsc/geometry.hpp"
#include "mpsc/linsys.hpp"

namespace mpsc {

/// One recorded transition (x, u, y) with y the measured successor state.
struct Measurement {
  Eigen::VectorXd x;
  Eigen::VectorXd u;
  Eigen::VectorXd y;
};

enum class ScenarioSource { measurement_residual, model_sampled, synthetic };

/// Disturbance samples driving the invariant-set design.
struct ScenarioSet {
  std::vector<Eigen::VectorXd> samples;
  ScenarioSource source = ScenarioSource::measurement_residual;

  int count() const { return static_cast<int>(samples.size()); }
  int dim() const { return static_cast<int>(samples.front().size()); }
};

/// Sample-complexity certificate quadruple: with probability `confidence`,
/// the designed constraint is violated by at most an `epsilon` fraction of
/// disturbances. n_s is the decision-variable count (n^2+n)/2 + 1.
struct ScenarioBound {
  int N_s = 0;
  int n_s = 0;
  double epsilon = 0.0;
  double confidence = 0.0;
};

/// Probability that at most n_s - 1 of N_s Bernoulli(epsilon) trials succeed,
/// complemented: 1 - sum_{i < n_s} C(N_s, i) eps^i (1-eps)^(N_s-i).
/// Computed in log space; monotone increasing in epsilon and N_s.
double scenario_confidence(int N_s, int n_s, double epsilon);

/// Smallest epsilon with scenario_confidence >= target (bisection to 1e-10).
double epsilon_for_confidence(int N_s, int n_s, double target_confidence);

/// Violation level implied by a state dimension n: n_s = (n^2+n)/2 + 1.
int scenario_decision_count(int n);

/// Residuals w_i = y_i - A x_i - B u_i against the belief model.
ScenarioSet build_scenarios(const std::vector<Measurement>& data, const LinearModel& model,
                            ScenarioSource source = ScenarioSource::measurement_residual);

/// Max eigenvalue of the (n+1)x(n+1) invariance block
///   [ Acl'P Acl - tau P    Acl'P w ]
///   [ w'P Acl              w'P w + tau - 1 ]
/// The one-step containment condition holds iff the result is <= 0.
double lmi_residual(const Ellipsoid& P, double tau, const Eigen::MatrixXd& A_cl,
                    const Eigen::VectorXd& w);

struct DesignOptions {
  int tau_grid = 50;            // geometrically spaced points in [tau_min, tau_max]
  double tau_min = 0.01;
  double tau_max = 0.99;
  int tau_refine_rounds = 12;   // deterministic local refinement around the best grid point
  double feas_tol = 1e-8;       // accepted worst residual, checked a posteriori
  double barrier_accuracy = 1e-9;  // target suboptimality of -log det P per tau
  double dedupe_tol = 1e-12;
};

struct TauReport {
  double tau = 0.0;
  bool feasible = false;
  double log_det_P = -std::numeric_limits<double>::infinity();
  std::string note;
};

/// Result of the scenario design: the invariant-set shape, the multiplier,
/// the exact worst residual over all scenarios, and the probabilistic bound.
struct RpiDesign {
  Ellipsoid omega;
  double tau = 0.0;
  double worst_residual = 0.0;
  ScenarioBound bound;
  double log_det_P = 0.0;
  std::vector<TauReport> tau_reports;
};

/// Solves min -log det P subject to the scenario invariance blocks being
/// negative semidefinite, by a grid over tau (the problem is convex in P for
/// fixed tau) with a log-det barrier Newton method per grid point. The
/// returned design is re-validated by exact eigenvalue checks on every
/// scenario; the optimizer itself is never trusted.
RpiDesign design_rpi(const ScenarioSet& scenarios, const LinearModel& model,
                     const TubeGain& gain, const DesignOptions& opts = {},
                     double confidence_target = 0.97);

}  // namespace mpsc
