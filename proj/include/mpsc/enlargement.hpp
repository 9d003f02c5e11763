#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mpsc/geometry.hpp"
#include "mpsc/linsys.hpp"
#include "mpsc/mpsc_core.hpp"

namespace mpsc {

/// Raised when a safety contract is broken at runtime (terminal controller
/// called outside its domain, feasibility loss in the recursively feasible
/// mode). Simulations halt on it.
struct SafetyFault : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Terminal control law: anchor states with inputs whose nominal successors
/// stay inside the current terminal hull (the inductive invariance
/// certificate), plus the tube-gain fallback for the error component.
struct TerminalController {
  std::vector<Eigen::VectorXd> anchor_states;
  std::vector<Eigen::VectorXd> anchor_inputs;
  TubeGain gain;
  Ellipsoid omega;

  TerminalController(TubeGain g, Ellipsoid om) : gain(std::move(g)), omega(std::move(om)) {}
};

/// Bookkeeping of feasible time indices, stored nominal trajectories and
/// measured feasible states.
struct EnlargementLog {
  std::vector<int> feasible_indices;                   // the index set M(k)
  std::vector<int> stored_indices;                     // steps whose trajectory is kept
  std::vector<std::vector<Eigen::VectorXd>> stored_z;  // per stored step
  std::vector<std::vector<Eigen::VectorXd>> stored_v;
  std::vector<Eigen::VectorXd> measured_states;
};

/// Union-of-sets safe set for the measured-state enlargement: the initial
/// terminal safe set (hull (+) omega) together with the convex hull of
/// measured feasible states. Membership is any-of; the list collapses to the
/// measured hull once it provably contains the initial set.
struct SafeSetList {
  VertexHull initial_hull;
  Ellipsoid omega;
  std::optional<VertexHull> measured;
  bool collapsed = false;

  SafeSetList(VertexHull hull, Ellipsoid om)
      : initial_hull(std::move(hull)), omega(std::move(om)) {}

  bool contains(const Eigen::VectorXd& x, double tol = 1e-7) const;
  int set_count() const { return collapsed ? 1 : 1 + (measured.has_value() ? 1 : 0); }
};

/// Smallest terminal configuration: hull {0} with the zero anchor; the
/// fallback u = K x covers the tube core.
std::pair<VertexHull, TerminalController> init_trivial(const Ellipsoid& omega,
                                                       const TubeGain& gain);

/// Convex-weights terminal law sigma_f over the anchor states (min-norm
/// weight tie-break). Precondition: z inside the hull of the anchors.
Eigen::VectorXd terminal_input(const TerminalController& ctrl, const Eigen::VectorXd& z,
                               double tol = 1e-7);

struct EnlargeResult {
  VertexHull hull;
  TerminalController ctrl;
  bool applied = false;
  std::string diagnostic;
};

/// Grows the terminal hull by the nominal trajectory points of a feasible
/// solution and extends the anchor set accordingly. The invariance
/// certificate (every anchor successor inside the new hull, every anchor
/// input inside the tightened input set) is re-verified; on failure the
/// enlargement is rolled back and the diagnostic set.
EnlargeResult enlarge_nominal(EnlargementLog& log, const VertexHull& hull,
                              const TerminalController& ctrl, const MpscSolution& solution,
                              const LinearModel& model, const Polytope& u_bar,
                              int time_index, double tol = 1e-7);

/// Measured-state enlargement: extends the measured hull by a feasible state
/// and collapses the set list when the initial set is provably covered
/// (vertex containment plus 10^3 boundary samples of the ellipsoid core).
void enlarge_measured(EnlargementLog& log, SafeSetList& sets,
                      const Eigen::VectorXd& new_state, double tol = 1e-7);

/// Full terminal control law on the safe set hull (+) omega: decompose
/// x = z + e, apply sigma_f(z) + K e. Throws SafetyFault outside the domain.
Eigen::VectorXd terminal_control(const TerminalController& ctrl, const VertexHull& hull,
                                 const Eigen::VectorXd& x, double tol = 1e-7);

/// Monte Carlo invariance spot check of Assumption-3 type: random hull points
/// must map back into the hull under the terminal law. Returns the worst
/// membership residual observed.
double invariance_spot_check(const TerminalController& ctrl, const VertexHull& hull,
                             const LinearModel& model, int samples, std::uint64_t seed,
                             double tol = 1e-6);

}  // namespace mpsc
