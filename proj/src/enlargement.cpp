#include "mpsc/enlargement.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mpsc/rng.hpp"

namespace mpsc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kExactPruneTol = 1e-12;

bool same_point(const VectorXd& a, const VectorXd& b) {
  return (a - b).cwiseAbs().maxCoeff() <= 1e-12;
}

int find_anchor(const std::vector<VectorXd>& states, const VectorXd& z) {
  for (std::size_t i = 0; i < states.size(); ++i)
    if (same_point(states[i], z)) return static_cast<int>(i);
  return -1;
}

// Deterministic unit directions: equally spaced angles in 2-D, seeded
// normalized gaussians otherwise.
std::vector<VectorXd> unit_directions(int n, int count) {
  std::vector<VectorXd> dirs;
  dirs.reserve(count);
  if (n == 2) {
    for (int i = 0; i < count; ++i) {
      double th = 2.0 * M_PI * i / count;
      VectorXd d(2);
      d << std::cos(th), std::sin(th);
      dirs.push_back(d);
    }
    return dirs;
  }
  Rng rng(0x5eedull);
  while (static_cast<int>(dirs.size()) < count) {
    VectorXd d(n);
    for (int i = 0; i < n; ++i) {
      double u1 = std::max(rng.uniform01(), 1e-16);
      double u2 = rng.uniform01();
      d(i) = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }
    double nrm = d.norm();
    if (nrm > 1e-12) dirs.push_back(d / nrm);
  }
  return dirs;
}

}  // namespace

bool SafeSetList::contains(const VectorXd& x, double tol) const {
  if (!collapsed) {
    SumDecomposition dec = decompose_hull_ellipsoid(initial_hull, omega, x, tol);
    if (dec.inside) return true;
  }
  if (measured.has_value())
    return hull_membership_weights(*measured, x, tol).inside;
  return false;
}

std::pair<VertexHull, TerminalController> init_trivial(const Ellipsoid& omega,
                                                       const TubeGain& gain) {
  const int n = omega.dim();
  VertexHull hull({VectorXd::Zero(n)});
  TerminalController ctrl(gain, omega);
  ctrl.anchor_states.push_back(VectorXd::Zero(n));
  ctrl.anchor_inputs.push_back(VectorXd::Zero(gain.m()));
  return {hull, ctrl};
}

VectorXd terminal_input(const TerminalController& ctrl, const VectorXd& z, double tol) {
  VertexHull anchors(ctrl.anchor_states);
  HullWeights hw = hull_membership_weights(anchors, z, tol);
  if (!hw.inside) {
    std::ostringstream os;
    os << "terminal_input: state outside the anchor hull (residual " << hw.residual << ")";
    throw SafetyFault(os.str());
  }
  VectorXd u = VectorXd::Zero(ctrl.gain.m());
  for (int j = 0; j < hw.weights.size(); ++j) u += hw.weights(j) * ctrl.anchor_inputs[j];
  return u;
}

EnlargeResult enlarge_nominal(EnlargementLog& log, const VertexHull& hull,
                              const TerminalController& ctrl, const MpscSolution& solution,
                              const LinearModel& model, const Polytope& u_bar,
                              int time_index, double tol) {
  EnlargeResult out{hull, ctrl, false, ""};
  if (!solution.feasible) {
    out.diagnostic = "enlarge_nominal: solution not feasible";
    return out;
  }
  const int N = static_cast<int>(solution.v_traj.size());

  // Terminal input for z_N: convex combination of the anchor inputs matched
  // to the hull vertices the solution's weights refer to.
  VectorXd u_N = VectorXd::Zero(ctrl.gain.m());
  bool matched = true;
  for (int j = 0; j < hull.count(); ++j) {
    int a = find_anchor(ctrl.anchor_states, hull.vertices[j]);
    if (a < 0) {
      matched = false;
      break;
    }
    u_N += solution.hull_weights(j) * ctrl.anchor_inputs[a];
  }
  if (!matched) {
    try {
      u_N = terminal_input(ctrl, solution.z_traj[N], 10.0 * tol);
    } catch (const SafetyFault& f) {
      out.diagnostic = std::string("enlarge_nominal: ") + f.what();
      return out;
    }
  }

  // Prune only exactly redundant points: tolerance-level pruning would shave
  // the hull and erode older successor certificates step by step.
  std::vector<VectorXd> pts(solution.z_traj.begin() + 1, solution.z_traj.end());
  VertexHull new_hull = hull_add_points(hull, pts, kExactPruneTol);

  // Candidate anchor pairs: trajectory points with their inputs, z_N with the
  // composed terminal input; existing anchors win on duplicates.
  std::vector<VectorXd> cand_states = ctrl.anchor_states;
  std::vector<VectorXd> cand_inputs = ctrl.anchor_inputs;
  for (int j = 1; j < N; ++j) {
    if (find_anchor(cand_states, solution.z_traj[j]) < 0) {
      cand_states.push_back(solution.z_traj[j]);
      cand_inputs.push_back(solution.v_traj[j]);
    }
  }
  if (find_anchor(cand_states, solution.z_traj[N]) < 0) {
    cand_states.push_back(solution.z_traj[N]);
    cand_inputs.push_back(u_N);
  }

  // New anchors: one pair per hull vertex, plus the origin pair.
  TerminalController new_ctrl(ctrl.gain, ctrl.omega);
  for (int j = 0; j < new_hull.count(); ++j) {
    int a = find_anchor(cand_states, new_hull.vertices[j]);
    if (a < 0) {
      out.diagnostic = "enlarge_nominal: hull vertex without an anchored input";
      return out;
    }
    new_ctrl.anchor_states.push_back(cand_states[a]);
    new_ctrl.anchor_inputs.push_back(cand_inputs[a]);
  }
  VectorXd origin = VectorXd::Zero(model.n());
  if (find_anchor(new_ctrl.anchor_states, origin) < 0) {
    new_ctrl.anchor_states.push_back(origin);
    new_ctrl.anchor_inputs.push_back(VectorXd::Zero(model.m()));
  }

  // Invariance certificate: every anchor input admissible, every anchor
  // successor inside the enlarged hull. Any failure rolls the step back.
  for (std::size_t j = 0; j < new_ctrl.anchor_states.size(); ++j) {
    if (!u_bar.contains(new_ctrl.anchor_inputs[j], tol)) {
      std::ostringstream os;
      os << "enlarge_nominal: anchor input " << j << " outside the tightened input set";
      out.diagnostic = os.str();
      return out;
    }
    VectorXd succ = model.A * new_ctrl.anchor_states[j] + model.B * new_ctrl.anchor_inputs[j];
    HullWeights hw = hull_membership_weights(new_hull, succ, tol);
    if (!hw.inside) {
      std::ostringstream os;
      os << "enlarge_nominal: anchor successor " << j << " escaped the hull (residual "
         << hw.residual << ")";
      out.diagnostic = os.str();
      return out;
    }
  }

  log.stored_indices.push_back(time_index);
  log.stored_z.push_back(solution.z_traj);
  log.stored_v.push_back(solution.v_traj);

  out.hull = new_hull;
  out.ctrl = new_ctrl;
  out.applied = true;
  return out;
}

void enlarge_measured(EnlargementLog& log, SafeSetList& sets, const VectorXd& new_state,
                      double tol) {
  log.measured_states.push_back(new_state);
  int before = sets.measured.has_value() ? sets.measured->count() : 0;
  if (!sets.measured.has_value()) {
    sets.measured = VertexHull({new_state});
  } else {
    sets.measured = hull_add_points(*sets.measured, {new_state}, kExactPruneTol);
  }
  if (sets.collapsed) return;
  if (sets.measured->count() == before) {
    // hull unchanged; a previous coverage check cannot flip
    bool grew = false;
    for (const auto& v : sets.measured->vertices)
      if (same_point(v, new_state)) grew = true;
    if (!grew) return;
  }
  if (sets.measured->count() <= sets.measured->dim()) return;

  // Coverage check: initial hull vertices shifted by sampled boundary points
  // of the core ellipsoid must all lie in the measured hull.
  const auto dirs = unit_directions(sets.omega.dim(), 1000);
  for (const auto& v : sets.initial_hull.vertices) {
    for (const auto& d : dirs) {
      VectorXd p = v + sets.omega.shape_map() * d;
      if (!hull_membership_weights(*sets.measured, p, tol).inside) return;
    }
  }
  sets.collapsed = true;
}

VectorXd terminal_control(const TerminalController& ctrl, const VertexHull& hull,
                          const VectorXd& x, double tol) {
  SumDecomposition dec = decompose_hull_ellipsoid(hull, ctrl.omega, x, tol);
  if (!dec.inside) {
    std::ostringstream os;
    os << "terminal_control: state outside the terminal safe set (quadratic form "
       << dec.quad_form << ")";
    throw SafetyFault(os.str());
  }
  VectorXd u = terminal_input(ctrl, dec.z, std::max(tol, 1e-6));
  return u + ctrl.gain.K * (x - dec.z);
}

double invariance_spot_check(const TerminalController& ctrl, const VertexHull& hull,
                             const LinearModel& model, int samples, std::uint64_t seed,
                             double tol) {
  Rng rng(seed);
  const int K = hull.count();
  MatrixXd V = hull.matrix();
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    // Dirichlet(1) weights: uniform over the simplex spanned by the vertices.
    VectorXd lam(K);
    for (int j = 0; j < K; ++j) lam(j) = -std::log(std::max(rng.uniform01(), 1e-300));
    lam /= lam.sum();
    VectorXd z = V * lam;
    VectorXd u = terminal_input(ctrl, z, std::max(tol, 1e-6));
    VectorXd succ = model.A * z + model.B * u;
    HullWeights hw = hull_membership_weights(hull, succ, tol);
    worst = std::max(worst, hw.inside ? 0.0 : hw.residual);
  }
  return worst;
}

}  // namespace mpsc
