#include "mpsc/safety_filter.hpp"

#include <cmath>
#include <sstream>

namespace mpsc {

using Eigen::VectorXd;

const char* branch_name(Branch b) {
  switch (b) {
    case Branch::certified: return "certified";
    case Branch::backup_tube: return "backup_tube";
    case Branch::terminal_controller: return "terminal_controller";
  }
  return "unknown";
}

FilterState::FilterState(MpscConfig cfg, TerminalController ctrl, FilterOptions opts)
    : cfg_(std::move(cfg)),
      ctrl_(std::move(ctrl)),
      opts_(opts),
      k_inf_(cfg_.horizon() - 1),  // covers an initial state inside S_f \ X_N
      measured_(cfg_.terminal(), cfg_.omega()) {
  if (opts_.enlargement == EnlargementKind::measured && opts_.mode != FilterMode::algorithm1)
    warnings_.push_back("measured-state enlargement is designed for algorithm1 mode");
}

FilterDecision FilterState::step(const VectorXd& x, const VectorXd& u_L) {
  FilterDecision dec;
  MpscSolution sol = solve_mpsc(cfg_, x, u_L);
  dec.feasible = sol.feasible;

  if (opts_.mode == FilterMode::recursive) {
    if (!sol.feasible) {
      std::ostringstream os;
      os << "recursive mode feasibility loss at step " << time_index_ << ": verdict "
         << (sol.verdict == SolveVerdict::infeasible ? "infeasible" : "unknown")
         << ", state [" << x.transpose() << "], k_inf " << k_inf_
         << (was_feasible_once_ ? ", after a feasible step" : ", before any feasible step");
      throw SafetyFault(os.str());
    }
    was_feasible_once_ = true;
    last_solution_ = sol;
    k_inf_ = 0;
    dec.branch = Branch::certified;
    dec.applied_input = sol.u_tilde;
    dec.objective = sol.objective;
  } else {
    if (sol.feasible) {
      was_feasible_once_ = true;
      last_solution_ = sol;
      k_inf_ = 0;
      dec.branch = Branch::certified;
      dec.applied_input = sol.u_tilde;
      dec.objective = sol.objective;
    } else {
      k_inf_ = std::min(k_inf_ + 1, cfg_.horizon());
      if (k_inf_ >= 1 && k_inf_ <= cfg_.horizon() - 1 && last_solution_.has_value()) {
        const MpscSolution& bk = *last_solution_;
        dec.branch = Branch::backup_tube;
        dec.applied_input =
            apply_tube_feedback(cfg_.gain(), bk.v_traj[k_inf_], x, bk.z_traj[k_inf_]);
      } else {
        dec.branch = Branch::terminal_controller;
        if (opts_.enlargement == EnlargementKind::measured &&
            measured_.measured.has_value() &&
            !decompose_hull_ellipsoid(cfg_.terminal(), cfg_.omega(), x,
                                      cfg_.tol().membership_tol)
                 .inside &&
            hull_membership_weights(*measured_.measured, x, cfg_.tol().membership_tol)
                .inside) {
          // States in the measured hull are certifiable by convexity of the
          // feasible set; the certification solve above is exactly that
          // re-solve, so reaching here means numerics contradict the theory.
          throw SafetyFault(
              "terminal fallback: measured-hull state was not certifiable, "
              "convexity contract broken");
        }
        dec.applied_input =
            terminal_control(ctrl_, cfg_.terminal(), x, cfg_.tol().membership_tol);
      }
      dec.objective = std::numeric_limits<double>::infinity();
    }
  }

  dec.interfered = (dec.applied_input - u_L).norm() > cfg_.tol().pass_tol;
  dec.k_inf = k_inf_;

  if (sol.feasible) log_.feasible_indices.push_back(time_index_);

  // Terminal-set growth from the fresh solution / measured state.
  if (sol.feasible && opts_.enlargement != EnlargementKind::off &&
      time_index_ % std::max(1, opts_.enlargement_cadence) == 0) {
    if (opts_.enlargement == EnlargementKind::nominal) {
      EnlargeResult res = enlarge_nominal(log_, cfg_.terminal(), ctrl_, sol, cfg_.model(),
                                          cfg_.u_bar(), time_index_,
                                          cfg_.tol().membership_tol);
      if (res.applied) {
        cfg_ = cfg_.with_terminal(res.hull);
        ctrl_ = res.ctrl;
        if (res.hull.count() > opts_.vertex_warn_threshold) {
          std::ostringstream os;
          os << "terminal hull has " << res.hull.count() << " vertices at step "
             << time_index_;
          warnings_.push_back(os.str());
        }
      } else {
        warnings_.push_back("enlargement rolled back at step " +
                            std::to_string(time_index_) + ": " + res.diagnostic);
      }
    } else {
      enlarge_measured(log_, measured_, x, cfg_.tol().membership_tol);
    }
  }

  ++time_index_;
  return dec;
}

FilterState::SafeSetVerdict FilterState::classify(const VectorXd& x) const {
  FeasibilityProbe probe = probe_feasibility(cfg_, x);
  if (probe.verdict == SolveVerdict::feasible) return SafeSetVerdict::in_X_N;
  if (opts_.mode == FilterMode::algorithm1 && opts_.enlargement == EnlargementKind::measured) {
    if (measured_.contains(x, cfg_.tol().membership_tol))
      return SafeSetVerdict::in_terminal_only;
  }
  if (decompose_hull_ellipsoid(cfg_.terminal(), cfg_.omega(), x, cfg_.tol().membership_tol)
          .inside)
    return SafeSetVerdict::in_terminal_only;
  return SafeSetVerdict::outside;
}

FilterDecision filter_step(FilterState& state, const VectorXd& x, const VectorXd& u_L) {
  return state.step(x, u_L);
}

FilterState::SafeSetVerdict is_in_safe_set(const FilterState& state, const VectorXd& x) {
  return state.classify(x);
}

ClosedLoopResult run_closed_loop(FilterState& state, const LinearModel& plant,
                                 const VectorXd& x0,
                                 const std::function<VectorXd(int)>& signal, int steps,
                                 const NoiseSpec& noise, const Polytope* state_set,
                                 const std::vector<int>& snapshot_steps) {
  ClosedLoopResult out;
  if (state_set != nullptr && !state_set->contains(x0, 1e-12))
    out.warnings.push_back("initial state outside the state constraint set");

  Rng rng(noise.seed);
  const bool noisy = noise.amplitude.size() > 0 && noise.amplitude.cwiseAbs().maxCoeff() > 0;

  VectorXd x = x0;
  out.trajectory.push_state(x);
  for (int k = 0; k < steps; ++k) {
    VectorXd u_L = signal(k);
    FilterDecision dec = state.step(x, u_L);
    VectorXd extra;
    if (noisy) {
      extra = VectorXd(noise.amplitude.size());
      for (int i = 0; i < extra.size(); ++i)
        extra(i) = rng.uniform(-noise.amplitude(i), noise.amplitude(i));
    }
    auto [next, w] = step_plant(plant, state.config().model(), x, dec.applied_input, extra);

    out.learning_inputs.push_back(u_L);
    out.decisions.push_back(dec);
    out.realized_w.push_back(w);
    out.trajectory.push_input(dec.applied_input);
    out.trajectory.push_state(next);
    x = next;

    for (int snap : snapshot_steps)
      if (snap == k) out.hull_snapshots.emplace_back(k, state.terminal_hull());
  }
  for (const auto& w : state.warnings()) out.warnings.push_back(w);
  return out;
}

}  // namespace mpsc
