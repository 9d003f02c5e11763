#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mpsc/enlargement.hpp"
#include "mpsc/geometry.hpp"
#include "mpsc/linsys.hpp"
#include "mpsc/mpsc_core.hpp"
#include "mpsc/rng.hpp"

namespace mpsc {

enum class FilterMode { algorithm1, recursive };
enum class Branch { certified, backup_tube, terminal_controller };

const char* branch_name(Branch b);

struct FilterDecision {
  Eigen::VectorXd applied_input;
  bool interfered = false;  // ||applied - u_L|| > pass_tol
  Branch branch = Branch::certified;
  bool feasible = false;
  double objective = std::numeric_limits<double>::infinity();
  int k_inf = 0;  // counter value after the step
};

enum class EnlargementKind { off, nominal, measured };

struct FilterOptions {
  FilterMode mode = FilterMode::algorithm1;
  EnlargementKind enlargement = EnlargementKind::off;
  int enlargement_cadence = 1;
  int vertex_warn_threshold = 500;
};

/// Online certification state machine. In algorithm1 mode an infeasible step
/// falls back onto the stored backup trajectory (indexed by the consecutive
/// infeasibility counter) and, past the horizon, onto the terminal
/// controller. In recursive mode the optimizer's input is applied directly
/// and a feasibility loss is a hard safety fault.
class FilterState {
 public:
  FilterState(MpscConfig cfg, TerminalController ctrl, FilterOptions opts = {});

  /// One filter evaluation; mutates the stored solution, the counter and
  /// (when enabled) the terminal set.
  FilterDecision step(const Eigen::VectorXd& x, const Eigen::VectorXd& u_learning);

  enum class SafeSetVerdict { in_X_N, in_terminal_only, outside };
  SafeSetVerdict classify(const Eigen::VectorXd& x) const;

  const MpscConfig& config() const { return cfg_; }
  const TerminalController& terminal_controller() const { return ctrl_; }
  const VertexHull& terminal_hull() const { return cfg_.terminal(); }
  const SafeSetList& measured_sets() const { return measured_; }
  const EnlargementLog& log() const { return log_; }
  const std::optional<MpscSolution>& last_solution() const { return last_solution_; }
  int k_inf() const { return k_inf_; }
  int time_index() const { return time_index_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  const FilterOptions& options() const { return opts_; }

 private:
  MpscConfig cfg_;
  TerminalController ctrl_;
  FilterOptions opts_;
  std::optional<MpscSolution> last_solution_;
  int k_inf_;
  int time_index_ = 0;
  bool was_feasible_once_ = false;
  EnlargementLog log_;
  SafeSetList measured_;
  std::vector<std::string> warnings_;
};

/// Functional wrappers mirroring the operation names.
FilterDecision filter_step(FilterState& state, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& u_learning);
FilterState::SafeSetVerdict is_in_safe_set(const FilterState& state,
                                           const Eigen::VectorXd& x);

struct ClosedLoopResult {
  Trajectory trajectory;
  std::vector<FilterDecision> decisions;
  std::vector<Eigen::VectorXd> learning_inputs;
  std::vector<Eigen::VectorXd> realized_w;
  std::vector<std::pair<int, VertexHull>> hull_snapshots;
  std::vector<std::string> warnings;
};

struct NoiseSpec {
  Eigen::VectorXd amplitude;  // per-component uniform bound; empty = none
  std::uint64_t seed = 0;
};

/// Runs the filter against the true plant for `steps` steps. The learning
/// signal is an arbitrary function of the time index. Optional bounded noise
/// is added to the plant transition. Hull snapshots are recorded after the
/// enlargement at the listed time indices.
ClosedLoopResult run_closed_loop(FilterState& state, const LinearModel& plant,
                                 const Eigen::VectorXd& x0,
                                 const std::function<Eigen::VectorXd(int)>& signal,
                                 int steps, const NoiseSpec& noise = {},
                                 const Polytope* state_set = nullptr,
                                 const std::vector<int>& snapshot_steps = {});

}  // namespace mpsc
