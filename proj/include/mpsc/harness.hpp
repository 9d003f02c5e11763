#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "mpsc/safety_filter.hpp"
#include "mpsc/scenario.hpp"

namespace mpsc {

/// Configuration / input-file problem; maps to CLI exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Proposed-input generator, deterministic in the time index.
struct LearningSignal {
  enum class Kind { sinusoid_sum, csv_replay, constant };
  Kind kind = Kind::constant;
  int channels = 1;
  // sinusoid_sum, applied on input channel 0
  std::vector<double> amplitudes;
  std::vector<double> angular_frequencies;
  std::vector<double> phases;
  // constant
  Eigen::VectorXd value;
  // csv_replay
  std::vector<Eigen::VectorXd> replay;

  Eigen::VectorXd eval(int k) const;
};

struct ScenarioConfig {
  int count = 600;
  bool include_vertex_states = false;  // prepend state-box vertices to the data
  double confidence_target = 0.97;
};

struct EnlargementConfig {
  bool enabled = false;
  std::string kind = "nominal";  // nominal | measured
  int cadence = 1;
  std::vector<int> snapshot_steps;
  int vertex_warn_threshold = 500;
};

struct NoiseConfig {
  Eigen::VectorXd amplitude;  // per-component uniform bound, empty = off
};

struct ExperimentConfig {
  LinearModel model;
  LinearModel plant;
  Polytope state_set;
  Polytope input_set;
  Eigen::MatrixXd gain_K;
  int horizon = 20;
  Eigen::VectorXd initial_state;
  int steps = 500;
  std::string mode = "algorithm1";  // algorithm1 | recursive
  std::uint64_t seed = 0;
  LearningSignal signal;
  ScenarioConfig scenario;
  DesignOptions design;
  std::optional<Eigen::MatrixXd> omega_P;  // explicit invariant-set shape
  std::optional<double> omega_tau;
  MpscTolerances tolerances;
  NoiseConfig noise;
  EnlargementConfig enlargement;
  std::string output_dir = "out";
  std::vector<std::string> load_warnings;

  ExperimentConfig(LinearModel mdl, LinearModel plt, Polytope xs, Polytope us,
                   Eigen::MatrixXd K)
      : model(std::move(mdl)),
        plant(std::move(plt)),
        state_set(std::move(xs)),
        input_set(std::move(us)),
        gain_K(std::move(K)) {}
};

ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const nlohmann::json& j);

/// Uniform (x, u) samples over the constraint sets with the plant response;
/// reproducible per seed (rejection sampling from the bounding box).
std::vector<Measurement> sample_measurements(const ExperimentConfig& cfg, int count,
                                             std::uint64_t seed);

/// Measurement triples from a CSV with columns x1..xn,u1..um,y1..yn.
std::vector<Measurement> load_measurements_csv(const std::filesystem::path& path, int n,
                                               int m);

/// Design-file round trip.
struct DesignFile {
  Eigen::MatrixXd P;
  double tau = 0.0;
  double worst_residual = 0.0;
  ScenarioBound bound;
  double log_det_P = 0.0;
};
DesignFile design_from_rpi(const RpiDesign& design);
nlohmann::ordered_json design_to_json(const DesignFile& d);
DesignFile load_design(const std::filesystem::path& path);

/// Runs the scenario design pipeline of the config: sample, build residual
/// scenarios, solve, certify.
RpiDesign run_design(const ExperimentConfig& cfg);

/// Same pipeline on externally provided measurement triples.
RpiDesign run_design_from_data(const ExperimentConfig& cfg,
                               const std::vector<Measurement>& data);

struct ExperimentArtifacts {
  nlohmann::ordered_json summary;
  std::filesystem::path trace_csv;
  std::filesystem::path summary_json;
  std::filesystem::path sets_json;
  std::filesystem::path phase_svg;
  std::filesystem::path input_svg;
  ClosedLoopResult loop;
};

/// Full pipeline: invariant-set design (unless an explicit shape is
/// configured), constraint tightening, closed-loop filtering with optional
/// enlargement, and artifact emission (CSV trace, JSON sets and summary, SVG
/// plots). Deterministic per config + seed.
ExperimentArtifacts run_experiment(const ExperimentConfig& cfg);

struct BaselineResult {
  nlohmann::ordered_json summary;
  std::filesystem::path trace_csv;
  int first_violation_step = -1;  // -1 when no violation occurred
  Trajectory trajectory;
};

/// Unfiltered run: the learning input is clamped to the input set (actuator
/// saturation) and applied directly.
BaselineResult run_baseline(const ExperimentConfig& cfg);

struct DesignValidation {
  int trials = 0;
  int violations = 0;
  double fraction = 0.0;
  double epsilon = 0.0;
  bool exceeds_epsilon = false;
  nlohmann::ordered_json to_json() const;
};

/// Empirical out-of-sample check of a design: fresh disturbances from the
/// plant/model mismatch over the constraint sets, violation fraction of the
/// invariance residual compared against the certificate epsilon.
DesignValidation validate_design(const ExperimentConfig& cfg, const DesignFile& design,
                                 int trials, std::uint64_t seed);

/// Learning signal replayed from a previously written trace (uL columns).
LearningSignal signal_from_csv(const std::filesystem::path& path, int channels);

// serialization helpers shared by the CLI and tests
nlohmann::json matrix_to_json(const Eigen::MatrixXd& M);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, const std::string& field);
Eigen::VectorXd vector_from_json(const nlohmann::json& j, const std::string& field);
std::string format_double(double v);

}  // namespace mpsc
