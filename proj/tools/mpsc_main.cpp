#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "mpsc/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitSafety = 3;
constexpr int kExitSolver = 4;

void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw mpsc::ConfigError("cannot open output file " + p.string());
  f << content;
}

void print_warnings(const mpsc::ExperimentConfig& cfg) {
  for (const auto& w : cfg.load_warnings) std::cerr << "warning: " << w << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"model predictive safety certification toolkit"};
  app.require_subcommand(1);

  std::string config_path, design_path, out_path, out_dir;
  int trials = 10000;
  int ns = 600, dims = 2;
  double target = 0.97;
  std::uint64_t seed_override = 0;
  bool has_seed = false;

  std::string data_path;
  auto* design_cmd = app.add_subcommand("design", "compute the invariant error set from data");
  design_cmd->add_option("-c,--config", config_path, "experiment config json")->required();
  design_cmd->add_option("-o,--output", out_path, "design output json")->required();
  design_cmd->add_option("--data", data_path,
                         "measurement csv (x1..xn,u[1..m],y1..yn); sampled when omitted");

  auto* sim = app.add_subcommand("simulate", "run the certified closed loop");
  sim->add_option("-c,--config", config_path, "experiment config json")->required();
  sim->add_option("-d,--design", design_path, "design json (overrides config omega)");
  sim->add_option("-o,--output", out_dir, "output directory");

  auto* val = app.add_subcommand("validate", "out-of-sample check of a design");
  val->add_option("-c,--config", config_path, "experiment config json")->required();
  val->add_option("-d,--design", design_path, "design json")->required();
  val->add_option("--trials", trials, "number of fresh disturbances");
  auto* seed_opt = val->add_option("--seed", seed_override, "validation seed");

  auto* conf = app.add_subcommand("confidence", "scenario bound arithmetic");
  conf->add_option("--ns", ns, "sample count")->required();
  conf->add_option("--dims", dims, "state dimension")->required();
  conf->add_option("--target", target, "target confidence");

  auto* base = app.add_subcommand("baseline", "unfiltered saturated run");
  base->add_option("-c,--config", config_path, "experiment config json")->required();
  base->add_option("-o,--output", out_dir, "output directory");

  CLI11_PARSE(app, argc, argv);
  has_seed = seed_opt->count() > 0;

  try {
    if (design_cmd->parsed()) {
      mpsc::ExperimentConfig cfg = mpsc::load_config(config_path);
      print_warnings(cfg);
      mpsc::RpiDesign design =
          data_path.empty()
              ? mpsc::run_design(cfg)
              : mpsc::run_design_from_data(
                    cfg, mpsc::load_measurements_csv(data_path, cfg.model.n(),
                                                     cfg.model.m()));
      auto j = mpsc::design_to_json(mpsc::design_from_rpi(design));
      write_file(out_path, j.dump(2) + "\n");
      std::cout << j.dump(2) << "\n";
      return kExitOk;
    }
    if (sim->parsed()) {
      mpsc::ExperimentConfig cfg = mpsc::load_config(config_path);
      print_warnings(cfg);
      if (!design_path.empty()) {
        mpsc::DesignFile d = mpsc::load_design(design_path);
        cfg.omega_P = d.P;
        cfg.omega_tau = d.tau;
      }
      if (!out_dir.empty()) cfg.output_dir = out_dir;
      mpsc::ExperimentArtifacts art = mpsc::run_experiment(cfg);
      std::cout << art.summary.dump(2) << "\n";
      return kExitOk;
    }
    if (val->parsed()) {
      mpsc::ExperimentConfig cfg = mpsc::load_config(config_path);
      print_warnings(cfg);
      mpsc::DesignFile d = mpsc::load_design(design_path);
      std::uint64_t seed = has_seed ? seed_override : cfg.seed ^ 0x76616cull;
      mpsc::DesignValidation v = mpsc::validate_design(cfg, d, trials, seed);
      std::cout << v.to_json().dump(2) << "\n";
      return kExitOk;
    }
    if (conf->parsed()) {
      if (ns < 1 || dims < 1) throw mpsc::ConfigError("confidence: ns and dims must be >= 1");
      int n_s = mpsc::scenario_decision_count(dims);
      if (ns < n_s) throw mpsc::ConfigError("confidence: need ns >= n_s");
      double eps = mpsc::epsilon_for_confidence(ns, n_s, target);
      nlohmann::ordered_json j;
      j["N_s"] = ns;
      j["n_s"] = n_s;
      j["target_confidence"] = target;
      j["epsilon"] = eps;
      j["confidence_at_epsilon"] = mpsc::scenario_confidence(ns, n_s, eps);
      std::cout << j.dump(2) << "\n";
      return kExitOk;
    }
    if (base->parsed()) {
      mpsc::ExperimentConfig cfg = mpsc::load_config(config_path);
      print_warnings(cfg);
      if (!out_dir.empty()) cfg.output_dir = out_dir;
      mpsc::BaselineResult r = mpsc::run_baseline(cfg);
      std::cout << r.summary.dump(2) << "\n";
      return kExitOk;
    }
  } catch (const mpsc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const mpsc::SafetyFault& e) {
    std::cerr << "safety fault: " << e.what() << "\n";
    return kExitSafety;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSolver;
  }
  return kExitOk;
}
