#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

namespace mpsc {

/// Discrete-time linear model x(k+1) = A x(k) + B u(k).
///
/// The same type represents both the belief model used by the certification
/// scheme and the true plant used by the simulation harness.
struct LinearModel {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;

  LinearModel(Eigen::MatrixXd A_in, Eigen::MatrixXd B_in);

  int n() const { return static_cast<int>(A.rows()); }
  int m() const { return static_cast<int>(B.cols()); }
};

/// Error-feedback gain K for the auxiliary controller u = v + K (x - z).
/// Construction checks that A + B K is Schur stable for the paired model.
struct TubeGain {
  Eigen::MatrixXd K;

  TubeGain(const LinearModel& model, Eigen::MatrixXd K_in);

  int m() const { return static_cast<int>(K.rows()); }
  int n() const { return static_cast<int>(K.cols()); }
};

/// Closed-loop record of states and inputs (one fewer input than states).
struct Trajectory {
  std::vector<Eigen::VectorXd> states;
  std::vector<Eigen::VectorXd> inputs;

  void push_state(const Eigen::VectorXd& x);
  void push_input(const Eigen::VectorXd& u);
  int steps() const { return static_cast<int>(inputs.size()); }
};

/// Largest eigenvalue modulus of a square matrix.
double spectral_radius(const Eigen::MatrixXd& M);

/// One nominal step z+ = A z + B v.
Eigen::VectorXd step_nominal(const LinearModel& model, const Eigen::VectorXd& z,
                             const Eigen::VectorXd& v);

/// One true-plant step. Returns the successor state and the disturbance
/// realized relative to the belief model, next_x - (model.A x + model.B u).
/// `extra_w` is an optional additive term (bounded noise drawn by the caller);
/// pass an empty vector for the deterministic mismatch-only step.
std::pair<Eigen::VectorXd, Eigen::VectorXd> step_plant(
    const LinearModel& plant, const LinearModel& model, const Eigen::VectorXd& x,
    const Eigen::VectorXd& u, const Eigen::VectorXd& extra_w = Eigen::VectorXd());

/// u = v + K (x - z).
Eigen::VectorXd apply_tube_feedback(const TubeGain& gain, const Eigen::VectorXd& v,
                                    const Eigen::VectorXd& x, const Eigen::VectorXd& z);

struct LqrOptions {
  double tol = 1e-12;   // fixed-point residual, scaled by ||P||
  int max_iter = 100000;
};

/// Infinite-horizon discrete LQR gain with sign convention u = K x,
/// K = -(R + B'PB)^{-1} B'PA, via Riccati fixed-point iteration.
TubeGain lqr_gain(const LinearModel& model, const Eigen::MatrixXd& Q,
                  const Eigen::MatrixXd& R, const LqrOptions& opts = {});

}  // namespace mpsc
