#include "mpsc/linsys.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mpsc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

void require(bool cond, const char* what) {
  if (!cond) throw std::invalid_argument(what);
}

}  // namespace

LinearModel::LinearModel(MatrixXd A_in, MatrixXd B_in)
    : A(std::move(A_in)), B(std::move(B_in)) {
  require(A.rows() >= 1 && A.rows() == A.cols(), "LinearModel: A must be square, n >= 1");
  require(B.rows() == A.rows() && B.cols() >= 1, "LinearModel: B must be n x m, m >= 1");
  require(A.allFinite() && B.allFinite(), "LinearModel: entries must be finite");
}

TubeGain::TubeGain(const LinearModel& model, MatrixXd K_in) : K(std::move(K_in)) {
  require(K.rows() == model.m() && K.cols() == model.n(),
          "TubeGain: K must be m x n for the paired model");
  require(K.allFinite(), "TubeGain: entries must be finite");
  const double rho = spectral_radius(model.A + model.B * K);
  if (!(rho < 1.0)) {
    std::ostringstream os;
    os << "TubeGain: A + B K is not Schur stable (spectral radius " << rho << ")";
    throw std::invalid_argument(os.str());
  }
}

void Trajectory::push_state(const VectorXd& x) {
  require(x.allFinite(), "Trajectory: non-finite state");
  states.push_back(x);
}

void Trajectory::push_input(const VectorXd& u) {
  require(u.allFinite(), "Trajectory: non-finite input");
  require(inputs.size() + 1 <= states.size(), "Trajectory: input without preceding state");
  inputs.push_back(u);
}

double spectral_radius(const MatrixXd& M) {
  require(M.rows() == M.cols(), "spectral_radius: matrix must be square");
  Eigen::EigenSolver<MatrixXd> es(M, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("spectral_radius: eigensolver failed to converge");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

VectorXd step_nominal(const LinearModel& model, const VectorXd& z, const VectorXd& v) {
  require(z.size() == model.n(), "step_nominal: state dimension mismatch");
  require(v.size() == model.m(), "step_nominal: input dimension mismatch");
  return model.A * z + model.B * v;
}

std::pair<VectorXd, VectorXd> step_plant(const LinearModel& plant, const LinearModel& model,
                                         const VectorXd& x, const VectorXd& u,
                                         const VectorXd& extra_w) {
  require(plant.n() == model.n() && plant.m() == model.m(),
          "step_plant: plant and model dimensions differ");
  require(x.size() == plant.n(), "step_plant: state dimension mismatch");
  require(u.size() == plant.m(), "step_plant: input dimension mismatch");
  VectorXd next = plant.A * x + plant.B * u;
  if (extra_w.size() > 0) {
    require(extra_w.size() == plant.n(), "step_plant: noise dimension mismatch");
    next += extra_w;
  }
  VectorXd realized = next - (model.A * x + model.B * u);
  return {next, realized};
}

VectorXd apply_tube_feedback(const TubeGain& gain, const VectorXd& v, const VectorXd& x,
                             const VectorXd& z) {
  require(x.size() == gain.n() && z.size() == gain.n(),
          "apply_tube_feedback: state dimension mismatch");
  require(v.size() == gain.m(), "apply_tube_feedback: input dimension mismatch");
  return v + gain.K * (x - z);
}

TubeGain lqr_gain(const LinearModel& model, const MatrixXd& Q, const MatrixXd& R,
                  const LqrOptions& opts) {
  const int n = model.n(), m = model.m();
  require(Q.rows() == n && Q.cols() == n, "lqr_gain: Q must be n x n");
  require(R.rows() == m && R.cols() == m, "lqr_gain: R must be m x m");

  const MatrixXd& A = model.A;
  const MatrixXd& B = model.B;
  MatrixXd P = Q;
  double resid = std::numeric_limits<double>::infinity();
  for (int it = 0; it < opts.max_iter; ++it) {
    MatrixXd BtPB = R + B.transpose() * P * B;
    MatrixXd Knum = B.transpose() * P * A;
    MatrixXd Pnext =
        Q + A.transpose() * P * A - Knum.transpose() * BtPB.ldlt().solve(Knum);
    resid = (Pnext - P).cwiseAbs().maxCoeff() / std::max(1.0, P.cwiseAbs().maxCoeff());
    P = Pnext;
    if (resid < opts.tol) {
      MatrixXd BtPBf = R + B.transpose() * P * B;
      MatrixXd K = -BtPBf.ldlt().solve(B.transpose() * P * A);
      return TubeGain(model, K);
    }
  }
  std::ostringstream os;
  os << "lqr_gain: Riccati iteration did not converge (residual " << resid << " after "
     << opts.max_iter << " iterations)";
  throw std::runtime_error(os.str());
}

}  // namespace mpsc
