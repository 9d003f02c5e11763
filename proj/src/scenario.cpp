#include "mpsc/scenario.hpp"

#include <algorithm>
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

double log_choose(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// Symmetric basis E_k for n x n matrices: diagonal units first, then unit
// symmetric pairs, row-major upper triangle.
std::vector<MatrixXd> symmetric_basis(int n) {
  std::vector<MatrixXd> basis;
  for (int i = 0; i < n; ++i) {
    MatrixXd E = MatrixXd::Zero(n, n);
    E(i, i) = 1.0;
    basis.push_back(E);
  }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      MatrixXd E = MatrixXd::Zero(n, n);
      E(i, j) = E(j, i) = 1.0;
      basis.push_back(E);
    }
  return basis;
}

MatrixXd assemble_P(const std::vector<MatrixXd>& basis, const VectorXd& theta) {
  MatrixXd P = MatrixXd::Zero(basis.front().rows(), basis.front().cols());
  for (int k = 0; k < theta.size(); ++k) P += theta(k) * basis[k];
  return P;
}

// Discrete Lyapunov solve A' X A - X = -I via the Kronecker system.
MatrixXd dlyap_identity(const MatrixXd& A) {
  const int n = static_cast<int>(A.rows());
  MatrixXd I = MatrixXd::Identity(n, n);
  MatrixXd lhs = MatrixXd::Identity(n * n, n * n);
  // vec(A' X A) = (A' kron A') vec(X)
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l)
          lhs(i + j * n, k + l * n) -= A(k, i) * A(l, j);
  VectorXd rhs = Eigen::Map<const VectorXd>(I.data(), n * n);
  VectorXd x = lhs.partialPivLu().solve(rhs);
  return Eigen::Map<const MatrixXd>(x.data(), n, n);
}

struct BarrierWorkspace {
  std::vector<MatrixXd> basis;       // symmetric basis of P
  std::vector<std::vector<MatrixXd>> G;  // G[i][k]: derivative of block i wrt theta_k
  std::vector<MatrixXd> C;           // constant part of block i
  int n = 0;
  int nb = 0;
};

BarrierWorkspace build_workspace(const std::vector<VectorXd>& scen, const MatrixXd& Acl,
                                 double tau) {
  BarrierWorkspace ws;
  ws.n = static_cast<int>(Acl.rows());
  ws.basis = symmetric_basis(ws.n);
  ws.nb = static_cast<int>(ws.basis.size());
  ws.G.resize(scen.size());
  ws.C.resize(scen.size());
  for (std::size_t i = 0; i < scen.size(); ++i) {
    const VectorXd& w = scen[i];
    ws.G[i].resize(ws.nb);
    for (int k = 0; k < ws.nb; ++k) {
      const MatrixXd& E = ws.basis[k];
      MatrixXd blk = MatrixXd::Zero(ws.n + 1, ws.n + 1);
      blk.topLeftCorner(ws.n, ws.n) = Acl.transpose() * E * Acl - tau * E;
      blk.topRightCorner(ws.n, 1) = Acl.transpose() * E * w;
      blk.bottomLeftCorner(1, ws.n) = (E * w).transpose() * Acl;
      blk(ws.n, ws.n) = w.dot(E * w);
      ws.G[i][k] = blk;
    }
    MatrixXd C = MatrixXd::Zero(ws.n + 1, ws.n + 1);
    C(ws.n, ws.n) = tau - 1.0;
    ws.C[i] = C;
  }
  return ws;
}

// Strict feasibility check: P(theta) > 0 and every block strictly negative
// definite (by margin). Returns false if any Cholesky fails.
bool strictly_feasible(const BarrierWorkspace& ws, const VectorXd& theta, double margin) {
  MatrixXd P = assemble_P(ws.basis, theta);
  Eigen::LLT<MatrixXd> lltP(P);
  if (lltP.info() != Eigen::Success) return false;
  const int nb1 = ws.n + 1;
  for (std::size_t i = 0; i < ws.G.size(); ++i) {
    MatrixXd M = ws.C[i];
    for (int k = 0; k < ws.nb; ++k) M += theta(k) * ws.G[i][k];
    MatrixXd S = -M - margin * MatrixXd::Identity(nb1, nb1);
    Eigen::LLT<MatrixXd> llt(S);
    if (llt.info() != Eigen::Success) return false;
  }
  return true;
}

// phi_t(theta) = -(t+1) log det P - sum_i log det(-M_i); +inf when infeasible.
double barrier_value(const BarrierWorkspace& ws, const VectorXd& theta, double t) {
  MatrixXd P = assemble_P(ws.basis, theta);
  Eigen::LLT<MatrixXd> lltP(P);
  if (lltP.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
  double logdetP = 0.0;
  for (int i = 0; i < ws.n; ++i) logdetP += 2.0 * std::log(lltP.matrixL()(i, i));
  double val = -(t + 1.0) * logdetP;
  for (std::size_t i = 0; i < ws.G.size(); ++i) {
    MatrixXd M = ws.C[i];
    for (int k = 0; k < ws.nb; ++k) M += theta(k) * ws.G[i][k];
    Eigen::LLT<MatrixXd> llt((-M).eval());
    if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
    for (int j = 0; j < ws.n + 1; ++j) val -= 2.0 * std::log(llt.matrixL()(j, j));
  }
  return val;
}

void barrier_derivatives(const BarrierWorkspace& ws, const VectorXd& theta, double t,
                         VectorXd& grad, MatrixXd& hess) {
  const int nb = ws.nb;
  grad = VectorXd::Zero(nb);
  hess = MatrixXd::Zero(nb, nb);

  MatrixXd P = assemble_P(ws.basis, theta);
  MatrixXd Pinv = P.llt().solve(MatrixXd::Identity(ws.n, ws.n));
  for (int k = 0; k < nb; ++k) {
    grad(k) += -(t + 1.0) * (Pinv * ws.basis[k]).trace();
    for (int l = k; l < nb; ++l)
      hess(k, l) += (t + 1.0) * (Pinv * ws.basis[k] * Pinv * ws.basis[l]).trace();
  }

  const int d = ws.n + 1;
  std::vector<MatrixXd> SG(nb);
  for (std::size_t i = 0; i < ws.G.size(); ++i) {
    MatrixXd M = ws.C[i];
    for (int k = 0; k < nb; ++k) M += theta(k) * ws.G[i][k];
    MatrixXd Sinv = (-M).llt().solve(MatrixXd::Identity(d, d));
    for (int k = 0; k < nb; ++k) SG[k] = Sinv * ws.G[i][k];
    for (int k = 0; k < nb; ++k) {
      grad(k) += SG[k].trace();
      for (int l = k; l < nb; ++l) hess(k, l) += (SG[k] * SG[l]).trace();
    }
  }
  hess = hess.selfadjointView<Eigen::Upper>();
}

// Newton minimization of phi_t from a strictly feasible start.
bool newton_minimize(const BarrierWorkspace& ws, VectorXd& theta, double t,
                     double decrement_tol, int max_steps) {
  for (int step = 0; step < max_steps; ++step) {
    VectorXd g;
    MatrixXd H;
    barrier_derivatives(ws, theta, t, g, H);
    H.diagonal().array() += 1e-12 * std::max(1.0, H.diagonal().maxCoeff());
    Eigen::LDLT<MatrixXd> ldlt(H);
    VectorXd dn = -ldlt.solve(g);
    double decrement = -0.5 * g.dot(dn);
    if (!dn.allFinite()) return false;
    if (decrement < decrement_tol) return true;
    double f0 = barrier_value(ws, theta, t);
    double alpha = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls) {
      VectorXd cand = theta + alpha * dn;
      double f = barrier_value(ws, cand, t);
      if (f < f0 + 1e-4 * alpha * g.dot(dn)) {
        theta = cand;
        moved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!moved) return true;  // stalled at numerical precision
  }
  return true;
}

// Extreme points of a 2-D point cloud (monotone chain). The invariance block
// is convex in w, so constraints at interior points are implied by the
// extreme ones; the final certificate still checks every scenario.
std::vector<VectorXd> extreme_points_2d(const std::vector<VectorXd>& pts) {
  if (pts.size() <= 2) return pts;
  std::vector<VectorXd> p = pts;
  std::sort(p.begin(), p.end(), [](const VectorXd& a, const VectorXd& b) {
    return a(0) < b(0) || (a(0) == b(0) && a(1) < b(1));
  });
  auto cross = [](const VectorXd& o, const VectorXd& a, const VectorXd& b) {
    return (a(0) - o(0)) * (b(1) - o(1)) - (a(1) - o(1)) * (b(0) - o(0));
  };
  std::vector<VectorXd> hull;
  for (const auto& pt : p) {
    while (hull.size() >= 2 && cross(hull[hull.size() - 2], hull.back(), pt) <= 0)
      hull.pop_back();
    hull.push_back(pt);
  }
  const std::size_t lower = hull.size() + 1;
  for (auto it = p.rbegin(); it != p.rend(); ++it) {
    while (hull.size() >= lower && cross(hull[hull.size() - 2], hull.back(), *it) <= 0)
      hull.pop_back();
    hull.push_back(*it);
  }
  hull.pop_back();
  if (hull.size() < 1) return pts;
  return hull;
}

struct TauSolve {
  bool feasible = false;
  VectorXd theta;
  double log_det = -std::numeric_limits<double>::infinity();
  std::string note;
};

TauSolve solve_for_tau(const std::vector<VectorXd>& scen, const MatrixXd& Acl, double tau,
                       double rho2, const DesignOptions& opts) {
  TauSolve out;
  if (tau <= rho2 + 1e-12) {
    out.note = "tau below closed-loop spectral radius squared";
    return out;
  }
  const int n = static_cast<int>(Acl.rows());
  BarrierWorkspace ws = build_workspace(scen, Acl, tau);

  // Feasible start: scaled Lyapunov solution of the tau-discounted system.
  MatrixXd As = Acl / std::sqrt(tau);
  MatrixXd X = dlyap_identity(As);
  X = 0.5 * (X + X.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> esX(X);
  if (esX.eigenvalues().minCoeff() <= 0.0) {
    out.note = "Lyapunov start not positive definite";
    return out;
  }
  double delta = 1.0 / esX.eigenvalues().maxCoeff();
  VectorXd theta;
  bool found = false;
  for (int tries = 0; tries < 60; ++tries) {
    MatrixXd P0 = delta * X;
    const auto basis = ws.basis;
    VectorXd th(ws.nb);
    int idx = 0;
    for (int i = 0; i < n; ++i) th(idx++) = P0(i, i);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) th(idx++) = P0(i, j);
    if (strictly_feasible(ws, th, 1e-12)) {
      theta = th;
      found = true;
      break;
    }
    delta *= 0.25;
  }
  if (!found) {
    out.note = "no strictly feasible start found";
    return out;
  }

  // Barrier path: increase t until the guaranteed suboptimality is small.
  const double nu = static_cast<double>(scen.size() * (n + 1) + n);
  double t = 1.0;
  while (true) {
    if (!newton_minimize(ws, theta, t, 1e-12, 200)) {
      out.note = "Newton failure on the central path";
      return out;
    }
    if (nu / t <= opts.barrier_accuracy) break;
    t *= 10.0;
  }

  MatrixXd P = assemble_P(ws.basis, theta);
  Eigen::LLT<MatrixXd> llt(P);
  if (llt.info() != Eigen::Success) {
    out.note = "final P not positive definite";
    return out;
  }
  double logdet = 0.0;
  for (int i = 0; i < n; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
  out.feasible = true;
  out.theta = theta;
  out.log_det = logdet;
  return out;
}

}  // namespace

int scenario_decision_count(int n) { return (n * n + n) / 2 + 1; }

double scenario_confidence(int N_s, int n_s, double epsilon) {
  require(N_s >= n_s && n_s >= 1, "scenario_confidence: need N_s >= n_s >= 1");
  require(epsilon > 0.0 && epsilon < 1.0, "scenario_confidence: epsilon must be in (0,1)");
  if (n_s == 1) return -std::expm1(N_s * std::log1p(-epsilon));
  const double le = std::log(epsilon);
  const double l1e = std::log1p(-epsilon);
  double maxlog = -std::numeric_limits<double>::infinity();
  std::vector<double> logs(n_s);
  for (int i = 0; i < n_s; ++i) {
    logs[i] = log_choose(N_s, i) + i * le + (N_s - i) * l1e;
    maxlog = std::max(maxlog, logs[i]);
  }
  double acc = 0.0;
  for (int i = 0; i < n_s; ++i) acc += std::exp(logs[i] - maxlog);
  const double log_tail = maxlog + std::log(acc);
  if (log_tail >= 0.0) return 0.0;
  return -std::expm1(log_tail);
}

double epsilon_for_confidence(int N_s, int n_s, double target_confidence) {
  require(target_confidence > 0.0 && target_confidence < 1.0,
          "epsilon_for_confidence: target must be in (0,1)");
  double lo = 0.0, hi = 1.0;
  while (hi - lo > 1e-10) {
    double mid = 0.5 * (lo + hi);
    double c = (mid <= 0.0 || mid >= 1.0) ? (mid <= 0.0 ? 0.0 : 1.0)
                                          : scenario_confidence(N_s, n_s, mid);
    if (c >= target_confidence)
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

ScenarioSet build_scenarios(const std::vector<Measurement>& data, const LinearModel& model,
                            ScenarioSource source) {
  require(!data.empty(), "build_scenarios: data must be nonempty");
  ScenarioSet set;
  set.source = source;
  set.samples.reserve(data.size());
  for (const auto& t : data) {
    require(t.x.size() == model.n() && t.y.size() == model.n() && t.u.size() == model.m(),
            "build_scenarios: dimension mismatch");
    set.samples.push_back(t.y - model.A * t.x - model.B * t.u);
  }
  return set;
}

double lmi_residual(const Ellipsoid& P, double tau, const MatrixXd& A_cl,
                    const VectorXd& w) {
  require(tau > 0.0, "lmi_residual: tau must be positive");
  const int n = P.dim();
  require(A_cl.rows() == n && A_cl.cols() == n && w.size() == n,
          "lmi_residual: dimension mismatch");
  const MatrixXd& Pm = P.P();
  MatrixXd M(n + 1, n + 1);
  M.topLeftCorner(n, n) = A_cl.transpose() * Pm * A_cl - tau * Pm;
  M.topRightCorner(n, 1) = A_cl.transpose() * Pm * w;
  M.bottomLeftCorner(1, n) = (Pm * w).transpose() * A_cl;
  M(n, n) = w.dot(Pm * w) + tau - 1.0;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (M + M.transpose()));
  return es.eigenvalues().maxCoeff();
}

RpiDesign design_rpi(const ScenarioSet& scenarios, const LinearModel& model,
                     const TubeGain& gain, const DesignOptions& opts,
                     double confidence_target) {
  require(scenarios.count() >= 1, "design_rpi: scenario set must be nonempty");
  const int n = model.n();
  MatrixXd Acl = model.A + model.B * gain.K;
  const double rho = spectral_radius(Acl);
  require(rho < 1.0, "design_rpi: closed loop must be Schur stable");
  const double rho2 = rho * rho;

  // Deduplicate scenarios (cost only, the constraint set is unchanged).
  std::vector<VectorXd> scen;
  for (const auto& w : scenarios.samples) {
    require(w.size() == n, "design_rpi: scenario dimension mismatch");
    bool dup = false;
    for (const auto& s : scen)
      if ((s - w).cwiseAbs().maxCoeff() <= opts.dedupe_tol) {
        dup = true;
        break;
      }
    if (!dup) scen.push_back(w);
  }

  // Constraint set used by the optimizer (exact reduction in 2-D).
  std::vector<VectorXd> scen_opt = (n == 2) ? extreme_points_2d(scen) : scen;

  // Geometric tau grid.
  std::vector<double> taus;
  for (int j = 0; j < opts.tau_grid; ++j) {
    double f = opts.tau_grid == 1 ? 0.0 : static_cast<double>(j) / (opts.tau_grid - 1);
    taus.push_back(opts.tau_min * std::pow(opts.tau_max / opts.tau_min, f));
  }

  RpiDesign best{Ellipsoid(MatrixXd::Identity(n, n)), 0.0, 0.0, {}, 0.0, {}};
  bool any = false;
  VectorXd best_theta;
  double best_tau = 0.0, best_logdet = -std::numeric_limits<double>::infinity();

  auto consider = [&](double tau) {
    TauSolve s = solve_for_tau(scen_opt, Acl, tau, rho2, opts);
    TauReport rep;
    rep.tau = tau;
    rep.feasible = s.feasible;
    rep.log_det_P = s.log_det;
    rep.note = s.note;
    best.tau_reports.push_back(rep);
    if (s.feasible && s.log_det > best_logdet) {
      best_logdet = s.log_det;
      best_theta = s.theta;
      best_tau = tau;
      any = true;
    }
  };

  for (double tau : taus) consider(tau);
  if (!any) {
    std::ostringstream os;
    os << "design_rpi: no feasible (P, tau) on the grid; per-tau report:\n";
    for (const auto& r : best.tau_reports)
      os << "  tau=" << r.tau << ": " << (r.note.empty() ? "infeasible" : r.note) << "\n";
    throw std::runtime_error(os.str());
  }

  // Deterministic local refinement of tau around the best grid point.
  if (opts.tau_refine_rounds > 0) {
    double lo = std::max(opts.tau_min, rho2 + 1e-9);
    double hi = opts.tau_max;
    for (const auto& r : best.tau_reports) {
      if (r.tau < best_tau && r.tau > lo) lo = r.tau;
      if (r.tau > best_tau && r.tau < hi) hi = r.tau;
    }
    for (int round = 0; round < opts.tau_refine_rounds; ++round) {
      double t1 = best_tau + (lo - best_tau) * 0.5;
      double t2 = best_tau + (hi - best_tau) * 0.5;
      double before = best_logdet;
      consider(t1);
      consider(t2);
      if (best_logdet <= before) {
        lo = t1;
        hi = t2;
      } else if (best_tau == t1) {
        hi = 0.5 * (t1 + t2);
      } else if (best_tau == t2) {
        lo = 0.5 * (t1 + t2);
      }
    }
  }

  const auto basis = symmetric_basis(n);
  MatrixXd P = assemble_P(basis, best_theta);
  P = 0.5 * (P + P.transpose());
  Ellipsoid omega(P);

  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& w : scen) worst = std::max(worst, lmi_residual(omega, best_tau, Acl, w));
  if (worst > opts.feas_tol) {
    std::ostringstream os;
    os << "design_rpi: a-posteriori residual check failed (worst " << worst << ")";
    throw std::runtime_error(os.str());
  }

  best.omega = omega;
  best.tau = best_tau;
  best.worst_residual = worst;
  best.log_det_P = best_logdet;
  best.bound.N_s = scenarios.count();
  best.bound.n_s = scenario_decision_count(n);
  if (best.bound.N_s >= best.bound.n_s) {
    best.bound.epsilon =
        epsilon_for_confidence(best.bound.N_s, best.bound.n_s, confidence_target);
    best.bound.confidence =
        scenario_confidence(best.bound.N_s, best.bound.n_s, best.bound.epsilon);
  } else {
    // fewer samples than decision variables: the certificate is vacuous
    best.bound.epsilon = 1.0;
    best.bound.confidence = 0.0;
  }
  return best;
}

}  // namespace mpsc
