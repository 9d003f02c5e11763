#include "mpsc/mpsc_core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <stdexcept>

#include "mpsc/qcqp.hpp"

namespace mpsc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace detail {

// Condensed template of the certification program. Decision vector layout:
//   w = [ z0 (n) | v_0..v_{N-1} (N*m) | u~ (m) | lambda (K) ]
// States are eliminated through the dynamics: z_i = A^i z0 + sum_j A^{i-1-j} B v_j.
struct Condensed {
  int n = 0, m = 0, N = 0, K = 0;
  int nw = 0;

  std::vector<MatrixXd> A_pow;  // A^0 .. A^N
  MatrixXd E;                   // equality rows: terminal map, simplex, u~ definition
  MatrixXd G;                   // inequality rows: states, inputs, -lambda <= 0
  VectorXd h;
  MatrixXd Q;                   // objective Hessian (2I on the u~ block)
  MatrixXd Aq;                  // quadratic constraint Hessian (2P on the z0 block)

  int iz0() const { return 0; }
  int iv(int j) const { return n + j * m; }
  int iu() const { return n + N * m; }
  int il() const { return n + N * m + m; }
};

}  // namespace detail

using detail::Condensed;

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

std::shared_ptr<const Condensed> build_condensed(const LinearModel& model,
                                                 const TubeGain& gain,
                                                 const Ellipsoid& omega,
                                                 const Polytope& x_bar,
                                                 const Polytope& u_bar,
                                                 const VertexHull& terminal, int N) {
  auto c = std::make_shared<Condensed>();
  c->n = model.n();
  c->m = model.m();
  c->N = N;
  c->K = terminal.count();
  c->nw = c->n + N * c->m + c->m + c->K;

  c->A_pow.resize(N + 1);
  c->A_pow[0] = MatrixXd::Identity(c->n, c->n);
  for (int i = 1; i <= N; ++i) c->A_pow[i] = model.A * c->A_pow[i - 1];

  const int qx = x_bar.rows(), qu = u_bar.rows();
  const int neq = c->n + 1 + c->m;
  const int nineq = N * qx + N * qu + c->K;

  c->E = MatrixXd::Zero(neq, c->nw);
  // terminal map: A^N z0 + sum_j A^{N-1-j} B v_j - V lambda = 0
  c->E.block(0, c->iz0(), c->n, c->n) = c->A_pow[N];
  for (int j = 0; j < N; ++j)
    c->E.block(0, c->iv(j), c->n, c->m) = c->A_pow[N - 1 - j] * model.B;
  c->E.block(0, c->il(), c->n, c->K) = -terminal.matrix();
  // simplex: sum lambda = 1
  c->E.block(c->n, c->il(), 1, c->K).setOnes();
  // u~ - v0 + K z0 = K x  (right side filled per solve)
  c->E.block(c->n + 1, c->iu(), c->m, c->m) = MatrixXd::Identity(c->m, c->m);
  c->E.block(c->n + 1, c->iv(0), c->m, c->m) = -MatrixXd::Identity(c->m, c->m);
  c->E.block(c->n + 1, c->iz0(), c->m, c->n) = gain.K;

  c->G = MatrixXd::Zero(nineq, c->nw);
  c->h = VectorXd::Zero(nineq);
  int row = 0;
  for (int i = 0; i < N; ++i) {
    c->G.block(row, c->iz0(), qx, c->n) = x_bar.A * c->A_pow[i];
    for (int j = 0; j < i; ++j)
      c->G.block(row, c->iv(j), qx, c->m) = x_bar.A * c->A_pow[i - 1 - j] * model.B;
    c->h.segment(row, qx) = x_bar.b;
    row += qx;
  }
  for (int i = 0; i < N; ++i) {
    c->G.block(row, c->iv(i), qu, c->m) = u_bar.A;
    c->h.segment(row, qu) = u_bar.b;
    row += qu;
  }
  c->G.block(row, c->il(), c->K, c->K) = -MatrixXd::Identity(c->K, c->K);

  c->Q = MatrixXd::Zero(c->nw, c->nw);
  c->Q.block(c->iu(), c->iu(), c->m, c->m) = 2.0 * MatrixXd::Identity(c->m, c->m);

  c->Aq = MatrixXd::Zero(c->nw, c->nw);
  c->Aq.block(c->iz0(), c->iz0(), c->n, c->n) = 2.0 * omega.P();
  return c;
}

// Full program at (x, u_L). When fix_u_tilde is set, an extra equality pins u~.
qcqp::Problem instantiate(const MpscConfig& cfg, const VectorXd& x, const VectorXd& u_L,
                          const VectorXd* fix_u_tilde) {
  const Condensed& c = cfg.condensed();
  qcqp::Problem p;
  p.Q = c.Q;
  p.q = VectorXd::Zero(c.nw);
  p.q.segment(c.iu(), c.m) = -2.0 * u_L;

  const int extra = fix_u_tilde ? c.m : 0;
  p.E = MatrixXd::Zero(c.E.rows() + extra, c.nw);
  p.E.topRows(c.E.rows()) = c.E;
  p.d = VectorXd::Zero(c.E.rows() + extra);
  p.d(c.n) = 1.0;  // convex weights sum to one
  p.d.segment(c.n + 1, c.m) = cfg.gain().K * x;
  if (fix_u_tilde) {
    p.E.block(c.E.rows(), c.iu(), c.m, c.m) = MatrixXd::Identity(c.m, c.m);
    p.d.tail(c.m) = *fix_u_tilde;
  }

  p.G = c.G;
  p.h = c.h;

  qcqp::QuadConstraint quad;
  quad.Aq = c.Aq;
  quad.bq = VectorXd::Zero(c.nw);
  quad.bq.segment(c.iz0(), c.n) = -2.0 * cfg.omega().P() * x;
  quad.c = x.dot(cfg.omega().P() * x) - 1.0;
  p.quad = quad;
  return p;
}

qcqp::Options solver_options(const MpscTolerances& tol) {
  qcqp::Options o;
  o.max_iter = tol.solver_max_iter;
  o.tol_primal = tol.solver_residual;
  o.tol_dual = tol.solver_residual;
  o.tol_gap = tol.solver_gap;
  return o;
}

// Maps a condensed decision vector to a full solution record. The nominal
// trajectory is rolled exactly through the dynamics, and u~ is recomputed
// from its defining equality unless pinned by the pass-through path.
MpscSolution build_solution(const MpscConfig& cfg, const VectorXd& x, const VectorXd& u_L,
                            const VectorXd& w, const VectorXd* pinned_u) {
  const Condensed& c = cfg.condensed();
  MpscSolution sol;
  sol.z_traj.resize(c.N + 1);
  sol.v_traj.resize(c.N);
  sol.z_traj[0] = w.segment(c.iz0(), c.n);
  for (int i = 0; i < c.N; ++i) {
    sol.v_traj[i] = w.segment(c.iv(i), c.m);
    sol.z_traj[i + 1] = step_nominal(cfg.model(), sol.z_traj[i], sol.v_traj[i]);
  }
  sol.hull_weights = w.segment(c.il(), c.K);
  sol.u_tilde = pinned_u ? *pinned_u
                         : (sol.v_traj[0] + cfg.gain().K * (x - sol.z_traj[0])).eval();
  sol.objective = pinned_u ? 0.0 : (u_L - sol.u_tilde).squaredNorm();
  sol.pass_through = pinned_u != nullptr;
  return sol;
}

}  // namespace

MpscConfig::MpscConfig(LinearModel model, TubeGain gain, Ellipsoid omega, Polytope x_bar,
                       Polytope u_bar, VertexHull terminal, int horizon,
                       MpscTolerances tol)
    : model_(std::move(model)),
      gain_(std::move(gain)),
      omega_(std::move(omega)),
      x_bar_(std::move(x_bar)),
      u_bar_(std::move(u_bar)),
      terminal_(std::move(terminal)),
      horizon_(horizon),
      tol_(tol) {
  require(horizon_ >= 1, "MpscConfig: horizon must be >= 1");
  require(gain_.n() == model_.n() && gain_.m() == model_.m(),
          "MpscConfig: gain dimensions do not match the model");
  require(omega_.dim() == model_.n(), "MpscConfig: omega dimension mismatch");
  require(x_bar_.dim() == model_.n(), "MpscConfig: state set dimension mismatch");
  require(u_bar_.dim() == model_.m(), "MpscConfig: input set dimension mismatch");
  require(terminal_.dim() == model_.n(), "MpscConfig: terminal set dimension mismatch");
  for (int j = 0; j < terminal_.count(); ++j) {
    if (!x_bar_.contains(terminal_.vertices[j], tol_.validate_tol)) {
      std::ostringstream os;
      os << "MpscConfig: terminal vertex " << j
         << " lies outside the tightened state set";
      throw std::invalid_argument(os.str());
    }
  }
  condensed_ =
      build_condensed(model_, gain_, omega_, x_bar_, u_bar_, terminal_, horizon_);
}

MpscConfig MpscConfig::with_terminal(VertexHull terminal) const {
  return MpscConfig(model_, gain_, omega_, x_bar_, u_bar_, std::move(terminal), horizon_,
                    tol_);
}

double ValidationReport::max_violation() const {
  return std::max({dynamics, state, input, terminal, ellipsoid, input_def});
}

ValidationReport validate_solution(const MpscConfig& cfg, const VectorXd& x,
                                   const MpscSolution& sol) {
  ValidationReport rep;
  const int N = cfg.horizon();
  const auto& model = cfg.model();
  for (int i = 0; i < N; ++i) {
    rep.dynamics = std::max(
        rep.dynamics, (sol.z_traj[i + 1] - model.A * sol.z_traj[i] - model.B * sol.v_traj[i])
                          .cwiseAbs()
                          .maxCoeff());
    rep.state = std::max(
        rep.state, (cfg.x_bar().A * sol.z_traj[i] - cfg.x_bar().b).maxCoeff());
    rep.input = std::max(
        rep.input, (cfg.u_bar().A * sol.v_traj[i] - cfg.u_bar().b).maxCoeff());
  }
  rep.state = std::max(rep.state, 0.0);
  rep.input = std::max(rep.input, 0.0);

  const VectorXd& lam = sol.hull_weights;
  VectorXd recon = cfg.terminal().matrix() * lam;
  rep.terminal = (recon - sol.z_traj[N]).cwiseAbs().maxCoeff();
  rep.terminal = std::max(rep.terminal, std::abs(lam.sum() - 1.0));
  rep.terminal = std::max(rep.terminal, std::max(0.0, -lam.minCoeff()));

  VectorXd e0 = x - sol.z_traj[0];
  rep.ellipsoid = std::max(0.0, e0.dot(cfg.omega().P() * e0) - 1.0);

  rep.input_def =
      (sol.u_tilde - sol.v_traj[0] - cfg.gain().K * e0).cwiseAbs().maxCoeff();
  return rep;
}

FeasibilityProbe probe_feasibility(const MpscConfig& cfg, const VectorXd& x) {
  require(x.size() == cfg.model().n(), "probe_feasibility: state dimension mismatch");
  require(x.allFinite(), "probe_feasibility: state must be finite");
  qcqp::Problem p = instantiate(cfg, x, VectorXd::Zero(cfg.model().m()), nullptr);
  qcqp::FeasibilityResult fr = qcqp::min_violation(p, solver_options(cfg.tol()));
  FeasibilityProbe probe;
  probe.margin = fr.min_violation;
  if (fr.status != qcqp::SolveStatus::optimal)
    probe.verdict = SolveVerdict::unknown;
  else if (fr.min_violation <= cfg.tol().verdict_margin())
    probe.verdict = SolveVerdict::feasible;  // boundary states count as feasible
  else
    probe.verdict = SolveVerdict::infeasible;
  return probe;
}

MpscSolution solve_mpsc(const MpscConfig& cfg, const VectorXd& x, const VectorXd& u_L) {
  require(x.size() == cfg.model().n(), "solve_mpsc: state dimension mismatch");
  require(u_L.size() == cfg.model().m(), "solve_mpsc: input dimension mismatch");
  require(x.allFinite() && u_L.allFinite(), "solve_mpsc: inputs must be finite");

  const MpscTolerances& tol = cfg.tol();
  qcqp::Options opts = solver_options(tol);

  // Pass-through attempt: feasibility with u~ pinned to the proposed input.
  // Succeeding here certifies u_L unmodified with objective exactly zero.
  qcqp::Problem p_pass = instantiate(cfg, x, u_L, &u_L);
  qcqp::FeasibilityResult pass = qcqp::min_violation(p_pass, opts);
  const bool trace = std::getenv("MPSC_CORE_TRACE") != nullptr;
  if (trace)
    std::fprintf(stderr, "solve_mpsc pass: status=%d t=%g\n", int(pass.status),
                 pass.min_violation);
  if (pass.status == qcqp::SolveStatus::optimal &&
      pass.min_violation <= tol.verdict_margin()) {
    MpscSolution sol = build_solution(cfg, x, u_L, pass.w, &u_L);
    ValidationReport rep = validate_solution(cfg, x, sol);
    if (trace)
      std::fprintf(stderr, "solve_mpsc pass validation: %g (dyn %g st %g in %g term %g ell %g ud %g)\n",
                   rep.max_violation(), rep.dynamics, rep.state, rep.input, rep.terminal,
                   rep.ellipsoid, rep.input_def);
    if (rep.ok(tol.validate_tol)) {
      sol.verdict = SolveVerdict::feasible;
      sol.feasible = true;
      sol.kkt_residual = std::max(0.0, pass.min_violation);
      return sol;
    }
  }

  // Full optimization over u~.
  qcqp::Problem p_main = instantiate(cfg, x, u_L, nullptr);
  qcqp::Options main_opts = opts;
  if (pass.w.size() > 0) main_opts.w_start = pass.w;
  qcqp::Solution main = qcqp::solve(p_main, main_opts);
  if (main.ok()) {
    MpscSolution sol = build_solution(cfg, x, u_L, main.w, nullptr);
    ValidationReport rep = validate_solution(cfg, x, sol);
    if (rep.ok(tol.validate_tol)) {
      sol.verdict = SolveVerdict::feasible;
      sol.feasible = true;
      sol.kkt_residual = std::max(main.primal_residual, main.dual_residual);
      return sol;
    }
  }

  // Unresolved: settle feasibility by minimum constraint violation.
  qcqp::FeasibilityResult core = qcqp::min_violation(p_main, opts);
  MpscSolution sol;
  if (core.status != qcqp::SolveStatus::optimal) {
    sol.verdict = SolveVerdict::unknown;
    sol.infeasibility_margin = core.min_violation;
    return sol;
  }
  if (core.min_violation > tol.verdict_margin()) {
    sol.verdict = SolveVerdict::infeasible;
    sol.infeasibility_margin = core.min_violation;
    return sol;
  }

  // Feasible (possibly only at tolerance, e.g. a state on the feasible-set
  // boundary). Re-optimize from the found point; if the set has empty
  // interior, retry with the constraints opened by half the validation
  // tolerance so a central path exists.
  {
    qcqp::Options retry = opts;
    retry.w_start = core.w;
    qcqp::Solution again = qcqp::solve(p_main, retry);
    if (again.ok()) {
      MpscSolution s2 = build_solution(cfg, x, u_L, again.w, nullptr);
      if (validate_solution(cfg, x, s2).ok(tol.validate_tol)) {
        s2.verdict = SolveVerdict::feasible;
        s2.feasible = true;
        s2.kkt_residual = std::max(again.primal_residual, again.dual_residual);
        return s2;
      }
    }
    qcqp::Problem relaxed = p_main;
    const double open = std::max(core.min_violation, 0.0) + 0.5 * tol.validate_tol;
    relaxed.h.array() += open;
    if (relaxed.quad) relaxed.quad->c -= open;
    qcqp::Solution rx = qcqp::solve(relaxed, retry);
    if (rx.ok()) {
      MpscSolution s2 = build_solution(cfg, x, u_L, rx.w, nullptr);
      if (validate_solution(cfg, x, s2).ok(tol.validate_tol)) {
        s2.verdict = SolveVerdict::feasible;
        s2.feasible = true;
        s2.kkt_residual = std::max(rx.primal_residual, rx.dual_residual);
        return s2;
      }
    }
    // Feasible point in hand but the optimizer stalled: return it rather than
    // report a false infeasibility (the point is re-validated above all else).
    MpscSolution s3 = build_solution(cfg, x, u_L, core.w, nullptr);
    if (validate_solution(cfg, x, s3).ok(tol.validate_tol)) {
      s3.verdict = SolveVerdict::feasible;
      s3.feasible = true;
      s3.kkt_residual = std::numeric_limits<double>::infinity();
      return s3;
    }
  }
  sol.verdict = SolveVerdict::unknown;
  sol.infeasibility_margin = core.min_violation;
  return sol;
}

bool certify_pass_through(const MpscConfig& cfg, const VectorXd& x, const VectorXd& u_L) {
  MpscSolution sol = solve_mpsc(cfg, x, u_L);
  if (!sol.feasible) return false;
  return std::sqrt(sol.objective) <= cfg.tol().pass_tol || sol.pass_through;
}

}  // namespace mpsc
