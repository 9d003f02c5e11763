#include "mpsc/qcqp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>

namespace mpsc::qcqp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Evaluates all inequality constraint values at w (G rows first, quad last).
VectorXd ineq_values(const Problem& p, const VectorXd& w) {
  const int mg = static_cast<int>(p.G.rows());
  VectorXd c(p.num_ineq());
  if (mg > 0) c.head(mg) = p.G * w - p.h;
  if (p.quad) c(c.size() - 1) = 0.5 * w.dot(p.quad->Aq * w) + p.quad->bq.dot(w) + p.quad->c;
  return c;
}

// Jacobian of the inequality constraints at w.
MatrixXd ineq_jacobian(const Problem& p, const VectorXd& w) {
  const int mg = static_cast<int>(p.G.rows());
  MatrixXd J(p.num_ineq(), p.num_vars());
  if (mg > 0) J.topRows(mg) = p.G;
  if (p.quad) J.row(J.rows() - 1) = (p.quad->Aq * w + p.quad->bq).transpose();
  return J;
}

// Largest alpha in [0,1] with v + alpha*dv >= (1 - frac)*v, componentwise.
double max_step(const VectorXd& v, const VectorXd& dv, double frac) {
  double alpha = 1.0;
  for (int i = 0; i < v.size(); ++i)
    if (dv(i) < 0.0) alpha = std::min(alpha, -frac * v(i) / dv(i));
  return alpha;
}

// Least-norm point on E w = d (or zero when there are no equalities).
VectorXd equality_least_norm(const Problem& p) {
  VectorXd w = VectorXd::Zero(p.num_vars());
  if (p.num_eq() == 0) return w;
  MatrixXd EEt = p.E * p.E.transpose();
  EEt.diagonal().array() += 1e-12 * std::max(1.0, EEt.diagonal().maxCoeff());
  w = p.E.transpose() * EEt.ldlt().solve(p.d);
  return w;
}

Solution solve_equality_qp(const Problem& p, const Options& opts) {
  // No inequalities: one KKT solve.
  const int nw = p.num_vars(), ne = p.num_eq();
  MatrixXd KKT = MatrixXd::Zero(nw + ne, nw + ne);
  KKT.topLeftCorner(nw, nw) = p.Q;
  KKT.topLeftCorner(nw, nw).diagonal().array() += opts.reg;
  if (ne > 0) {
    KKT.topRightCorner(nw, ne) = p.E.transpose();
    KKT.bottomLeftCorner(ne, nw) = p.E;
    KKT.bottomRightCorner(ne, ne).diagonal().array() -= opts.reg;
  }
  VectorXd rhs(nw + ne);
  rhs.head(nw) = -p.q;
  if (ne > 0) rhs.tail(ne) = p.d;
  Eigen::PartialPivLU<MatrixXd> lu(KKT);
  VectorXd sol = lu.solve(rhs);
  Solution out;
  out.w = sol.head(nw);
  out.eq_dual = sol.tail(ne);
  out.ineq_dual = VectorXd(0);
  out.objective = 0.5 * out.w.dot(p.Q * out.w) + p.q.dot(out.w);
  out.gap = 0.0;
  out.primal_residual = ne > 0 ? (p.E * out.w - p.d).cwiseAbs().maxCoeff() : 0.0;
  out.dual_residual =
      (p.Q * out.w + p.q + (ne > 0 ? (p.E.transpose() * out.eq_dual).eval()
                                   : VectorXd::Zero(nw).eval()))
          .cwiseAbs()
          .maxCoeff();
  out.iterations = 1;
  out.status = (out.w.allFinite() && out.primal_residual < 1e-6 && out.dual_residual < 1e-6)
                   ? SolveStatus::optimal
                   : SolveStatus::numerical_failure;
  return out;
}

}  // namespace

Solution solve(const Problem& p_in, const Options& opts) {
  // Row-normalize the constraint system (truth set unchanged) so residual
  // tolerances mean the same thing regardless of row scaling.
  Problem p = p_in;
  Eigen::VectorXd gscale = Eigen::VectorXd::Ones(p.G.rows());
  for (int i = 0; i < p.G.rows(); ++i) {
    double s = std::max(1e-12, p.G.row(i).cwiseAbs().maxCoeff());
    gscale(i) = s;
    p.G.row(i) /= s;
    p.h(i) /= s;
  }
  Eigen::VectorXd escale = Eigen::VectorXd::Ones(p.E.rows());
  for (int i = 0; i < p.E.rows(); ++i) {
    double s = std::max(1e-12, p.E.row(i).cwiseAbs().maxCoeff());
    escale(i) = s;
    p.E.row(i) /= s;
    p.d(i) /= s;
  }

  const int nw = p.num_vars();
  const int ne = p.num_eq();
  const int mi = p.num_ineq();
  if (p.q.size() != nw || (ne > 0 && p.E.cols() != nw) || (p.G.rows() > 0 && p.G.cols() != nw))
    throw std::invalid_argument("qcqp::solve: inconsistent dimensions");

  if (mi == 0) return solve_equality_qp(p, opts);

  // Mehrotra starting point: slack-consistent s, least-squares multipliers,
  // shifted into the positive orthant and centered.
  VectorXd w = opts.w_start.has_value() ? *opts.w_start : equality_least_norm(p);
  VectorXd c0 = ineq_values(p, w);
  VectorXd s_hat = -c0;
  VectorXd lam_hat;
  VectorXd y = VectorXd::Zero(ne);
  {
    MatrixXd J0 = ineq_jacobian(p, w);
    MatrixXd At(nw, mi + ne);
    At.leftCols(mi) = J0.transpose();
    if (ne > 0) At.rightCols(ne) = p.E.transpose();
    VectorXd rhs = -(p.Q * w + p.q);
    Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(At);
    VectorXd ml = cod.solve(rhs);
    lam_hat = ml.head(mi);
    if (ne > 0) y = ml.tail(ne);
  }
  double ds = std::max(0.0, -1.5 * s_hat.minCoeff());
  double dl = std::max(0.0, -1.5 * lam_hat.minCoeff());
  s_hat.array() += ds;
  lam_hat.array() += dl;
  double mu_hat = s_hat.dot(lam_hat);
  double sum_l = lam_hat.sum(), sum_s = s_hat.sum();
  VectorXd s = s_hat.array() + (sum_l > 1e-12 ? 0.5 * mu_hat / sum_l : 1.0) + 1e-8;
  VectorXd lam = lam_hat.array() + (sum_s > 1e-12 ? 0.5 * mu_hat / sum_s : 1.0) + 1e-8;

  const double qscale = 1.0 + p.q.cwiseAbs().maxCoeff();
  const double dscale = 1.0 + (ne > 0 ? p.d.cwiseAbs().maxCoeff() : 0.0);
  const double hscale = 1.0 + (p.h.size() > 0 ? p.h.cwiseAbs().maxCoeff() : 0.0);

  Solution out;
  double reg = opts.reg;

  for (int iter = 0; iter < opts.max_iter; ++iter) {
    VectorXd c = ineq_values(p, w);
    MatrixXd J = ineq_jacobian(p, w);

    const double lam_quad = p.quad ? lam(mi - 1) : 0.0;
    MatrixXd H = p.Q;
    if (p.quad) H += lam_quad * p.quad->Aq;

    VectorXd r_dual = p.Q * w + p.q + J.transpose() * lam;
    if (ne > 0) r_dual += p.E.transpose() * y;
    VectorXd r_eq = ne > 0 ? (p.E * w - p.d).eval() : VectorXd(0);
    VectorXd r_ineq = c + s;
    double mu = s.dot(lam) / mi;

    // Convergence check: true inequality violation, equality and dual residuals, gap.
    double viol = 0.0;
    for (int i = 0; i < mi; ++i) viol = std::max(viol, c(i));
    const double peq = ne > 0 ? r_eq.cwiseAbs().maxCoeff() : 0.0;
    const double pres = std::max(viol, peq);
    const double dres = r_dual.cwiseAbs().maxCoeff();
    if (std::getenv("MPSC_QCQP_TRACE") != nullptr)
      std::fprintf(stderr, "  it %2d: viol=%9.2e peq=%9.2e dres=%9.2e mu=%9.2e obj=%12.5e\n",
                   iter, viol, peq, dres, mu, 0.5 * w.dot(p.Q * w) + p.q.dot(w));
    out.gap = mu;
    out.primal_residual = pres;
    out.dual_residual = dres;
    out.iterations = iter;
    const double obj_now = 0.5 * w.dot(p.Q * w) + p.q.dot(w);
    if (pres <= opts.tol_primal * std::max(dscale, hscale) &&
        dres <= opts.tol_dual * qscale &&
        mu * mi <= opts.tol_gap * std::max(1.0, std::abs(obj_now))) {
      out.status = SolveStatus::optimal;
      out.w = w;
      out.eq_dual = y.cwiseQuotient(escale);
      out.ineq_dual = lam;
      out.ineq_dual.head(gscale.size()) =
          lam.head(gscale.size()).cwiseQuotient(gscale);
      out.objective = 0.5 * w.dot(p.Q * w) + p.q.dot(w);
      return out;
    }

    // Reduced KKT matrix, shared by predictor and corrector.
    VectorXd Wdiag = lam.cwiseQuotient(s);
    MatrixXd KKT = MatrixXd::Zero(nw + ne, nw + ne);
    KKT.topLeftCorner(nw, nw) = H + J.transpose() * Wdiag.asDiagonal() * J;
    KKT.topLeftCorner(nw, nw).diagonal().array() += reg;
    if (ne > 0) {
      KKT.topRightCorner(nw, ne) = p.E.transpose();
      KKT.bottomLeftCorner(ne, nw) = p.E;
      KKT.bottomRightCorner(ne, ne).diagonal().array() -= reg;
    }
    Eigen::PartialPivLU<MatrixXd> lu(KKT);

    auto directions = [&](const VectorXd& r_comp) {
      // r_comp = target residual of the complementarity equation S*lam - sigma*mu.
      VectorXd tmp = r_comp.cwiseQuotient(s);  // S^{-1} r_comp
      VectorXd rhs(nw + ne);
      rhs.head(nw) = -(r_dual + J.transpose() * (Wdiag.cwiseProduct(r_ineq) - tmp));
      if (ne > 0) rhs.tail(ne) = -r_eq;
      VectorXd sol = lu.solve(rhs);
      // one step of iterative refinement
      sol += lu.solve(rhs - KKT * sol);
      VectorXd dw = sol.head(nw);
      VectorXd dy = sol.tail(ne);
      VectorXd ds = -(r_ineq + J * dw);
      VectorXd dlam = -(r_comp + lam.cwiseProduct(ds)).cwiseQuotient(s);
      return std::make_tuple(dw, dy, ds, dlam);
    };

    // Predictor (affine scaling) direction.
    auto [dw_a, dy_a, ds_a, dl_a] = directions(s.cwiseProduct(lam));
    if (!dw_a.allFinite()) {
      reg *= 100.0;
      if (reg > 1e-4) {
        out.status = SolveStatus::numerical_failure;
        out.w = w;
        out.eq_dual = y;
        out.ineq_dual = lam;
        return out;
      }
      continue;
    }
    double ap = max_step(s, ds_a, 1.0);
    double ad = max_step(lam, dl_a, 1.0);
    double mu_aff = (s + ap * ds_a).dot(lam + ad * dl_a) / mi;
    double sigma = std::pow(mu_aff / mu, 3.0);
    sigma = std::clamp(sigma, 1e-8, 1.0 - 1e-8);

    // Corrector.
    VectorXd r_comp = s.cwiseProduct(lam) + ds_a.cwiseProduct(dl_a) -
                      VectorXd::Constant(mi, sigma * mu);
    auto [dw, dy, ds, dlam] = directions(r_comp);
    if (!dw.allFinite()) {
      reg *= 100.0;
      continue;
    }

    const double frac = std::min(0.9995, std::max(0.99, 1.0 - mu));
    double alpha_p = max_step(s, ds, frac);
    double alpha_d = max_step(lam, dlam, frac);
    double alpha = std::min(alpha_p, alpha_d);

    w += alpha * dw;
    if (ne > 0) y += alpha * dy;
    s += alpha * ds;
    lam += alpha * dlam;
  }

  out.status = SolveStatus::max_iterations;
  out.w = w;
  out.eq_dual = y;
  out.ineq_dual = lam;
  out.objective = 0.5 * w.dot(p.Q * w) + p.q.dot(w);
  return out;
}

FeasibilityResult min_violation(const Problem& p, const Options& opts, double floor) {
  const int nw = p.num_vars();
  const int mg = static_cast<int>(p.G.rows());
  Problem ext;
  ext.Q = MatrixXd::Zero(nw + 1, nw + 1);
  ext.q = VectorXd::Zero(nw + 1);
  ext.q(nw) = 1.0;  // minimize t
  if (p.num_eq() > 0) {
    ext.E = MatrixXd::Zero(p.num_eq(), nw + 1);
    ext.E.leftCols(nw) = p.E;
    ext.d = p.d;
  } else {
    ext.E = MatrixXd(0, nw + 1);
    ext.d = VectorXd(0);
  }
  // G w - t <= h, and -t <= -floor.
  ext.G = MatrixXd::Zero(mg + 1, nw + 1);
  ext.h = VectorXd(mg + 1);
  if (mg > 0) {
    ext.G.topLeftCorner(mg, nw) = p.G;
    ext.G.topRightCorner(mg, 1).setConstant(-1.0);
    ext.h.head(mg) = p.h;
  }
  ext.G(mg, nw) = -1.0;
  ext.h(mg) = -floor;
  if (p.quad) {
    QuadConstraint qc;
    qc.Aq = MatrixXd::Zero(nw + 1, nw + 1);
    qc.Aq.topLeftCorner(nw, nw) = p.quad->Aq;
    qc.bq = VectorXd::Zero(nw + 1);
    qc.bq.head(nw) = p.quad->bq;
    qc.bq(nw) = -1.0;
    qc.c = p.quad->c;
    ext.quad = qc;
  }

  Options o = opts;
  if (opts.w_start.has_value()) {
    VectorXd ws(nw + 1);
    ws.head(nw) = *opts.w_start;
    ws(nw) = 0.0;
    o.w_start = ws;
  }
  Solution sol = solve(ext, o);
  FeasibilityResult res;
  res.status = sol.status;
  if (sol.w.size() == nw + 1) {
    res.w = sol.w.head(nw);
    res.min_violation = sol.w(nw);
  }
  return res;
}

}  // namespace mpsc::qcqp
