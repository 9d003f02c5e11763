#include "mpsc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mpsc/qcqp.hpp"
#include "mpsc/rng.hpp"

namespace mpsc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

void require(bool cond, const char* what) {
  if (!cond) throw std::invalid_argument(what);
}

// Interior slack of {x : Ax <= b} via the Chebyshev-center LP
//   min t  s.t.  a_i x - b_i <= t ||a_i||.
// Negative result = full-dimensional interior, ~0 = degenerate, positive = empty.
double interior_slack_lp(const MatrixXd& A, const VectorXd& b) {
  const int n = static_cast<int>(A.cols());
  const int q = static_cast<int>(A.rows());
  qcqp::Problem p;
  p.Q = MatrixXd::Zero(n + 1, n + 1);
  p.q = VectorXd::Zero(n + 1);
  p.q(n) = 1.0;
  p.E = MatrixXd(0, n + 1);
  p.d = VectorXd(0);
  p.G = MatrixXd::Zero(q + 1, n + 1);
  p.h = VectorXd(q + 1);
  const double big = 1e6 * std::max(1.0, b.cwiseAbs().maxCoeff());
  for (int i = 0; i < q; ++i) {
    p.G.row(i).head(n) = A.row(i);
    p.G(i, n) = -A.row(i).norm();
    p.h(i) = b(i);
  }
  p.G(q, n) = -1.0;  // t bounded below so the LP stays bounded
  p.h(q) = big;
  qcqp::Solution s = qcqp::solve(p);
  if (!s.ok()) return std::numeric_limits<double>::quiet_NaN();
  return s.w(n);
}

// Exact refit of convex weights on their active support: solves the
// equality-constrained least squares min (z - Vs l)' M (z - Vs l), sum l = 1
// by one KKT solve. Interior-point iterates are only sqrt(gap)-accurate when
// weights are weakly active; this recovers machine-precision certificates.
// Keeps the refit only when it does not increase the reconstruction error.
void polish_weights(const MatrixXd& V, const VectorXd& z, const MatrixXd& M,
                    VectorXd& lam) {
  const int K = static_cast<int>(V.cols());
  const double mx = lam.maxCoeff();
  std::vector<int> supp;
  for (int j = 0; j < K; ++j)
    if (lam(j) > 1e-9 * std::max(1.0, mx)) supp.push_back(j);
  if (supp.empty()) return;

  // NNLS-style inner loop: refit on the support, drop the most negative
  // weight until the refit is nonnegative.
  VectorXd best = lam;
  double best_err = ((V * lam - z).transpose() * M * (V * lam - z))(0);
  while (!supp.empty()) {
    const int S = static_cast<int>(supp.size());
    MatrixXd Vs(V.rows(), S);
    for (int i = 0; i < S; ++i) Vs.col(i) = V.col(supp[i]);
    MatrixXd KKT = MatrixXd::Zero(S + 1, S + 1);
    KKT.topLeftCorner(S, S) = 2.0 * Vs.transpose() * M * Vs;
    KKT.topLeftCorner(S, S).diagonal().array() += 1e-13;
    KKT.topRightCorner(S, 1).setOnes();
    KKT.bottomLeftCorner(1, S).setOnes();
    VectorXd rhs(S + 1);
    rhs.head(S) = 2.0 * Vs.transpose() * M * z;
    rhs(S) = 1.0;
    VectorXd sol = KKT.partialPivLu().solve(rhs);
    VectorXd ls = sol.head(S);
    if (!ls.allFinite()) break;
    if (ls.minCoeff() >= -1e-9) {
      VectorXd full = VectorXd::Zero(K);
      for (int i = 0; i < S; ++i) full(supp[i]) = std::max(0.0, ls(i));
      const double total = full.sum();
      if (total > 0.0) {
        full /= total;
        const double err = ((V * full - z).transpose() * M * (V * full - z))(0);
        if (err <= best_err + 1e-15) {
          best = full;
          best_err = err;
        }
      }
      break;
    }
    int drop = 0;
    for (int i = 1; i < S; ++i)
      if (ls(i) < ls(drop)) drop = i;
    supp.erase(supp.begin() + drop);
  }
  lam = best;
}

// Exact-vertex fast path: membership of a stored vertex needs no solve.
int match_vertex(const VertexHull& hull, const VectorXd& z) {
  for (int j = 0; j < hull.count(); ++j)
    if ((hull.vertices[j] - z).cwiseAbs().maxCoeff() <= 1e-12) return j;
  return -1;
}

TightenResult finish_tighten(const Polytope& poly, VectorXd new_b) {
  TightenResult out{Polytope(poly.A, std::move(new_b))};
  double slack = interior_slack_lp(out.poly.A, out.poly.b);
  out.interior_slack = slack;
  if (std::isnan(slack) || slack > 1e-9)
    out.status = TightenStatus::empty;
  else if (slack > -1e-9)
    out.status = TightenStatus::empty_interior;
  else
    out.status = TightenStatus::ok;
  return out;
}

}  // namespace

Polytope::Polytope(MatrixXd A_in, VectorXd b_in) : A(std::move(A_in)), b(std::move(b_in)) {
  require(A.rows() >= 1, "Polytope: at least one facet required");
  require(A.rows() == b.size(), "Polytope: A and b row counts differ");
  require(A.allFinite() && b.allFinite(), "Polytope: entries must be finite");
  for (int i = 0; i < A.rows(); ++i)
    require(A.row(i).cwiseAbs().maxCoeff() > 0.0, "Polytope: zero facet normal");
}

bool Polytope::contains(const VectorXd& x, double tol) const {
  require(x.size() == dim(), "Polytope::contains: dimension mismatch");
  return ((A * x - b).array() <= tol).all();
}

Polytope Polytope::box(const VectorXd& lb, const VectorXd& ub) {
  const int n = static_cast<int>(lb.size());
  require(ub.size() == n, "Polytope::box: bound dimensions differ");
  MatrixXd A(2 * n, n);
  VectorXd b(2 * n);
  A.topRows(n) = MatrixXd::Identity(n, n);
  A.bottomRows(n) = -MatrixXd::Identity(n, n);
  b.head(n) = ub;
  b.tail(n) = -lb;
  return Polytope(A, b);
}

Ellipsoid::Ellipsoid(MatrixXd P_in) : P_(std::move(P_in)) {
  require(P_.rows() == P_.cols() && P_.rows() >= 1, "Ellipsoid: P must be square");
  require(P_.allFinite(), "Ellipsoid: entries must be finite");
  const double scale = std::max(1.0, P_.cwiseAbs().maxCoeff());
  require((P_ - P_.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale,
          "Ellipsoid: P must be symmetric");
  P_ = 0.5 * (P_ + P_.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(P_);
  require(es.info() == Eigen::Success, "Ellipsoid: eigensolver failed");
  require(es.eigenvalues().minCoeff() > 0.0, "Ellipsoid: P must be positive definite");
  inv_sqrt_ = es.operatorInverseSqrt();
  Pinv_ = inv_sqrt_ * inv_sqrt_;
}

bool Ellipsoid::contains(const VectorXd& e, double tol) const {
  require(e.size() == dim(), "Ellipsoid::contains: dimension mismatch");
  return e.dot(P_ * e) <= 1.0 + tol;
}

double Ellipsoid::support(const VectorXd& a) const {
  require(a.size() == dim(), "Ellipsoid::support: dimension mismatch");
  require(a.allFinite(), "Ellipsoid::support: direction must be finite");
  const double v = a.dot(Pinv_ * a);
  return v <= 0.0 ? 0.0 : std::sqrt(v);
}

VertexHull::VertexHull(std::vector<VectorXd> v) : vertices(std::move(v)) {
  require(!vertices.empty(), "VertexHull: vertex list must be nonempty");
  const auto n = vertices.front().size();
  for (const auto& p : vertices) {
    require(p.size() == n, "VertexHull: inconsistent vertex dimensions");
    require(p.allFinite(), "VertexHull: entries must be finite");
  }
}

MatrixXd VertexHull::matrix() const {
  MatrixXd V(dim(), count());
  for (int j = 0; j < count(); ++j) V.col(j) = vertices[j];
  return V;
}

TightenResult tighten_state(const Polytope& poly, const Ellipsoid& omega) {
  require(poly.dim() == omega.dim(), "tighten_state: dimension mismatch");
  VectorXd nb(poly.rows());
  for (int i = 0; i < poly.rows(); ++i)
    nb(i) = poly.b(i) - omega.support(poly.A.row(i).transpose());
  return finish_tighten(poly, nb);
}

TightenResult tighten_input(const Polytope& poly, const TubeGain& gain,
                            const Ellipsoid& omega) {
  require(poly.dim() == gain.m(), "tighten_input: polytope lives in input space");
  require(gain.n() == omega.dim(), "tighten_input: gain and set dimensions differ");
  VectorXd nb(poly.rows());
  for (int i = 0; i < poly.rows(); ++i) {
    VectorXd dir = gain.K.transpose() * poly.A.row(i).transpose();
    nb(i) = poly.b(i) - omega.support(dir);
  }
  return finish_tighten(poly, nb);
}

bool ellipsoid_contains(const Ellipsoid& omega, const VectorXd& e, double tol) {
  return omega.contains(e, tol);
}

bool polytope_contains(const Polytope& poly, const VectorXd& x, double tol) {
  return poly.contains(x, tol);
}

double ellipsoid_support(const Ellipsoid& omega, const VectorXd& a) {
  return omega.support(a);
}

HullWeights hull_membership_weights(const VertexHull& hull, const VectorXd& z, double tol) {
  require(z.size() == hull.dim(), "hull_membership_weights: dimension mismatch");
  const int K = hull.count();
  const int n = hull.dim();
  HullWeights out;

  if (K == 1) {
    out.residual = (hull.vertices[0] - z).cwiseAbs().maxCoeff();
    out.inside = out.residual <= tol;
    out.weights = VectorXd::Ones(1);
    return out;
  }
  if (int j = match_vertex(hull, z); j >= 0) {
    out.inside = true;
    out.weights = VectorXd::Zero(K);
    out.weights(j) = 1.0;
    out.residual = 0.0;
    return out;
  }

  MatrixXd V = hull.matrix();

  // Stage 1: project z onto the hull -> min ||V l - z||^2 over the simplex.
  qcqp::Problem proj;
  proj.Q = 2.0 * V.transpose() * V;
  proj.q = -2.0 * V.transpose() * z;
  proj.E = MatrixXd::Ones(1, K);
  proj.d = VectorXd::Ones(1);
  proj.G = -MatrixXd::Identity(K, K);
  proj.h = VectorXd::Zero(K);
  qcqp::Solution ps = qcqp::solve(proj);
  if (!ps.ok()) {
    // conservative: cannot certify membership
    out.inside = false;
    return out;
  }
  VectorXd lam = ps.w.cwiseMax(0.0);
  lam /= lam.sum();
  polish_weights(V, z, MatrixXd::Identity(n, n), lam);
  VectorXd zhat = V * lam;
  out.residual = (zhat - z).cwiseAbs().maxCoeff();
  if (out.residual > tol) {
    out.inside = false;
    out.weights = lam;
    return out;
  }

  // Stage 2: among weight vectors reproducing the projection point, pick the
  // minimum-Euclidean-norm one (deterministic tie-break).
  qcqp::Problem mn;
  mn.Q = MatrixXd::Identity(K, K) * 2.0;
  mn.q = VectorXd::Zero(K);
  mn.E = MatrixXd(n + 1, K);
  mn.E.topRows(n) = V;
  mn.E.bottomRows(1).setOnes();
  mn.d = VectorXd(n + 1);
  mn.d.head(n) = zhat;
  mn.d(n) = 1.0;
  mn.G = -MatrixXd::Identity(K, K);
  mn.h = VectorXd::Zero(K);
  qcqp::Options mo;
  mo.w_start = lam;
  qcqp::Solution ms = qcqp::solve(mn, mo);
  if (ms.ok()) {
    VectorXd w2 = ms.w.cwiseMax(0.0);
    double s = w2.sum();
    if (s > 0.0) w2 /= s;
    double res2 = (V * w2 - z).cwiseAbs().maxCoeff();
    if (res2 <= tol) {
      out.inside = true;
      out.weights = w2;
      out.residual = res2;
      return out;
    }
  }
  out.inside = true;
  out.weights = lam;
  return out;
}

namespace {

// Exact extreme points of a planar point cloud (monotone chain); collinear
// interior points are dropped. No tolerance is involved beyond fp rounding.
std::vector<VectorXd> planar_extreme_points(std::vector<VectorXd> p) {
  if (p.size() <= 2) return p;
  std::sort(p.begin(), p.end(), [](const VectorXd& a, const VectorXd& b) {
    return a(0) < b(0) || (a(0) == b(0) && a(1) < b(1));
  });
  auto cross = [](const VectorXd& o, const VectorXd& a, const VectorXd& b) {
    return (a(0) - o(0)) * (b(1) - o(1)) - (a(1) - o(1)) * (b(0) - o(0));
  };
  std::vector<VectorXd> h;
  for (const auto& pt : p) {
    while (h.size() >= 2 && cross(h[h.size() - 2], h.back(), pt) <= 0) h.pop_back();
    h.push_back(pt);
  }
  const std::size_t lower = h.size() + 1;
  for (auto it = p.rbegin(); it != p.rend(); ++it) {
    while (h.size() >= lower && cross(h[h.size() - 2], h.back(), *it) <= 0) h.pop_back();
    h.push_back(*it);
  }
  h.pop_back();
  return h.empty() ? std::vector<VectorXd>{p.front()} : h;
}

}  // namespace

VertexHull hull_add_points(const VertexHull& hull, const std::vector<VectorXd>& points,
                           double tol) {
  std::vector<VectorXd> cand = hull.vertices;
  for (const auto& pt : points) {
    require(pt.size() == hull.dim(), "hull_add_points: dimension mismatch");
    require(pt.allFinite(), "hull_add_points: entries must be finite");
    bool dup = false;
    for (const auto& c : cand)
      if ((c - pt).cwiseAbs().maxCoeff() <= 1e-12) {
        dup = true;
        break;
      }
    if (!dup) cand.push_back(pt);
  }
  if (cand.size() == 1) return VertexHull(cand);

  // Planar exact-tolerance regime: combinatorial extreme points.
  if (hull.dim() == 2 && tol <= 1e-11) return VertexHull(planar_extreme_points(cand));

  // A point is redundant iff it is a convex combination of the remaining ones.
  std::vector<bool> keep(cand.size(), true);
  for (std::size_t i = 0; i < cand.size(); ++i) {
    std::vector<VectorXd> rest;
    rest.reserve(cand.size() - 1);
    for (std::size_t j = 0; j < cand.size(); ++j)
      if (j != i && keep[j]) rest.push_back(cand[j]);
    if (rest.empty()) continue;
    HullWeights w = hull_membership_weights(VertexHull(rest), cand[i], tol);
    if (w.inside) keep[i] = false;
  }
  std::vector<VectorXd> kept;
  for (std::size_t i = 0; i < cand.size(); ++i)
    if (keep[i]) kept.push_back(cand[i]);
  if (kept.empty()) kept.push_back(cand.front());
  return VertexHull(kept);
}

SumDecomposition decompose_hull_ellipsoid(const VertexHull& hull, const Ellipsoid& omega,
                                          const VectorXd& x, double tol) {
  require(hull.dim() == omega.dim() && x.size() == hull.dim(),
          "decompose_hull_ellipsoid: dimension mismatch");
  SumDecomposition out;
  const int K = hull.count();
  if (K == 1) {
    out.z = hull.vertices[0];
    out.weights = VectorXd::Ones(1);
    VectorXd e = x - out.z;
    out.quad_form = e.dot(omega.P() * e);
    out.inside = out.quad_form <= 1.0 + tol;
    return out;
  }
  MatrixXd V = hull.matrix();
  qcqp::Problem p;
  p.Q = 2.0 * V.transpose() * omega.P() * V;
  p.q = -2.0 * V.transpose() * omega.P() * x;
  p.E = MatrixXd::Ones(1, K);
  p.d = VectorXd::Ones(1);
  p.G = -MatrixXd::Identity(K, K);
  p.h = VectorXd::Zero(K);
  qcqp::Solution s = qcqp::solve(p);
  if (!s.ok()) return out;  // cannot certify membership
  VectorXd lam = s.w.cwiseMax(0.0);
  lam /= lam.sum();
  polish_weights(V, x, omega.P(), lam);
  out.weights = lam;
  out.z = V * lam;
  VectorXd e = x - out.z;
  out.quad_form = e.dot(omega.P() * e);
  out.inside = out.quad_form <= 1.0 + tol;
  return out;
}

double hull_area_monte_carlo(const VertexHull& hull, int samples, std::uint64_t seed) {
  require(hull.dim() == 2, "hull_area_monte_carlo: 2-D hulls only");
  if (hull.count() == 1) return 0.0;
  VectorXd lo = hull.vertices[0], hi = hull.vertices[0];
  for (const auto& v : hull.vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const double box_area = (hi - lo).prod();
  if (box_area <= 0.0) return 0.0;

  // Order vertices around the centroid; membership by edge cross products.
  VectorXd c = VectorXd::Zero(2);
  for (const auto& v : hull.vertices) c += v;
  c /= hull.count();
  std::vector<Eigen::Vector2d> ring;
  ring.reserve(hull.count());
  for (const auto& v : hull.vertices) ring.emplace_back(v(0), v(1));
  std::sort(ring.begin(), ring.end(), [&](const auto& a, const auto& b) {
    return std::atan2(a.y() - c(1), a.x() - c(0)) < std::atan2(b.y() - c(1), b.x() - c(0));
  });
  auto inside = [&](double x, double y) {
    const std::size_t K = ring.size();
    for (std::size_t i = 0; i < K; ++i) {
      const auto& a = ring[i];
      const auto& b = ring[(i + 1) % K];
      double cross = (b.x() - a.x()) * (y - a.y()) - (b.y() - a.y()) * (x - a.x());
      if (cross < -1e-12) return false;
    }
    return true;
  };

  Rng rng(seed);
  int hits = 0;
  for (int i = 0; i < samples; ++i) {
    double x = rng.uniform(lo(0), hi(0));
    double y = rng.uniform(lo(1), hi(1));
    if (inside(x, y)) ++hits;
  }
  return box_area * static_cast<double>(hits) / samples;
}

}  // namespace mpsc
