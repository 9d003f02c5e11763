#include <Eigen/Dense>

#include "doctest.h"
#include "mpsc/geometry.hpp"
#include "mpsc/rng.hpp"
#include "oracles.hpp"

using namespace mpsc;
using Eigen::MatrixXd;
using Eigen::Vector2d;
using Eigen::VectorXd;

namespace {

MatrixXd published_P() {
  MatrixXd P(2, 2);
  P << 53.95, 11.47, 11.47, 14.55;
  return P;
}

Polytope state_box() { return Polytope::box(Vector2d(-1, -0.4), Vector2d(1, 1)); }

LinearModel sv_model() {
  MatrixXd A(2, 2), B(2, 1);
  A << 1, 0.1, -0.23, 0.78;
  B << 0, 0.1;
  return LinearModel(A, B);
}

TubeGain sv_gain() {
  MatrixXd K(1, 2);
  K << -4.12, -5.32;
  return TubeGain(sv_model(), K);
}

VertexHull hull_of(std::initializer_list<Vector2d> pts) {
  std::vector<VectorXd> v;
  for (const auto& p : pts) v.push_back(p);
  return VertexHull(v);
}

}  // namespace

TEST_SUITE("geometry") {
  TEST_CASE("ellipsoid construction validates the shape matrix") {
    CHECK_THROWS_AS(Ellipsoid(MatrixXd::Zero(2, 2)), std::invalid_argument);
    MatrixXd bad(2, 2);
    bad << 1, 0.5, 0.2, 1;  // not symmetric
    CHECK_THROWS_AS(Ellipsoid{bad}, std::invalid_argument);
    MatrixXd indef(2, 2);
    indef << 1, 0, 0, -1;
    CHECK_THROWS_AS(Ellipsoid{indef}, std::invalid_argument);
    CHECK_NOTHROW(Ellipsoid(published_P()));
  }

  TEST_CASE("support function closed form and examples") {
    Ellipsoid unit(MatrixXd::Identity(2, 2));
    CHECK(unit.support(Vector2d(1, 0)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(unit.support(Vector2d(0, 0)) == 0.0);

    Ellipsoid half(4.0 * MatrixXd::Identity(2, 2));
    CHECK(half.support(Vector2d(1, 0)) == doctest::Approx(0.5).epsilon(1e-12));

    Ellipsoid om(published_P());
    MatrixXd Pinv = published_P().inverse();
    CHECK(om.support(Vector2d(0, 1)) ==
          doctest::Approx(std::sqrt(Pinv(1, 1))).epsilon(1e-10));
  }

  TEST_CASE("support matches the boundary-sampling oracle") {
    Ellipsoid om(published_P());
    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
      Vector2d a(rng.uniform(-1, 1), rng.uniform(-1, 1));
      if (a.norm() < 1e-3) continue;
      double sampled = oracle::support_sampling(published_P(), a, 100000);
      double exact = om.support(a);
      CHECK(std::abs(sampled - exact) <= 1e-3 * std::max(1e-6, std::abs(exact)));
    }
  }

  TEST_CASE("tighten_state per-facet margins") {
    Polytope face(MatrixXd::Identity(1, 2).eval(), VectorXd::Ones(1));
    SUBCASE("unit ball shifts by one") {
      auto r = tighten_state(Polytope(MatrixXd::Identity(2, 2), VectorXd::Ones(2)),
                             Ellipsoid(MatrixXd::Identity(2, 2)));
      CHECK(r.poly.b(0) == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("published shape on the x1 facet") {
      auto r = tighten_state(state_box(), Ellipsoid(published_P()));
      CHECK(r.poly.b(0) == doctest::Approx(0.85077).epsilon(1e-4));
      CHECK(r.status == TightenStatus::ok);
    }
    SUBCASE("vanishing set recovers the polytope") {
      auto r = tighten_state(state_box(), Ellipsoid(1e12 * MatrixXd::Identity(2, 2)));
      CHECK((r.poly.b - state_box().b).lpNorm<Eigen::Infinity>() <= 2e-6);
    }
  }

  TEST_CASE("tighten_input margins") {
    Polytope ubox = Polytope::box(VectorXd::Constant(1, -2.5), VectorXd::Constant(1, 2.5));
    SUBCASE("zero gain consumes nothing") {
      MatrixXd K0 = MatrixXd::Zero(1, 2);
      TubeGain g0(sv_model(), K0);
      auto r = tighten_input(ubox, g0, Ellipsoid(published_P()));
      CHECK((r.poly.b - ubox.b).lpNorm<Eigen::Infinity>() == 0.0);
    }
    SUBCASE("published values against the sampling oracle") {
      TubeGain g = sv_gain();
      auto r = tighten_input(ubox, g, Ellipsoid(published_P()));
      double margin = 2.5 - r.poly.b(0);
      double sampled = oracle::support_sampling(published_P(), g.K.row(0).transpose(), 100000);
      CHECK(margin == doctest::Approx(sampled).epsilon(1e-3));
      CHECK(r.status == TightenStatus::ok);
    }
    SUBCASE("margin equal to the bound flags a degenerate interior") {
      MatrixXd A0 = MatrixXd::Zero(2, 2);
      MatrixXd B0 = MatrixXd::Zero(2, 1);
      MatrixXd K(1, 2);
      K << 1, 0;
      TubeGain g(LinearModel(A0, B0), K);
      Polytope u1 = Polytope::box(VectorXd::Constant(1, -1.0), VectorXd::Constant(1, 1.0));
      auto r = tighten_input(u1, g, Ellipsoid(MatrixXd::Identity(2, 2)));
      CHECK(r.status == TightenStatus::empty_interior);
    }
    SUBCASE("margin beyond the bound flags empty") {
      MatrixXd A0 = MatrixXd::Zero(2, 2);
      MatrixXd B0 = MatrixXd::Zero(2, 1);
      MatrixXd K(1, 2);
      K << 2, 0;
      TubeGain g(LinearModel(A0, B0), K);
      Polytope u1 = Polytope::box(VectorXd::Constant(1, -1.0), VectorXd::Constant(1, 1.0));
      auto r = tighten_input(u1, g, Ellipsoid(MatrixXd::Identity(2, 2)));
      CHECK(r.status == TightenStatus::empty);
    }
  }

  TEST_CASE("tighten then re-add stays inside the original set") {
    Ellipsoid om(published_P());
    Polytope X = state_box();
    auto r = tighten_state(X, om);
    REQUIRE(r.status == TightenStatus::ok);
    auto [lo, hi] = std::pair(Vector2d(-0.85, -0.11), Vector2d(0.85, 0.71));
    Rng rng(5);
    int checked = 0;
    for (int t = 0; t < 5000 && checked < 1000; ++t) {
      Vector2d z(rng.uniform(lo(0), hi(0)), rng.uniform(lo(1), hi(1)));
      if (!r.poly.contains(z, 0.0)) continue;
      double th = rng.uniform(0, 2 * M_PI);
      double rad = std::sqrt(rng.uniform01());
      Vector2d e = om.shape_map() * (rad * Vector2d(std::cos(th), std::sin(th)));
      CHECK(X.contains(z + e, 1e-9));
      ++checked;
    }
    CHECK(checked == 1000);
  }

  TEST_CASE("membership primitives") {
    Ellipsoid om(published_P());
    CHECK(ellipsoid_contains(om, Vector2d(0, 0), 0.0));
    CHECK_FALSE(ellipsoid_contains(om, Vector2d(0.2, 0), 0.0));  // form = 2.158
    // boundary point from the scaled shape map
    Vector2d e = om.shape_map() * Vector2d(std::cos(0.7), std::sin(0.7));
    CHECK(ellipsoid_contains(om, e, 1e-9));

    Polytope X = state_box();
    CHECK(polytope_contains(X, Vector2d(-0.7, 1.0), 0.0));
    CHECK_FALSE(polytope_contains(X, Vector2d(0, -0.41), 0.0));
    CHECK(polytope_contains(X, Vector2d(1, 1), 0.0));
  }

  TEST_CASE("hull membership weights examples") {
    SUBCASE("singleton") {
      auto hw = hull_membership_weights(hull_of({Vector2d(0, 0)}), Vector2d(0, 0));
      CHECK(hw.inside);
      CHECK(hw.weights(0) == 1.0);
    }
    SUBCASE("triangle interior point has unique weights") {
      auto hull = hull_of({Vector2d(0, 0), Vector2d(1, 0), Vector2d(0, 1)});
      auto hw = hull_membership_weights(hull, Vector2d(0.25, 0.25));
      REQUIRE(hw.inside);
      CHECK(hw.weights(0) == doctest::Approx(0.5).epsilon(1e-6));
      CHECK(hw.weights(1) == doctest::Approx(0.25).epsilon(1e-6));
      CHECK(hw.weights(2) == doctest::Approx(0.25).epsilon(1e-6));
      VectorXd recon = hull.matrix() * hw.weights;
      CHECK((recon - Vector2d(0.25, 0.25)).lpNorm<Eigen::Infinity>() <= 1e-9);
    }
    SUBCASE("outside verdict") {
      auto hull = hull_of({Vector2d(0, 0), Vector2d(1, 0), Vector2d(0, 1)});
      auto hw = hull_membership_weights(hull, Vector2d(1, 1));
      CHECK_FALSE(hw.inside);
    }
    SUBCASE("min-norm tie-break is deterministic") {
      // four collinear-redundant vertices: center reachable many ways
      auto hull = hull_of({Vector2d(-1, 0), Vector2d(1, 0), Vector2d(0, 1), Vector2d(0, -1)});
      auto a = hull_membership_weights(hull, Vector2d(0, 0));
      auto b = hull_membership_weights(hull, Vector2d(0, 0));
      REQUIRE(a.inside);
      CHECK((a.weights - b.weights).lpNorm<Eigen::Infinity>() == 0.0);
      // min-norm solution is the uniform combination here
      for (int i = 0; i < 4; ++i) CHECK(a.weights(i) == doctest::Approx(0.25).epsilon(1e-4));
    }
  }

  TEST_CASE("membership agrees with facet enumeration on random instances") {
    Rng rng(23);
    int disagreements = 0;
    for (int t = 0; t < 200; ++t) {
      const int K = 3 + static_cast<int>(rng.uniform_index(6));
      std::vector<VectorXd> pts;
      std::vector<Vector2d> pts2;
      for (int i = 0; i < K; ++i) {
        Vector2d p(rng.uniform(-1, 1), rng.uniform(-1, 1));
        pts.push_back(p);
        pts2.push_back(p);
      }
      VertexHull hull(pts);
      Vector2d q(rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2));
      auto hw = hull_membership_weights(hull, q, 1e-7);
      bool expect = oracle::inside_hull2d(oracle::hull2d(pts2), q, 1e-7);
      // skip knife-edge cases where both answers are defensible
      bool strict_in = oracle::inside_hull2d(oracle::hull2d(pts2), q, -1e-6);
      bool strict_out = !oracle::inside_hull2d(oracle::hull2d(pts2), q, 1e-6);
      if (strict_in || strict_out) {
        if (hw.inside != expect) ++disagreements;
      }
      if (hw.inside) {
        CHECK((hull.matrix() * hw.weights - q).lpNorm<Eigen::Infinity>() <= 1e-6);
        CHECK(hw.weights.minCoeff() >= -1e-9);
        CHECK(std::abs(hw.weights.sum() - 1.0) <= 1e-9);
      }
    }
    CHECK(disagreements == 0);
  }

  TEST_CASE("hull_add_points prunes and keeps the set") {
    SUBCASE("interior point is pruned") {
      auto hull = hull_of({Vector2d(0, 0), Vector2d(1, 0), Vector2d(0, 1)});
      auto grown = hull_add_points(hull, {Vector2d(0.2, 0.2)});
      CHECK(grown.count() == 3);
    }
    SUBCASE("growth from a point") {
      auto grown = hull_add_points(hull_of({Vector2d(0, 0)}),
                                   {Vector2d(1, 0), Vector2d(0, 1)});
      CHECK(grown.count() == 3);
    }
    SUBCASE("square plus a far point prunes the midpoint vertex") {
      auto square = hull_of({Vector2d(0, 0), Vector2d(1, 0), Vector2d(1, 1), Vector2d(0, 1)});
      auto grown = hull_add_points(square, {Vector2d(2, 0)});
      CHECK(grown.count() == 4);  // (1,0) = midpoint of (0,0)-(2,0) is pruned
      bool has_10 = false;
      for (const auto& v : grown.vertices)
        if ((v - Vector2d(1, 0)).lpNorm<Eigen::Infinity>() < 1e-12) has_10 = true;
      CHECK_FALSE(has_10);
    }
    SUBCASE("redundancy agrees with the brute-force facet oracle") {
      Rng rng(29);
      for (int t = 0; t < 60; ++t) {
        std::vector<VectorXd> pts;
        std::vector<Vector2d> pts2;
        for (int i = 0; i < 6; ++i) {
          Vector2d p(rng.uniform(-1, 1), rng.uniform(-1, 1));
          pts.push_back(p);
          pts2.push_back(p);
        }
        VertexHull grown = hull_add_points(VertexHull({pts[0]}),
                                           {pts.begin() + 1, pts.end()});
        for (std::size_t i = 0; i < pts.size(); ++i) {
          std::vector<Vector2d> others;
          for (std::size_t j = 0; j < pts.size(); ++j)
            if (j != i) others.push_back(pts2[j]);
          bool redundant = oracle::redundant_point2d(others, pts2[i], 1e-9);
          bool kept = false;
          for (const auto& v : grown.vertices)
            if ((v - pts[i]).lpNorm<Eigen::Infinity>() <= 1e-12) kept = true;
          if (redundant)
            CHECK_FALSE(kept);
          else
            CHECK(kept);
        }
      }
    }
    SUBCASE("idempotent") {
      auto hull = hull_of({Vector2d(0, 0), Vector2d(1, 0), Vector2d(0.5, 1)});
      auto again = hull_add_points(hull, hull.vertices);
      CHECK(again.count() == hull.count());
    }
    SUBCASE("pruning preserves membership verdicts") {
      Rng rng(31);
      std::vector<VectorXd> pts;
      for (int i = 0; i < 12; ++i)
        pts.push_back(Vector2d(rng.uniform(-1, 1), rng.uniform(-1, 1)));
      VertexHull pruned = hull_add_points(VertexHull({pts[0]}), {pts.begin() + 1, pts.end()});
      VertexHull raw(pts);  // unpruned vertex list, same convex set
      for (int t = 0; t < 1000; ++t) {
        Vector2d q(rng.uniform(-1.3, 1.3), rng.uniform(-1.3, 1.3));
        auto a = hull_membership_weights(raw, q, 1e-6);
        auto b = hull_membership_weights(pruned, q, 1e-6);
        // tolerance-adjusted agreement: disagree only inside a 2e-6 shell
        if (a.inside != b.inside) {
          auto a2 = hull_membership_weights(raw, q, 2e-6);
          auto b2 = hull_membership_weights(pruned, q, 2e-6);
          CHECK((a2.inside || b2.inside));
        }
      }
    }
  }

  TEST_CASE("decompose_hull_ellipsoid splits state into hull and tube parts") {
    Ellipsoid om(published_P());
    auto hull = hull_of({Vector2d(0, 0), Vector2d(0.3, 0), Vector2d(0, 0.3)});
    SUBCASE("hull point decomposes onto itself") {
      auto dec = decompose_hull_ellipsoid(hull, om, Vector2d(0.1, 0.1));
      REQUIRE(dec.inside);
      CHECK(dec.quad_form <= 1e-9);
      CHECK((dec.z - Vector2d(0.1, 0.1)).lpNorm<Eigen::Infinity>() <= 1e-6);
    }
    SUBCASE("point in the sum but outside the hull") {
      Vector2d e = om.shape_map() * Vector2d(0.9, 0);
      auto dec = decompose_hull_ellipsoid(hull, om, (Vector2d(0.3, 0) + e).eval());
      CHECK(dec.inside);
    }
    SUBCASE("far point is rejected") {
      auto dec = decompose_hull_ellipsoid(hull, om, Vector2d(3, 3));
      CHECK_FALSE(dec.inside);
    }
  }

  TEST_CASE("monte carlo area of known shapes") {
    auto square = hull_of({Vector2d(0, 0), Vector2d(1, 0), Vector2d(1, 1), Vector2d(0, 1)});
    double a = hull_area_monte_carlo(square, 200000, 99);
    CHECK(a == doctest::Approx(1.0).epsilon(0.01));
    auto tri = hull_of({Vector2d(0, 0), Vector2d(1, 0), Vector2d(0, 1)});
    CHECK(hull_area_monte_carlo(tri, 200000, 99) == doctest::Approx(0.5).epsilon(0.02));
    CHECK(hull_area_monte_carlo(hull_of({Vector2d(0.3, 0.4)}), 1000, 1) == 0.0);
  }
}
