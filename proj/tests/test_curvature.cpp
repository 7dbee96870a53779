#include <doctest.h>

#include <cmath>

#include "finsler/curvature.hpp"
#include "finsler/error.hpp"
#include "finsler/random.hpp"
#include "oracles.hpp"

using namespace finsler;

namespace {

Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }

// Riemann tensor of a round sphere of radius r: R_j^i_kl = (delta^i_k g_jl - delta^i_l g_jk) / r^2
Tensor4 sphere_riemann(double r, double theta) {
  Mat g(2, 2);
  g << r * r, 0, 0, r * r * std::sin(theta) * std::sin(theta);
  Tensor4 R(2);
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 2; ++i)
      for (int k = 0; k < 2; ++k)
        for (int l = 0; l < 2; ++l) R(j, i, k, l) = ((i == k) * g(j, l) - (i == l) * g(j, k)) / (r * r);
  return R;
}

}  // namespace

TEST_CASE("hh curvature examples") {
  CHECK(hh_curvature_chern(catalog_instantiate(euclidean_spec(3)), Vec::Zero(3), Vec::Ones(3)).R.max_abs() < 1e-12);
  CHECK(hh_curvature_chern(catalog_instantiate(minkowski_quartic_spec(0.1)), v2(1, -2), v2(0.4, 0.9)).R.max_abs() <
        1e-8);
  for (double r : {1.0, 2.0}) {
    const auto m = catalog_instantiate(sphere_spec(r));
    for (double th : {0.5, 1.3, 2.6}) {
      const auto hh = hh_curvature_chern(m, v2(th, 0.3), v2(0.7, -0.4)).R;
      const Tensor4 expect = sphere_riemann(r, th);
      CHECK(hh.max_abs_diff(expect) <= 1e-6 * expect.max_abs());
    }
  }
}

TEST_CASE("spray Riemann curvature examples") {
  const auto sphere = catalog_instantiate(sphere_spec(1.0));
  const double th = 1.1;
  const Vec x = v2(th, 0.2);
  Vec y = v2(0.6, 1.3);
  Mat g(2, 2);
  g << 1, 0, 0, std::sin(th) * std::sin(th);
  y /= std::sqrt(y.dot(g * y));
  const Mat R = riemann_curvature_spray(sphere, x, y);
  // R^i_k = F^2 delta^i_k - y^i y_k for curvature 1
  const Vec ylow = g * y;
  const Mat expect = Mat::Identity(2, 2) - y * ylow.transpose();
  CHECK((R - expect).cwiseAbs().maxCoeff() < 1e-10);
  Eigen::EigenSolver<Mat> es(R);
  const auto ev = es.eigenvalues().real();
  CHECK(std::min(std::abs(ev[0]), std::abs(ev[1])) < 1e-10);
  CHECK(std::max(ev[0], ev[1]) == doctest::Approx(1.0).epsilon(1e-10));

  CHECK(riemann_curvature_spray(catalog_instantiate(minkowski_quartic_spec(0.1)), v2(0, 0), v2(1, 2))
            .cwiseAbs()
            .maxCoeff() < 1e-12);
  CHECK(riemann_curvature_spray(catalog_instantiate(euclidean_spec(2)), v2(0, 0), v2(1, 2)).cwiseAbs().maxCoeff() <
        1e-12);
}

TEST_CASE("the two curvature pipelines agree across the catalog") {
  Rng rng(101);
  for (const auto& m : oracle::catalog()) {
    for (int s = 0; s < 10; ++s) {
      const Vec x = sample_point(inset(m.chart(), 0.05), rng);
      const Vec y = rng.normal_vector(m.dimension());
      const auto geo = local_geometry(m, x, y, {}, GeometryLevel::curvature);
      const Mat a = contract_hh(geo.hh, y);
      const Mat& b = geo.spray_riemann;
      const double scale = std::max(b.cwiseAbs().maxCoeff(), 1e-4 * geo.F2);
      CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-6 * scale);
      CHECK((b * y).norm() <= 1e-7 * std::max(1.0, geo.F2 * y.norm()));
      // antisymmetry in the last pair
      const int n = m.dimension();
      double worst = 0.0;
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
          for (int k = 0; k < n; ++k)
            for (int l = 0; l < n; ++l) worst = std::max(worst, std::abs(geo.hh(j, i, k, l) + geo.hh(j, i, l, k)));
      CHECK(worst < 1e-8);
    }
  }
}

TEST_CASE("flag curvature values and invariances") {
  Rng rng(17);
  const auto s1 = catalog_instantiate(sphere_spec(1.0));
  const auto s2 = catalog_instantiate(sphere_spec(2.0));
  for (int t = 0; t < 20; ++t) {
    const Flag f{sample_point(inset(s1.chart(), 0.05), rng), rng.normal_vector(2), rng.normal_vector(2)};
    CHECK(flag_curvature(s1, f).K == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(flag_curvature(s2, f).K == doctest::Approx(0.25).epsilon(1e-6));
  }
  for (const auto& m : oracle::catalog()) {
    const int n = m.dimension();
    for (int t = 0; t < 5; ++t) {
      const Flag f{sample_point(inset(m.chart(), 0.05), rng), rng.normal_vector(n), rng.normal_vector(n)};
      const double K = flag_curvature(m, f).K;
      const double scale = std::max(std::abs(K), 1e-6);
      CHECK(std::abs(flag_curvature(m, {f.x, 2.0 * f.y, f.V}).K - K) <= 1e-8 * scale);
      CHECK(std::abs(flag_curvature(m, {f.x, f.y, f.V + 0.7 * f.y}).K - K) <= 1e-8 * scale);
      if (oracle::is_riemannian_by_construction(m)) {
        CHECK(std::abs(flag_curvature(m, {f.x, f.V, f.y}).K - K) <= 1e-7 * scale);
      }
    }
  }
}

TEST_CASE("mixed flags of a product have zero curvature") {
  const auto prod = catalog_instantiate(product_spec({sphere_spec(1.0), minkowski_quartic_spec(0.1)}));
  const Vec x = (Vec(4) << 1.0, 0.5, 0.2, -0.3).finished();
  const Vec ys = (Vec(4) << 0.3, 1.0, 0.0, 0.0).finished();
  const Vec yq = (Vec(4) << 0.0, 0.0, 0.8, -0.5).finished();
  CHECK(std::abs(flag_curvature(prod, {x, yq, ys}).K) < 1e-6);
  CHECK(is_mixed_flag(prod, yq, ys));
  CHECK_FALSE(is_mixed_flag(prod, ys, ys + yq));
  // a pole with a vanishing quartic block sits where the product norm is not smooth
  CHECK_THROWS_AS(flag_curvature(prod, {x, ys, yq}), Error);
}

TEST_CASE("degenerate flags are rejected") {
  const auto m = catalog_instantiate(sphere_spec(1.0));
  CHECK_THROWS_AS(flag_curvature(m, {v2(1, 0), v2(1, 1), v2(2, 2)}), Error);
  try {
    flag_curvature(m, {v2(1, 0), v2(1, 1), v2(1, 1 + 1e-9)});
    FAIL("expected DegenerateFlag");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateFlag);
  }
}

TEST_CASE("flag scans") {
  const auto sphere = catalog_instantiate(sphere_spec(1.0));
  const auto r = scan_flags(sphere, inset(sphere.chart(), 0.02), {1000, 16}, 42);
  CHECK(r.min_K == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(r.max_K == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(r.samples == 1000);

  const auto quartic = catalog_instantiate(minkowski_quartic_spec(0.1));
  const auto q = scan_flags(quartic, {{-1, 1}, {-1, 1}}, {1000, 16}, 42);
  CHECK(q.min_abs_K < 1e-6);
  CHECK(std::max(std::abs(q.min_K), std::abs(q.max_K)) < 1e-6);

  const auto rnb = oracle::non_berwald_randers();
  const auto nb = scan_flags(rnb, inset(rnb.chart(), 0.05), {200, 8}, 3);
  CHECK(nb.max_K - nb.min_K > 1e-2);
  int nonempty = 0;
  for (int c : nb.bucket_counts) nonempty += c > 0;
  CHECK(nonempty >= 3);
  for (const auto& rec : nb.records) CHECK(nb.min_abs_K <= std::abs(rec.K));

  SUBCASE("worker count does not change the report") {
    const auto a = scan_flags(rnb, inset(rnb.chart(), 0.05), {50, 8}, 9, {}, 1);
    const auto b = scan_flags(rnb, inset(rnb.chart(), 0.05), {50, 8}, 9, {}, 3);
    CHECK(a.min_K == b.min_K);
    CHECK(a.max_K == b.max_K);
    CHECK(a.bucket_counts == b.bucket_counts);
    CHECK(a.argmin.V == b.argmin.V);
  }
  CHECK_THROWS_AS(scan_flags(sphere, {{0.0, 1.0}, {0.0, 1.0}}, {10, 4}, 1), Error);
}

TEST_CASE("vanishing flag search") {
  SUBCASE("product sphere x quartic returns a mixed flag") {
    const auto prod = catalog_instantiate(product_spec({sphere_spec(1.0), minkowski_quartic_spec(0.1)}));
    const auto res = find_vanishing_flag(prod, inset(prod.chart(), 0.05), {}, 5);
    CHECK(res.found);
    CHECK(res.mixed_blocks);
    CHECK(std::abs(res.best.K) < 1e-6);
    CHECK(std::abs(flag_curvature(prod, res.best.flag).K) < 1e-6);
  }
  SUBCASE("round sphere has none") {
    const auto s = catalog_instantiate(sphere_spec(1.0));
    FlagSearchBudget b;
    b.coarse_starts = 16;
    b.descent_steps = 20;
    const auto res = find_vanishing_flag(s, inset(s.chart(), 0.05), b, 5);
    CHECK_FALSE(res.found);
    CHECK(std::abs(res.best.K) == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("parallel randers on R x S^2") {
    const auto m = oracle::parallel_randers();
    const auto res = find_vanishing_flag(m, inset(m.chart(), 0.05), {}, 5);
    CHECK(res.found);
    const auto geo = local_geometry(m, res.best.flag.x, res.best.flag.y, {}, GeometryLevel::curvature);
    // the spray pipeline agrees that the witness vanishes
    const Vec V = res.best.flag.V;
    const double viaSpray = V.dot(geo.g * (geo.spray_riemann * V)) / res.best.gram;
    CHECK(std::abs(viaSpray) < 1e-6);
  }
}
