#include <doctest.h>

#include <cmath>
#include <numbers>

#include "finsler/error.hpp"
#include "finsler/random.hpp"
#include "finsler/transport.hpp"
#include "oracles.hpp"
#include "sphere_paths.hpp"

using namespace finsler;

namespace {

Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }

constexpr double kPi = std::numbers::pi;

// distance between two angles on the circle
double angle_gap(double a, double b) { return std::abs(std::remainder(a - b, 2 * kPi)); }

}  // namespace

TEST_CASE("Dormand-Prince integrator reproduces closed-form solutions") {
  // harmonic oscillator over ten periods
  Vec s = v2(1.0, 0.0);
  OdeStats st;
  auto rhs = [](double, const Vec& y) { return v2(y[1], -y[0]); };
  integrate_dopri5(rhs, 0.0, 20 * kPi, s, StepControl{}, st);
  CHECK(std::abs(s[0] - 1.0) < 1e-7);
  CHECK(std::abs(s[1]) < 1e-7);
  CHECK(st.steps > 0);
  // y' = -2 t y, y = exp(-t^2)
  Vec e = Vec::Ones(1);
  OdeStats st2;
  integrate_dopri5([](double t, const Vec& y) -> Vec { return -2.0 * t * y; }, 0.0, 2.0, e, StepControl{}, st2);
  CHECK(e[0] == doctest::Approx(std::exp(-4.0)).epsilon(1e-8));
  // early stop from the observer
  Vec z = Vec::Ones(1);
  OdeStats st3;
  const auto status = integrate_dopri5([](double, const Vec& y) -> Vec { return y; }, 0.0, 5.0, z, StepControl{}, st3,
                                       [](double t, const Vec&) { return t < 1.0; });
  CHECK(status == OdeStatus::stopped);
}

TEST_CASE("geodesic examples") {
  SUBCASE("euclidean straight line") {
    const auto m = catalog_instantiate(euclidean_spec(2));
    const auto sol = integrate_geodesic(m, v2(0.5, -1), v2(0.3, 0.7), 3.0);
    CHECK((sol.x.back() - (v2(0.5, -1) + 3.0 * v2(0.3, 0.7))).norm() < 1e-12);
  }
  SUBCASE("quartic straight line") {
    const auto m = catalog_instantiate(minkowski_quartic_spec(0.1));
    const auto sol = integrate_geodesic(m, v2(0.5, -1), v2(0.3, 0.7), 3.0);
    CHECK((sol.x.back() - (v2(0.5, -1) + 3.0 * v2(0.3, 0.7))).norm() < 1e-10);
  }
  SUBCASE("sphere great circles close after 2 pi") {
    const auto m = catalog_instantiate(sphere_spec(1.0));
    for (const Vec& y0 : {v2(0, 1), v2(0.6, 0.8)}) {
      const auto sol = integrate_geodesic(m, v2(kPi / 2, 0), y0, 2 * kPi);
      REQUIRE(sol.status == GeodesicStatus::completed);
      const Vec d = sol.x.back() - v2(kPi / 2, 0);
      CHECK(std::abs(d[0]) < 1e-4);
      CHECK(angle_gap(d[1], 0.0) < 1e-4);
      CHECK(sol.speed_drift < 1e-7);
    }
  }
  SUBCASE("chart exit is a status") {
    const auto m = catalog_instantiate(sphere_spec(1.0));
    const auto sol = integrate_geodesic(m, v2(kPi / 2, 0), v2(1, 0), 3.0);
    CHECK(sol.status == GeodesicStatus::chart_exit);
    CHECK(sol.t_end < 3.0);
    CHECK(m.in_chart(sol.x.back()));
  }
  SUBCASE("constant speed across the catalog") {
    Rng rng(8);
    for (const auto& m : oracle::catalog()) {
      const Vec x0 = sample_point(inset(m.chart(), 0.3), rng);
      const Vec y0 = rng.unit_vector(m.dimension());
      const auto sol = integrate_geodesic(m, x0, y0, 1.0);
      CHECK(sol.speed_drift < 1e-7);
    }
  }
}

TEST_CASE("covariant derivative examples") {
  const VectorField constant{[](double) { return v2(1, 2); }, [](double) { return v2(0, 0); }};
  Curve line;
  line.append(line_segment(v2(0.1, 0.2), v2(1.5, -0.3)));
  const auto flat = catalog_instantiate(euclidean_spec(2));
  CHECK(covariant_derivative(flat, line, constant, 0.4).norm() < 1e-14);
  const auto quartic = catalog_instantiate(minkowski_quartic_spec(0.1));
  CHECK(covariant_derivative(quartic, line, constant, 0.4).norm() < 1e-14);

  const auto sphere = catalog_instantiate(sphere_spec(1.0));
  Curve equator;
  equator.append(line_segment(v2(kPi / 2, 0), v2(kPi / 2, 3)));
  const VectorField vel{[](double) { return v2(0, 3); }, {}};
  CHECK(covariant_derivative(sphere, equator, vel, 0.5).norm() < 1e-12);
  // off the equator the latitude circle is not a geodesic
  Curve lat = oracle::latitude_loop(1.0);
  const VectorField lat_vel{[](double) { return v2(0, 2 * kPi); }, {}};
  const Vec acc = covariant_derivative(sphere, lat, lat_vel, 0.5);
  // (D_T T)^theta = Gamma^theta_phiphi (T^phi)^2
  CHECK(acc[0] == doctest::Approx(-std::sin(1.0) * std::cos(1.0) * 4 * kPi * kPi).epsilon(1e-10));

  Curve two;
  two.append(line_segment(v2(0, 0), v2(1, 0)));
  two.append(line_segment(v2(1, 0), v2(1, 1)));
  CHECK_THROWS_AS(covariant_derivative(flat, two, constant, 1.0), Error);
  try {
    covariant_derivative(flat, two, constant, 1.0);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonSmoothPoint);
  }
}

TEST_CASE("parallel transport examples") {
  Curve path;
  path.append(line_segment(v2(0.1, 0.2), v2(1.5, -0.3)));
  path.append(chart_circle(v2(1.0, -0.3), 0.5, 0, 1, 0.75));
  const auto flat = catalog_instantiate(euclidean_spec(2));
  CHECK((parallel_transport(flat, path, v2(1, 2)).output - v2(1, 2)).norm() < 1e-12);
  const auto quartic = catalog_instantiate(minkowski_quartic_spec(0.1));
  CHECK((parallel_transport(quartic, path, v2(1, 2)).output - v2(1, 2)).norm() < 1e-12);

  const auto sphere = catalog_instantiate(sphere_spec(1.0));
  for (double th : {kPi / 3, kPi / 2 - 0.2}) {
    const auto rep = holonomy_loop(sphere, oracle::latitude_loop(th), Mat::Identity(2, 2));
    REQUIRE(rep.rotation_angle.has_value());
    CHECK(angle_gap(*rep.rotation_angle, -2 * kPi * std::cos(th)) < 1e-4);
    CHECK(rep.norm_defect < 1e-6);
    CHECK(*rep.orthogonality_defect < 1e-6);
  }
}

TEST_CASE("holonomy of loops") {
  const auto sphere = catalog_instantiate(sphere_spec(1.0));
  const Curve tri = oracle::right_angle_triangle();
  REQUIRE(is_closed(sphere, tri));
  const auto rep = holonomy_loop(sphere, tri, Mat::Identity(2, 2));
  CHECK(std::abs(std::abs(*rep.rotation_angle) - kPi / 2) < 1e-6);
  CHECK(rep.linearity_defect < 1e-8);

  const auto flat = catalog_instantiate(euclidean_spec(2));
  Curve circle;
  circle.append(chart_circle(v2(0.3, 0.1), 0.7, 0, 1));
  const auto id = holonomy_loop(flat, circle, Mat::Identity(2, 2));
  CHECK((id.map - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
  const auto quartic = catalog_instantiate(minkowski_quartic_spec(0.1));
  const auto idq = holonomy_loop(quartic, circle, Mat::Identity(2, 2));
  CHECK((idq.map - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);

  Curve open;
  open.append(line_segment(v2(0, 0), v2(1, 0)));
  CHECK_THROWS_AS(holonomy_loop(flat, open, Mat::Identity(2, 2)), Error);
}

TEST_CASE("norm preservation, step-size independence and reversal") {
  Rng rng(21);
  for (const auto& m : oracle::catalog()) {
    const int n = m.dimension();
    for (int k = 0; k < 3; ++k) {
      const Curve c = oracle::random_curve(m, rng, k % 2 == 1);
      const Vec v = rng.normal_vector(n);
      TransportOptions a, b;
      a.step_seed = 1;
      b.step_seed = 2;
      const auto ra = parallel_transport(m, c, v, a);
      const auto rb = parallel_transport(m, c, v, b);
      CHECK(ra.max_drift < 1e-6);
      CHECK((ra.output - rb.output).norm() <= 1e-8 * std::max(1.0, ra.output.norm()));
      if (oracle::is_berwald_by_construction(m)) {
        const auto back = parallel_transport(m, c.reversed(), ra.output);
        CHECK((back.output - v).norm() <= 1e-6 * v.norm());
      }
    }
  }
}

TEST_CASE("transport along geodesic segments") {
  const auto sphere = catalog_instantiate(sphere_spec(1.0));
  Curve g;
  g.append(geodesic_segment(sphere, v2(kPi / 2, 0), v2(0.6, 0.8), 1.0));
  // Riemannian transport along a geodesic keeps the angle with the velocity
  const auto rv = parallel_transport(sphere, g, v2(0.6, 0.8));
  const Vec Tend = g.velocity(1.0 - 1e-12);
  CHECK((rv.output - Tend).norm() < 1e-7);
}

TEST_CASE("linearity dichotomy") {
  Rng rng(4);
  const auto par = oracle::parallel_randers();
  const auto lin = transport_linearity_test(par, oracle::random_curve(par, rng, true), 3, 7);
  CHECK(lin.defect < 1e-6);
  const auto flat = catalog_instantiate(euclidean_spec(2));
  CHECK(transport_linearity_test(flat, oracle::random_curve(flat, rng, false), 3, 7).defect < 1e-12);

  const auto nb = oracle::non_berwald_randers();
  Curve loop;
  loop.append(chart_circle(v2(0.0, 0.0), 0.5, 0, 1));
  const auto rep = transport_linearity_test(nb, loop, 5, 7);
  CHECK(rep.defect > 1e-3);
  CHECK(rep.max_norm_drift < 1e-6);
}
