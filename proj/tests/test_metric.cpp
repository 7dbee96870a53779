#include <doctest.h>

#include <cmath>
#include <numbers>

#include "finsler/engine.hpp"
#include "finsler/error.hpp"
#include "finsler/random.hpp"
#include "oracles.hpp"

using namespace finsler;

namespace {

Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }

// (|y| + 1)^2: positive but not homogeneous
struct ShiftedNorm : NormImpl<ShiftedNorm> {
  int dimension() const override { return 2; }
  template <class T>
  T eval(std::span<const T>, std::span<const T> y) const {
    using std::sqrt;
    using finsler::sqrt;
    const T f = sqrt(y[0] * y[0] + y[1] * y[1]) + 1.0;
    return f * f;
  }
};

FinslerMetric shifted_metric() {
  MetricSpec s;
  s.family = Family::custom;
  s.dimension = 2;
  s.label = "shifted";
  return FinslerMetric(s, std::make_shared<ShiftedNorm>(), {{-1, 1}, {-1, 1}});
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::ConfigError;
}

}  // namespace

TEST_CASE("eval_F examples") {
  CHECK(eval_F(catalog_instantiate(euclidean_spec(2)), v2(0, 0), v2(3, 4)) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(eval_F(catalog_instantiate(minkowski_quartic_spec(0.1)), v2(0, 0), v2(1, 0)) ==
        doctest::Approx(std::sqrt(1.1)).epsilon(1e-15));
  const auto randers = catalog_instantiate(randers_spec(euclidean_spec(2), BetaSpec{{0.3, 0.0}, {}}));
  CHECK(eval_F(randers, v2(0.2, -0.4), v2(1, 0)) == doctest::Approx(1.3).epsilon(1e-15));
  // sphere: F^2 = r^2 (dtheta^2 + sin^2 theta dphi^2)
  const auto sphere = catalog_instantiate(sphere_spec(2.0));
  CHECK(eval_F(sphere, v2(0.7, 1.0), v2(0.3, 1.0)) ==
        doctest::Approx(2.0 * std::hypot(0.3, std::sin(0.7))).epsilon(1e-14));
}

TEST_CASE("eval_F errors") {
  const auto m = catalog_instantiate(euclidean_spec(2));
  CHECK(code_of([&] { eval_F(m, v2(0, 0), v2(1e-9, 0)); }) == ErrorCode::ZeroVector);
  CHECK(code_of([&] { eval_F(m, v2(11, 0), v2(1, 0)); }) == ErrorCode::OutOfChart);
  CHECK(code_of([&] { eval_F(m, Vec::Zero(3), Vec::Ones(3)); }) == ErrorCode::DimensionMismatch);
  const auto sphere = catalog_instantiate(sphere_spec(1.0));
  CHECK(code_of([&] { eval_F(sphere, v2(0.01, 0), v2(1, 0)); }) == ErrorCode::OutOfChart);
}

TEST_CASE("homogeneity reports") {
  for (const auto& m : oracle::catalog()) {
    const auto r = check_homogeneity(m, 200, 17);
    CHECK_MESSAGE(r.passed, m.id());
    CHECK(r.max_error < 1e-10);
  }
  CHECK(check_homogeneity(catalog_instantiate(euclidean_spec(3)), 50, 3).max_error < 1e-12);
  const auto broken = check_homogeneity(shifted_metric(), 20, 5);
  CHECK_FALSE(broken.passed);
  CHECK(broken.max_error > 0.1);
}

TEST_CASE("strong convexity") {
  const auto e = check_strong_convexity(catalog_instantiate(euclidean_spec(2)), v2(0, 0), v2(0.3, 1));
  CHECK(e.passed);
  CHECK(e.min_eigenvalue == doctest::Approx(1.0).epsilon(1e-14));

  // eigenvalues of an independent finite-difference Hessian of F^2 / 2
  const Vec y = v2(1, 1) / std::sqrt(2.0);
  auto half_f2 = [](const Vec& v) {
    return 0.5 * (v.squaredNorm() + 0.1 * std::sqrt(std::pow(v[0], 4) + std::pow(v[1], 4)));
  };
  const Mat H = oracle::fd_hessian(half_f2, y, 1e-3);
  const double oracle_min = Eigen::SelfAdjointEigenSolver<Mat>(H).eigenvalues().minCoeff();
  const auto q = check_strong_convexity(catalog_instantiate(minkowski_quartic_spec(0.1)), v2(0, 0), y);
  CHECK(q.passed);
  CHECK(oracle_min > 0.0);
  CHECK(q.min_eigenvalue == doctest::Approx(oracle_min).epsilon(1e-7));

  // the pure quartic has a zero Hessian eigenvalue on the axes
  const Mat Hp = oracle::fd_hessian([](const Vec& v) { return 0.5 * std::hypot(v[0] * v[0], v[1] * v[1]); }, v2(1, 0), 1e-3);
  CHECK(std::abs(Eigen::SelfAdjointEigenSolver<Mat>(Hp).eigenvalues().minCoeff()) < 1e-6);
  const auto p = check_strong_convexity(oracle::pure_quartic_metric(), v2(0, 0), v2(1, 0));
  CHECK_FALSE(p.passed);
}

TEST_CASE("product metrics") {
  const auto e2 = catalog_instantiate(euclidean_spec(2)), e1 = catalog_instantiate(euclidean_spec(1));
  const auto e3 = catalog_instantiate(euclidean_spec(3));
  const auto prod = make_product_metric({e2, e1});
  CHECK(prod.dimension() == 3);
  Rng rng(4);
  for (int k = 0; k < 50; ++k) {
    const Vec x = sample_point(prod.chart(), rng), y = rng.normal_vector(3);
    CHECK(prod.F(x, y) == doctest::Approx(e3.F(x, y)).epsilon(1e-15));
  }

  const auto sphere = catalog_instantiate(sphere_spec(1.0));
  const auto quartic = catalog_instantiate(minkowski_quartic_spec(0.1));
  const auto sq = make_product_metric({sphere, quartic});
  CHECK(sq.dimension() == 4);
  CHECK(sq.factor_dims() == std::vector<int>{2, 2});
  const Vec x = (Vec(4) << 1.0, 0.5, 0.2, -0.3).finished();
  // a vanishing block contributes nothing
  const Vec y1 = (Vec(4) << 0.4, -1.0, 0.0, 0.0).finished();
  CHECK(sq.F(x, y1) == sphere.F(x.head(2), y1.head(2)));
  const Vec y2 = (Vec(4) << 0.0, 0.0, 0.7, 0.2).finished();
  CHECK(sq.F(x, y2) == quartic.F(x.tail(2), y2.tail(2)));
  const Vec y = (Vec(4) << 0.4, -1.0, 0.7, 0.2).finished();
  CHECK(sq.F(x, y) == doctest::Approx(std::hypot(sphere.F(x.head(2), y.head(2)), quartic.F(x.tail(2), y.tail(2))))
                          .epsilon(1e-15));

  CHECK(code_of([&] { make_product_metric({e2}); }) == ErrorCode::SpecValidation);
  const auto spec_prod = catalog_instantiate(product_spec({sphere_spec(1.0), minkowski_quartic_spec(0.1)}));
  CHECK(spec_prod.F(x, y) == doctest::Approx(sq.F(x, y)).epsilon(1e-15));
}

TEST_CASE("catalog instantiation") {
  const auto sphere = catalog_instantiate(sphere_spec(1.0));
  CHECK(sphere.chart()[0].lo == doctest::Approx(0.05));
  CHECK(sphere.chart()[0].hi == doctest::Approx(std::numbers::pi - 0.05));
  CHECK(sphere.periods()[1] == doctest::Approx(2 * std::numbers::pi));

  CHECK(oracle::non_berwald_randers().dimension() == 2);

  CHECK(code_of([] { catalog_instantiate(randers_spec(euclidean_spec(2), BetaSpec{{1.2, 0.0}, {}})); }) ==
        ErrorCode::SpecValidation);
  // |x^1| reaches 1.2 on this chart, so sup |beta| = 1.2
  auto wide = randers_spec(euclidean_spec(2), oracle::x1_dx2());
  wide.chart_domain = {{-1.2, 1.2}, {-1, 1}};
  CHECK(code_of([&] { catalog_instantiate(wide); }) == ErrorCode::SpecValidation);
  CHECK(code_of([] { catalog_instantiate(sphere_spec(-1.0)); }) == ErrorCode::SpecValidation);
  CHECK(code_of([] { catalog_instantiate(minkowski_quartic_spec(0.0)); }) == ErrorCode::SpecValidation);
  CHECK(code_of([] { catalog_instantiate(minkowski_quartic_spec(kQuarticEpsilonMax * 2)); }) ==
        ErrorCode::SpecValidation);
  CHECK(code_of([] { catalog_instantiate(euclidean_spec(0)); }) == ErrorCode::SpecValidation);
  auto polar = sphere_spec(1.0);
  polar.chart_domain = {{0.0, 1.0}, {0, 1}};
  CHECK(code_of([&] { catalog_instantiate(polar); }) == ErrorCode::SpecValidation);
}

TEST_CASE("engine validation") {
  JetEngine e;
  e.fd_step = 0.0;
  CHECK(code_of([&] { e.validate(); }) == ErrorCode::ConfigError);
  e.fd_step = 1e-3;
  e.max_order = 2;
  CHECK(code_of([&] { e.validate(); }) == ErrorCode::ConfigError);
  CHECK(code_of([] { parse_diff_mode("symbolic"); }) == ErrorCode::ConfigError);
}
