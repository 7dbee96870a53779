#include <doctest.h>

#include <cmath>
#include <numbers>

#include "finsler/bonnet.hpp"
#include "finsler/error.hpp"

using namespace finsler;

namespace {

BonnetBudget small_budget() {
  BonnetBudget b;
  b.pairs = 30;
  b.directions = 64;
  b.curvature_flags = 64;
  return b;
}

}  // namespace

TEST_CASE("sphere diameters sit at the Bonnet bound") {
  constexpr double pi = std::numbers::pi;
  for (double r : {1.0, 2.0}) {
    const auto rep = bonnet_diameter_check(catalog_instantiate(sphere_spec(r)), small_budget(), {}, 5);
    INFO("r = ", r, " estimate ", rep.estimate);
    CHECK(rep.hypothesis);
    CHECK(rep.H == doctest::Approx(1.0 / (r * r)).epsilon(1e-9));
    CHECK(rep.estimate >= r * (pi - 0.02));
    CHECK(rep.estimate <= r * (pi + 0.001));
    CHECK(rep.passed);
    // the maximizing pair is antipodal
    const Vec d = rep.p - rep.q;
    CHECK(std::abs(rep.p[0] + rep.q[0] - pi) < 0.02);
    CHECK(std::abs(std::abs(std::remainder(d[1], 2 * pi)) - pi) < 0.05);
  }
}

TEST_CASE("flat metrics lack the Bonnet hypothesis") {
  const auto e = bonnet_diameter_check(catalog_instantiate(euclidean_spec(2)), small_budget(), {}, 1);
  CHECK_FALSE(e.hypothesis);
  CHECK(e.note == "unbounded family; Bonnet hypothesis absent");
  CHECK(e.passed);
  const auto q = bonnet_diameter_check(catalog_instantiate(minkowski_quartic_spec(0.1)), small_budget(), {}, 1);
  CHECK_FALSE(q.hypothesis);
  BonnetBudget bad = small_budget();
  bad.directions = 2;
  CHECK_THROWS_AS(bonnet_diameter_check(catalog_instantiate(sphere_spec(1.0)), bad, {}, 1), Error);
}
