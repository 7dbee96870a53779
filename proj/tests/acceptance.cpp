// Acceptance run: one pass/fail line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>

#include "finsler/berwald.hpp"
#include "finsler/bonnet.hpp"
#include "finsler/curvature.hpp"
#include "finsler/error.hpp"
#include "finsler/harness.hpp"
#include "oracles.hpp"
#include "sphere_paths.hpp"

using namespace finsler;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }

// unit-sphere flag curvature must be 1/r^2 regardless of the flag
Outcome constant_curvature() {
  double worst = 0.0;
  for (double r : {1.0, 2.0}) {
    const auto m = catalog_instantiate(sphere_spec(r));
    const auto scan = scan_flags(m, inset(m.chart(), 0.05), ScanGrid{1000, 16}, 2000 + static_cast<int>(r));
    const double K = 1.0 / (r * r);
    for (const auto& rec : scan.records) worst = std::max(worst, std::abs(rec.K - K) / K);
    if (scan.samples != 1000) return {false, "scan returned too few flags"};
  }
  return {worst < 1e-6, fmt("max relative |K - 1/r^2| = %.3g over 2 x 1000 flags (tol 1e-6)", worst)};
}

Outcome flat_identities() {
  const auto m = catalog_instantiate(euclidean_spec(3));
  Rng rng(1001);
  double worst = 0.0;
  for (int s = 0; s < 100; ++s) {
    const Vec x = sample_point(m.chart(), rng), y = rng.normal_vector(3), V = rng.normal_vector(3);
    const auto geo = local_geometry(m, x, y, {}, GeometryLevel::curvature);
    worst = std::max({worst, geo.gamma.max_abs(), geo.spray.cwiseAbs().maxCoeff(), geo.hh.max_abs(),
                      geo.spray_riemann.cwiseAbs().maxCoeff(), std::abs(flag_curvature(geo, V).K)});
  }
  return {worst < 1e-8, fmt("max |Gamma|, |G|, |R|, |K| = %.3g at 100 seeded (x, y, V) (tol 1e-8)", worst)};
}

Outcome locally_minkowski() {
  const auto m = catalog_instantiate(minkowski_quartic_spec(0.1));
  const auto b = is_berwald(m, 8, 8, 1e-8, 3001);
  const auto r = is_riemannian(m, 8, kRiemannTolerance, 3002);
  const auto scan = scan_flags(m, inset(m.chart(), 0.05), ScanGrid{1000, 16}, 3003);
  const double maxK = std::max(std::abs(scan.min_K), std::abs(scan.max_K));
  const bool ok = b.berwald && b.max_deviation < 1e-8 && !r.riemannian && r.max_cartan > 1e-3 && maxK < 1e-6;
  return {ok, fmt("Gamma deviation %.3g (<1e-8), Cartan witness %.3g (>1e-3), max |K| %.3g over 1000 flags (<1e-6)",
                  b.max_deviation, r.max_cartan, maxK)};
}

Outcome rigidity_with_witness(const FinslerMetric& m, std::uint64_t seed, bool need_mixed, bool need_non_riemannian) {
  const auto v = verify_rigidity(m, {}, RigidityBudget{}, RigidityTolerances{}, seed);
  if (!v.witness) return {false, "no vanishing flag found; verdict " + to_string(v.consistency)};
  // recompute K and the block structure independently of the search
  const double K = flag_curvature(m, v.witness->flag).K;
  const bool mixed = is_mixed_flag(m, v.witness->flag.y, v.witness->flag.V);
  bool ok = v.consistency == Consistency::consistent_with_theorem && std::abs(K) < 1e-6 && v.is_berwald;
  if (need_mixed) ok = ok && mixed;
  if (need_non_riemannian) ok = ok && !v.is_riemannian;
  return {ok, fmt("%s, berwald=%d riemannian=%d, witness |K| = %.3g (<1e-6), mixed blocks=%d", to_string(v.consistency).c_str(),
                  v.is_berwald, v.is_riemannian, std::abs(K), mixed)};
}

Outcome randers_berwald() {
  const auto m = oracle::parallel_randers();
  const auto b = is_berwald(m, 8, 8, kBerwaldTolerance, 5001);
  const auto r = is_riemannian(m, 8, kRiemannTolerance, 5002);
  auto w = rigidity_with_witness(m, 5003, false, true);
  w.passed = w.passed && b.berwald && !r.riemannian;
  w.detail = fmt("is_berwald=%d (dev %.3g), is_riemannian=%d; ", b.berwald, b.max_deviation, r.riemannian) + w.detail;
  return w;
}

Outcome linearity_dichotomy() {
  double worst = 0.0;
  int entries = 0;
  std::string worst_id;
  for (const auto& m : oracle::catalog()) {
    if (!oracle::is_berwald_by_construction(m)) continue;
    ++entries;
    Rng rng(6000 + entries);
    for (int s = 0; s < 50; ++s) {
      const Curve c = oracle::random_curve(m, rng, s % 2 == 1);
      const auto rep = transport_linearity_test(m, c, 1, rng.next());
      if (rep.defect > worst) worst = rep.defect, worst_id = m.id();
    }
  }
  const auto nb = oracle::non_berwald_randers();
  Rng rng(6100);
  double best = 0.0;
  for (int s = 0; s < 20; ++s) best = std::max(best, transport_linearity_test(nb, oracle::random_curve(nb, rng, true), 1, rng.next()).defect);
  return {worst < 1e-6 && best > 1e-3,
          fmt("Berwald max defect %.3g over %d entries x 50 cases (<1e-6, worst %s); non-Berwald max defect %.3g over 20 loops (>1e-3)",
              worst, entries, worst_id.c_str(), best)};
}

Outcome norm_preservation() {
  double worst = 0.0;
  int metrics = 0;
  for (const auto& m : oracle::catalog()) {
    Rng rng(7000 + metrics++);
    for (int s = 0; s < 50; ++s) {
      const Curve c = oracle::random_curve(m, rng, s % 2 == 1);
      worst = std::max(worst, parallel_transport(m, c, rng.normal_vector(m.dimension())).max_drift);
    }
  }
  return {worst < 1e-6, fmt("max relative F drift %.3g over %d metrics x 50 cases (<1e-6)", worst, metrics)};
}

Outcome pipeline_cross_check() {
  const auto cat = oracle::catalog();
  Rng rng(8000);
  double worst = 0.0;
  for (int s = 0; s < 100; ++s) {
    const auto& m = cat[static_cast<std::size_t>(s) % cat.size()];
    const Vec x = sample_point(inset(m.chart(), 0.05), rng);
    Vec y = rng.normal_vector(m.dimension());
    const auto geo = local_geometry(m, x, y, {}, GeometryLevel::curvature);
    const Mat a = contract_hh(geo.hh, y), b = geo.spray_riemann;
    worst = std::max(worst, (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff()));
  }
  return {worst < 1e-6, fmt("max relative |y R y - R_spray| = %.3g at 100 seeded (metric, x, y) (<1e-6)", worst)};
}

Outcome binet_legendre() {
  double worst = 0.0;
  std::string detail;
  int k = 0;
  for (const auto& m : {catalog_instantiate(minkowski_quartic_spec(0.1)), oracle::parallel_randers()}) {
    const auto r = compare_chern_levicivita(m, inset(m.chart(), 0.05), 3, 1e-3, 1000000, 9000 + k++);
    worst = std::max(worst, r.max_deviation);
    detail += fmt("%s %.3g; ", m.id().c_str(), r.max_deviation);
  }
  return {worst < 1e-3, detail + "1e6 samples per point, 3 points each (<1e-3)"};
}

Outcome sphere_oracles() {
  const auto m = catalog_instantiate(sphere_spec(1.0));
  double worst = 0.0;
  for (double th : {kPi / 3, kPi / 2 - 0.2}) {
    const auto h = holonomy_loop(m, oracle::latitude_loop(th), Mat::Identity(2, 2));
    if (!h.rotation_angle) return {false, "no rotation angle"};
    const double want = 2 * kPi * std::cos(th);
    const double gap = std::min(std::abs(std::remainder(*h.rotation_angle - want, 2 * kPi)),
                                std::abs(std::remainder(*h.rotation_angle + want, 2 * kPi)));
    worst = std::max(worst, gap);
  }
  // the equator and a great circle inclined by 0.4 rad both close after 2 pi
  double period_gap = 0.0;
  {
    const auto s = integrate_geodesic(m, v2(kPi / 2, 0.0), v2(0.0, 1.0), 2 * kPi);
    period_gap = std::max({period_gap, std::abs(s.x.back()[0] - kPi / 2), std::abs(std::remainder(s.x.back()[1], 2 * kPi))});
    const Vec y = v2(std::sin(0.4), std::cos(0.4));
    const auto t = integrate_geodesic(m, v2(kPi / 2, 0.0), y, 2 * kPi);
    if (t.status != GeodesicStatus::completed) return {false, "tilted great circle left the chart"};
    period_gap = std::max({period_gap, std::abs(t.x.back()[0] - kPi / 2), std::abs(std::remainder(t.x.back()[1], 2 * kPi))});
  }
  return {worst < 1e-4 && period_gap < 1e-4,
          fmt("holonomy angle gap %.3g at theta in {pi/3, pi/2-0.2} (<1e-4); geodesic period gap %.3g (<1e-4)", worst,
              period_gap)};
}

Outcome bonnet() {
  std::string detail;
  bool ok = true;
  for (double r : {1.0, 2.0}) {
    const auto m = catalog_instantiate(sphere_spec(r));
    const auto rep = bonnet_diameter_check(m, BonnetBudget{}, BonnetTolerances{}, 11000 + static_cast<int>(r));
    // band [r(pi - 0.02), r(pi + 0.001)]
    const bool in = rep.estimate >= r * (kPi - 0.02) && rep.estimate <= r * (kPi + 0.001);
    ok = ok && in && rep.hypothesis;
    detail += fmt("sphere(%g) estimate %.9f in [%.6f, %.6f]; ", r, rep.estimate, r * (kPi - 0.02), r * (kPi + 0.001));
  }
  return {ok, detail + "200 pairs x 256 directions"};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const fs::path cfg = fs::path(FINSLER_CONFIG_DIR) / "acceptance_suite.json";
  const auto suite = harness::load_json_file(cfg);
  const fs::path root = fs::temp_directory_path() / "finsler_acceptance_determinism";
  fs::remove_all(root);
  std::vector<harness::RunManifest> runs;
  for (int workers : {1, 2}) {
    harness::RunOptions o;
    o.workers = workers;
    o.format = harness::OutputFormat::both;
    o.out_dir = root / ("w" + std::to_string(workers));
    runs.push_back(harness::run_suite(suite, cfg.parent_path(), o));
  }
  int compared = 0, differing = 0;
  for (const auto& e : fs::directory_iterator(root / "w1")) {
    const auto name = e.path().filename();
    if (name == "manifest.json") continue;
    ++compared;
    if (slurp(e.path()) != slurp(root / "w2" / name)) ++differing;
  }
  const bool all_pass = runs[0].exit_code == 0 && runs[1].exit_code == 0;
  return {differing == 0 && compared > 0 && all_pass,
          fmt("%d report files compared between 1 and 2 workers, %d differ; suite exit codes %d/%d", compared, differing,
              runs[0].exit_code, runs[1].exit_code)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"flat identities", flat_identities},
      {"constant curvature", constant_curvature},
      {"locally Minkowski", locally_minkowski},
      {"rigidity, product case",
       [] { return rigidity_with_witness(catalog_instantiate(product_spec({sphere_spec(1.0), minkowski_quartic_spec(0.1)})), 4001, true, true); }},
      {"rigidity, Randers-Berwald", randers_berwald},
      {"linearity dichotomy", linearity_dichotomy},
      {"norm preservation", norm_preservation},
      {"pipeline cross-check", pipeline_cross_check},
      {"Binet-Legendre coincidence", binet_legendre},
      {"sphere holonomy and period", sphere_oracles},
      {"Bonnet diameter", bonnet},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("raised ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !o.passed;
    std::printf("criterion %2zu %-28s %s  %s (%.1f s)\n", i + 1, criteria[i].first.c_str(), o.passed ? "PASS" : "FAIL",
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
