#include "finsler/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

#include "finsler/berwald.hpp"
#include "finsler/bonnet.hpp"
#include "finsler/curvature.hpp"
#include "finsler/error.hpp"
#include "finsler/random.hpp"
#include "finsler/transport.hpp"

namespace finsler::harness {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void config_error(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::ConfigError, where + ": " + what);
}

// strict reader over one JSON object: typed access with field paths in every
// diagnostic and rejection of unknown keys
class Fields {
 public:
  Fields(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) config_error(where_, "expected an object");
  }

  std::string at(const std::string& key) const { return where_ + "/" + key; }
  bool has(const std::string& key) const {
    used_.insert(key);
    return j_.contains(key);
  }
  const Json& raw(const std::string& key) const {
    used_.insert(key);
    if (!j_.contains(key)) config_error(at(key), "required field missing");
    return j_.at(key);
  }

  double number(const std::string& key) const {
    const Json& v = raw(key);
    if (!v.is_number()) config_error(at(key), "expected a number");
    return v.get<double>();
  }
  double number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }
  double positive(const std::string& key, double fallback) const {
    const double v = number(key, fallback);
    if (!(v > 0.0)) config_error(at(key), "must be positive");
    return v;
  }

  long long integer(const std::string& key) const {
    const Json& v = raw(key);
    if (!v.is_number_integer()) config_error(at(key), "expected an integer");
    return v.get<long long>();
  }
  int count(const std::string& key, int fallback, int min = 1) const {
    if (!has(key)) return fallback;
    const long long v = integer(key);
    if (v < min || v > 100000000) config_error(at(key), "must be an integer in [" + std::to_string(min) + ", 1e8]");
    return static_cast<int>(v);
  }
  std::uint64_t seed(const std::string& key) const {
    const Json& v = raw(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
      config_error(at(key), "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }

  std::string text(const std::string& key) const {
    const Json& v = raw(key);
    if (!v.is_string()) config_error(at(key), "expected a string");
    return v.get<std::string>();
  }
  std::string text(const std::string& key, const std::string& fallback) const {
    return has(key) ? text(key) : fallback;
  }
  bool flag(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const Json& v = raw(key);
    if (!v.is_boolean()) config_error(at(key), "expected true or false");
    return v.get<bool>();
  }

  std::vector<double> numbers(const std::string& key) const {
    const Json& v = raw(key);
    if (!v.is_array()) config_error(at(key), "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) config_error(at(key) + "/" + std::to_string(i), "expected a number");
      out.push_back(v[i].get<double>());
    }
    return out;
  }
  Vec vec(const std::string& key) const {
    const auto v = numbers(key);
    return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) config_error(at(it.key()), "unknown field");
  }

 private:
  const Json& j_;
  std::string where_;
  mutable std::set<std::string> used_;
};

ChartDomain parse_domain(const Json& v, const std::string& where) {
  if (!v.is_array()) config_error(where, "expected an array of [lo, hi] pairs");
  ChartDomain d;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto& iv = v[i];
    const std::string w = where + "/" + std::to_string(i);
    if (!iv.is_array() || iv.size() != 2 || !iv[0].is_number() || !iv[1].is_number())
      config_error(w, "expected [lo, hi]");
    const double lo = iv[0].get<double>(), hi = iv[1].get<double>();
    if (!(lo < hi)) config_error(w, "needs lo < hi");
    d.push_back({lo, hi});
  }
  return d;
}

Json to_json(const Vec& v) {
  Json a = Json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}
Json to_json(const Mat& m) {
  Json a = Json::array();
  for (int i = 0; i < m.rows(); ++i) {
    Json r = Json::array();
    for (int j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    a.push_back(std::move(r));
  }
  return a;
}
Json to_json(const ChartDomain& d) {
  Json a = Json::array();
  for (const auto& iv : d) a.push_back(Json::array({iv.lo, iv.hi}));
  return a;
}
Json flag_json(const Flag& f) { return Json{{"x", to_json(f.x)}, {"y", to_json(f.y)}, {"V", to_json(f.V)}}; }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// named threshold comparisons collected into the report
class Checks {
 public:
  void add(const std::string& name, double value, const std::string& op, double threshold) {
    bool ok = false;
    if (op == "<") ok = value < threshold;
    else if (op == "<=") ok = value <= threshold;
    else if (op == ">") ok = value > threshold;
    else if (op == ">=") ok = value >= threshold;
    items_.push_back(Json{{"check", name}, {"value", value}, {"op", op}, {"threshold", threshold}, {"passed", ok}});
    failed_ = failed_ || !ok;
  }
  void equal(const std::string& name, const std::string& value, const std::string& expected) {
    const bool ok = value == expected;
    items_.push_back(Json{{"check", name}, {"value", value}, {"op", "=="}, {"threshold", expected}, {"passed", ok}});
    failed_ = failed_ || !ok;
  }
  void truth(const std::string& name, bool value, bool expected) {
    const bool ok = value == expected;
    items_.push_back(Json{{"check", name}, {"value", value}, {"op", "=="}, {"threshold", expected}, {"passed", ok}});
    failed_ = failed_ || !ok;
  }
  bool failed() const { return failed_; }
  std::string failed_names() const {
    std::string s;
    for (const auto& c : items_)
      if (!c["passed"].get<bool>()) s += (s.empty() ? "" : ", ") + c["check"].get<std::string>();
    return s;
  }
  Json json() const { return items_; }

 private:
  Json items_ = Json::array();
  bool failed_ = false;
};

struct Outcome {
  Json tolerances = Json::object();  // effective values, defaults included
  Json result = Json::object();
  Json witnesses = Json::array();
  std::string verdict;
  std::string csv;
  Checks checks;
};

Json engine_json(const JetEngine& e) {
  return Json{{"mode", to_string(e.mode)}, {"fd_step", e.fd_step}, {"max_order", e.max_order}};
}

ChartDomain effective_region(const FinslerMetric& m, const ExperimentConfig& c) {
  if (c.region.empty()) return inset(m.chart(), 0.05);
  if (static_cast<int>(c.region.size()) != m.dimension())
    config_error("region", "has " + std::to_string(c.region.size()) + " intervals for a metric of dimension " +
                               std::to_string(m.dimension()));
  for (std::size_t i = 0; i < c.region.size(); ++i)
    if (c.region[i].lo < m.chart()[i].lo || c.region[i].hi > m.chart()[i].hi)
      config_error("region/" + std::to_string(i), "lies outside the chart domain");
  return c.region;
}

// ---------------------------------------------------------------- scan

Outcome run_scan(const FinslerMetric& m, const ExperimentConfig& c, const RunOptions& o) {
  Fields b(c.budget, "budget");
  ScanGrid grid;
  grid.flags = b.count("flags", 1000);
  grid.buckets = b.count("buckets", 16);
  b.finish();
  Fields(c.tolerances, "tolerances").finish();
  const auto region = effective_region(m, c);
  const ScanReport r = scan_flags(m, region, grid, c.seed, c.engine, o.workers);
  Outcome out;
  out.tolerances = c.tolerances;
  out.result = Json{{"grid", r.grid},
                    {"region", to_json(r.region)},
                    {"samples", r.samples},
                    {"min_abs_K", r.min_abs_K},
                    {"min_K", r.min_K},
                    {"max_K", r.max_K},
                    {"histogram", Json{{"edges", r.bucket_edges}, {"counts", r.bucket_counts}}}};
  out.witnesses.push_back(Json{{"role", "argmin_abs_K"}, {"flag", flag_json(r.argmin)}, {"K", r.min_abs_K}});
  Fields e(c.expect, "expect");
  if (e.has("K_min_at_least")) out.checks.add("min_K", r.min_K, ">=", e.number("K_min_at_least"));
  if (e.has("K_max_at_most")) out.checks.add("max_K", r.max_K, "<=", e.number("K_max_at_most"));
  if (e.has("max_abs_K_below"))
    out.checks.add("max_abs_K", std::max(std::abs(r.min_K), std::abs(r.max_K)), "<", e.number("max_abs_K_below"));
  if (e.has("K_value")) {
    Fields kv(e.raw("K_value"), "expect/K_value");
    const double v = kv.number("value"), rel = kv.positive("rel_tol", 1e-6);
    kv.finish();
    const double dev = std::max(std::abs(r.min_K - v), std::abs(r.max_K - v)) / std::max(std::abs(v), 1e-300);
    out.checks.add("max_relative_K_deviation", dev, "<", rel);
  }
  e.finish();
  std::ostringstream csv;
  const int n = m.dimension();
  for (int i = 0; i < n; ++i) csv << "x" << i << ",";
  for (int i = 0; i < n; ++i) csv << "y" << i << ",";
  for (int i = 0; i < n; ++i) csv << "V" << i << ",";
  csv << "K\r\n";
  for (const auto& rec : r.records) {
    for (const Vec* v : {&rec.x, &rec.y, &rec.V})
      for (int i = 0; i < n; ++i) csv << fmt((*v)[i]) << ",";
    csv << fmt(rec.K) << "\r\n";
  }
  out.csv = csv.str();
  out.verdict = out.checks.failed() ? "fail" : "pass";
  return out;
}

// ------------------------------------------------------------- berwald

Json berwald_json(const BerwaldReport& r) {
  Json pts = Json::array();
  for (std::size_t i = 0; i < r.points.size(); ++i)
    pts.push_back(Json{{"x", to_json(r.points[i])}, {"deviation", r.point_deviation[i]}});
  return Json{{"verdict", r.berwald ? "berwald" : "not_berwald"},
              {"max_deviation", r.max_deviation},
              {"tolerance", r.tolerance},
              {"indicatrix_samples", r.indicatrix_samples},
              {"engine", r.engine},
              {"seed", r.seed},
              {"points", pts}};
}

Json riemann_json(const RiemannReport& r) {
  return Json{{"verdict", r.riemannian ? "riemannian" : "not_riemannian"},
              {"max_cartan", r.max_cartan},
              {"max_g_deviation", r.max_g_deviation},
              {"cartan_witness", r.cartan_riemannian ? "riemannian" : "not_riemannian"},
              {"g_witness", r.g_riemannian ? "riemannian" : "not_riemannian"},
              {"tolerance", r.tolerance},
              {"samples", r.samples},
              {"seed", r.seed}};
}

Outcome run_berwald(const FinslerMetric& m, const ExperimentConfig& c) {
  Fields b(c.budget, "budget");
  const int points = b.count("point_samples", 8);
  const int dirs = b.count("indicatrix_samples", 8, 2);
  const int rsamples = b.count("riemann_samples", 8);
  b.finish();
  Fields t(c.tolerances, "tolerances");
  const double tb = t.positive("berwald", kBerwaldTolerance);
  const double tr = t.positive("riemann", kRiemannTolerance);
  t.finish();
  const auto region = effective_region(m, c);
  const bool want_b = std::count(c.detectors.begin(), c.detectors.end(), "berwald") > 0;
  const bool want_r = std::count(c.detectors.begin(), c.detectors.end(), "riemann") > 0;
  Outcome out;
  out.tolerances = Json{{"berwald", tb}, {"riemann", tr}};
  Fields e(c.expect, "expect");
  for (const char* k : {"berwald", "berwald_deviation_below", "berwald_deviation_above"})
    if (!want_b && e.has(k)) config_error(e.at(k), "needs the berwald detector");
  for (const char* k : {"riemannian", "cartan_above"})
    if (!want_r && e.has(k)) config_error(e.at(k), "needs the riemann detector");
  std::vector<std::string> verdicts;
  if (want_b) {
    const auto r = is_berwald(m, points, dirs, tb, Rng::derive(c.seed, 1), c.engine, region);
    out.result["berwald"] = berwald_json(r);
    verdicts.push_back(r.berwald ? "berwald" : "not_berwald");
    for (std::size_t i = 0; i < r.points.size(); ++i)
      out.witnesses.push_back(Json{{"role", "berwald_point"}, {"x", to_json(r.points[i])}, {"deviation", r.point_deviation[i]}});
    if (e.has("berwald")) out.checks.truth("berwald", r.berwald, e.flag("berwald", false));
    if (e.has("berwald_deviation_below"))
      out.checks.add("berwald_deviation", r.max_deviation, "<", e.number("berwald_deviation_below"));
    if (e.has("berwald_deviation_above"))
      out.checks.add("berwald_deviation", r.max_deviation, ">", e.number("berwald_deviation_above"));
  }
  if (want_r) {
    try {
      const auto r = is_riemannian(m, rsamples, tr, Rng::derive(c.seed, 2), c.engine, region);
      out.result["riemann"] = riemann_json(r);
      verdicts.push_back(r.riemannian ? "riemannian" : "not_riemannian");
      if (e.has("riemannian")) out.checks.truth("riemannian", r.riemannian, e.flag("riemannian", false));
      if (e.has("cartan_above")) out.checks.add("max_cartan", r.max_cartan, ">", e.number("cartan_above"));
    } catch (const Error& err) {
      if (err.code() != ErrorCode::WitnessDisagreement) throw;
      out.result["riemann"] = Json{{"verdict", "witness_disagreement"}, {"error", err.what()}};
      verdicts.push_back("witness_disagreement");
      out.checks.truth("riemann_witnesses_agree", false, true);
    }
  }
  e.finish();
  std::string v;
  for (const auto& s : verdicts) v += (v.empty() ? "" : ",") + s;
  out.verdict = v;
  return out;
}

// ------------------------------------------------------------ rigidity

Outcome run_rigidity(const FinslerMetric& m, const ExperimentConfig& c) {
  Fields b(c.budget, "budget");
  RigidityBudget budget;
  budget.point_samples = b.count("point_samples", budget.point_samples);
  budget.indicatrix_samples = b.count("indicatrix_samples", budget.indicatrix_samples, 2);
  budget.riemann_samples = b.count("riemann_samples", budget.riemann_samples);
  budget.flags.coarse_starts = b.count("coarse_starts", budget.flags.coarse_starts);
  budget.flags.descent_steps = b.count("descent_steps", budget.flags.descent_steps, 0);
  budget.flags.max_evaluations = b.count("max_evaluations", budget.flags.max_evaluations);
  b.finish();
  Fields t(c.tolerances, "tolerances");
  RigidityTolerances tol;
  tol.berwald = t.positive("berwald", tol.berwald);
  tol.riemann = t.positive("riemann", tol.riemann);
  tol.vanish = t.positive("vanish", tol.vanish);
  t.finish();
  const auto region = effective_region(m, c);
  const RigidityVerdict v = verify_rigidity(m, region, budget, tol, c.seed, c.engine);
  Outcome out;
  out.tolerances = Json{{"berwald", tol.berwald}, {"riemann", tol.riemann}, {"vanish", tol.vanish}};
  out.result = Json{{"is_berwald", v.is_berwald},
                    {"is_riemannian", v.is_riemannian},
                    {"consistency", to_string(v.consistency)},
                    {"berwald", berwald_json(v.berwald)}};
  if (v.riemann) out.result["riemann"] = riemann_json(*v.riemann);
  if (v.witness) {
    out.result["vanishing_flag"] = Json{{"flag", flag_json(v.witness->flag)},
                                        {"K", v.witness->K},
                                        {"gram", v.witness->gram},
                                        {"mixed_blocks", v.witness_mixed}};
    out.witnesses.push_back(Json{{"role", "vanishing_flag"},
                                 {"flag", flag_json(v.witness->flag)},
                                 {"K", v.witness->K},
                                 {"mixed_blocks", v.witness_mixed}});
  }
  out.result["best_abs_K"] = v.best_abs_K;
  out.result["evaluations"] = v.evaluations;
  out.result["note"] = v.note;
  out.result["budget"] = Json{{"point_samples", budget.point_samples},
                              {"indicatrix_samples", budget.indicatrix_samples},
                              {"riemann_samples", budget.riemann_samples},
                              {"coarse_starts", budget.flags.coarse_starts},
                              {"descent_steps", budget.flags.descent_steps},
                              {"max_evaluations", budget.flags.max_evaluations}};
  out.verdict = to_string(v.consistency);
  // a contradiction is always a property failure
  out.checks.truth("no_contradiction", v.consistency != Consistency::contradiction, true);
  Fields e(c.expect, "expect");
  if (e.has("consistency")) out.checks.equal("consistency", to_string(v.consistency), e.text("consistency"));
  if (e.has("is_berwald")) out.checks.truth("is_berwald", v.is_berwald, e.flag("is_berwald", false));
  if (e.has("is_riemannian")) out.checks.truth("is_riemannian", v.is_riemannian, e.flag("is_riemannian", false));
  if (e.has("witness_mixed")) out.checks.truth("witness_mixed", v.witness_mixed, e.flag("witness_mixed", false));
  if (e.has("witness_abs_K_below")) {
    const double lim = e.number("witness_abs_K_below");
    if (v.witness) {
      // recompute K at the serialized flag as an independent evaluation
      const double K = flag_curvature(m, v.witness->flag, c.engine).K;
      out.checks.add("witness_abs_K", std::abs(K), "<", lim);
    } else {
      out.checks.truth("witness_present", false, true);
    }
  }
  e.finish();
  return out;
}

// ----------------------------------------------------------- transport

Curve random_curve(const FinslerMetric& m, Rng& rng, bool loop) {
  const int n = m.dimension();
  double wmin = m.chart().front().width();
  for (const auto& iv : m.chart()) wmin = std::min(wmin, iv.width());
  Curve c;
  if (loop) {
    const Vec centre = sample_point(inset(m.chart(), 0.3), rng);
    const int i = static_cast<int>(rng.uniform() * n) % n;
    const int j = (i + 1 + static_cast<int>(rng.uniform() * (n - 1))) % n;
    c.append(chart_circle(centre, rng.uniform(0.05, 0.15) * wmin, i, j));
  } else {
    const auto box = inset(m.chart(), 0.2);
    c.append(line_segment(sample_point(box, rng), sample_point(box, rng)));
  }
  return c;
}

Curve parse_curve(const Json& j, const FinslerMetric& m, const std::string& where) {
  Fields f(j, where);
  const Json& segs = f.raw("segments");
  f.finish();
  if (!segs.is_array() || segs.empty()) config_error(where + "/segments", "expected a non-empty array");
  Curve curve;
  for (std::size_t k = 0; k < segs.size(); ++k) {
    const std::string w = where + "/segments/" + std::to_string(k);
    Fields s(segs[k], w);
    const std::string type = s.text("type");
    CurveSegment seg;
    if (type == "line") {
      seg = line_segment(s.vec("from"), s.vec("to"), s.positive("duration", 1.0));
    } else if (type == "circle") {
      const auto axes = s.numbers("axes");
      if (axes.size() != 2) config_error(s.at("axes"), "expected two axis indices");
      seg = chart_circle(s.vec("center"), s.positive("radius", 1.0), static_cast<int>(axes[0]),
                         static_cast<int>(axes[1]), s.positive("turns", 1.0));
    } else if (type == "geodesic") {
      seg = geodesic_segment(m, s.vec("x0"), s.vec("y0"), s.positive("length", 1.0));
    } else {
      config_error(s.at("type"), "unknown segment type '" + type + "' (line, circle, geodesic)");
    }
    s.finish();
    if (seg.start.size() != m.dimension()) config_error(w, "segment dimension differs from the metric");
    try {
      curve.append(std::move(seg));
    } catch (const Error& e) {
      config_error(w, e.what());
    }
  }
  return curve;
}

Outcome run_transport(const FinslerMetric& m, const ExperimentConfig& c) {
  Fields p(c.params, "params");
  Fields b(c.budget, "budget");
  Fields t(c.tolerances, "tolerances");
  const double drift_tol = t.positive("norm_drift", 1e-6);
  TransportOptions opts;
  opts.engine = c.engine;
  opts.control.rtol = t.positive("rtol", opts.control.rtol);
  opts.control.atol = t.positive("atol", opts.control.atol);
  t.finish();
  const std::string ref = p.text("reference", "transported");
  if (ref == "velocity") opts.reference = TransportReference::velocity;
  else if (ref != "transported") config_error(p.at("reference"), "expected 'transported' or 'velocity'");

  std::vector<Curve> curves;
  if (p.has("curve")) curves.push_back(parse_curve(p.raw("curve"), m, "params/curve"));
  if (p.has("random_curves")) {
    Fields rc(p.raw("random_curves"), "params/random_curves");
    const int count = rc.count("count", 1);
    const std::string kind = rc.text("kind", "mixed");
    if (kind != "loop" && kind != "segment" && kind != "mixed")
      config_error(rc.at("kind"), "expected loop, segment or mixed");
    rc.finish();
    for (int k = 0; k < count; ++k) {
      Rng rng(Rng::derive(c.seed, 100 + static_cast<std::uint64_t>(k)));
      const bool loop = kind == "loop" || (kind == "mixed" && k % 2 == 1);
      curves.push_back(random_curve(m, rng, loop));
    }
  }
  if (curves.empty()) config_error("params", "needs 'curve' or 'random_curves'");
  const int trials = b.count("linearity_trials", 0, 0);
  b.finish();
  const bool holonomy = p.flag("holonomy", false);
  std::optional<Vec> vector;
  if (p.has("vector")) vector = p.vec("vector");
  p.finish();

  Outcome out;
  out.tolerances = Json{{"norm_drift", drift_tol}, {"rtol", opts.control.rtol}, {"atol", opts.control.atol}};
  Json per_curve = Json::array();
  double max_drift = 0.0, max_defect = 0.0;
  std::ostringstream csv;
  csv << "curve,t,relative_drift\r\n";
  const int n = m.dimension();
  for (std::size_t k = 0; k < curves.size(); ++k) {
    const Curve& curve = curves[k];
    Json entry{{"curve", curve.describe()}};
    Rng rng(Rng::derive(c.seed, 1000 + k));
    const Vec v = vector ? *vector : rng.normal_vector(n);
    if (v.size() != n) config_error("params/vector", "dimension differs from the metric");
    const auto tr = parallel_transport(m, curve, v, opts);
    entry["transport"] = Json{{"input", to_json(tr.input)},
                              {"output", to_json(tr.output)},
                              {"max_drift", tr.max_drift},
                              {"steps", tr.stats.steps}};
    for (std::size_t s = 0; s < tr.step_times.size(); ++s)
      csv << k << "," << fmt(tr.step_times[s]) << "," << fmt(tr.step_drift[s]) << "\r\n";
    max_drift = std::max(max_drift, tr.max_drift);
    if (trials > 0) {
      const auto lin = transport_linearity_test(m, curve, trials, Rng::derive(c.seed, 2000 + k), opts);
      entry["linearity"] = Json{{"defect", lin.defect}, {"max_norm_drift", lin.max_norm_drift}, {"trials", lin.trials}};
      max_defect = std::max(max_defect, lin.defect);
      max_drift = std::max(max_drift, lin.max_norm_drift);
    }
    if (holonomy) {
      if (!is_closed(m, curve)) config_error("params/holonomy", "curve " + curve.describe() + " is not closed");
      const auto h = holonomy_loop(m, curve, Mat::Identity(n, n), opts);
      Json hj{{"map", to_json(h.map)},
              {"linearity_defect", h.linearity_defect},
              {"norm_defect", h.norm_defect},
              {"gram_source", h.gram_source}};
      if (h.orthogonality_defect) hj["orthogonality_defect"] = *h.orthogonality_defect;
      if (h.rotation_angle) hj["rotation_angle"] = *h.rotation_angle;
      entry["holonomy"] = hj;
      max_drift = std::max(max_drift, h.norm_defect);
    }
    per_curve.push_back(std::move(entry));
  }
  out.result = Json{{"reference", ref}, {"curves", per_curve}, {"max_norm_drift", max_drift}};
  if (trials > 0) out.result["max_linearity_defect"] = max_defect;
  out.checks.add("max_norm_drift", max_drift, "<", drift_tol);
  Fields e(c.expect, "expect");
  if (e.has("linearity_defect_below")) out.checks.add("max_linearity_defect", max_defect, "<", e.number("linearity_defect_below"));
  if (e.has("linearity_defect_above")) out.checks.add("max_linearity_defect", max_defect, ">", e.number("linearity_defect_above"));
  if (e.has("rotation_angle")) {
    Fields ra(e.raw("rotation_angle"), "expect/rotation_angle");
    const double value = ra.number("value"), tol = ra.positive("tol", 1e-4);
    const bool unsigned_angle = ra.flag("unsigned", false);
    ra.finish();
    double worst = 0.0;
    for (const auto& pc : per_curve) {
      if (!pc.contains("holonomy") || !pc["holonomy"].contains("rotation_angle")) {
        worst = std::numeric_limits<double>::infinity();
        continue;
      }
      double a = pc["holonomy"]["rotation_angle"].get<double>();
      double gap = std::abs(std::remainder(a - value, 2 * std::numbers::pi));
      if (unsigned_angle) gap = std::min(gap, std::abs(std::remainder(a + value, 2 * std::numbers::pi)));
      worst = std::max(worst, gap);
    }
    out.checks.add("rotation_angle_gap", worst, "<", tol);
  }
  e.finish();
  out.csv = csv.str();
  out.verdict = out.checks.failed() ? "fail" : "pass";
  return out;
}

// ------------------------------------------------------------ geodesic

Outcome run_geodesic(const FinslerMetric& m, const ExperimentConfig& c) {
  Fields p(c.params, "params");
  const Vec x0 = p.vec("x0"), y0 = p.vec("y0");
  const double length = p.positive("length", 1.0);
  p.finish();
  if (x0.size() != m.dimension() || y0.size() != m.dimension())
    config_error("params", "x0 and y0 must have the metric dimension");
  Fields t(c.tolerances, "tolerances");
  const double speed_tol = t.positive("speed_drift", 1e-7);
  StepControl ctl;
  ctl.rtol = t.positive("rtol", ctl.rtol);
  ctl.atol = t.positive("atol", ctl.atol);
  t.finish();
  Fields(c.budget, "budget").finish();
  const auto sol = integrate_geodesic(m, x0, y0, length, ctl, c.engine);
  Outcome out;
  out.tolerances = Json{{"speed_drift", speed_tol}, {"rtol", ctl.rtol}, {"atol", ctl.atol}};
  out.result = Json{{"status", sol.status == GeodesicStatus::completed ? "completed" : "chart_exit"},
                    {"t_end", sol.t_end},
                    {"end_x", to_json(sol.x.back())},
                    {"end_y", to_json(sol.y.back())},
                    {"speed_drift", sol.speed_drift},
                    {"steps", sol.stats.steps}};
  out.checks.add("speed_drift", sol.speed_drift, "<", speed_tol);
  Fields e(c.expect, "expect");
  if (e.has("status")) out.checks.equal("status", out.result["status"].template get<std::string>(), e.text("status"));
  if (e.has("closes_to")) {
    Fields ct(e.raw("closes_to"), "expect/closes_to");
    const Vec target = ct.vec("point");
    const double tol = ct.positive("tol", 1e-4);
    ct.finish();
    if (target.size() != m.dimension()) config_error("expect/closes_to/point", "wrong dimension");
    Vec d = sol.x.back() - target;
    for (int i = 0; i < d.size(); ++i)
      if (m.periods()[i] > 0) d[i] = std::remainder(d[i], m.periods()[i]);
    out.checks.add("closure_gap", d.cwiseAbs().maxCoeff(), "<", tol);
  }
  e.finish();
  std::ostringstream csv;
  const int n = m.dimension();
  csv << "t";
  for (int i = 0; i < n; ++i) csv << ",x" << i;
  for (int i = 0; i < n; ++i) csv << ",y" << i;
  csv << "\r\n";
  for (std::size_t s = 0; s < sol.t.size(); ++s) {
    csv << fmt(sol.t[s]);
    for (int i = 0; i < n; ++i) csv << "," << fmt(sol.x[s][i]);
    for (int i = 0; i < n; ++i) csv << "," << fmt(sol.y[s][i]);
    csv << "\r\n";
  }
  out.csv = csv.str();
  out.verdict = out.checks.failed() ? "fail" : "pass";
  return out;
}

// -------------------------------------------------------------- bonnet

Outcome run_bonnet(const FinslerMetric& m, const ExperimentConfig& c) {
  Fields b(c.budget, "budget");
  BonnetBudget budget;
  budget.pairs = b.count("pairs", budget.pairs);
  budget.directions = b.count("directions", budget.directions, 8);
  budget.targets_per_source = b.count("targets_per_source", budget.targets_per_source);
  budget.refine_iterations = b.count("refine_iterations", budget.refine_iterations);
  budget.ascent_steps = b.count("ascent_steps", budget.ascent_steps, 0);
  budget.curvature_flags = b.count("curvature_flags", budget.curvature_flags);
  b.finish();
  Fields t(c.tolerances, "tolerances");
  BonnetTolerances tol;
  tol.upper = t.positive("upper", tol.upper);
  tol.lower = t.positive("lower", tol.lower);
  t.finish();
  Fields(c.expect, "expect").finish();
  const auto r = bonnet_diameter_check(m, budget, tol, c.seed, c.engine);
  Outcome out;
  out.tolerances = Json{{"upper", tol.upper}, {"lower", tol.lower}};
  out.result = Json{{"hypothesis", r.hypothesis}, {"H", r.H}, {"note", r.note}};
  if (r.hypothesis) {
    out.result["bound"] = r.bound;
    out.result["estimate"] = r.estimate;
    out.result["band"] = Json::array({r.lower, r.upper});
    if (r.known_diameter) out.result["known_diameter"] = *r.known_diameter;
    out.result["pairs"] = r.pairs;
    out.result["geodesics"] = r.geodesics;
    if (r.p.size() > 0)
      out.witnesses.push_back(Json{{"role", "diameter_pair"}, {"p", to_json(r.p)}, {"q", to_json(r.q)}, {"distance", r.estimate}});
    out.checks.add("estimate_upper", r.estimate, "<=", r.upper);
    if (r.known_diameter) out.checks.add("estimate_lower", r.estimate, ">=", r.lower);
    out.verdict = r.passed ? "within_bound" : "outside_band";
  } else {
    out.verdict = "hypothesis_absent";
  }
  return out;
}

// ------------------------------------------------------- binet-legendre

Outcome run_binet(const FinslerMetric& m, const ExperimentConfig& c) {
  Fields p(c.params, "params");
  Fields b(c.budget, "budget");
  Fields t(c.tolerances, "tolerances");
  const int mc = b.count("mc_samples", 100000, 10000);
  const int npts = b.count("point_samples", 4);
  const std::string method = p.text("method", "rejection");
  if (method != "rejection" && method != "radial_qmc") config_error(p.at("method"), "expected rejection or radial_qmc");
  std::vector<Vec> points;
  if (p.has("points")) {
    const Json& pts = p.raw("points");
    if (!pts.is_array()) config_error(p.at("points"), "expected an array of points");
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (!pts[i].is_array()) config_error(p.at("points") + "/" + std::to_string(i), "expected a point");
      Vec x(static_cast<int>(pts[i].size()));
      for (std::size_t a = 0; a < pts[i].size(); ++a) x[static_cast<int>(a)] = pts[i][a].get<double>();
      if (x.size() != m.dimension()) config_error(p.at("points") + "/" + std::to_string(i), "wrong dimension");
      points.push_back(x);
    }
  } else {
    const auto region = effective_region(m, c);
    Rng rng(Rng::derive(c.seed, 7));
    for (int i = 0; i < npts; ++i) points.push_back(sample_point(region, rng));
  }
  std::optional<double> se_factor;
  if (p.has("compare_with_g")) se_factor = Fields(p.raw("compare_with_g"), "params/compare_with_g").positive("se_factor", 3.0);
  std::optional<Json> coincidence;
  if (p.has("coincidence")) coincidence = p.raw("coincidence");
  p.finish();

  Outcome out;
  if (se_factor) out.tolerances["se_factor"] = *se_factor;
  const BLMethod bm = method == "rejection" ? BLMethod::rejection : BLMethod::radial_qmc;
  Json per = Json::array();
  double worst_se = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto bl = binet_legendre_metric(m, points[i], mc, Rng::derive(c.seed, 10 + i), bm);
    Json pj{{"x", to_json(points[i])}, {"g", to_json(bl.g)}, {"std_error", to_json(bl.std_error)},
            {"samples", bl.samples}, {"accepted", bl.accepted}};
    if (se_factor) {
      const Mat g = fundamental_tensor(m, points[i], Vec::Unit(m.dimension(), 0), c.engine).g;
      const double z = (bl.g - g).cwiseAbs().cwiseQuotient(bl.std_error).maxCoeff();
      pj["max_deviation_in_se"] = z;
      worst_se = std::max(worst_se, z);
    }
    per.push_back(std::move(pj));
  }
  out.result = Json{{"method", method}, {"mc_samples", mc}, {"points", per}};
  if (se_factor) out.checks.add("max_deviation_in_se", worst_se, "<", *se_factor);
  if (coincidence) {
    Fields cf(*coincidence, "params/coincidence");
    const int samples = cf.count("samples", 2);
    const int cmc = cf.count("mc_samples", 1000000, 10000);
    const double tol = cf.positive("tol", 1e-3);
    cf.finish();
    out.tolerances["coincidence"] = tol;
    const auto region = effective_region(m, c);
    const auto r = compare_chern_levicivita(m, region, samples, tol, cmc, Rng::derive(c.seed, 3), c.engine);
    Json pts = Json::array();
    for (std::size_t i = 0; i < r.points.size(); ++i)
      pts.push_back(Json{{"x", to_json(r.points[i])}, {"deviation", r.point_deviation[i]}});
    out.result["coincidence"] = Json{{"max_deviation", r.max_deviation},
                                     {"tolerance", r.tolerance},
                                     {"mc_samples", r.mc_samples},
                                     {"stencil_step", r.stencil_step},
                                     {"berwald_deviation", r.berwald_deviation},
                                     {"note", r.note},
                                     {"points", pts}};
    out.checks.add("chern_levicivita_deviation", r.max_deviation, "<", tol);
  }
  t.finish();
  b.finish();
  Fields(c.expect, "expect").finish();
  out.verdict = out.checks.failed() ? "fail" : "pass";
  return out;
}

bool is_config_code(ErrorCode c) {
  return c == ErrorCode::ConfigError || c == ErrorCode::SpecValidation || c == ErrorCode::DimensionMismatch ||
         c == ErrorCode::OutOfChart || c == ErrorCode::NotBerwald || c == ErrorCode::NotClosed;
}

void write_file(const fs::path& path, const std::string& data) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::ConfigError, "cannot write " + path.string());
  f << data;
}

bool wants_json(OutputFormat f) { return f != OutputFormat::csv; }
bool wants_csv(OutputFormat f) { return f != OutputFormat::json; }

std::string safe_name(const std::string& name) {
  std::string s = name;
  for (char& ch : s)
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.')) ch = '_';
  return s.empty() ? "experiment" : s;
}

// runs and writes one experiment; returns its manifest entry
ManifestEntry execute(const ExperimentConfig& cfg, const RunOptions& o, ExperimentResult* keep) {
  ExperimentResult r = run_experiment(cfg, o);
  ManifestEntry e{r.name, r.kind, r.status, r.verdict, r.exit_code, {}, r.error};
  const std::string stem = safe_name(r.name);
  if (wants_json(o.format) && !r.report.is_null()) {
    write_file(o.out_dir / (stem + ".json"), r.report.dump(2) + "\n");
    e.outputs.push_back(stem + ".json");
  }
  if (wants_csv(o.format) && !r.csv.empty()) {
    write_file(o.out_dir / (stem + ".csv"), r.csv);
    e.outputs.push_back(stem + ".csv");
  }
  if (keep) *keep = std::move(r);
  return e;
}

ManifestEntry failed_entry(const std::string& name, const std::string& kind, const Error& err) {
  ManifestEntry e;
  e.name = name;
  e.kind = kind;
  e.status = is_config_code(err.code()) ? "config_error" : "error";
  e.exit_code = is_config_code(err.code()) ? 1 : 2;
  e.error = err.what();
  return e;
}

int aggregate_exit(const std::vector<ManifestEntry>& es) {
  int code = 0;
  for (const auto& e : es) {
    if (e.exit_code == 2) return 2;
    if (e.exit_code == 1) code = 1;
  }
  return code;
}

}  // namespace

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::curvature_scan: return "curvature_scan";
    case ExperimentKind::berwald_check: return "berwald_check";
    case ExperimentKind::rigidity: return "rigidity";
    case ExperimentKind::transport: return "transport";
    case ExperimentKind::geodesic: return "geodesic";
    case ExperimentKind::bonnet_diameter: return "bonnet_diameter";
    case ExperimentKind::binet_legendre: return "binet_legendre";
  }
  return "unknown";
}

ExperimentKind parse_kind(const std::string& name) {
  for (auto k : {ExperimentKind::curvature_scan, ExperimentKind::berwald_check, ExperimentKind::rigidity,
                 ExperimentKind::transport, ExperimentKind::geodesic, ExperimentKind::bonnet_diameter,
                 ExperimentKind::binet_legendre})
    if (to_string(k) == name) return k;
  config_error("kind", "unknown experiment kind '" + name + "'");
}

OutputFormat parse_format(const std::string& name) {
  if (name == "json") return OutputFormat::json;
  if (name == "csv") return OutputFormat::csv;
  if (name == "both") return OutputFormat::both;
  config_error("--format", "expected json, csv or both");
}

Json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    // translate the byte offset into line and column
    const std::size_t at = std::min(e.byte, text.size());
    int line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < at; ++i) {
      if (text[i] == '\n') ++line, col = 1;
      else ++col;
    }
    throw Error(ErrorCode::ConfigError,
                origin + ":" + std::to_string(line) + ":" + std::to_string(col) + ": invalid JSON (" + e.what() + ")");
  }
}

Json load_json_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::ConfigError, path.string() + ": cannot open");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_json_text(ss.str(), path.string());
}

MetricSpec parse_metric_spec(const Json& j, const std::string& where) {
  Fields f(j, where);
  if (f.has("spec_version") && f.integer("spec_version") != kSpecVersion)
    config_error(f.at("spec_version"), "unsupported version (expected 1)");
  const std::string family = f.text("family");
  MetricSpec s;
  if (family == "euclidean") {
    s = euclidean_spec(f.count("dimension", 2));
  } else if (family == "sphere") {
    s = sphere_spec(f.positive("radius", 1.0));
  } else if (family == "minkowski_quartic") {
    s = minkowski_quartic_spec(f.number("epsilon", 0.1), f.count("dimension", 2));
  } else if (family == "randers") {
    MetricSpec alpha = parse_metric_spec(f.raw("alpha"), f.at("alpha"));
    Fields bj(f.raw("beta"), f.at("beta"));
    BetaSpec beta;
    if (bj.has("constant")) beta.constant = bj.numbers("constant");
    if (bj.has("linear")) {
      const Json& lin = bj.raw("linear");
      if (!lin.is_array()) config_error(bj.at("linear"), "expected a matrix");
      for (std::size_t i = 0; i < lin.size(); ++i) {
        std::vector<double> row;
        if (!lin[i].is_array()) config_error(bj.at("linear") + "/" + std::to_string(i), "expected a row");
        for (const auto& v : lin[i]) {
          if (!v.is_number()) config_error(bj.at("linear") + "/" + std::to_string(i), "expected numbers");
          row.push_back(v.get<double>());
        }
        beta.linear.push_back(std::move(row));
      }
    }
    bj.finish();
    s = randers_spec(std::move(alpha), std::move(beta));
  } else if (family == "product") {
    const Json& fs_ = f.raw("factors");
    if (!fs_.is_array() || fs_.size() < 2) config_error(f.at("factors"), "expected at least two factor specs");
    std::vector<MetricSpec> factors;
    for (std::size_t i = 0; i < fs_.size(); ++i) factors.push_back(parse_metric_spec(fs_[i], f.at("factors") + "/" + std::to_string(i)));
    s = product_spec(std::move(factors));
  } else {
    config_error(f.at("family"), "unknown family '" + family +
                                     "' (euclidean, sphere, minkowski_quartic, randers, product)");
  }
  if (f.has("chart_domain")) s.chart_domain = parse_domain(f.raw("chart_domain"), f.at("chart_domain"));
  if (f.has("label")) s.label = f.text("label");
  f.finish();
  return s;
}

Json metric_spec_to_json(const MetricSpec& s) {
  Json j;
  j["family"] = to_string(s.family);
  switch (s.family) {
    case Family::euclidean: j["dimension"] = s.dimension; break;
    case Family::sphere: j["radius"] = s.radius; break;
    case Family::minkowski_quartic:
      j["epsilon"] = s.epsilon;
      j["dimension"] = s.dimension;
      break;
    case Family::randers:
      if (!s.alpha.empty()) j["alpha"] = metric_spec_to_json(s.alpha.front());
      j["beta"] = Json{{"constant", s.beta.constant}, {"linear", s.beta.linear}};
      break;
    case Family::product: {
      Json fs_ = Json::array();
      for (const auto& f : s.factors) fs_.push_back(metric_spec_to_json(f));
      j["factors"] = fs_;
      break;
    }
    case Family::custom: j["dimension"] = s.dimension; break;
  }
  if (!s.chart_domain.empty()) j["chart_domain"] = to_json(s.chart_domain);
  if (!s.label.empty()) j["label"] = s.label;
  return j;
}

ExperimentConfig parse_experiment(const Json& j, const fs::path& base_dir, const std::string& where,
                                  std::optional<std::uint64_t> seed_override) {
  Fields f(j, where);
  if (f.has("spec_version") && f.integer("spec_version") != kSpecVersion)
    config_error(f.at("spec_version"), "unsupported version (expected 1)");
  ExperimentConfig c;
  c.source = j;
  c.kind = [&] {
    try {
      return parse_kind(f.text("kind"));
    } catch (const Error& e) {
      config_error(f.at("kind"), e.what());
    }
  }();
  c.name = f.text("name", to_string(c.kind));
  if (f.has("metric") == f.has("metric_file")) config_error(where, "give exactly one of 'metric' and 'metric_file'");
  if (f.has("metric")) {
    c.metric = parse_metric_spec(f.raw("metric"), f.at("metric"));
  } else {
    const fs::path mp = base_dir / f.text("metric_file");
    c.metric = parse_metric_spec(load_json_file(mp), mp.string());
  }
  if (seed_override) {
    c.seed = *seed_override;
    f.has("seed");
  } else {
    if (!f.has("seed")) config_error(f.at("seed"), "required field missing (seeds are never taken from the clock)");
    c.seed = f.seed("seed");
  }
  if (f.has("region")) c.region = parse_domain(f.raw("region"), f.at("region"));
  if (f.has("engine")) {
    Fields e(f.raw("engine"), f.at("engine"));
    try {
      c.engine.mode = parse_diff_mode(e.text("mode", "forward_algorithmic"));
    } catch (const Error& err) {
      config_error(e.at("mode"), err.what());
    }
    c.engine.fd_step = e.positive("fd_step", c.engine.fd_step);
    c.engine.max_order = e.count("max_order", c.engine.max_order, 4);
    e.finish();
    c.engine.validate();
  }
  auto object = [&](const char* key) {
    if (!f.has(key)) return Json(Json::object());
    const Json& v = f.raw(key);
    if (!v.is_object()) config_error(f.at(key), "expected an object");
    return v;
  };
  c.params = object("params");
  c.budget = object("budget");
  c.tolerances = object("tolerances");
  c.expect = object("expect");
  // every tolerance must be positive
  for (auto it = c.tolerances.begin(); it != c.tolerances.end(); ++it)
    if (it.value().is_number() && !(it.value().get<double>() > 0.0))
      config_error(f.at("tolerances") + "/" + it.key(), "must be positive");
  c.detectors = {"berwald", "riemann"};
  if (f.has("detectors")) {
    const Json& d = f.raw("detectors");
    if (c.kind != ExperimentKind::berwald_check) config_error(f.at("detectors"), "only valid for berwald_check");
    if (!d.is_array() || d.empty()) config_error(f.at("detectors"), "expected a non-empty array");
    c.detectors.clear();
    for (const auto& v : d) {
      if (!v.is_string() || (v != "berwald" && v != "riemann"))
        config_error(f.at("detectors"), "entries must be 'berwald' or 'riemann'");
      c.detectors.push_back(v.get<std::string>());
    }
  }
  f.finish();
  return c;
}

ExperimentResult run_experiment(const ExperimentConfig& c, const RunOptions& o) {
  ExperimentResult r;
  r.name = c.name;
  r.kind = to_string(c.kind);
  try {
    const FinslerMetric m = catalog_instantiate(c.metric);
    Outcome out;
    switch (c.kind) {
      case ExperimentKind::curvature_scan: out = run_scan(m, c, o); break;
      case ExperimentKind::berwald_check: out = run_berwald(m, c); break;
      case ExperimentKind::rigidity: out = run_rigidity(m, c); break;
      case ExperimentKind::transport: out = run_transport(m, c); break;
      case ExperimentKind::geodesic: out = run_geodesic(m, c); break;
      case ExperimentKind::bonnet_diameter: out = run_bonnet(m, c); break;
      case ExperimentKind::binet_legendre: out = run_binet(m, c); break;
    }
    r.verdict = out.verdict;
    r.exit_code = out.checks.failed() ? 2 : 0;
    r.status = out.checks.failed() ? "property_failure" : "pass";
    if (out.checks.failed()) r.error = "failed checks: " + out.checks.failed_names();
    r.report = Json{{"spec_version", kSpecVersion},
                    {"experiment", c.name},
                    {"kind", r.kind},
                    {"metric", m.id()},
                    {"metric_spec", metric_spec_to_json(c.metric)},
                    {"seed", c.seed},
                    {"engine", engine_json(c.engine)},
                    {"tolerances", out.tolerances},
                    {"budget", c.budget},
                    {"expect", c.expect},
                    {"status", r.status},
                    {"verdict", r.verdict},
                    {"checks", out.checks.json()},
                    {"witnesses", out.witnesses},
                    {"result", out.result}};
    r.csv = std::move(out.csv);
  } catch (const Error& e) {
    r.exit_code = is_config_code(e.code()) ? 1 : 2;
    r.status = is_config_code(e.code()) ? "config_error" : "error";
    r.verdict = "none";
    r.error = e.what();
    r.report = Json{{"spec_version", kSpecVersion}, {"experiment", c.name}, {"kind", r.kind}, {"seed", c.seed},
                    {"tolerances", c.tolerances}, {"status", r.status}, {"verdict", r.verdict},
                    {"witnesses", Json::array()}, {"error", r.error}};
  }
  return r;
}

Json RunManifest::to_json() const {
  Json es = Json::array();
  for (const auto& e : experiments) {
    Json j{{"name", e.name}, {"kind", e.kind}, {"status", e.status}, {"verdict", e.verdict},
           {"exit_code", e.exit_code}, {"outputs", e.outputs}};
    if (!e.error.empty()) j["error"] = e.error;
    es.push_back(std::move(j));
  }
  return Json{{"tool_version", tool_version},
              {"config_hash", config_hash},
              {"wall_time_seconds", wall_time_seconds},
              {"exit_code", exit_code},
              {"experiments", es},
              {"outputs", outputs}};
}

RunManifest run_config(const Json& config, const fs::path& base_dir, const RunOptions& o) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(o.out_dir);
  RunManifest man;
  man.config_hash = config_hash(config);
  std::string name = "experiment", kind = "unknown";
  if (config.is_object() && config.contains("name") && config["name"].is_string()) name = config["name"];
  if (config.is_object() && config.contains("kind") && config["kind"].is_string()) kind = config["kind"];
  try {
    const auto cfg = parse_experiment(config, base_dir, "config", o.seed_override);
    man.experiments.push_back(execute(cfg, o, nullptr));
  } catch (const Error& e) {
    man.experiments.push_back(failed_entry(name, kind, e));
  }
  for (const auto& e : man.experiments) man.outputs.insert(man.outputs.end(), e.outputs.begin(), e.outputs.end());
  man.exit_code = aggregate_exit(man.experiments);
  man.outputs.push_back("manifest.json");
  man.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_file(o.out_dir / "manifest.json", man.to_json().dump(2) + "\n");
  return man;
}

RunManifest run_suite(const Json& suite, const fs::path& base_dir, const RunOptions& o) {
  const auto t0 = std::chrono::steady_clock::now();
  Fields f(suite, "suite");
  if (f.has("spec_version") && f.integer("spec_version") != kSpecVersion)
    config_error(f.at("spec_version"), "unsupported version (expected 1)");
  if (f.has("name")) f.text("name");
  const Json& list = f.raw("experiments");
  f.finish();
  if (!list.is_array() || list.empty()) config_error("suite/experiments", "a suite needs at least one experiment");
  fs::create_directories(o.out_dir);

  // resolve entries first; per-entry errors are collected, not fatal
  struct Item {
    std::optional<ExperimentConfig> cfg;
    std::string name, kind;
    std::optional<Error> error;
  };
  std::vector<Item> items(list.size());
  std::set<std::string> names;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string where = "suite/experiments/" + std::to_string(i);
    Item& it = items[i];
    it.name = "experiment_" + std::to_string(i);
    try {
      Json entry = list[i];
      fs::path dir = base_dir;
      if (entry.is_object() && entry.contains("file") && entry.size() == 1) {
        if (!entry["file"].is_string()) config_error(where + "/file", "expected a path");
        const fs::path p = base_dir / entry["file"].get<std::string>();
        entry = load_json_file(p);
        dir = p.parent_path();
      }
      if (entry.is_object() && entry.contains("name") && entry["name"].is_string()) it.name = entry["name"];
      if (entry.is_object() && entry.contains("kind") && entry["kind"].is_string()) it.kind = entry["kind"];
      it.cfg = parse_experiment(entry, dir, where, o.seed_override);
      it.name = it.cfg->name;
      if (!names.insert(it.name).second) config_error(where + "/name", "duplicate experiment name '" + it.name + "'");
    } catch (const Error& e) {
      it.cfg.reset();
      it.error = e;
    }
  }

  std::vector<ManifestEntry> entries(items.size());
  std::vector<ExperimentResult> results(items.size());
  std::atomic<std::size_t> next{0};
  RunOptions inner = o;
  inner.workers = 1;  // experiments run concurrently; each runs serially inside
  auto worker = [&] {
    for (std::size_t i = next++; i < items.size(); i = next++) {
      if (!items[i].cfg) {
        entries[i] = failed_entry(items[i].name, items[i].kind, *items[i].error);
        continue;
      }
      try {
        entries[i] = execute(*items[i].cfg, inner, &results[i]);
      } catch (const Error& e) {
        entries[i] = failed_entry(items[i].name, items[i].kind, e);
      }
    }
  };
  const int nw = std::max(1, std::min<int>(o.workers, static_cast<int>(items.size())));
  std::vector<std::thread> pool;
  for (int w = 1; w < nw; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  RunManifest man;
  man.config_hash = config_hash(suite);
  man.experiments = entries;
  man.exit_code = aggregate_exit(entries);
  Json rows = Json::array();
  std::ostringstream csv;
  csv << "name,kind,status,verdict,exit_code,error\r\n";
  int failures = 0;
  for (const auto& e : entries) {
    rows.push_back(Json{{"name", e.name}, {"kind", e.kind}, {"status", e.status}, {"verdict", e.verdict},
                        {"exit_code", e.exit_code}, {"error", e.error}});
    csv << csv_field(e.name) << "," << csv_field(e.kind) << "," << csv_field(e.status) << "," << csv_field(e.verdict)
        << "," << e.exit_code << "," << csv_field(e.error) << "\r\n";
    failures += e.exit_code != 0;
    man.outputs.insert(man.outputs.end(), e.outputs.begin(), e.outputs.end());
  }
  const Json summary{{"spec_version", kSpecVersion},
                     {"experiments", static_cast<int>(entries.size())},
                     {"failures", failures},
                     {"exit_code", man.exit_code},
                     {"rows", rows}};
  write_file(o.out_dir / "summary.json", summary.dump(2) + "\n");
  write_file(o.out_dir / "summary.csv", csv.str());
  man.outputs.push_back("summary.json");
  man.outputs.push_back("summary.csv");
  man.outputs.push_back("manifest.json");
  man.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_file(o.out_dir / "manifest.json", man.to_json().dump(2) + "\n");
  return man;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

std::string config_hash(const Json& j) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace finsler::harness
