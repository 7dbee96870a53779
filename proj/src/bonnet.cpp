#include "finsler/bonnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "finsler/curvature.hpp"
#include "finsler/error.hpp"
#include "finsler/random.hpp"

namespace finsler {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kGolden = 0.6180339887498949;

struct Approach {
  double miss = kInf;
  double t = 0.0;
  double side = 0.0;  // signed: which side of the ray q lies on
};

class Shooter {
 public:
  Shooter(const FinslerMetric& metric, const JetEngine& engine, double length, int iterations)
      : metric_(metric), engine_(engine), length_(length), iterations_(iterations) {
    fan_control_.rtol = 1e-6;
    fan_control_.atol = 1e-8;
    hit_tol_ = 1e-6 * length / std::numbers::pi;
  }

  GeodesicSolution ray(const Vec& p, double alpha, double length, bool coarse) {
    ++geodesics;
    const Vec u = (Vec(2) << std::cos(alpha), std::sin(alpha)).finished();
    return integrate_geodesic(metric_, p, u / metric_.F(p, u), length, coarse ? fan_control_ : control_, engine_);
  }

  std::vector<GeodesicSolution> fan(const Vec& p, int directions) {
    std::vector<GeodesicSolution> out;
    for (int k = 0; k < directions; ++k) out.push_back(ray(p, 2 * std::numbers::pi * k / directions, length_, true));
    return out;
  }

  Vec wrapped(Vec d) const {
    const auto& per = metric_.periods();
    for (int i = 0; i < d.size(); ++i)
      if (per[i] > 0) d[i] = std::remainder(d[i], per[i]);
    return d;
  }

  // closest approach of a ray to q in chart coordinates, refined on the cubic
  // Hermite interpolant of the accepted steps
  Approach closest(const GeodesicSolution& s, const Vec& q) const {
    const int m = static_cast<int>(s.t.size());
    int best = 0;
    double bd = kInf;
    for (int i = 0; i < m; ++i) {
      const double d = wrapped(s.x[i] - q).norm();
      if (d < bd) bd = d, best = i;
    }
    auto hermite = [&](int i, double t, Vec* vel) {
      const double h = s.t[i + 1] - s.t[i], u = (t - s.t[i]) / h;
      const double h00 = (1 + 2 * u) * (1 - u) * (1 - u), h10 = u * (1 - u) * (1 - u);
      const double h01 = u * u * (3 - 2 * u), h11 = u * u * (u - 1);
      if (vel) {
        const double d00 = 6 * u * (u - 1) / h, d10 = (1 - u) * (1 - 3 * u), d01 = -d00, d11 = u * (3 * u - 2);
        *vel = d00 * s.x[i] + d10 * s.y[i] + d01 * s.x[i + 1] + d11 * s.y[i + 1];
      }
      return Vec(h00 * s.x[i] + h10 * h * s.y[i] + h01 * s.x[i + 1] + h11 * h * s.y[i + 1]);
    };
    Approach out{bd, s.t[best], 0.0};
    Vec vel = s.y[best];
    Vec off = wrapped(s.x[best] - q);
    for (int i : {best - 1, best}) {
      if (i < 0 || i + 1 >= m) continue;
      double a = s.t[i], b = s.t[i + 1];
      for (int it = 0; it < 50; ++it) {
        const double c = b - kGolden * (b - a), d = a + kGolden * (b - a);
        if (wrapped(hermite(i, c, nullptr) - q).norm() < wrapped(hermite(i, d, nullptr) - q).norm()) b = d;
        else a = c;
      }
      const double t = 0.5 * (a + b);
      Vec v;
      const Vec o = wrapped(hermite(i, t, &v) - q);
      if (o.norm() < out.miss) out.miss = o.norm(), out.t = t, vel = v, off = o;
    }
    out.side = vel[0] * off[1] - vel[1] * off[0];
    return out;
  }

  // shortest geodesic from p hitting q; brackets come from neighbouring fan
  // rays passing q on opposite sides, refined by the Illinois method
  std::optional<double> distance(const Vec& p, const std::vector<GeodesicSolution>& fan, const Vec& q) {
    const int D = static_cast<int>(fan.size());
    const double da = 2 * std::numbers::pi / D;
    std::vector<Approach> ap(D);
    for (int k = 0; k < D; ++k) ap[k] = closest(fan[k], q);
    std::vector<int> cand;
    for (int k = 0; k < D; ++k) {
      const auto& l = ap[k];
      const auto& r = ap[(k + 1) % D];
      if (!std::isfinite(l.miss) || !std::isfinite(r.miss)) continue;
      if ((l.side > 0) == (r.side > 0)) continue;
      if (std::abs(l.t - r.t) > 0.1 * length_) continue;  // closest points on different passes
      cand.push_back(k);
    }
    std::sort(cand.begin(), cand.end(),
              [&](int a, int b) { return std::min(ap[a].t, ap[(a + 1) % D].t) < std::min(ap[b].t, ap[(b + 1) % D].t); });
    std::optional<double> best;
    double unresolved = kInf;  // shortest bracket that did not converge to a hit
    for (int k : cand) {
      const double t_guess = std::max(ap[k].t, ap[(k + 1) % D].t);
      if (best && std::min(ap[k].t, ap[(k + 1) % D].t) > *best + 0.02 * length_) break;
      const double reach = std::min(length_, t_guess + 0.1 * length_);
      double a = k * da, b = (k + 1) * da;
      Approach fa = closest(ray(p, a, reach, false), q), fb = closest(ray(p, b, reach, false), q);
      if ((fa.side > 0) == (fb.side > 0)) {
        unresolved = std::min(unresolved, std::min(fa.t, fb.t));
        continue;
      }
      Approach e = fa.miss < fb.miss ? fa : fb;
      int kept = 0;
      for (int it = 0; it < iterations_ && e.miss > 0.01 * hit_tol_; ++it) {
        const double c = (a * fb.side - b * fa.side) / (fb.side - fa.side);
        const Approach fc = closest(ray(p, c, reach, false), q);
        if (fc.miss < e.miss) e = fc;
        if ((fc.side > 0) == (fa.side > 0)) {
          a = c, fa = fc;
          if (kept == -1) fb.side *= 0.5;
          kept = -1;
        } else {
          b = c, fb = fc;
          if (kept == 1) fa.side *= 0.5;
          kept = 1;
        }
      }
      if (e.miss < hit_tol_) {
        if (!best || e.t < *best) best = e.t;
      } else {
        unresolved = std::min(unresolved, e.t);
      }
    }
    // a shorter connection may have been missed, so the distance is unknown
    if (best && unresolved < *best) return std::nullopt;
    return best;
  }

  int geodesics = 0;

 private:
  const FinslerMetric& metric_;
  const JetEngine& engine_;
  double length_;
  int iterations_;
  double hit_tol_;
  StepControl control_, fan_control_;
};

}  // namespace

BonnetReport bonnet_diameter_check(const FinslerMetric& metric, const BonnetBudget& budget,
                                   const BonnetTolerances& tol, std::uint64_t seed, const JetEngine& engine) {
  if (!(tol.upper > 0.0) || !(tol.lower > 0.0)) throw Error(ErrorCode::SpecValidation, "tolerances must be positive");
  if (budget.pairs < 1 || budget.directions < 8 || budget.targets_per_source < 1)
    throw Error(ErrorCode::SpecValidation, "diameter budget too small");
  BonnetReport rep;
  rep.metric_id = metric.id();
  rep.tolerances = tol;
  rep.seed = seed;
  const ScanReport scan =
      scan_flags(metric, inset(metric.chart(), 0.05), ScanGrid{budget.curvature_flags, 16}, Rng::derive(seed, 0), engine);
  rep.H = scan.min_K;
  rep.hypothesis = rep.H > 1e-9;
  if (!rep.hypothesis) {
    std::ostringstream os;
    if (metric.spec().family == Family::euclidean) os << "unbounded family; Bonnet hypothesis absent";
    else os << "Bonnet hypothesis absent: sampled min K = " << rep.H;
    rep.note = os.str();
    rep.passed = true;
    return rep;
  }
  if (metric.dimension() != 2) throw Error(ErrorCode::SpecValidation, "diameter shooting is implemented for surfaces");
  rep.bound = std::numbers::pi / std::sqrt(rep.H);
  if (metric.spec().family == Family::sphere) rep.known_diameter = std::numbers::pi * metric.spec().radius;
  rep.upper = rep.bound * (1 + tol.upper);
  rep.lower = rep.known_diameter ? *rep.known_diameter * (1 - tol.lower) : 0.0;

  Shooter shoot(metric, engine, 1.2 * rep.bound, budget.refine_iterations);
  const ChartDomain sources = inset(metric.chart(), 0.25), targets = inset(metric.chart(), 0.05);
  const int n_sources = std::max(1, (budget.pairs + budget.targets_per_source - 1) / budget.targets_per_source);
  double best = -kInf;
  std::vector<GeodesicSolution> best_fan;
  for (int s = 0; s < n_sources; ++s) {
    Rng rng(Rng::derive(seed, 1 + static_cast<std::uint64_t>(s)));
    const Vec p = sample_point(sources, rng);
    std::vector<GeodesicSolution> fan = shoot.fan(p, budget.directions);
    bool improved = false;
    for (int j = 0; j < budget.targets_per_source && rep.pairs < budget.pairs; ++j) {
      // a target no geodesic reaches inside the chart is redrawn
      for (int attempt = 0; attempt < 4; ++attempt) {
        const Vec q = sample_point(targets, rng);
        const auto d = shoot.distance(p, fan, q);
        if (!d) continue;
        ++rep.pairs;
        if (*d > best) best = *d, rep.p = p, rep.q = q, improved = true;
        break;
      }
    }
    if (improved) best_fan = std::move(fan);
  }
  if (!std::isfinite(best)) {
    rep.note = "no sampled pair was joined by a geodesic inside the chart";
    rep.passed = false;
    return rep;
  }
  // compass ascent on the far end of the best pair
  const ChartDomain box = inset(metric.chart(), 0.01);
  double step = 0.05 * std::min(box[0].width(), box[1].width());
  Vec q = rep.q;
  for (int it = 0; it < budget.ascent_steps && step > 1e-6; ++it) {
    bool moved = false;
    for (int a = 0; a < 2 && !moved; ++a) {
      for (double sgn : {1.0, -1.0}) {
        Vec c = q;
        c[a] = std::clamp(c[a] + sgn * step, box[a].lo, box[a].hi);
        const auto d = shoot.distance(rep.p, best_fan, c);
        if (d && *d > best) {
          best = *d, q = c, moved = true;
          break;
        }
      }
    }
    if (!moved) step *= 0.5;
  }
  rep.q = q;
  rep.estimate = best;
  rep.geodesics = shoot.geodesics;
  rep.passed = rep.estimate <= rep.upper && rep.estimate >= rep.lower;
  std::ostringstream os;
  os << "estimate " << rep.estimate << " against bound pi/sqrt(H) = " << rep.bound;
  if (rep.known_diameter) os << " and known diameter " << *rep.known_diameter;
  rep.note = os.str();
  return rep;
}

}  // namespace finsler
