#include "finsler/transport.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "finsler/error.hpp"
#include "finsler/random.hpp"

namespace finsler {

namespace {

std::string vec_str(const Vec& v) {
  std::ostringstream os;
  os << "(";
  for (int i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  os << ")";
  return os.str();
}

StepControl jittered(const StepControl& c, std::uint64_t seed, double span) {
  StepControl out = c;
  if (out.h0 <= 0.0) out.h0 = span * 1e-3;
  if (seed != 0) {
    Rng rng(seed);
    out.h0 *= rng.uniform(0.25, 4.0);
  }
  return out;
}

// x' = y, y' = -2 G(x, y)
Vec geodesic_rhs(const FinslerMetric& metric, const Vec& s, const JetEngine& engine) {
  const int n = metric.dimension();
  Vec d(2 * n);
  d.head(n) = s.tail(n);
  d.tail(n) = -2.0 * spray_vector(metric, s.head(n), s.tail(n), engine);
  return d;
}

Vec transport_rate(const FinslerMetric& metric, const Vec& x, const Vec& T, const Vec& W, TransportReference ref,
                   const JetEngine& engine) {
  if (W.norm() < kDegeneracyFloor) return Vec::Zero(W.size());
  if (ref == TransportReference::transported) {
    // Gamma^i_jk(x, W) W^j T^k = N^i_k(x, W) T^k
    return -(nonlinear_connection(metric, x, W, engine).N * T);
  }
  // Gamma^i_jk(x, T) W^j T^k = N^i_j(x, T) W^j
  return -(nonlinear_connection(metric, x, T, engine).N * W);
}

double rel_drift(const FinslerMetric& metric, const Vec& x, const Vec& W, double F0) {
  return std::abs(std::sqrt(std::max(0.0, metric.F2_unchecked(x, W))) - F0) / F0;
}

}  // namespace

void Curve::append(CurveSegment seg, double join_tol) {
  const double len = seg.t1 - seg.t0;
  if (!(len > 0.0)) throw Error(ErrorCode::ConfigError, "curve segment must have positive parameter length");
  const double offset = b();
  seg.t0 = offset;
  seg.t1 = offset + len;
  if (!segments_.empty()) {
    const Vec& prev = segments_.back().end;
    if (prev.size() != seg.start.size())
      throw Error(ErrorCode::DimensionMismatch, "curve segments have different dimensions");
    if ((prev - seg.start).lpNorm<Eigen::Infinity>() > join_tol)
      throw Error(ErrorCode::NonSmoothPoint, "curve segment does not start where the previous one ends");
  }
  segments_.push_back(std::move(seg));
}

int Curve::segment_at(double t) const {
  if (segments_.empty()) throw Error(ErrorCode::ConfigError, "empty curve");
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (t < segments_[i].t1) return static_cast<int>(i);
  }
  return static_cast<int>(segments_.size()) - 1;
}

namespace {

GeodesicSolution run_geodesic(const CurveSegment& s, double length) {
  return integrate_geodesic(*s.metric, s.x0, s.y0, length);
}

}  // namespace

Vec Curve::position(double t) const {
  const auto& s = segments_[static_cast<std::size_t>(segment_at(t))];
  if (s.kind == CurveSegment::Kind::explicit_path) return s.position(t - s.t0);
  if (t - s.t0 <= 0.0) return s.x0;
  return run_geodesic(s, t - s.t0).x.back();
}

Vec Curve::velocity(double t) const {
  const auto& s = segments_[static_cast<std::size_t>(segment_at(t))];
  if (s.kind == CurveSegment::Kind::explicit_path) return s.velocity(t - s.t0);
  if (t - s.t0 <= 0.0) return s.y0;
  return run_geodesic(s, t - s.t0).y.back();
}

Curve Curve::reversed() const {
  Curve out;
  for (auto it = segments_.rbegin(); it != segments_.rend(); ++it) {
    if (it->kind != CurveSegment::Kind::explicit_path)
      throw Error(ErrorCode::ConfigError, "only explicit segments can be reversed");
    const double L = it->t1 - it->t0;
    CurveSegment r;
    r.kind = CurveSegment::Kind::explicit_path;
    r.name = it->name;
    r.t0 = 0.0;
    r.t1 = L;
    r.position = [p = it->position, L](double s) { return p(L - s); };
    r.velocity = [v = it->velocity, L](double s) -> Vec { return -v(L - s); };
    r.start = it->end;
    r.end = it->start;
    r.description = "reversed " + it->description;
    out.append(std::move(r));
  }
  return out;
}

std::string Curve::describe() const {
  std::string d;
  for (std::size_t i = 0; i < segments_.size(); ++i) d += (i ? " + " : "") + segments_[i].description;
  return d;
}

CurveSegment line_segment(const Vec& from, const Vec& to, double duration) {
  if (from.size() != to.size()) throw Error(ErrorCode::DimensionMismatch, "segment endpoints differ in dimension");
  if ((to - from).norm() < kDegeneracyFloor) throw Error(ErrorCode::ZeroVelocity, "degenerate segment");
  CurveSegment s;
  s.name = "segment";
  s.t1 = duration;
  const Vec vel = (to - from) / duration;
  s.position = [from, vel](double t) -> Vec { return from + t * vel; };
  s.velocity = [vel](double) { return vel; };
  s.start = from;
  s.end = to;
  s.description = "segment " + vec_str(from) + "->" + vec_str(to);
  return s;
}

CurveSegment chart_circle(const Vec& center, double radius, int axis_i, int axis_j, double turns) {
  const int n = static_cast<int>(center.size());
  if (axis_i < 0 || axis_j < 0 || axis_i >= n || axis_j >= n || axis_i == axis_j)
    throw Error(ErrorCode::DimensionMismatch, "circle axes must be two distinct coordinates");
  if (!(radius > 0.0)) throw Error(ErrorCode::ZeroVelocity, "circle radius must be positive");
  CurveSegment s;
  s.name = "circle";
  s.t1 = 2.0 * std::numbers::pi * turns;
  s.position = [=](double t) -> Vec {
    Vec p = center;
    p[axis_i] += radius * std::cos(t);
    p[axis_j] += radius * std::sin(t);
    return p;
  };
  s.velocity = [=](double t) -> Vec {
    Vec v = Vec::Zero(n);
    v[axis_i] = -radius * std::sin(t);
    v[axis_j] = radius * std::cos(t);
    return v;
  };
  s.start = s.position(0.0);
  s.end = s.position(s.t1);
  std::ostringstream os;
  os << "circle c=" << vec_str(center) << " r=" << radius << " axes=" << axis_i << "," << axis_j;
  s.description = os.str();
  return s;
}

CurveSegment geodesic_segment(const FinslerMetric& metric, const Vec& x0, const Vec& y0, double length) {
  const auto sol = integrate_geodesic(metric, x0, y0, length);
  if (sol.status == GeodesicStatus::chart_exit)
    throw Error(ErrorCode::OutOfChart, "geodesic segment leaves the chart at t = " + std::to_string(sol.t_end));
  CurveSegment s;
  s.kind = CurveSegment::Kind::geodesic;
  s.name = "geodesic";
  s.t1 = length;
  s.x0 = x0;
  s.y0 = y0;
  s.metric = std::make_shared<const FinslerMetric>(metric);
  s.start = x0;
  s.end = sol.x.back();
  s.description = "geodesic from " + vec_str(x0) + " dir " + vec_str(y0);
  return s;
}

CurveSegment custom_segment(std::string name, PathFn position, PathFn velocity, double length) {
  CurveSegment s;
  s.name = std::move(name);
  s.t1 = length;
  s.start = position(0.0);
  s.end = position(length);
  s.position = std::move(position);
  s.velocity = std::move(velocity);
  s.description = s.name;
  return s;
}

Vec covariant_derivative(const FinslerMetric& metric, const Curve& curve, const VectorField& W, double t,
                         TransportReference ref, const JetEngine& engine) {
  if (curve.empty()) throw Error(ErrorCode::ConfigError, "empty curve");
  if (!(t > curve.a() && t < curve.b()))
    throw Error(ErrorCode::NonSmoothPoint, "t is not an interior parameter of the curve");
  const auto& seg = curve.segments()[static_cast<std::size_t>(curve.segment_at(t))];
  const double eps = 1e-12 * std::max(1.0, std::abs(t));
  if (t - seg.t0 < eps || seg.t1 - t < eps) throw Error(ErrorCode::NonSmoothPoint, "t lies on a segment join");
  const Vec x = curve.position(t);
  const Vec T = curve.velocity(t);
  if (T.norm() < kDegeneracyFloor) throw Error(ErrorCode::ZeroVelocity, "curve velocity vanishes");
  const Vec w = W.value(t);
  Vec dw;
  if (W.derivative) {
    dw = W.derivative(t);
  } else {
    const double h = std::min({1e-3 * (seg.t1 - seg.t0), (t - seg.t0) / 2.5, (seg.t1 - t) / 2.5});
    dw = (-W.value(t + 2 * h) + 8.0 * W.value(t + h) - 8.0 * W.value(t - h) + W.value(t - 2 * h)) / (12.0 * h);
  }
  if (w.norm() < kDegeneracyFloor) return dw;
  return dw - transport_rate(metric, x, T, w, ref, engine);
}

TransportResult parallel_transport(const FinslerMetric& metric, const Curve& curve, const Vec& v,
                                   const TransportOptions& options) {
  if (curve.empty()) throw Error(ErrorCode::ConfigError, "empty curve");
  const int n = metric.dimension();
  if (v.size() != n) throw Error(ErrorCode::DimensionMismatch, "transported vector has the wrong dimension");
  TransportResult r;
  r.input = v;
  r.start_point = curve.start();
  if (!metric.in_chart(r.start_point)) throw Error(ErrorCode::OutOfChart, "curve starts outside the chart");
  const double F0 = metric.F(r.start_point, v);
  Vec W = v;
  Vec x_end = r.start_point;
  for (std::size_t k = 0; k < curve.segments().size(); ++k) {
    const auto& seg = curve.segments()[k];
    const double L = seg.t1 - seg.t0;
    const StepControl ctl = jittered(options.control, options.step_seed ? options.step_seed + k : 0, L);
    try {
      if (seg.kind == CurveSegment::Kind::explicit_path) {
        auto rhs = [&](double s, const Vec& w) {
          return transport_rate(metric, seg.position(s), seg.velocity(s), w, options.reference, options.engine);
        };
        auto obs = [&](double s, const Vec& w) {
          const double d = rel_drift(metric, seg.position(s), w, F0);
          r.step_times.push_back(seg.t0 + s);
          r.step_drift.push_back(d);
          r.max_drift = std::max(r.max_drift, d);
          return true;
        };
        integrate_dopri5(rhs, 0.0, L, W, ctl, r.stats, obs);
        x_end = seg.position(L);
      } else {
        // geodesic base curve and transported vector advance together
        Vec s(3 * n);
        s << seg.x0, seg.y0, W;
        auto rhs = [&](double, const Vec& st) {
          Vec d(3 * n);
          const Vec x = st.head(n), T = st.segment(n, n), w = st.tail(n);
          d.head(n) = T;
          d.segment(n, n) = -2.0 * spray_vector(metric, x, T, options.engine);
          d.tail(n) = transport_rate(metric, x, T, w, options.reference, options.engine);
          return d;
        };
        auto obs = [&](double t, const Vec& st) {
          const double d = rel_drift(metric, st.head(n), st.tail(n), F0);
          r.step_times.push_back(seg.t0 + t);
          r.step_drift.push_back(d);
          r.max_drift = std::max(r.max_drift, d);
          return true;
        };
        integrate_dopri5(rhs, 0.0, L, s, ctl, r.stats, obs);
        W = s.tail(n);
        x_end = s.head(n);
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::IntegrationFailure) throw;
      throw Error(ErrorCode::IntegrationFailure, std::string("transport failed on segment ") + std::to_string(k) +
                                                     " after " + std::to_string(r.stats.steps) +
                                                     " steps: " + e.what());
    }
  }
  r.output = W;
  r.end_point = x_end;
  return r;
}

GeodesicSolution integrate_geodesic(const FinslerMetric& metric, const Vec& x0, const Vec& y0, double length,
                                    const StepControl& control, const JetEngine& engine) {
  const int n = metric.dimension();
  const double F0 = metric.F(x0, y0);
  if (!(length > 0.0)) throw Error(ErrorCode::ConfigError, "geodesic length must be positive");
  GeodesicSolution sol;
  sol.x0 = x0;
  sol.y0 = y0;
  sol.t.push_back(0.0);
  sol.x.push_back(x0);
  sol.y.push_back(y0);
  Vec s(2 * n);
  s << x0, y0;
  bool left = false;
  auto rhs = [&](double, const Vec& st) -> Vec {
    try {
      return geodesic_rhs(metric, st, engine);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::OutOfChart) throw;
      left = true;
      return Vec::Zero(2 * n);
    }
  };
  auto obs = [&](double t, const Vec& st) {
    if (left || !metric.in_chart(st.head(n))) {
      sol.status = GeodesicStatus::chart_exit;
      return false;
    }
    sol.t.push_back(t);
    sol.x.push_back(st.head(n));
    sol.y.push_back(st.tail(n));
    const double F = std::sqrt(std::max(0.0, metric.F2_unchecked(st.head(n), st.tail(n))));
    sol.speed_drift = std::max(sol.speed_drift, std::abs(F - F0) / F0);
    return true;
  };
  integrate_dopri5(rhs, 0.0, length, s, control, sol.stats, obs);
  sol.t_end = sol.t.back();
  return sol;
}

Curve GeodesicSolution::curve(const FinslerMetric& metric) const {
  Curve c;
  c.append(geodesic_segment(metric, x0, y0, t_end));
  return c;
}

namespace {

double F_of(const FinslerMetric& metric, const Vec& x, const Vec& v) {
  return std::sqrt(std::max(0.0, metric.F2_unchecked(x, v)));
}

}  // namespace

LinearityReport transport_linearity_test(const FinslerMetric& metric, const Curve& curve, int trials,
                                         std::uint64_t seed, const TransportOptions& options) {
  if (trials < 1) throw Error(ErrorCode::ConfigError, "linearity test needs at least one trial");
  LinearityReport rep;
  rep.metric_id = metric.id();
  rep.curve = curve.describe();
  rep.trials = trials;
  rep.seed = seed;
  const int n = metric.dimension();
  for (int k = 0; k < trials; ++k) {
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(k)));
    LinearityTrial tr;
    tr.v = rng.normal_vector(n);
    tr.w = rng.normal_vector(n);
    tr.a = rng.uniform(0.25, 2.0);
    tr.b = rng.uniform(0.25, 2.0);
    const auto Pv = parallel_transport(metric, curve, tr.v, options);
    const auto Pw = parallel_transport(metric, curve, tr.w, options);
    const auto Ps = parallel_transport(metric, curve, tr.a * tr.v + tr.b * tr.w, options);
    const Vec diff = Ps.output - tr.a * Pv.output - tr.b * Pw.output;
    const Vec& xe = Ps.end_point;
    tr.defect = diff.norm() > 0.0 ? F_of(metric, xe, diff) / F_of(metric, xe, Ps.output) : 0.0;
    rep.defect = std::max(rep.defect, tr.defect);
    rep.max_norm_drift = std::max({rep.max_norm_drift, Pv.max_drift, Pw.max_drift, Ps.max_drift});
    rep.per_trial.push_back(std::move(tr));
  }
  return rep;
}

bool is_closed(const FinslerMetric& metric, const Curve& curve, double tol) {
  if (curve.empty()) return false;
  const Vec d = curve.end() - curve.start();
  const auto& per = metric.periods();
  for (int i = 0; i < d.size(); ++i) {
    double di = d[i];
    const double p = i < static_cast<int>(per.size()) ? per[static_cast<std::size_t>(i)] : 0.0;
    if (p > 0.0) di -= p * std::round(di / p);
    if (std::abs(di) > tol) return false;
  }
  return true;
}

HolonomyLoopReport holonomy_loop(const FinslerMetric& metric, const Curve& loop, const Mat& basis,
                                 const TransportOptions& options, std::optional<Mat> gram) {
  const int n = metric.dimension();
  if (!is_closed(metric, loop)) throw Error(ErrorCode::NotClosed, "loop does not return to its start point");
  if (basis.rows() != n || basis.cols() < 1) throw Error(ErrorCode::DimensionMismatch, "basis has the wrong shape");
  HolonomyLoopReport rep;
  rep.loop = loop.describe();
  rep.basis = basis;
  rep.map = Mat(n, basis.cols());
  const Vec x0 = loop.start();
  Vec combo = Vec::Zero(n), combo_image = Vec::Zero(n);
  for (int k = 0; k < basis.cols(); ++k) {
    const auto res = parallel_transport(metric, loop, basis.col(k), options);
    rep.map.col(k) = res.output;
    const double F0 = F_of(metric, x0, basis.col(k));
    rep.norm_defect = std::max(rep.norm_defect, std::abs(F_of(metric, x0, res.output) - F0) / F0);
    const double c = 1.0 / (k + 1.0);
    combo += c * basis.col(k);
    combo_image += c * res.output;
  }
  const auto pc = parallel_transport(metric, loop, combo, options);
  const Vec diff = pc.output - combo_image;
  rep.linearity_defect = diff.norm() > 0.0 ? F_of(metric, x0, diff) / F_of(metric, x0, pc.output) : 0.0;
  const double Fc = F_of(metric, x0, combo);
  rep.norm_defect = std::max(rep.norm_defect, std::abs(F_of(metric, x0, pc.output) - Fc) / Fc);

  Mat G;
  if (gram) {
    G = *gram;
    rep.gram_source = "supplied";
  } else {
    G = fundamental_tensor(metric, x0, basis.col(0), options.engine).g;
    rep.gram_source = "g(x0, basis[0])";
  }
  if (basis.cols() == n) {
    // M in basis coordinates: transported = map = M_lin * basis
    const Mat M = rep.map * basis.inverse();
    rep.orthogonality_defect = (M.transpose() * G * M - G).cwiseAbs().maxCoeff() / G.cwiseAbs().maxCoeff();
    if (n == 2) {
      const Eigen::LLT<Mat> llt(G);
      const Mat U = llt.matrixU();  // G = U^T U, orthonormal coordinates u = U v
      const Mat R = U * M * U.inverse();
      rep.rotation_angle = std::atan2(R(1, 0), R(0, 0));
    }
  }
  return rep;
}

}  // namespace finsler
