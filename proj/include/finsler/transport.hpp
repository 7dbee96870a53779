#pragma once

// Curves, geodesics of the spray, nonlinear parallel transport and loop
// holonomy.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "finsler/connection.hpp"
#include "finsler/ode.hpp"

namespace finsler {

using PathFn = std::function<Vec(double)>;

struct CurveSegment {
  enum class Kind { explicit_path, geodesic };
  Kind kind = Kind::explicit_path;
  std::string name;
  double t0 = 0.0, t1 = 1.0;  // global parameter range, assigned by Curve::append
  PathFn position, velocity;  // explicit_path, in the segment's local parameter s = t - t0
  // geodesic: initial data and the metric whose spray defines the segment
  Vec x0, y0;
  std::shared_ptr<const FinslerMetric> metric;
  Vec start, end;
  std::string description;
};

class Curve {
 public:
  /// Appends a segment; its start must match the current end within `join_tol`.
  void append(CurveSegment seg, double join_tol = 1e-8);

  double a() const { return segments_.empty() ? 0.0 : segments_.front().t0; }
  double b() const { return segments_.empty() ? 0.0 : segments_.back().t1; }
  const std::vector<CurveSegment>& segments() const { return segments_; }
  bool empty() const { return segments_.empty(); }
  Vec start() const { return segments_.front().start; }
  Vec end() const { return segments_.back().end; }

  /// Segment index containing t; joins belong to the later segment.
  int segment_at(double t) const;
  Vec position(double t) const;
  Vec velocity(double t) const;

  /// Reversed orientation, t -> a + b - t. Explicit segments only.
  Curve reversed() const;
  std::string describe() const;

 private:
  std::vector<CurveSegment> segments_;
};

/// Straight chart segment from `from` to `to` over local parameter [0, duration].
CurveSegment line_segment(const Vec& from, const Vec& to, double duration = 1.0);
/// Circle of chart radius r in the (axis_i, axis_j) coordinate plane, `turns` revolutions.
CurveSegment chart_circle(const Vec& center, double radius, int axis_i, int axis_j, double turns = 1.0);
/// Geodesic of `metric` from (x0, y0) over parameter length `length`.
CurveSegment geodesic_segment(const FinslerMetric& metric, const Vec& x0, const Vec& y0, double length);
CurveSegment custom_segment(std::string name, PathFn position, PathFn velocity, double length);

/// Which tangent vector the connection coefficients are evaluated at.
enum class TransportReference { velocity, transported };

struct VectorField {
  PathFn value;
  PathFn derivative;  // optional; central differences when empty
};

/// dW/dt + W^j T^k Gamma^i_jk(gamma, ref) at t; ref is T unless overridden.
Vec covariant_derivative(const FinslerMetric& metric, const Curve& curve, const VectorField& W, double t,
                         TransportReference ref = TransportReference::velocity, const JetEngine& engine = {});

struct TransportOptions {
  StepControl control;
  TransportReference reference = TransportReference::transported;
  std::uint64_t step_seed = 0;  // jitters the initial step size; results must not depend on it
  JetEngine engine;
};

struct TransportResult {
  Vec input, output;
  Vec start_point, end_point;
  std::vector<double> step_times;
  std::vector<double> step_drift;  // relative F drift after each accepted step
  double max_drift = 0.0;
  OdeStats stats;
};

TransportResult parallel_transport(const FinslerMetric& metric, const Curve& curve, const Vec& v,
                                   const TransportOptions& options = {});

enum class GeodesicStatus { completed, chart_exit };

struct GeodesicSolution {
  Vec x0, y0;
  std::vector<double> t;
  std::vector<Vec> x, y;
  GeodesicStatus status = GeodesicStatus::completed;
  double t_end = 0.0;
  double speed_drift = 0.0;  // sup |F(x, y) - F(x0, y0)| / F(x0, y0)
  OdeStats stats;
  Curve curve(const FinslerMetric& metric) const;
};

GeodesicSolution integrate_geodesic(const FinslerMetric& metric, const Vec& x0, const Vec& y0, double length,
                                    const StepControl& control = {}, const JetEngine& engine = {});

struct LinearityTrial {
  Vec v, w;
  double a = 0.0, b = 0.0;
  double defect = 0.0;
};

struct LinearityReport {
  std::string metric_id;
  std::string curve;
  int trials = 0;
  std::uint64_t seed = 0;
  double defect = 0.0;  // max over trials
  double max_norm_drift = 0.0;
  std::vector<LinearityTrial> per_trial;
};

/// defect = F(P(av + bw) - aP(v) - bP(w)) / F(P(av + bw)) at the curve end.
LinearityReport transport_linearity_test(const FinslerMetric& metric, const Curve& curve, int trials,
                                         std::uint64_t seed, const TransportOptions& options = {});

struct HolonomyLoopReport {
  std::string loop;
  Mat basis;
  Mat map;  // column k = transport of basis column k
  double linearity_defect = 0.0;
  double norm_defect = 0.0;
  std::optional<double> orthogonality_defect;
  std::optional<double> rotation_angle;  // 2-dimensional loops, in a gram-orthonormal frame
  std::string gram_source;
};

/// Loop closure tolerance in chart coordinates (modulo coordinate periods).
inline constexpr double kLoopClosureTolerance = 1e-10;

/// `gram` is the Riemannian metric used for the orthogonality defect and the
/// rotation angle; defaults to g(x0, first basis vector).
HolonomyLoopReport holonomy_loop(const FinslerMetric& metric, const Curve& loop, const Mat& basis,
                                 const TransportOptions& options = {}, std::optional<Mat> gram = std::nullopt);

/// Closed loop up to the metric's coordinate periods.
bool is_closed(const FinslerMetric& metric, const Curve& curve, double tol = kLoopClosureTolerance);

}  // namespace finsler
