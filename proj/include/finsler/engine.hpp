#pragma once

#include <string>

#include "finsler/jet.hpp"
#include "finsler/metric.hpp"

namespace finsler {

enum class DiffMode { forward_algorithmic, central_finite_difference };

std::string to_string(DiffMode mode);
DiffMode parse_diff_mode(const std::string& name);

/// Produces the Taylor jet of F^2 around (x, y) in the joint variables
/// (x^1..x^n, y^1..y^n).
///
/// forward_algorithmic propagates jets through the norm evaluator.
/// central_finite_difference keeps exact jets in y but obtains every
/// x-derivative from Richardson-extrapolated central differences of the
/// y-jets, which gives an x-differentiation path independent of the
/// algorithmic one.
struct JetEngine {
  DiffMode mode = DiffMode::forward_algorithmic;
  double fd_step = 1e-3;  // relative to max(1, |x^a|)
  int max_order = 5;

  void validate() const;

  Jet norm_squared_jet(const FinslerMetric& metric, const Vec& x, const Vec& y, int order,
                       int xcap) const;
};

/// g_ij = 1/2 d^2 F^2 / dy^i dy^j at (x, y).
Mat vertical_hessian(const FinslerMetric& metric, const Vec& x, const Vec& y,
                     const JetEngine& engine = {});

struct ConvexityReport {
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  double floor = 0.0;
  bool passed = false;
};

/// Passes iff the smallest eigenvalue of g exceeds 1e-9 * max(1, largest).
ConvexityReport check_strong_convexity(const FinslerMetric& metric, const Vec& x, const Vec& y,
                                       const JetEngine& engine = {});

}  // namespace finsler
