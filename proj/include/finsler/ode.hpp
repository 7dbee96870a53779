#pragma once

// Adaptive Dormand-Prince 5(4) integrator for y' = f(t, y) on Eigen vectors.

#include <algorithm>
#include <cmath>
#include <functional>

#include <Eigen/Dense>

#include "finsler/error.hpp"

namespace finsler {

struct StepControl {
  double rtol = 1e-9;
  double atol = 1e-12;
  double h0 = 0.0;     // 0: chosen from the interval length
  double hmax = 0.0;   // 0: unbounded
  int max_steps = 200000;
};

struct OdeStats {
  int steps = 0;
  int rejected = 0;
  int evaluations = 0;
  double max_error_estimate = 0.0;  // largest accepted scaled error norm
};

enum class OdeStatus { completed, stopped };

/// Integrates from t0 to t1 (t1 > t0). `observer(t, y)` is called after each
/// accepted step, and integration stops early when it returns false.
template <class F, class Observer>
OdeStatus integrate_dopri5(F&& f, double t0, double t1, Eigen::VectorXd& y, const StepControl& ctl,
                           OdeStats& stats, Observer&& observer) {
  using V = Eigen::VectorXd;
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                          b6 = 11.0 / 84;
  // difference between the 5th and embedded 4th order weights
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;

  const double span = t1 - t0;
  if (!(span > 0.0)) return OdeStatus::completed;
  double h = ctl.h0 > 0.0 ? ctl.h0 : span * 1e-3;
  const double hmax = ctl.hmax > 0.0 ? ctl.hmax : span;
  double t = t0;
  V k1 = f(t, y);
  ++stats.evaluations;
  V k2, k3, k4, k5, k6, k7, ynew, tmp;
  double fac_prev = 1e-4;
  while (t < t1) {
    if (stats.steps + stats.rejected >= ctl.max_steps)
      throw Error(ErrorCode::IntegrationFailure, "step budget exhausted at t = " + std::to_string(t));
    h = std::min({h, hmax, t1 - t});
    if (!(h > 1e-14 * std::max(1.0, std::abs(t))))
      throw Error(ErrorCode::IntegrationFailure, "step size underflow at t = " + std::to_string(t));
    tmp = y + h * a21 * k1;
    k2 = f(t + c2 * h, tmp);
    tmp = y + h * (a31 * k1 + a32 * k2);
    k3 = f(t + c3 * h, tmp);
    tmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    k4 = f(t + c4 * h, tmp);
    tmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    k5 = f(t + c5 * h, tmp);
    tmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    k6 = f(t + h, tmp);
    ynew = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    k7 = f(t + h, ynew);
    stats.evaluations += 6;

    const V err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    double en = 0.0;
    for (int i = 0; i < y.size(); ++i) {
      const double sc = ctl.atol + ctl.rtol * std::max(std::abs(y[i]), std::abs(ynew[i]));
      en += (err[i] / sc) * (err[i] / sc);
    }
    en = std::sqrt(en / static_cast<double>(y.size()));
    if (!std::isfinite(en)) {
      ++stats.rejected;
      h *= 0.1;
      continue;
    }
    if (en <= 1.0) {
      // PI step-size control
      const double fac = std::clamp(0.9 * std::pow(en, -0.7 / 5) * std::pow(fac_prev, 0.4 / 5), 0.2, 5.0);
      fac_prev = std::max(en, 1e-4);
      t = (t1 - t - h) <= 1e-15 * std::max(1.0, std::abs(t1)) ? t1 : t + h;
      y = ynew;
      k1 = k7;
      ++stats.steps;
      stats.max_error_estimate = std::max(stats.max_error_estimate, en);
      h *= fac;
      if (!observer(t, y)) return OdeStatus::stopped;
    } else {
      ++stats.rejected;
      h *= std::max(0.2, 0.9 * std::pow(en, -0.2));
    }
  }
  return OdeStatus::completed;
}

template <class F>
OdeStatus integrate_dopri5(F&& f, double t0, double t1, Eigen::VectorXd& y, const StepControl& ctl,
                           OdeStats& stats) {
  return integrate_dopri5(std::forward<F>(f), t0, t1, y, ctl, stats, [](double, const Eigen::VectorXd&) {
    return true;
  });
}

}  // namespace finsler
