#pragma once

// Closed-form round-sphere paths in (theta, phi) chart coordinates.

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "finsler/transport.hpp"

namespace oracle {

using Vec3 = Eigen::Vector3d;

inline finsler::Vec to_chart(const Vec3& p) {
  return (finsler::Vec(2) << std::acos(std::clamp(p.z(), -1.0, 1.0)), std::atan2(p.y(), p.x())).finished();
}

inline finsler::Vec chart_velocity(const Vec3& p, const Vec3& dp) {
  const double rho2 = p.x() * p.x() + p.y() * p.y();
  return (finsler::Vec(2) << -dp.z() / std::sqrt(rho2), (p.x() * dp.y() - p.y() * dp.x()) / rho2).finished();
}

/// Quarter great circle from unit vector a towards the orthogonal unit vector b.
inline finsler::CurveSegment great_arc(const Vec3& a, const Vec3& b, double angle) {
  auto pos = [a, b](double t) -> Vec3 { return std::cos(t) * a + std::sin(t) * b; };
  auto vel = [a, b](double t) -> Vec3 { return -std::sin(t) * a + std::cos(t) * b; };
  return finsler::custom_segment(
      "great_arc", [pos](double t) { return to_chart(pos(t)); },
      [pos, vel](double t) { return chart_velocity(pos(t), vel(t)); }, angle);
}

/// Geodesic triangle with three right angles, centred on (theta, phi) = (pi/2, 0).
inline finsler::Curve right_angle_triangle() {
  const Vec3 c = Vec3(1, 1, 1).normalized();
  const Vec3 target(1, 0, 0);
  const Eigen::Matrix3d R = Eigen::Quaterniond::FromTwoVectors(c, target).toRotationMatrix();
  const Vec3 A = R * Vec3::UnitX(), B = R * Vec3::UnitY(), C = R * Vec3::UnitZ();
  finsler::Curve curve;
  const double q = std::numbers::pi / 2;
  curve.append(great_arc(A, B, q));
  curve.append(great_arc(B, C, q));
  curve.append(great_arc(C, A, q));
  return curve;
}

/// Latitude circle at colatitude theta, once around in phi.
inline finsler::Curve latitude_loop(double theta) {
  finsler::Curve c;
  c.append(finsler::line_segment((finsler::Vec(2) << theta, 0.0).finished(),
                                 (finsler::Vec(2) << theta, 2 * std::numbers::pi).finished()));
  return c;
}

}  // namespace oracle
