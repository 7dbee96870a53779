#pragma once

// Desk-scale diameter estimate against the Bonnet bound diam <= pi / sqrt(H)
// for K >= H > 0.

#include <cstdint>
#include <numbers>
#include <optional>
#include <string>

#include "finsler/transport.hpp"

namespace finsler {

struct BonnetBudget {
  int pairs = 200;
  int directions = 256;
  int targets_per_source = 10;  // targets sharing one shooting fan
  int refine_iterations = 30;
  int ascent_steps = 80;
  int curvature_flags = 256;   // flags scanned for the lower curvature bound H
};

struct BonnetTolerances {
  double upper = 0.001 / std::numbers::pi;  // relative slack above the bound
  double lower = 0.02 / std::numbers::pi;   // relative shortfall allowed below the known diameter
};

struct BonnetReport {
  std::string metric_id;
  bool hypothesis = false;  // sampled K bounded below by H > 0
  double H = 0.0;
  double bound = 0.0;       // pi / sqrt(H)
  double estimate = 0.0;
  std::optional<double> known_diameter;  // pi r for the round sphere
  double lower = 0.0, upper = 0.0;       // acceptance band
  bool passed = false;
  int pairs = 0;
  int geodesics = 0;
  Vec p, q;  // best pair
  BonnetTolerances tolerances;
  std::uint64_t seed = 0;
  std::string note;
};

/// Distance between p and q as the shortest geodesic from p hitting q, over a
/// fan of initial directions with brackets refined by regula falsi. Surfaces only.
BonnetReport bonnet_diameter_check(const FinslerMetric& metric, const BonnetBudget& budget,
                                   const BonnetTolerances& tol, std::uint64_t seed, const JetEngine& engine = {});

}  // namespace finsler
