#pragma once

// hh-curvature of the Chern connection, the spray Riemann curvature used as
// an independent cross-check, flag curvature and flag searches.

#include <cstdint>
#include <string>
#include <vector>

#include "finsler/connection.hpp"

namespace finsler {

/// R(j, i, k, l) = R_j^i_kl at (x, y).
struct HHCurvature {
  Vec x, y;
  Tensor4 R;
};

struct Flag {
  Vec x, y, V;
};

struct FlagCurvatureValue {
  double K = 0.0;
  Flag flag;
  double gram = 0.0;
};

/// Relative Gram-determinant floor for a flag.
inline constexpr double kFlagFloor = 1e-10;
inline constexpr double kVanishTolerance = 1e-6;

HHCurvature hh_curvature_chern(const FinslerMetric& metric, const Vec& x, const Vec& y,
                               const JetEngine& engine = {});

/// R^i_k stored (i, k).
Mat riemann_curvature_spray(const FinslerMetric& metric, const Vec& x, const Vec& y,
                            const JetEngine& engine = {});

/// y^j R_j^i_kl y^l from a curvature-level geometry, stored (i, k).
Mat contract_hh(const Tensor4& hh, const Vec& y);

FlagCurvatureValue flag_curvature(const FinslerMetric& metric, const Flag& flag, const JetEngine& engine = {});
/// Same, reusing an existing curvature-level geometry at (flag.x, flag.y).
FlagCurvatureValue flag_curvature(const LocalGeometry& geo, const Vec& V);

struct ScanGrid {
  int flags = 1000;
  int buckets = 16;
};

struct ScanRecord {
  Vec x, y, V;
  double K = 0.0;
};

struct ScanReport {
  std::string metric_id;
  std::string grid;
  ChartDomain region;
  int samples = 0;
  double min_abs_K = 0.0;
  Flag argmin;
  double min_K = 0.0;
  double max_K = 0.0;
  std::vector<double> bucket_edges;
  std::vector<int> bucket_counts;
  std::uint64_t seed = 0;
  std::vector<ScanRecord> records;
};

/// Flags are drawn independently per index from Rng::derive(seed, index), so
/// the report does not depend on `workers`.
ScanReport scan_flags(const FinslerMetric& metric, const ChartDomain& region, const ScanGrid& grid,
                      std::uint64_t seed, const JetEngine& engine = {}, int workers = 1);

struct FlagSearchBudget {
  int coarse_starts = 64;
  int descent_steps = 200;
  int max_evaluations = 20000;
};

struct VanishingFlagResult {
  bool found = false;
  FlagCurvatureValue best;  // witness when found, otherwise the best flag seen
  bool mixed_blocks = false;  // pole and cloth lie in different product factors
  int evaluations = 0;
};

/// Extremes of K(y, .) over the g-orthogonal complement of y at one point.
struct PoleSpectrum {
  double K_min = 0.0, K_max = 0.0;
  Vec V_min, V_max;
  Vec V_zero;  // cloth with the smallest |K| (exactly zero when the range straddles 0)
  double K_zero = 0.0;
};

PoleSpectrum pole_spectrum(const LocalGeometry& geo);

VanishingFlagResult find_vanishing_flag(const FinslerMetric& metric, const ChartDomain& region,
                                        const FlagSearchBudget& budget, std::uint64_t seed,
                                        const JetEngine& engine = {}, double vanish_tol = kVanishTolerance);

/// True when y is supported in one factor block and V in a different one.
bool is_mixed_flag(const FinslerMetric& metric, const Vec& y, const Vec& V, double rel = 1e-12);

}  // namespace finsler
