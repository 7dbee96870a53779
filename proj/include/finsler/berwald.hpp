#pragma once

// Berwald and Riemannian detectors, the Binet-Legendre metric, the
// Chern / Levi-Civita coincidence check, product checks and the rigidity
// verdict.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "finsler/curvature.hpp"
#include "finsler/transport.hpp"

namespace finsler {

inline constexpr double kBerwaldTolerance = 1e-6;
inline constexpr double kRiemannTolerance = 1e-6;

struct BerwaldReport {
  std::string metric_id;
  std::vector<Vec> points;
  std::vector<double> point_deviation;  // max pairwise |dGamma| / max(1, |Gamma|) per point
  double max_deviation = 0.0;
  bool berwald = false;
  double tolerance = kBerwaldTolerance;
  int indicatrix_samples = 0;
  std::uint64_t seed = 0;
  std::string engine;
};

/// Points are drawn from `region` (the chart inset by 5% when empty).
BerwaldReport is_berwald(const FinslerMetric& metric, int point_samples, int indicatrix_samples,
                         double tol, std::uint64_t seed, const JetEngine& engine = {},
                         const ChartDomain& region = {});

struct RiemannReport {
  std::string metric_id;
  double max_cartan = 0.0;       // on the indicatrix, relative to max(1, |g|)
  double max_g_deviation = 0.0;  // |g(y1) - g(y2)|, relative to max(1, |g|)
  bool cartan_riemannian = false;
  bool g_riemannian = false;
  bool riemannian = false;
  double tolerance = kRiemannTolerance;
  int samples = 0;
  std::uint64_t seed = 0;
};

/// Throws WitnessDisagreement when the two witnesses reach different verdicts.
RiemannReport is_riemannian(const FinslerMetric& metric, int samples, double tol, std::uint64_t seed,
                            const JetEngine& engine = {}, const ChartDomain& region = {});

/// Unit-sphere quadrature for the radial estimator: a product Gauss rule in
/// hyperspherical coordinates, randomly rotated once per replicate.
struct DirectionSet {
  int dimension = 0;
  int replicates = 0;
  std::vector<Vec> directions;  // replicate r occupies [r * per, (r + 1) * per)
  std::vector<double> weights;  // sum to 1 within each replicate
  int per_replicate() const { return static_cast<int>(directions.size()) / replicates; }
};

DirectionSet make_direction_set(int n, int samples, std::uint64_t seed, int replicates = 8);

enum class BLMethod { rejection, radial_qmc };

struct BinetLegendreMetric {
  Vec x;
  Mat g;          // g_F(x)
  Mat inverse;    // (n + 2) / vol * int_B y y^T dy
  Mat std_error;  // entrywise standard error of g
  int samples = 0;
  int accepted = 0;
  BLMethod method = BLMethod::rejection;
  std::uint64_t seed = 0;
};

BinetLegendreMetric binet_legendre_metric(const FinslerMetric& metric, const Vec& x, int mc_samples,
                                          std::uint64_t seed, BLMethod method = BLMethod::rejection);
/// Radial estimator on a shared direction set (common random numbers).
BinetLegendreMetric binet_legendre_metric(const FinslerMetric& metric, const Vec& x, const DirectionSet& dirs);

/// Christoffel symbols of g_F at x from a 5-point stencil per axis.
Tensor3 binet_legendre_christoffel(const FinslerMetric& metric, const Vec& x, const DirectionSet& dirs,
                                   double step);

struct CoincidenceReport {
  std::string metric_id;
  std::vector<Vec> points;
  std::vector<double> point_deviation;
  double max_deviation = 0.0;
  double tolerance = 0.0;
  int mc_samples = 0;
  double stencil_step = 0.0;
  double berwald_deviation = 0.0;
  bool passed = false;
  std::string note;
};

/// Throws NotBerwald when the metric fails is_berwald first.
CoincidenceReport compare_chern_levicivita(const FinslerMetric& metric, const ChartDomain& region, int samples,
                                           double tol, int mc_samples, std::uint64_t seed,
                                           const JetEngine& engine = {});

struct ProductConnectionReport {
  std::string metric_id;
  int samples = 0;
  double max_mixed_gamma = 0.0;
  double max_mixed_R = 0.0;
  double max_mixed_K = 0.0;
  std::vector<std::optional<std::pair<double, double>>> factor_K;  // (min, max) of pure-factor flags
  double tolerance_gamma = 0.0, tolerance_R = 0.0;
  bool passed = false;
};

ProductConnectionReport product_connection_check(const FinslerMetric& m1, const FinslerMetric& m2, int samples,
                                                 double tol_gamma, double tol_R, std::uint64_t seed,
                                                 const JetEngine& engine = {});

struct TransportCoincidenceReport {
  Mat nonlinear_map, levi_civita_map;
  double max_deviation = 0.0;  // relative to the largest basis image
  int nodes = 0;
  int mc_samples = 0;
};

/// Nonlinear transport of a basis against Levi-Civita transport of g_F, the
/// latter from Chebyshev interpolation of the g_F Christoffels along each
/// explicit segment.
TransportCoincidenceReport levi_civita_transport_check(const FinslerMetric& metric, const Curve& curve,
                                                       int mc_samples, std::uint64_t seed, int nodes = 24);

enum class Consistency { consistent_with_theorem, not_applicable, contradiction, inconclusive };
std::string to_string(Consistency c);

struct RigidityBudget {
  int point_samples = 6;
  int indicatrix_samples = 8;
  int riemann_samples = 12;
  FlagSearchBudget flags;
};

struct RigidityTolerances {
  double berwald = kBerwaldTolerance;
  double riemann = kRiemannTolerance;
  double vanish = kVanishTolerance;
};

struct RigidityVerdict {
  std::string metric_id;
  bool is_berwald = false;
  bool is_riemannian = false;
  BerwaldReport berwald;
  std::optional<RiemannReport> riemann;
  std::optional<FlagCurvatureValue> witness;
  bool witness_mixed = false;
  double best_abs_K = 0.0;
  Consistency consistency = Consistency::not_applicable;
  int evaluations = 0;
  std::string note;
  RigidityTolerances tolerances;
  std::uint64_t seed = 0;
};

RigidityVerdict verify_rigidity(const FinslerMetric& metric, const ChartDomain& region, const RigidityBudget& budget,
                                const RigidityTolerances& tol, std::uint64_t seed, const JetEngine& engine = {});

}  // namespace finsler
