#pragma once

// Metric abstraction: declarative specs, the catalog of concrete norm
// families and the evaluatable FinslerMetric.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "finsler/jet.hpp"

namespace finsler {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Vectors with Euclidean norm below this are treated as zero.
inline constexpr double kDegeneracyFloor = 1e-8;
/// Width of the band around each pole excluded from the sphere chart.
inline constexpr double kPolarBand = 0.05;
inline constexpr double kQuarticEpsilonMax = 10.0;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
  bool contains(double v) const { return v >= lo && v <= hi; }
};
using ChartDomain = std::vector<Interval>;

enum class Family { euclidean, sphere, randers, minkowski_quartic, product, custom };

std::string to_string(Family f);

/// One-form b(x) = constant + linear * x on the chart.
struct BetaSpec {
  std::vector<double> constant;
  std::vector<std::vector<double>> linear;  // linear[i][j] multiplies x^j in b_i

  double component(int i, std::span<const double> x) const;
};

struct MetricSpec {
  Family family = Family::euclidean;
  int dimension = 0;
  ChartDomain chart_domain;  // empty -> family default
  double radius = 1.0;       // sphere
  double epsilon = 0.1;      // minkowski_quartic
  std::vector<MetricSpec> factors;  // product
  std::vector<MetricSpec> alpha;    // randers: exactly one Riemannian base
  BetaSpec beta;                    // randers
  std::string label;                // optional display id
};

MetricSpec euclidean_spec(int dimension);
MetricSpec sphere_spec(double radius);
MetricSpec minkowski_quartic_spec(double epsilon = 0.1, int dimension = 2);
MetricSpec randers_spec(MetricSpec alpha, BetaSpec beta);
MetricSpec product_spec(std::vector<MetricSpec> factors);

/// Default chart box for a spec (used when chart_domain is empty).
ChartDomain default_chart(const MetricSpec& spec);
/// Per-coordinate period of the chart (0 when the coordinate is not periodic);
/// the sphere longitude has period 2 pi.
std::vector<double> coordinate_periods(const MetricSpec& spec);
std::string describe(const MetricSpec& spec);

/// Squared norm F(x, y)^2, evaluatable on plain numbers and on jets.
class Norm {
 public:
  virtual ~Norm() = default;
  virtual int dimension() const = 0;
  virtual double squared(std::span<const double> x, std::span<const double> y) const = 0;
  virtual Jet squared(std::span<const Jet> x, std::span<const Jet> y) const = 0;
};

/// Implements both Norm overloads from one template
/// `template <class T> T eval(std::span<const T> x, std::span<const T> y) const`.
template <class Derived>
class NormImpl : public Norm {
 public:
  double squared(std::span<const double> x, std::span<const double> y) const final {
    return static_cast<const Derived&>(*this).template eval<double>(x, y);
  }
  Jet squared(std::span<const Jet> x, std::span<const Jet> y) const final {
    return static_cast<const Derived&>(*this).template eval<Jet>(x, y);
  }
};

class FinslerMetric {
 public:
  FinslerMetric(MetricSpec spec, std::shared_ptr<const Norm> norm, ChartDomain chart,
                std::vector<int> factor_dims = {});

  const MetricSpec& spec() const { return spec_; }
  const Norm& norm() const { return *norm_; }
  std::shared_ptr<const Norm> norm_ptr() const { return norm_; }
  int dimension() const { return norm_->dimension(); }
  const ChartDomain& chart() const { return chart_; }
  /// Block sizes of the product decomposition (one block when not a product).
  const std::vector<int>& factor_dims() const { return factor_dims_; }
  const std::vector<double>& periods() const { return periods_; }
  std::string id() const;

  bool in_chart(const Vec& x) const;
  /// F(x, y) with domain and degeneracy checks.
  double F(const Vec& x, const Vec& y) const;
  double F2_unchecked(const Vec& x, const Vec& y) const;

 private:
  MetricSpec spec_;
  std::shared_ptr<const Norm> norm_;
  ChartDomain chart_;
  std::vector<int> factor_dims_;
  std::vector<double> periods_;
};

double eval_F(const FinslerMetric& metric, const Vec& x, const Vec& y);

/// Validates the spec, builds the norm and runs homogeneity and convexity
/// spot checks. Throws SpecValidation naming the violated invariant.
FinslerMetric catalog_instantiate(const MetricSpec& spec);

/// Pythagorean product sqrt(sum_k F_k^2) on the concatenated chart.
FinslerMetric make_product_metric(const std::vector<FinslerMetric>& factors);

struct PropertyReport {
  std::string property;
  double max_error = 0.0;
  double tolerance = 0.0;
  int samples = 0;
  std::uint64_t seed = 0;
  bool passed = false;
};

PropertyReport check_homogeneity(const FinslerMetric& metric, int sample_count, std::uint64_t seed,
                                 double tolerance = 1e-10);

/// Uniform point in the chart box.
template <class RngT>
Vec sample_point(const ChartDomain& box, RngT& rng) {
  Vec x(static_cast<int>(box.size()));
  for (std::size_t i = 0; i < box.size(); ++i) x[static_cast<int>(i)] = rng.uniform(box[i].lo, box[i].hi);
  return x;
}

/// Shrinks a box towards its centre by `fraction` of each width on both sides.
ChartDomain inset(const ChartDomain& box, double fraction);

}  // namespace finsler
