#include "finsler/metric.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "finsler/engine.hpp"
#include "finsler/error.hpp"
#include "finsler/random.hpp"

namespace finsler {
namespace {

using std::cos;
using std::sin;
using std::sqrt;

class EuclideanNorm final : public NormImpl<EuclideanNorm> {
 public:
  explicit EuclideanNorm(int n) : n_(n) {}
  int dimension() const override { return n_; }

  template <class T>
  T eval(std::span<const T> /*x*/, std::span<const T> y) const {
    T s = y[0] * y[0];
    for (int i = 1; i < n_; ++i) s += y[i] * y[i];
    return s;
  }

 private:
  int n_;
};

// Round sphere of radius r in (colatitude, longitude).
class SphereNorm final : public NormImpl<SphereNorm> {
 public:
  explicit SphereNorm(double r) : r2_(r * r) {}
  int dimension() const override { return 2; }

  template <class T>
  T eval(std::span<const T> x, std::span<const T> y) const {
    T s = sin(x[0]);
    return (y[0] * y[0] + s * s * (y[1] * y[1])) * r2_;
  }

 private:
  double r2_;
};

// F^2 = |y|^2 + eps * sqrt(sum y_i^4)
class MinkowskiQuarticNorm final : public NormImpl<MinkowskiQuarticNorm> {
 public:
  MinkowskiQuarticNorm(double eps, int n) : eps_(eps), n_(n) {}
  int dimension() const override { return n_; }

  template <class T>
  T eval(std::span<const T> /*x*/, std::span<const T> y) const {
    T sq = y[0] * y[0];
    T quart = sq * sq;
    for (int i = 1; i < n_; ++i) {
      T s = y[i] * y[i];
      sq += s;
      quart += s * s;
    }
    return sq + sqrt(quart) * eps_;
  }

 private:
  double eps_;
  int n_;
};

// F = sqrt(alpha^2) + b(x) . y
class RandersNorm final : public NormImpl<RandersNorm> {
 public:
  RandersNorm(std::shared_ptr<const Norm> alpha, BetaSpec beta)
      : alpha_(std::move(alpha)), beta_(std::move(beta)) {}
  int dimension() const override { return alpha_->dimension(); }

  template <class T>
  T eval(std::span<const T> x, std::span<const T> y) const {
    const int n = dimension();
    T a = sqrt(alpha_->squared(x, y));
    T b = y[0] * beta_at(0, x);
    for (int i = 1; i < n; ++i) b += y[i] * beta_at(i, x);
    T f = a + b;
    return f * f;
  }

 private:
  template <class T>
  T beta_at(int i, std::span<const T> x) const {
    T b = x[0] * 0.0 + beta_.constant[i];
    if (!beta_.linear.empty()) {
      for (std::size_t j = 0; j < x.size(); ++j) {
        const double c = beta_.linear[i][j];
        if (c != 0.0) b += x[j] * c;
      }
    }
    return b;
  }

  std::shared_ptr<const Norm> alpha_;
  BetaSpec beta_;
};

class ProductNorm final : public NormImpl<ProductNorm> {
 public:
  explicit ProductNorm(std::vector<std::shared_ptr<const Norm>> factors) : factors_(std::move(factors)) {
    n_ = 0;
    for (const auto& f : factors_) {
      offsets_.push_back(n_);
      n_ += f->dimension();
    }
  }
  int dimension() const override { return n_; }

  template <class T>
  T eval(std::span<const T> x, std::span<const T> y) const {
    T s = factors_[0]->squared(x.subspan(0, factors_[0]->dimension()), y.subspan(0, factors_[0]->dimension()));
    for (std::size_t k = 1; k < factors_.size(); ++k) {
      const auto off = static_cast<std::size_t>(offsets_[k]);
      const auto d = static_cast<std::size_t>(factors_[k]->dimension());
      s += factors_[k]->squared(x.subspan(off, d), y.subspan(off, d));
    }
    return s;
  }

 private:
  std::vector<std::shared_ptr<const Norm>> factors_;
  std::vector<int> offsets_;
  int n_;
};

bool is_riemannian_family(const MetricSpec& s) {
  switch (s.family) {
    case Family::euclidean:
    case Family::sphere:
      return true;
    case Family::product:
      for (const auto& f : s.factors) {
        if (!is_riemannian_family(f)) return false;
      }
      return true;
    default:
      return false;
  }
}

int spec_dimension(const MetricSpec& s) {
  switch (s.family) {
    case Family::sphere: return 2;
    case Family::product: {
      int n = 0;
      for (const auto& f : s.factors) n += spec_dimension(f);
      return n;
    }
    case Family::randers: return s.alpha.empty() ? 0 : spec_dimension(s.alpha[0]);
    default: return s.dimension;
  }
}

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::SpecValidation, what); }

std::shared_ptr<const Norm> build_norm(const MetricSpec& s) {
  switch (s.family) {
    case Family::euclidean:
      if (s.dimension < 1) invalid("euclidean dimension must be positive");
      return std::make_shared<EuclideanNorm>(s.dimension);
    case Family::sphere:
      if (!(s.radius > 0.0)) invalid("sphere radius must be positive");
      if (s.dimension != 0 && s.dimension != 2) invalid("sphere family is 2-dimensional");
      return std::make_shared<SphereNorm>(s.radius);
    case Family::minkowski_quartic:
      if (s.dimension < 1) invalid("minkowski_quartic dimension must be positive");
      if (!(s.epsilon > 0.0 && s.epsilon <= kQuarticEpsilonMax)) {
        invalid("minkowski_quartic epsilon must lie in (0, " + std::to_string(kQuarticEpsilonMax) + "]");
      }
      return std::make_shared<MinkowskiQuarticNorm>(s.epsilon, s.dimension);
    case Family::randers: {
      if (s.alpha.size() != 1) invalid("randers requires exactly one alpha spec");
      if (!is_riemannian_family(s.alpha[0])) invalid("randers alpha must be Riemannian");
      const int n = spec_dimension(s.alpha[0]);
      if (static_cast<int>(s.beta.constant.size()) != n) invalid("randers beta constant has wrong length");
      if (!s.beta.linear.empty()) {
        if (static_cast<int>(s.beta.linear.size()) != n) invalid("randers beta linear has wrong row count");
        for (const auto& row : s.beta.linear) {
          if (static_cast<int>(row.size()) != n) invalid("randers beta linear has wrong column count");
        }
      }
      return std::make_shared<RandersNorm>(build_norm(s.alpha[0]), s.beta);
    }
    case Family::product: {
      if (s.factors.size() < 2) invalid("product requires at least two factors");
      std::vector<std::shared_ptr<const Norm>> fs;
      for (const auto& f : s.factors) fs.push_back(build_norm(f));
      return std::make_shared<ProductNorm>(std::move(fs));
    }
    case Family::custom:
      invalid("custom norms are constructed directly, not from a spec");
  }
  invalid("unknown family");
}

std::vector<int> factor_dims_of(const MetricSpec& s) {
  if (s.family == Family::product) {
    std::vector<int> d;
    for (const auto& f : s.factors) d.push_back(spec_dimension(f));
    return d;
  }
  return {spec_dimension(s)};
}

// Riemannian matrix of a quadratic alpha^2 at x by polarization.
Mat polarize(const Norm& alpha, const Vec& x) {
  const int n = alpha.dimension();
  Mat a(n, n);
  std::span<const double> xs(x.data(), n);
  auto q = [&](const Vec& y) { return alpha.squared(xs, std::span<const double>(y.data(), n)); };
  for (int i = 0; i < n; ++i) {
    Vec ei = Vec::Unit(n, i);
    a(i, i) = q(ei);
    for (int j = 0; j < i; ++j) {
      Vec ej = Vec::Unit(n, j);
      a(i, j) = a(j, i) = 0.5 * (q(ei + ej) - a(i, i) - q(ej));
    }
  }
  return a;
}

void check_randers_bound(const MetricSpec& s, const Norm& alpha, const ChartDomain& chart) {
  const int n = alpha.dimension();
  auto beta_norm = [&](const Vec& x) {
    Vec b(n);
    for (int i = 0; i < n; ++i) b[i] = s.beta.component(i, std::span<const double>(x.data(), n));
    const Mat a = polarize(alpha, x);
    return std::sqrt(b.dot(a.ldlt().solve(b)));
  };
  double sup = 0.0;
  if (n <= 10) {
    for (int mask = 0; mask < (1 << n); ++mask) {
      Vec x(n);
      for (int i = 0; i < n; ++i) x[i] = (mask >> i & 1) ? chart[i].hi : chart[i].lo;
      sup = std::max(sup, beta_norm(x));
    }
  }
  Rng rng(0x5eed);
  for (int k = 0; k < 256; ++k) sup = std::max(sup, beta_norm(sample_point(chart, rng)));
  if (!(sup < 1.0)) {
    std::ostringstream os;
    os << "randers requires sup |beta|_alpha < 1 on the chart (sampled sup " << sup << ")";
    invalid(os.str());
  }
}

}  // namespace

std::string to_string(Family f) {
  switch (f) {
    case Family::euclidean: return "euclidean";
    case Family::sphere: return "sphere";
    case Family::randers: return "randers";
    case Family::minkowski_quartic: return "minkowski_quartic";
    case Family::product: return "product";
    case Family::custom: return "custom";
  }
  return "unknown";
}

double BetaSpec::component(int i, std::span<const double> x) const {
  double b = constant[static_cast<std::size_t>(i)];
  if (!linear.empty()) {
    for (std::size_t j = 0; j < x.size(); ++j) b += linear[static_cast<std::size_t>(i)][j] * x[j];
  }
  return b;
}

MetricSpec euclidean_spec(int dimension) {
  MetricSpec s;
  s.family = Family::euclidean;
  s.dimension = dimension;
  return s;
}

MetricSpec sphere_spec(double radius) {
  MetricSpec s;
  s.family = Family::sphere;
  s.dimension = 2;
  s.radius = radius;
  return s;
}

MetricSpec minkowski_quartic_spec(double epsilon, int dimension) {
  MetricSpec s;
  s.family = Family::minkowski_quartic;
  s.dimension = dimension;
  s.epsilon = epsilon;
  return s;
}

MetricSpec randers_spec(MetricSpec alpha, BetaSpec beta) {
  MetricSpec s;
  s.family = Family::randers;
  s.dimension = spec_dimension(alpha);
  s.alpha.push_back(std::move(alpha));
  s.beta = std::move(beta);
  return s;
}

MetricSpec product_spec(std::vector<MetricSpec> factors) {
  MetricSpec s;
  s.family = Family::product;
  s.factors = std::move(factors);
  s.dimension = spec_dimension(s);
  return s;
}

ChartDomain default_chart(const MetricSpec& spec) {
  if (!spec.chart_domain.empty()) return spec.chart_domain;
  switch (spec.family) {
    case Family::sphere: {
      const double pi = std::numbers::pi;
      return {{kPolarBand, pi - kPolarBand}, {-2.0 * pi - 1.0, 2.0 * pi + 1.0}};
    }
    case Family::product: {
      ChartDomain d;
      for (const auto& f : spec.factors) {
        const auto fd = default_chart(f);
        d.insert(d.end(), fd.begin(), fd.end());
      }
      return d;
    }
    case Family::randers:
      return spec.alpha.empty() ? ChartDomain{} : default_chart(spec.alpha[0]);
    default:
      return ChartDomain(static_cast<std::size_t>(std::max(spec.dimension, 0)), Interval{-10.0, 10.0});
  }
}

std::vector<double> coordinate_periods(const MetricSpec& s) {
  switch (s.family) {
    case Family::sphere:
      return {0.0, 2.0 * std::numbers::pi};
    case Family::product: {
      std::vector<double> p;
      for (const auto& f : s.factors) {
        const auto fp = coordinate_periods(f);
        p.insert(p.end(), fp.begin(), fp.end());
      }
      return p;
    }
    case Family::randers: {
      if (s.alpha.empty()) return {};
      auto p = coordinate_periods(s.alpha[0]);
      // a beta term linear in a periodic coordinate breaks the period
      for (const auto& row : s.beta.linear) {
        for (std::size_t j = 0; j < row.size() && j < p.size(); ++j) {
          if (row[j] != 0.0) p[j] = 0.0;
        }
      }
      return p;
    }
    default:
      return std::vector<double>(static_cast<std::size_t>(std::max(s.dimension, 0)), 0.0);
  }
}

std::string describe(const MetricSpec& s) {
  if (!s.label.empty()) return s.label;
  std::ostringstream os;
  switch (s.family) {
    case Family::euclidean: os << "euclidean(" << s.dimension << ")"; break;
    case Family::sphere: os << "sphere(" << s.radius << ")"; break;
    case Family::minkowski_quartic:
      os << "minkowski_quartic(" << s.epsilon << ",n=" << s.dimension << ")";
      break;
    case Family::randers: {
      os << "randers(" << (s.alpha.empty() ? "?" : describe(s.alpha[0])) << ";b=[";
      for (std::size_t i = 0; i < s.beta.constant.size(); ++i) os << (i ? "," : "") << s.beta.constant[i];
      os << "]";
      if (!s.beta.linear.empty()) os << "+Lx";
      os << ")";
      break;
    }
    case Family::product:
      for (std::size_t i = 0; i < s.factors.size(); ++i) os << (i ? "x" : "") << describe(s.factors[i]);
      break;
    case Family::custom: os << "custom"; break;
  }
  return os.str();
}

FinslerMetric::FinslerMetric(MetricSpec spec, std::shared_ptr<const Norm> norm, ChartDomain chart,
                             std::vector<int> factor_dims)
    : spec_(std::move(spec)), norm_(std::move(norm)), chart_(std::move(chart)),
      factor_dims_(std::move(factor_dims)) {
  if (static_cast<int>(chart_.size()) != norm_->dimension()) {
    throw Error(ErrorCode::DimensionMismatch, "chart box dimension differs from the norm dimension");
  }
  for (const auto& iv : chart_) {
    if (!(iv.lo < iv.hi)) throw Error(ErrorCode::SpecValidation, "chart interval must have lo < hi");
  }
  if (factor_dims_.empty()) factor_dims_ = {norm_->dimension()};
  int total = 0;
  for (int d : factor_dims_) total += d;
  if (total != norm_->dimension()) throw Error(ErrorCode::DimensionMismatch, "factor split does not sum to dimension");
  if (spec_.dimension == 0) spec_.dimension = norm_->dimension();
  periods_ = spec_.family == Family::custom ? std::vector<double>{} : coordinate_periods(spec_);
  periods_.resize(static_cast<std::size_t>(norm_->dimension()), 0.0);
}

std::string FinslerMetric::id() const { return describe(spec_); }

bool FinslerMetric::in_chart(const Vec& x) const {
  if (x.size() != dimension()) return false;
  for (int i = 0; i < x.size(); ++i) {
    if (!chart_[static_cast<std::size_t>(i)].contains(x[i])) return false;
  }
  return true;
}

double FinslerMetric::F2_unchecked(const Vec& x, const Vec& y) const {
  const auto n = static_cast<std::size_t>(dimension());
  return norm_->squared(std::span<const double>(x.data(), n), std::span<const double>(y.data(), n));
}

double FinslerMetric::F(const Vec& x, const Vec& y) const {
  if (x.size() != dimension() || y.size() != dimension()) {
    throw Error(ErrorCode::DimensionMismatch, "point or vector has the wrong dimension");
  }
  if (y.norm() < kDegeneracyFloor) throw Error(ErrorCode::ZeroVector, "tangent vector below degeneracy floor");
  if (!in_chart(x)) throw Error(ErrorCode::OutOfChart, "point outside the chart domain of " + id());
  return std::sqrt(F2_unchecked(x, y));
}

double eval_F(const FinslerMetric& metric, const Vec& x, const Vec& y) { return metric.F(x, y); }

ChartDomain inset(const ChartDomain& box, double fraction) {
  ChartDomain out = box;
  for (auto& iv : out) {
    const double w = iv.width();
    iv.lo += fraction * w;
    iv.hi -= fraction * w;
  }
  return out;
}

PropertyReport check_homogeneity(const FinslerMetric& metric, int sample_count, std::uint64_t seed,
                                 double tolerance) {
  if (sample_count < 1) throw Error(ErrorCode::ConfigError, "sample_count must be at least 1");
  PropertyReport r;
  r.property = "homogeneity";
  r.tolerance = tolerance;
  r.samples = sample_count;
  r.seed = seed;
  Rng rng(seed);
  const int n = metric.dimension();
  for (int s = 0; s < sample_count; ++s) {
    const Vec x = sample_point(metric.chart(), rng);
    const Vec y = rng.unit_vector(n) * rng.uniform(0.5, 2.0);
    const double f = metric.F(x, y);
    for (double lambda : {0.5, 2.0, 10.0}) {
      const double fl = metric.F(x, lambda * y);
      r.max_error = std::max(r.max_error, std::abs(fl - lambda * f) / (lambda * f));
    }
  }
  r.passed = r.max_error < tolerance;
  return r;
}

FinslerMetric catalog_instantiate(const MetricSpec& spec) {
  auto norm = build_norm(spec);
  ChartDomain chart = default_chart(spec);
  if (static_cast<int>(chart.size()) != norm->dimension()) {
    invalid("chart_domain has " + std::to_string(chart.size()) + " intervals, metric dimension is " +
            std::to_string(norm->dimension()));
  }
  if (spec.family == Family::sphere) {
    const double pi = std::numbers::pi;
    if (chart[0].lo < kPolarBand - 1e-15 || chart[0].hi > pi - kPolarBand + 1e-15) {
      invalid("sphere chart must exclude the polar bands");
    }
  }
  if (spec.family == Family::randers) check_randers_bound(spec, *build_norm(spec.alpha[0]), chart);

  MetricSpec resolved = spec;
  resolved.dimension = norm->dimension();
  FinslerMetric metric(resolved, norm, chart, factor_dims_of(spec));

  const auto hom = check_homogeneity(metric, 20, 0xC0FFEE);
  if (!hom.passed) invalid("homogeneity spot check failed (max relative error " + std::to_string(hom.max_error) + ")");
  Rng rng(0xC0DE);
  for (int k = 0; k < 20; ++k) {
    const Vec x = sample_point(metric.chart(), rng);
    const Vec y = rng.unit_vector(metric.dimension());
    const auto cr = check_strong_convexity(metric, x, y);
    if (!cr.passed) {
      invalid("strong convexity spot check failed (smallest Hessian eigenvalue " +
              std::to_string(cr.min_eigenvalue) + ")");
    }
  }
  return metric;
}

FinslerMetric make_product_metric(const std::vector<FinslerMetric>& factors) {
  if (factors.size() < 2) throw Error(ErrorCode::SpecValidation, "product requires at least two factors");
  std::vector<MetricSpec> specs;
  std::vector<std::shared_ptr<const Norm>> norms;
  ChartDomain chart;
  std::vector<int> dims;
  for (const auto& f : factors) {
    if (static_cast<int>(f.chart().size()) != f.dimension()) {
      throw Error(ErrorCode::DimensionMismatch, "factor chart does not match its dimension");
    }
    specs.push_back(f.spec());
    norms.push_back(f.norm_ptr());
    chart.insert(chart.end(), f.chart().begin(), f.chart().end());
    dims.push_back(f.dimension());
  }
  MetricSpec spec = product_spec(std::move(specs));
  spec.chart_domain = chart;
  return FinslerMetric(std::move(spec), std::make_shared<ProductNorm>(std::move(norms)), std::move(chart),
                       std::move(dims));
}

}  // namespace finsler
