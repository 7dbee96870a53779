#pragma once

// Truncated multivariate Taylor polynomials ("jets") for forward-mode
// differentiation of the Finsler norm in the joint (x, y) variables.
//
// A jet lives in a JetSpace: the monomials z^a, a = (a_x | a_y), with
// |a| <= order and |a_x| <= xcap. Coefficients are stored in Taylor form
// (f^(a) / a!). Binary operations between jets of different spaces are
// carried out in the common sub-space, so a result is never claimed to be
// valid beyond what both operands support.

#include <cstdint>
#include <memory>
#include <span>
#include <utility>
#include <vector>

namespace finsler {

class JetSpace {
 public:
  static constexpr int kMaxVars = 16;
  static constexpr int kMaxOrder = 7;

  /// Interned space; the returned pointer stays valid for the process
  /// lifetime. Thread-safe.
  static const JetSpace* get(int nx, int ny, int order, int xcap);

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int nvars() const { return nx_ + ny_; }
  int order() const { return order_; }
  int xcap() const { return xcap_; }
  std::size_t size() const { return keys_.size(); }

  /// Index of the monomial with a single unit exponent in variable `var`.
  std::size_t linear_index(int var) const;
  /// Index of the monomial with exponents `exps`, or npos when not present.
  std::size_t index_of(std::span<const int> exps) const;
  int degree(std::size_t idx) const { return degree_[idx]; }
  int exponent(std::size_t idx, int var) const;

  const JetSpace* meet(const JetSpace* other) const;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  struct Term {
    std::uint32_t a, b, out;
  };
  const std::vector<Term>& product_table() const { return product_; }

  /// For each monomial of `target`, the index of the same monomial here.
  const std::vector<std::uint32_t>& projection_to(const JetSpace* target) const;

  struct Shift {
    const JetSpace* target;
    std::vector<std::uint32_t> source;
    std::vector<double> factor;
  };
  /// Description of the derivative map d/dz_var into the reduced space.
  const Shift& derivative_map(int var) const;

  JetSpace(int nx, int ny, int order, int xcap);

 private:
  std::size_t find(std::uint64_t key) const;

  int nx_, ny_, order_, xcap_;
  std::vector<std::uint64_t> keys_;  // sorted by (degree, key) order of generation
  std::vector<int> degree_;
  std::vector<std::pair<std::uint64_t, std::uint32_t>> lookup_;  // sorted by key
  std::vector<Term> product_;
  std::vector<int> xdegree_;
  mutable std::vector<std::unique_ptr<Shift>> shifts_;
  mutable std::vector<std::pair<const JetSpace*, std::unique_ptr<std::vector<std::uint32_t>>>>
      projections_;
};

class Jet {
 public:
  Jet() = default;
  explicit Jet(const JetSpace* space, double value = 0.0);

  /// The independent variable z_var shifted to `value`.
  static Jet variable(const JetSpace* space, int var, double value);

  const JetSpace* space() const { return space_; }
  double value() const { return coeffs_.empty() ? 0.0 : coeffs_[0]; }
  std::span<const double> coeffs() const { return coeffs_; }
  std::span<double> coeffs() { return coeffs_; }

  /// Taylor coefficient of the monomial with exponents `exps` (0 if absent).
  double coeff(std::span<const int> exps) const;
  /// Partial derivative value d^|a| f / dz^a at the expansion point.
  double partial(std::span<const int> exps) const;

  Jet project(const JetSpace* target) const;
  /// d/dz_var; the result lives in the space one order lower.
  Jet derivative(int var) const;

  Jet& operator+=(const Jet& o);
  Jet& operator-=(const Jet& o);
  Jet& operator*=(const Jet& o);
  Jet& operator+=(double s);
  Jet& operator-=(double s);
  Jet& operator*=(double s);
  Jet& operator/=(double s);

  friend Jet operator-(Jet a);
  friend Jet operator+(Jet a, const Jet& b);
  friend Jet operator-(Jet a, const Jet& b);
  friend Jet operator*(const Jet& a, const Jet& b);
  friend Jet operator/(const Jet& a, const Jet& b);
  friend Jet operator+(Jet a, double s) { return a += s; }
  friend Jet operator+(double s, Jet a) { return a += s; }
  friend Jet operator-(Jet a, double s) { return a -= s; }
  friend Jet operator-(double s, Jet a);
  friend Jet operator*(Jet a, double s) { return a *= s; }
  friend Jet operator*(double s, Jet a) { return a *= s; }
  friend Jet operator/(Jet a, double s) { return a /= s; }
  friend Jet operator/(double s, const Jet& a);

 private:
  const JetSpace* space_ = nullptr;
  std::vector<double> coeffs_;
};

/// Compose with a univariate function given its Taylor coefficients at the
/// jet's value: f(v + h) = sum_k taylor[k] h^k.
Jet compose(const Jet& x, std::span<const double> taylor);

Jet sqrt(const Jet& x);
Jet pow(const Jet& x, double exponent);
Jet exp(const Jet& x);
Jet log(const Jet& x);
Jet sin(const Jet& x);
Jet cos(const Jet& x);
Jet reciprocal(const Jet& x);
Jet square(const Jet& x);

inline double square(double x) { return x * x; }

}  // namespace finsler
