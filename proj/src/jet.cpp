#include "finsler/jet.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

#include "finsler/error.hpp"

namespace finsler {
namespace {

constexpr int kBits = 4;
constexpr std::uint64_t kMask = 0xF;

int exp_of(std::uint64_t key, int var) { return static_cast<int>((key >> (kBits * var)) & kMask); }
std::uint64_t unit(int var) { return std::uint64_t{1} << (kBits * var); }

std::mutex& cache_mutex() {
  static std::mutex m;
  return m;
}

void enumerate(int var, int nvars, int nx, int remaining, int xremaining, std::uint64_t key,
               std::vector<std::uint64_t>& out) {
  if (var == nvars) {
    out.push_back(key);
    return;
  }
  const bool is_x = var < nx;
  const int cap = is_x ? std::min(remaining, xremaining) : remaining;
  for (int e = 0; e <= cap; ++e) {
    enumerate(var + 1, nvars, nx, remaining - e, is_x ? xremaining - e : xremaining,
              key + e * unit(var), out);
  }
}

int total_degree(std::uint64_t key, int nvars) {
  int d = 0;
  for (int v = 0; v < nvars; ++v) d += exp_of(key, v);
  return d;
}

}  // namespace

JetSpace::JetSpace(int nx, int ny, int order, int xcap) : nx_(nx), ny_(ny), order_(order), xcap_(xcap) {
  const int m = nx + ny;
  std::vector<std::uint64_t> all;
  enumerate(0, m, nx, order, xcap, 0, all);
  std::stable_sort(all.begin(), all.end(), [m](std::uint64_t a, std::uint64_t b) {
    const int da = total_degree(a, m), db = total_degree(b, m);
    if (da != db) return da < db;
    return a > b;  // puts z_0 before z_1 within a degree
  });
  keys_ = std::move(all);
  degree_.resize(keys_.size());
  xdegree_.resize(keys_.size());
  lookup_.reserve(keys_.size());
  for (std::size_t i = 0; i < keys_.size(); ++i) {
    degree_[i] = total_degree(keys_[i], m);
    int xd = 0;
    for (int v = 0; v < nx; ++v) xd += exp_of(keys_[i], v);
    xdegree_[i] = xd;
    lookup_.emplace_back(keys_[i], static_cast<std::uint32_t>(i));
  }
  std::sort(lookup_.begin(), lookup_.end());

  for (std::size_t i = 0; i < keys_.size(); ++i) {
    for (std::size_t j = 0; j < keys_.size(); ++j) {
      if (degree_[i] + degree_[j] > order_) break;  // degrees are sorted
      if (xdegree_[i] + xdegree_[j] > xcap_) continue;
      const std::size_t k = find(keys_[i] + keys_[j]);
      assert(k != npos);
      product_.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j),
                          static_cast<std::uint32_t>(k)});
    }
  }
}

const JetSpace* JetSpace::get(int nx, int ny, int order, int xcap) {
  if (nx < 0 || ny < 0 || nx + ny == 0 || nx + ny > kMaxVars) {
    throw Error(ErrorCode::DifferentiationFailure, "jet space variable count out of range");
  }
  if (order < 0 || order > kMaxOrder || xcap < 0) {
    throw Error(ErrorCode::DifferentiationFailure,
                "jet order exhausted (order " + std::to_string(order) + ", xcap " +
                    std::to_string(xcap) + ")");
  }
  xcap = std::min(xcap, order);
  if (nx == 0) xcap = 0;
  static std::map<std::tuple<int, int, int, int>, std::unique_ptr<JetSpace>> registry;
  std::lock_guard lock(cache_mutex());
  auto& slot = registry[{nx, ny, order, xcap}];
  if (!slot) slot = std::make_unique<JetSpace>(nx, ny, order, xcap);
  return slot.get();
}

std::size_t JetSpace::find(std::uint64_t key) const {
  auto it = std::lower_bound(lookup_.begin(), lookup_.end(), std::make_pair(key, std::uint32_t{0}));
  if (it == lookup_.end() || it->first != key) return npos;
  return it->second;
}

std::size_t JetSpace::linear_index(int var) const { return find(unit(var)); }

std::size_t JetSpace::index_of(std::span<const int> exps) const {
  std::uint64_t key = 0;
  for (std::size_t v = 0; v < exps.size(); ++v) {
    if (exps[v] < 0 || exps[v] > order_) return npos;
    key += exps[v] * unit(static_cast<int>(v));
  }
  return find(key);
}

int JetSpace::exponent(std::size_t idx, int var) const { return exp_of(keys_[idx], var); }

const JetSpace* JetSpace::meet(const JetSpace* other) const {
  if (other == this) return this;
  if (other->nx_ != nx_ || other->ny_ != ny_) {
    throw Error(ErrorCode::DimensionMismatch, "jets over different variable sets");
  }
  return get(nx_, ny_, std::min(order_, other->order_), std::min(xcap_, other->xcap_));
}

const std::vector<std::uint32_t>& JetSpace::projection_to(const JetSpace* target) const {
  std::lock_guard lock(cache_mutex());
  for (const auto& [t, map] : projections_) {
    if (t == target) return *map;
  }
  auto map = std::make_unique<std::vector<std::uint32_t>>(target->size());
  for (std::size_t i = 0; i < target->size(); ++i) {
    const std::size_t k = find(target->keys_[i]);
    if (k == npos) {
      throw Error(ErrorCode::DifferentiationFailure, "projection target is not a sub-space");
    }
    (*map)[i] = static_cast<std::uint32_t>(k);
  }
  projections_.emplace_back(target, std::move(map));
  return *projections_.back().second;
}

const JetSpace::Shift& JetSpace::derivative_map(int var) const {
  const bool is_x = var < nx_;
  // get() takes the cache lock, so resolve the target first.
  const JetSpace* target = get(nx_, ny_, order_ - 1, is_x ? xcap_ - 1 : xcap_);
  std::lock_guard lock(cache_mutex());
  if (shifts_.empty()) shifts_.resize(nvars());
  if (!shifts_[var]) {
    auto s = std::make_unique<Shift>();
    s->target = target;
    s->source.resize(target->size());
    s->factor.resize(target->size());
    for (std::size_t i = 0; i < target->size(); ++i) {
      const std::uint64_t key = target->keys_[i];
      const std::size_t k = find(key + unit(var));
      assert(k != npos);
      s->source[i] = static_cast<std::uint32_t>(k);
      s->factor[i] = exp_of(key, var) + 1.0;
    }
    shifts_[var] = std::move(s);
  }
  return *shifts_[var];
}

Jet::Jet(const JetSpace* space, double value) : space_(space), coeffs_(space->size(), 0.0) {
  coeffs_[0] = value;
}

Jet Jet::variable(const JetSpace* space, int var, double value) {
  Jet j(space, value);
  if (space->order() >= 1 && !(var < space->nx() && space->xcap() == 0)) {
    j.coeffs_[space->linear_index(var)] = 1.0;
  }
  return j;
}

double Jet::coeff(std::span<const int> exps) const {
  const std::size_t k = space_->index_of(exps);
  return k == JetSpace::npos ? 0.0 : coeffs_[k];
}

double Jet::partial(std::span<const int> exps) const {
  double fact = 1.0;
  for (int e : exps) {
    for (int i = 2; i <= e; ++i) fact *= i;
  }
  return coeff(exps) * fact;
}

Jet Jet::project(const JetSpace* target) const {
  if (target == space_) return *this;
  const auto& map = space_->projection_to(target);
  Jet out;
  out.space_ = target;
  out.coeffs_.resize(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) out.coeffs_[i] = coeffs_[map[i]];
  return out;
}

Jet Jet::derivative(int var) const {
  const auto& s = space_->derivative_map(var);
  Jet out;
  out.space_ = s.target;
  out.coeffs_.resize(s.source.size());
  for (std::size_t i = 0; i < s.source.size(); ++i) out.coeffs_[i] = s.factor[i] * coeffs_[s.source[i]];
  return out;
}

Jet& Jet::operator+=(const Jet& o) {
  if (o.space_ != space_) {
    const JetSpace* m = space_->meet(o.space_);
    *this = project(m);
    const Jet p = o.project(m);
    for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += p.coeffs_[i];
    return *this;
  }
  for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += o.coeffs_[i];
  return *this;
}

Jet& Jet::operator-=(const Jet& o) {
  if (o.space_ != space_) {
    const JetSpace* m = space_->meet(o.space_);
    *this = project(m);
    const Jet p = o.project(m);
    for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] -= p.coeffs_[i];
    return *this;
  }
  for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] -= o.coeffs_[i];
  return *this;
}

Jet& Jet::operator*=(const Jet& o) { return *this = *this * o; }
Jet& Jet::operator+=(double s) {
  coeffs_[0] += s;
  return *this;
}
Jet& Jet::operator-=(double s) {
  coeffs_[0] -= s;
  return *this;
}
Jet& Jet::operator*=(double s) {
  for (double& c : coeffs_) c *= s;
  return *this;
}
Jet& Jet::operator/=(double s) {
  for (double& c : coeffs_) c /= s;
  return *this;
}

Jet operator-(Jet a) {
  for (double& c : a.coeffs_) c = -c;
  return a;
}
Jet operator+(Jet a, const Jet& b) { return a += b; }
Jet operator-(Jet a, const Jet& b) { return a -= b; }
Jet operator-(double s, Jet a) {
  a = -std::move(a);
  return a += s;
}

Jet operator*(const Jet& a, const Jet& b) {
  if (a.space_ != b.space_) {
    const JetSpace* m = a.space_->meet(b.space_);
    return a.project(m) * b.project(m);
  }
  Jet out(a.space_, 0.0);
  const double* ca = a.coeffs_.data();
  const double* cb = b.coeffs_.data();
  double* co = out.coeffs_.data();
  for (const auto& t : a.space_->product_table()) co[t.out] += ca[t.a] * cb[t.b];
  return out;
}

Jet operator/(const Jet& a, const Jet& b) { return a * reciprocal(b); }
Jet operator/(double s, const Jet& a) { return reciprocal(a) * s; }

Jet compose(const Jet& x, std::span<const double> taylor) {
  Jet h = x;
  h.coeffs()[0] = 0.0;
  const int p = std::min<int>(x.space()->order(), static_cast<int>(taylor.size()) - 1);
  // Horner: c0 + h (c1 + h (c2 + ...)).
  Jet acc(x.space(), taylor[p]);
  for (int k = p - 1; k >= 0; --k) {
    acc = acc * h;
    acc += taylor[k];
  }
  return acc;
}

namespace {

std::vector<double> pow_taylor(double v, double r, int order) {
  std::vector<double> t(order + 1);
  double binom = 1.0;
  for (int k = 0; k <= order; ++k) {
    t[k] = binom * std::pow(v, r - k);
    binom *= (r - k) / (k + 1.0);
  }
  return t;
}

}  // namespace

Jet pow(const Jet& x, double exponent) {
  const double v = x.value();
  if (!(v > 0.0)) throw Error(ErrorCode::DifferentiationFailure, "pow of non-positive jet");
  return compose(x, pow_taylor(v, exponent, x.space()->order()));
}

Jet sqrt(const Jet& x) { return pow(x, 0.5); }

Jet reciprocal(const Jet& x) {
  const double v = x.value();
  if (v == 0.0) throw Error(ErrorCode::DifferentiationFailure, "reciprocal of zero jet");
  const int p = x.space()->order();
  std::vector<double> t(p + 1);
  double term = 1.0 / v;
  for (int k = 0; k <= p; ++k) {
    t[k] = term;
    term *= -1.0 / v;
  }
  return compose(x, t);
}

Jet exp(const Jet& x) {
  const int p = x.space()->order();
  std::vector<double> t(p + 1);
  double term = std::exp(x.value());
  for (int k = 0; k <= p; ++k) {
    t[k] = term;
    term /= (k + 1.0);
  }
  return compose(x, t);
}

Jet log(const Jet& x) {
  const double v = x.value();
  if (!(v > 0.0)) throw Error(ErrorCode::DifferentiationFailure, "log of non-positive jet");
  const int p = x.space()->order();
  std::vector<double> t(p + 1);
  t[0] = std::log(v);
  for (int k = 1; k <= p; ++k) t[k] = ((k % 2) ? 1.0 : -1.0) / (k * std::pow(v, k));
  return compose(x, t);
}

namespace {

std::vector<double> trig_taylor(double v, int order, bool cosine) {
  // Derivative cycle of sin: sin, cos, -sin, -cos.
  const double s = std::sin(v), c = std::cos(v);
  const double cycle_sin[4] = {s, c, -s, -c};
  const double cycle_cos[4] = {c, -s, -c, s};
  std::vector<double> t(order + 1);
  double fact = 1.0;
  for (int k = 0; k <= order; ++k) {
    if (k > 0) fact *= k;
    t[k] = (cosine ? cycle_cos[k % 4] : cycle_sin[k % 4]) / fact;
  }
  return t;
}

}  // namespace

Jet sin(const Jet& x) { return compose(x, trig_taylor(x.value(), x.space()->order(), false)); }
Jet cos(const Jet& x) { return compose(x, trig_taylor(x.value(), x.space()->order(), true)); }
Jet square(const Jet& x) { return x * x; }

}  // namespace finsler
