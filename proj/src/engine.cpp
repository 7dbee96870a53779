#include "finsler/engine.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "finsler/error.hpp"

namespace finsler {

std::string to_string(DiffMode mode) {
  return mode == DiffMode::forward_algorithmic ? "forward_algorithmic" : "central_finite_difference";
}

DiffMode parse_diff_mode(const std::string& name) {
  if (name == "forward_algorithmic" || name == "ad") return DiffMode::forward_algorithmic;
  if (name == "central_finite_difference" || name == "fd") return DiffMode::central_finite_difference;
  throw Error(ErrorCode::ConfigError, "unknown differentiation mode '" + name + "'");
}

void JetEngine::validate() const {
  if (!(fd_step > 0.0)) throw Error(ErrorCode::ConfigError, "fd_step must be positive");
  if (max_order < 3) throw Error(ErrorCode::ConfigError, "max_order must be at least 3");
}

namespace {

std::vector<double> y_jet_coeffs(const FinslerMetric& metric, const JetSpace* ys, const Vec& x, const Vec& y) {
  const int n = metric.dimension();
  std::vector<Jet> xj, yj;
  xj.reserve(n);
  yj.reserve(n);
  for (int i = 0; i < n; ++i) {
    xj.emplace_back(ys, x[i]);
    yj.push_back(Jet::variable(ys, i, y[i]));
  }
  const Jet f2 = metric.norm().squared(std::span<const Jet>(xj), std::span<const Jet>(yj));
  return {f2.coeffs().begin(), f2.coeffs().end()};
}

using Coeffs = std::vector<double>;

Coeffs combine(std::initializer_list<std::pair<double, const Coeffs*>> terms) {
  Coeffs out(terms.begin()->second->size(), 0.0);
  for (const auto& [w, c] : terms) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * (*c)[i];
  }
  return out;
}

}  // namespace

Jet JetEngine::norm_squared_jet(const FinslerMetric& metric, const Vec& x, const Vec& y, int order,
                                int xcap) const {
  validate();
  if (order > max_order) {
    throw Error(ErrorCode::DifferentiationFailure,
                "requested derivative order " + std::to_string(order) + " exceeds engine max_order " +
                    std::to_string(max_order));
  }
  const int n = metric.dimension();
  const JetSpace* space = JetSpace::get(n, n, order, xcap);

  if (mode == DiffMode::forward_algorithmic) {
    std::vector<Jet> xj, yj;
    xj.reserve(n);
    yj.reserve(n);
    for (int i = 0; i < n; ++i) {
      xj.push_back(Jet::variable(space, i, x[i]));
      yj.push_back(Jet::variable(space, n + i, y[i]));
    }
    return metric.norm().squared(std::span<const Jet>(xj), std::span<const Jet>(yj));
  }

  if (space->xcap() > 2) {
    throw Error(ErrorCode::DifferentiationFailure, "finite-difference engine supports at most second x-derivatives");
  }
  const JetSpace* ys = JetSpace::get(0, n, order, 0);
  auto at = [&](const Vec& xp) { return y_jet_coeffs(metric, ys, xp, y); };

  const Coeffs c0 = at(x);
  std::vector<double> h(n);
  for (int a = 0; a < n; ++a) h[a] = fd_step * std::max(1.0, std::abs(x[a]));

  // first[a], second[a][b] hold Richardson-extrapolated derivative estimates
  // of every y-coefficient.
  std::vector<Coeffs> first(n);
  std::vector<std::vector<Coeffs>> second(n, std::vector<Coeffs>(n));
  const int xc = space->xcap();
  if (xc >= 1) {
    for (int a = 0; a < n; ++a) {
      Vec xp = x, xm = x, xp2 = x, xm2 = x;
      xp[a] += h[a];
      xm[a] -= h[a];
      xp2[a] += 0.5 * h[a];
      xm2[a] -= 0.5 * h[a];
      const Coeffs fp = at(xp), fm = at(xm), fp2 = at(xp2), fm2 = at(xm2);
      const double H = h[a];
      // D(h) = (f+ - f-) / 2h;  R = (4 D(h/2) - D(h)) / 3
      first[a] = combine({{4.0 / (3.0 * H), &fp2}, {-4.0 / (3.0 * H), &fm2},
                          {-1.0 / (6.0 * H), &fp}, {1.0 / (6.0 * H), &fm}});
      if (xc >= 2) {
        // D2(h) = (f+ - 2 f0 + f-) / h^2
        const double i1 = 1.0 / (H * H), i2 = 4.0 / (H * H);
        second[a][a] = combine({{4.0 / 3.0 * i2, &fp2}, {4.0 / 3.0 * i2, &fm2}, {-8.0 / 3.0 * i2, &c0},
                                {-1.0 / 3.0 * i1, &fp}, {-1.0 / 3.0 * i1, &fm}, {2.0 / 3.0 * i1, &c0}});
      }
    }
    if (xc >= 2) {
      for (int a = 0; a < n; ++a) {
        for (int b = a + 1; b < n; ++b) {
          auto mixed = [&](double s) {
            Vec pp = x, pm = x, mp = x, mm = x;
            pp[a] += s * h[a], pp[b] += s * h[b];
            pm[a] += s * h[a], pm[b] -= s * h[b];
            mp[a] -= s * h[a], mp[b] += s * h[b];
            mm[a] -= s * h[a], mm[b] -= s * h[b];
            const Coeffs cpp = at(pp), cpm = at(pm), cmp = at(mp), cmm = at(mm);
            const double w = 1.0 / (4.0 * s * s * h[a] * h[b]);
            return combine({{w, &cpp}, {-w, &cpm}, {-w, &cmp}, {w, &cmm}});
          };
          const Coeffs m1 = mixed(1.0), m2 = mixed(0.5);
          second[a][b] = combine({{4.0 / 3.0, &m2}, {-1.0 / 3.0, &m1}});
          second[b][a] = second[a][b];
        }
      }
    }
  }

  Jet out(space, 0.0);
  auto coeffs = out.coeffs();
  std::vector<int> yexp(n);
  for (std::size_t k = 0; k < space->size(); ++k) {
    std::vector<int> xa;
    for (int v = 0; v < n; ++v) {
      for (int e = 0; e < space->exponent(k, v); ++e) xa.push_back(v);
    }
    for (int v = 0; v < n; ++v) yexp[v] = space->exponent(k, n + v);
    const std::size_t yi = ys->index_of(yexp);
    if (xa.empty()) {
      coeffs[k] = c0[yi];
    } else if (xa.size() == 1) {
      coeffs[k] = first[xa[0]][yi];
    } else if (xa[0] == xa[1]) {
      coeffs[k] = 0.5 * second[xa[0]][xa[0]][yi];
    } else {
      coeffs[k] = second[xa[0]][xa[1]][yi];
    }
  }
  return out;
}

Mat vertical_hessian(const FinslerMetric& metric, const Vec& x, const Vec& y, const JetEngine& engine) {
  const int n = metric.dimension();
  if (y.norm() < kDegeneracyFloor) throw Error(ErrorCode::ZeroVector, "tangent vector below degeneracy floor");
  const Jet f2 = engine.norm_squared_jet(metric, x, y, 2, 0);
  Mat g(n, n);
  std::vector<int> e(2 * n, 0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      std::fill(e.begin(), e.end(), 0);
      e[n + i] += 1;
      e[n + j] += 1;
      g(i, j) = g(j, i) = 0.5 * f2.partial(e);
    }
  }
  return g;
}

ConvexityReport check_strong_convexity(const FinslerMetric& metric, const Vec& x, const Vec& y,
                                       const JetEngine& engine) {
  const Mat g = vertical_hessian(metric, x, y, engine);
  Eigen::SelfAdjointEigenSolver<Mat> es(g, Eigen::EigenvaluesOnly);
  ConvexityReport r;
  r.min_eigenvalue = es.eigenvalues().minCoeff();
  r.max_eigenvalue = es.eigenvalues().maxCoeff();
  r.floor = 1e-9 * std::max(1.0, r.max_eigenvalue);
  r.passed = r.min_eigenvalue > r.floor;
  return r;
}

}  // namespace finsler
