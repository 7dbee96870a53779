#include "finsler/connection.hpp"

#include <Eigen/Eigenvalues>

#include "finsler/error.hpp"

namespace finsler {
namespace {

void check_inputs(const FinslerMetric& metric, const Vec& x, const Vec& y) {
  const int n = metric.dimension();
  if (x.size() != n || y.size() != n) throw Error(ErrorCode::DimensionMismatch, "point or vector has the wrong dimension");
  if (y.norm() < kDegeneracyFloor) throw Error(ErrorCode::ZeroVector, "tangent vector below degeneracy floor");
  if (!metric.in_chart(x)) throw Error(ErrorCode::OutOfChart, "point outside the chart domain of " + metric.id());
}

// Square matrix of jets, entry (i, j) at i * n + j.
using JetMat = std::vector<Jet>;

Mat values(const JetMat& m, int n) {
  Mat v(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) v(i, j) = m[i * n + j].value();
  }
  return v;
}

std::vector<Mat> to_coeff_mats(const JetMat& m, int n, const JetSpace* s) {
  std::vector<Mat> out(s->size(), Mat::Zero(n, n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const Jet e = m[i * n + j].project(s);
      for (std::size_t k = 0; k < s->size(); ++k) out[k](i, j) = e.coeffs()[k];
    }
  }
  return out;
}

JetMat from_coeff_mats(const std::vector<Mat>& c, int n, const JetSpace* s) {
  JetMat out(static_cast<std::size_t>(n * n), Jet(s, 0.0));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      auto co = out[i * n + j].coeffs();
      for (std::size_t k = 0; k < s->size(); ++k) co[k] = c[k](i, j);
    }
  }
  return out;
}

std::vector<Mat> mat_product(const std::vector<Mat>& a, const std::vector<Mat>& b, const JetSpace* s, int n) {
  std::vector<Mat> out(s->size(), Mat::Zero(n, n));
  for (const auto& t : s->product_table()) out[t.out].noalias() += a[t.a] * b[t.b];
  return out;
}

// g^{-1} as a jet: with g = A0 + E and B = A0^{-1} E (zero constant term),
// g^{-1} = (I - B + B^2 - ...) A0^{-1}, exact up to the space order.
// A0^{-1} is only ever applied via an LDLT solve.
JetMat jet_inverse(const JetMat& g, int n, const Eigen::LDLT<Mat>& a0) {
  const JetSpace* s = g.front().space();
  for (const auto& e : g) s = s->meet(e.space());
  std::vector<Mat> E = to_coeff_mats(g, n, s);
  E[0].setZero();
  std::vector<Mat> B(s->size());
  for (std::size_t k = 0; k < s->size(); ++k) B[k] = k == 0 ? Mat::Zero(n, n) : Mat(a0.solve(E[k]));
  std::vector<Mat> X(s->size(), Mat::Zero(n, n));
  X[0] = Mat::Identity(n, n);
  for (int it = 0; it < s->order(); ++it) {
    std::vector<Mat> BX = mat_product(B, X, s, n);
    for (std::size_t k = 0; k < s->size(); ++k) X[k] = -BX[k];
    X[0] += Mat::Identity(n, n);
  }
  // X * A0^{-1} = (A0^{-1} X^T)^T since A0 is symmetric.
  for (auto& m : X) m = a0.solve(m.transpose()).transpose();
  return from_coeff_mats(X, n, s);
}

struct JetPipeline {
  int n;
  std::vector<Jet> Y;  // y^j as jets
  Jet F2;
  JetMat g, ginv;
  std::vector<Jet> G;
  JetMat N;       // N(i, j) = dG^i/dy^j
  std::vector<Jet> dg_dy;  // (j, k, s) -> d g_jk / dy^s
  std::vector<Jet> delta_g;  // (j, k, l) -> delta g_jk / delta x^l
  std::vector<Jet> gamma;    // (i, j, k)
  double min_eig = 0.0;
};

JetPipeline run_pipeline(const FinslerMetric& metric, const Vec& x, const Vec& y, const JetEngine& engine,
                         int order, int xcap, bool need_gamma) {
  JetPipeline p;
  const int n = p.n = metric.dimension();
  p.F2 = engine.norm_squared_jet(metric, x, y, order, xcap);
  const JetSpace* top = p.F2.space();
  for (int j = 0; j < n; ++j) p.Y.push_back(Jet::variable(top, n + j, y[j]));

  std::vector<Jet> dy(n);
  for (int i = 0; i < n; ++i) dy[i] = p.F2.derivative(n + i);
  p.g.assign(static_cast<std::size_t>(n * n), Jet());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      p.g[i * n + j] = dy[i].derivative(n + j) * 0.5;
      p.g[j * n + i] = p.g[i * n + j];
    }
  }
  const Mat A0 = values(p.g, n);
  Eigen::SelfAdjointEigenSolver<Mat> es(A0, Eigen::EigenvaluesOnly);
  p.min_eig = es.eigenvalues().minCoeff();
  const double lmax = es.eigenvalues().maxCoeff();
  if (!(p.min_eig > kConvexityFloor * std::max(1.0, lmax))) {
    throw Error(ErrorCode::DegenerateMetric,
                "fundamental tensor not positive definite (smallest eigenvalue " + std::to_string(p.min_eig) + ")");
  }
  const Eigen::LDLT<Mat> a0(A0);
  p.ginv = jet_inverse(p.g, n, a0);

  // G^i = 1/4 g^{il} (d^2 F^2/dx^k dy^l y^k - dF^2/dx^l)
  std::vector<Jet> A(n);
  for (int l = 0; l < n; ++l) {
    Jet acc = -p.F2.derivative(l);
    for (int k = 0; k < n; ++k) acc += dy[l].derivative(k) * p.Y[k];
    A[l] = std::move(acc);
  }
  p.G.resize(n);
  for (int i = 0; i < n; ++i) {
    Jet acc = p.ginv[i * n] * A[0];
    for (int l = 1; l < n; ++l) acc += p.ginv[i * n + l] * A[l];
    p.G[i] = acc * 0.25;
  }
  if (p.G[0].space()->order() < 1) return p;
  p.N.resize(static_cast<std::size_t>(n * n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) p.N[i * n + j] = p.G[i].derivative(n + j);
  }
  if (!need_gamma) return p;

  // delta/delta x^l = d/dx^l - N^s_l d/dy^s
  p.dg_dy.resize(static_cast<std::size_t>(n * n * n));
  p.delta_g.resize(static_cast<std::size_t>(n * n * n));
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k <= j; ++k) {
      const Jet& gjk = p.g[j * n + k];
      for (int s = 0; s < n; ++s) p.dg_dy[(j * n + k) * n + s] = gjk.derivative(n + s);
      for (int l = 0; l < n; ++l) {
        Jet acc = gjk.derivative(l);
        for (int s = 0; s < n; ++s) acc -= p.N[s * n + l] * p.dg_dy[(j * n + k) * n + s];
        p.delta_g[(j * n + k) * n + l] = std::move(acc);
      }
      if (k != j) {
        for (int s = 0; s < n; ++s) p.dg_dy[(k * n + j) * n + s] = p.dg_dy[(j * n + k) * n + s];
        for (int l = 0; l < n; ++l) p.delta_g[(k * n + j) * n + l] = p.delta_g[(j * n + k) * n + l];
      }
    }
  }
  auto dg = [&](int j, int k, int l) -> const Jet& { return p.delta_g[(j * n + k) * n + l]; };
  p.gamma.resize(static_cast<std::size_t>(n * n * n));
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k <= j; ++k) {
      std::vector<Jet> lowered(n);
      for (int s = 0; s < n; ++s) lowered[s] = dg(j, s, k) + dg(k, s, j) - dg(j, k, s);
      for (int i = 0; i < n; ++i) {
        Jet acc = p.ginv[i * n] * lowered[0];
        for (int s = 1; s < n; ++s) acc += p.ginv[i * n + s] * lowered[s];
        acc *= 0.5;
        p.gamma[(i * n + j) * n + k] = acc;
        p.gamma[(i * n + k) * n + j] = std::move(acc);
      }
    }
  }
  return p;
}

double partial_value(const Jet& j, std::initializer_list<int> vars, int nvars) {
  std::vector<int> e(static_cast<std::size_t>(nvars), 0);
  for (int v : vars) e[static_cast<std::size_t>(v)] += 1;
  return j.partial(e);
}

void fill_connection(LocalGeometry& out, const JetPipeline& p) {
  const int n = p.n;
  out.F2 = p.F2.value();
  out.g = values(p.g, n);
  out.ginv = values(p.ginv, n);
  out.g_min_eigenvalue = p.min_eig;
  out.cartan = Tensor3(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < n; ++k) out.cartan(i, j, k) = 0.5 * p.dg_dy[(i * n + j) * n + k].value();
    }
  }
  out.spray = Vec(n);
  for (int i = 0; i < n; ++i) out.spray[i] = p.G[i].value();
  out.nonlinear = values(p.N, n);
  out.delta_g = Tensor3(n);
  out.gamma = Tensor3(n);
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      for (int c = 0; c < n; ++c) {
        out.delta_g(a, b, c) = p.delta_g[(a * n + b) * n + c].value();
        out.gamma(a, b, c) = p.gamma[(a * n + b) * n + c].value();
      }
    }
  }
}

void fill_curvature(LocalGeometry& out, const JetPipeline& p, const Vec& y) {
  const int n = p.n;
  const int m = 2 * n;
  // delta Gamma^i_jl / delta x^k
  std::vector<double> dgam(static_cast<std::size_t>(n * n * n * n));  // (i, j, l, k)
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int l = 0; l < n; ++l) {
        const Jet& G = p.gamma[(i * n + j) * n + l];
        for (int k = 0; k < n; ++k) {
          double v = partial_value(G, {k}, m);
          for (int s = 0; s < n; ++s) v -= p.N[s * n + k].value() * partial_value(G, {n + s}, m);
          dgam[((i * n + j) * n + l) * n + k] = v;
        }
      }
    }
  }
  auto gam = [&](int i, int j, int k) { return out.gamma(i, j, k); };
  auto dG = [&](int i, int j, int l, int k) { return dgam[((i * n + j) * n + l) * n + k]; };
  out.hh = Tensor4(n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < n; ++k) {
        for (int l = 0; l < n; ++l) {
          double v = dG(i, j, l, k) - dG(i, j, k, l);
          for (int s = 0; s < n; ++s) v += gam(i, k, s) * gam(s, j, l) - gam(i, l, s) * gam(s, j, k);
          out.hh(j, i, k, l) = v;
        }
      }
    }
  }
  // R^i_k = 2 dG^i/dx^k - y^j d2G^i/dx^j dy^k + 2 G^j d2G^i/dy^j dy^k - dG^i/dy^j dG^j/dy^k
  out.spray_riemann = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const Jet& Gi = p.G[i];
    for (int k = 0; k < n; ++k) {
      double v = 2.0 * partial_value(Gi, {k}, m);
      for (int j = 0; j < n; ++j) {
        v -= y[j] * partial_value(Gi, {j, n + k}, m);
        v += 2.0 * out.spray[j] * partial_value(Gi, {n + j, n + k}, m);
        v -= out.nonlinear(i, j) * out.nonlinear(j, k);
      }
      out.spray_riemann(i, k) = v;
    }
  }
  out.has_curvature = true;
}

}  // namespace

LocalGeometry local_geometry(const FinslerMetric& metric, const Vec& x, const Vec& y, const JetEngine& engine,
                             GeometryLevel level) {
  check_inputs(metric, x, y);
  const bool curv = level == GeometryLevel::curvature;
  const JetPipeline p = run_pipeline(metric, x, y, engine, curv ? 4 : 3, curv ? 2 : 1, true);
  LocalGeometry out;
  out.x = x;
  out.y = y;
  fill_connection(out, p);
  if (curv) fill_curvature(out, p, y);
  return out;
}

FundamentalTensor fundamental_tensor(const FinslerMetric& metric, const Vec& x, const Vec& y,
                                     const JetEngine& engine) {
  check_inputs(metric, x, y);
  const Mat g = vertical_hessian(metric, x, y, engine);
  Eigen::SelfAdjointEigenSolver<Mat> es(g, Eigen::EigenvaluesOnly);
  const double lmin = es.eigenvalues().minCoeff();
  if (!(lmin > kConvexityFloor * std::max(1.0, es.eigenvalues().maxCoeff()))) {
    throw Error(ErrorCode::DegenerateMetric,
                "fundamental tensor not positive definite (smallest eigenvalue " + std::to_string(lmin) + ")");
  }
  return {x, y, g};
}

CartanTensor cartan_tensor(const FinslerMetric& metric, const Vec& x, const Vec& y, const JetEngine& engine) {
  auto geo = local_geometry(metric, x, y, engine);
  return {x, y, std::move(geo.cartan)};
}

Spray spray_coefficients(const FinslerMetric& metric, const Vec& x, const Vec& y, const JetEngine& engine) {
  return {x, y, spray_vector(metric, x, y, engine)};
}

NonlinearConnection nonlinear_connection(const FinslerMetric& metric, const Vec& x, const Vec& y,
                                         const JetEngine& engine) {
  check_inputs(metric, x, y);
  const JetPipeline p = run_pipeline(metric, x, y, engine, 3, 1, false);
  return {x, y, values(p.N, metric.dimension())};
}

ChernCoefficients chern_coefficients(const FinslerMetric& metric, const Vec& x, const Vec& y,
                                     const JetEngine& engine) {
  auto geo = local_geometry(metric, x, y, engine);
  return {x, y, std::move(geo.gamma)};
}

Vec spray_vector(const FinslerMetric& metric, const Vec& x, const Vec& y, const JetEngine& engine) {
  check_inputs(metric, x, y);
  const JetPipeline p = run_pipeline(metric, x, y, engine, 2, 1, false);
  Vec G(metric.dimension());
  for (int i = 0; i < G.size(); ++i) G[i] = p.G[i].value();
  return G;
}

Vec contract_gamma(const Tensor3& gamma, const Vec& w, const Vec& t) {
  const int n = gamma.extent();
  Vec out = Vec::Zero(n);
  for (int i = 0; i < n; ++i) {
    double v = 0.0;
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < n; ++k) v += w[j] * t[k] * gamma(i, j, k);
    }
    out[i] = v;
  }
  return out;
}

}  // namespace finsler
