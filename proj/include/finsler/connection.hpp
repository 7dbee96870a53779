#pragma once

// Connection-level tensors of a Finsler metric at a single (x, y):
// fundamental tensor, Cartan tensor, geodesic spray, nonlinear connection
// and the Chern connection coefficients.

#include "finsler/engine.hpp"
#include "finsler/metric.hpp"
#include "finsler/tensor.hpp"

namespace finsler {

struct FundamentalTensor {
  Vec x, y;
  Mat g;
};

/// C_ijk = 1/4 d^3 F^2 / dy^i dy^j dy^k, totally symmetric.
struct CartanTensor {
  Vec x, y;
  Tensor3 C;
};

/// G^i with geodesics solving x'' + 2 G(x, x') = 0.
struct Spray {
  Vec x, y;
  Vec G;
};

/// N^i_j = dG^i / dy^j, stored as N(i, j).
struct NonlinearConnection {
  Vec x, y;
  Mat N;
};

/// Gamma^i_jk stored as gamma(i, j, k).
struct ChernCoefficients {
  Vec x, y;
  Tensor3 gamma;
};

enum class GeometryLevel { connection, curvature };

/// Everything computed from one jet of F^2 around (x, y).
struct LocalGeometry {
  Vec x, y;
  double F2 = 0.0;
  Mat g, ginv;
  double g_min_eigenvalue = 0.0;
  Tensor3 cartan;
  Vec spray;
  Mat nonlinear;
  Tensor3 delta_g;  // delta_g(j, k, l) = delta g_jk / delta x^l
  Tensor3 gamma;

  bool has_curvature = false;
  Tensor4 hh;          // hh(j, i, k, l) = R_j^i_kl
  Mat spray_riemann;   // R^i_k from spray derivatives, stored (i, k)
};

/// Relative eigenvalue floor below which g is reported degenerate.
inline constexpr double kConvexityFloor = 1e-9;

LocalGeometry local_geometry(const FinslerMetric& metric, const Vec& x, const Vec& y,
                             const JetEngine& engine = {},
                             GeometryLevel level = GeometryLevel::connection);

FundamentalTensor fundamental_tensor(const FinslerMetric& metric, const Vec& x, const Vec& y,
                                     const JetEngine& engine = {});
CartanTensor cartan_tensor(const FinslerMetric& metric, const Vec& x, const Vec& y,
                           const JetEngine& engine = {});
Spray spray_coefficients(const FinslerMetric& metric, const Vec& x, const Vec& y,
                         const JetEngine& engine = {});
NonlinearConnection nonlinear_connection(const FinslerMetric& metric, const Vec& x, const Vec& y,
                                         const JetEngine& engine = {});
ChernCoefficients chern_coefficients(const FinslerMetric& metric, const Vec& x, const Vec& y,
                                     const JetEngine& engine = {});

/// Spray only, from a cheaper jet; used by the geodesic integrator.
Vec spray_vector(const FinslerMetric& metric, const Vec& x, const Vec& y, const JetEngine& engine = {});

/// W^j T^k Gamma^i_jk, the connection term of the covariant derivative.
Vec contract_gamma(const Tensor3& gamma, const Vec& w, const Vec& t);

}  // namespace finsler
