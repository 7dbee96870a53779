#include "finsler/berwald.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "finsler/error.hpp"
#include "finsler/random.hpp"

namespace finsler {

namespace {

ChartDomain region_or_default(const FinslerMetric& metric, const ChartDomain& region) {
  if (region.empty()) return inset(metric.chart(), 0.05);
  if (static_cast<int>(region.size()) != metric.dimension())
    throw Error(ErrorCode::DimensionMismatch, "region dimension differs from metric dimension");
  for (std::size_t i = 0; i < region.size(); ++i) {
    if (region[i].lo < metric.chart()[i].lo || region[i].hi > metric.chart()[i].hi || region[i].lo > region[i].hi)
      throw Error(ErrorCode::OutOfChart, "region is not inside the chart");
  }
  return region;
}

// uniform Euclidean direction radially projected onto the indicatrix
Vec indicatrix_direction(const FinslerMetric& metric, const Vec& x, Rng& rng) {
  const Vec u = rng.unit_vector(metric.dimension());
  return u / metric.F(x, u);
}

double F2_at(const FinslerMetric& metric, const Vec& x, const Vec& y) {
  return metric.norm().squared(std::span<const double>(x.data(), x.size()),
                               std::span<const double>(y.data(), y.size()));
}

Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

// entrywise standard error of the mean of batch estimates
Mat batch_error(const std::vector<Mat>& batches) {
  const int b = static_cast<int>(batches.size());
  Mat mean = Mat::Zero(batches.front().rows(), batches.front().cols());
  for (const auto& m : batches) mean += m;
  mean /= b;
  Mat var = Mat::Zero(mean.rows(), mean.cols());
  for (const auto& m : batches) var += (m - mean).cwiseAbs2();
  return (var / (b * (b - 1.0))).cwiseSqrt();
}

void require_spd(const Mat& g, const char* what) {
  Eigen::SelfAdjointEigenSolver<Mat> es(g);
  if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0)
    throw Error(ErrorCode::SamplingFailure, std::string(what) + " estimate is not positive definite");
}

constexpr int kBatches = 16;

BinetLegendreMetric rejection_estimate(const FinslerMetric& metric, const Vec& x, int mc_samples,
                                       std::uint64_t seed) {
  const int n = metric.dimension();
  Rng probe(Rng::derive(seed, 0));
  double reach = 0.0;
  for (int k = 0; k < 20; ++k) {
    const Vec u = probe.unit_vector(n);
    reach = std::max(reach, 1.0 / metric.F(x, u));
  }
  double R = 1.25 * reach;

  const int per = std::max(1, mc_samples / kBatches);
  // visits every box sample of shard-seeded batches in a fixed order
  auto sweep = [&](double R, auto&& visit) {
    Vec y(n);
    for (int b = 0; b < kBatches; ++b) {
      Rng rng(Rng::derive(seed, 1 + static_cast<std::uint64_t>(b)));
      for (int s = 0; s < per; ++s) {
        for (int i = 0; i < n; ++i) y[i] = rng.uniform(-R, R);
        visit(y, F2_at(metric, x, y) <= 1.0);
      }
    }
  };
  const long drawn = static_cast<long>(per) * kBatches;
  for (int attempt = 0; attempt < 4; ++attempt) {
    Mat total = Mat::Zero(n, n);
    long accepted = 0;
    double extent = 0.0;
    sweep(R, [&](const Vec& y, bool in) {
      if (!in) return;
      ++accepted;
      total.noalias() += y * y.transpose();
      extent = std::max(extent, y.cwiseAbs().maxCoeff());
    });
    const double rate = static_cast<double>(accepted) / static_cast<double>(drawn);
    if (rate < 1e-3) {
      std::ostringstream os;
      os << "rejection acceptance rate " << rate << " below 1e-3";
      throw Error(ErrorCode::SamplingFailure, os.str());
    }
    // the probes may have missed the far side of the ball; grow the box and redo
    if (extent > R / 1.1) {
      R *= 2.0;
      continue;
    }
    BinetLegendreMetric out;
    out.x = x;
    const Mat M = symmetrize(total / static_cast<double>(accepted));
    out.inverse = (n + 2.0) * M;
    require_spd(out.inverse, "Binet-Legendre");
    out.g = symmetrize(out.inverse.inverse());
    // delta method: the influence of sample s on g is -g (n+2)(Z_s - M A_s) g / abar
    const double abar = rate;
    Mat sq = Mat::Zero(n, n);
    sweep(R, [&](const Vec& y, bool in) {
      const Mat Z = in ? Mat(y * y.transpose() - M) : Mat(Mat::Zero(n, n));
      const Mat psi = -(n + 2.0) * out.g * Z * out.g / abar;
      sq += psi.cwiseAbs2();
    });
    out.std_error = (sq / (static_cast<double>(drawn) * static_cast<double>(drawn))).cwiseSqrt();
    out.samples = static_cast<int>(drawn);
    out.accepted = static_cast<int>(accepted);
    out.method = BLMethod::rejection;
    out.seed = seed;
    return out;
  }
  throw Error(ErrorCode::SamplingFailure, "unit ball extends beyond every bounding box tried");
}

// Christoffel symbols from g and its partial derivatives dg(a)_{ij} = d_a g_ij
Tensor3 christoffel(const Mat& g, const std::vector<Mat>& dg) {
  const int n = static_cast<int>(g.rows());
  const Mat ginv = g.inverse();
  Tensor3 G(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < n; ++k) {
        double v = 0.0;
        for (int l = 0; l < n; ++l) v += ginv(i, l) * (dg[j](l, k) + dg[k](l, j) - dg[l](j, k));
        G(i, j, k) = 0.5 * v;
      }
    }
  }
  return G;
}

double gamma_scale(const Tensor3& g) { return std::max(1.0, g.max_abs()); }

}  // namespace

BerwaldReport is_berwald(const FinslerMetric& metric, int point_samples, int indicatrix_samples, double tol,
                         std::uint64_t seed, const JetEngine& engine, const ChartDomain& region) {
  if (indicatrix_samples < 2) throw Error(ErrorCode::SpecValidation, "is_berwald needs at least 2 directions per point");
  if (point_samples < 1) throw Error(ErrorCode::SpecValidation, "is_berwald needs at least 1 point");
  if (!(tol > 0.0)) throw Error(ErrorCode::SpecValidation, "Berwald tolerance must be positive");
  const ChartDomain box = region_or_default(metric, region);
  BerwaldReport rep;
  rep.metric_id = metric.id();
  rep.tolerance = tol;
  rep.indicatrix_samples = indicatrix_samples;
  rep.seed = seed;
  rep.engine = to_string(engine.mode);
  for (int p = 0; p < point_samples; ++p) {
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(p)));
    const Vec x = sample_point(box, rng);
    std::vector<Tensor3> gammas;
    double scale = 1.0;
    for (int k = 0; k < indicatrix_samples; ++k) {
      const Vec y = indicatrix_direction(metric, x, rng);
      gammas.push_back(local_geometry(metric, x, y, engine).gamma);
      scale = std::max(scale, gamma_scale(gammas.back()));
    }
    // max over pairs per entry equals the entrywise range
    double dev = 0.0;
    for (std::size_t e = 0; e < gammas.front().size(); ++e) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (const auto& G : gammas) {
        lo = std::min(lo, G.data()[e]);
        hi = std::max(hi, G.data()[e]);
      }
      dev = std::max(dev, hi - lo);
    }
    rep.points.push_back(x);
    rep.point_deviation.push_back(dev / scale);
    rep.max_deviation = std::max(rep.max_deviation, dev / scale);
  }
  rep.berwald = rep.max_deviation < tol;
  return rep;
}

RiemannReport is_riemannian(const FinslerMetric& metric, int samples, double tol, std::uint64_t seed,
                            const JetEngine& engine, const ChartDomain& region) {
  if (samples < 1) throw Error(ErrorCode::SpecValidation, "is_riemannian needs at least 1 point");
  if (!(tol > 0.0)) throw Error(ErrorCode::SpecValidation, "Riemannian tolerance must be positive");
  const ChartDomain box = region_or_default(metric, region);
  constexpr int kDirections = 4;
  RiemannReport rep;
  rep.metric_id = metric.id();
  rep.tolerance = tol;
  rep.samples = samples;
  rep.seed = seed;
  for (int p = 0; p < samples; ++p) {
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(p)));
    const Vec x = sample_point(box, rng);
    std::vector<Mat> gs;
    double scale = 1.0;
    double cartan = 0.0;
    for (int k = 0; k < kDirections; ++k) {
      const Vec y = indicatrix_direction(metric, x, rng);
      const auto geo = local_geometry(metric, x, y, engine);
      gs.push_back(geo.g);
      scale = std::max(scale, geo.g.cwiseAbs().maxCoeff());
      cartan = std::max(cartan, geo.cartan.max_abs());
    }
    double gdev = 0.0;
    for (int a = 0; a < kDirections; ++a)
      for (int b = a + 1; b < kDirections; ++b) gdev = std::max(gdev, (gs[a] - gs[b]).cwiseAbs().maxCoeff());
    rep.max_cartan = std::max(rep.max_cartan, cartan / scale);
    rep.max_g_deviation = std::max(rep.max_g_deviation, gdev / scale);
  }
  rep.cartan_riemannian = rep.max_cartan < tol;
  rep.g_riemannian = rep.max_g_deviation < tol;
  if (rep.cartan_riemannian != rep.g_riemannian) {
    std::ostringstream os;
    os << "Cartan witness " << rep.max_cartan << " and g witness " << rep.max_g_deviation
       << " disagree at tolerance " << tol;
    throw Error(ErrorCode::WitnessDisagreement, os.str());
  }
  rep.riemannian = rep.cartan_riemannian;
  return rep;
}

namespace {

// Gauss rule for the weight (1 - t^2)^(lambda - 1/2) on [-1, 1] by Golub-Welsch
void gegenbauer_rule(int q, double lambda, std::vector<double>& t, std::vector<double>& w) {
  Mat J = Mat::Zero(q, q);
  for (int k = 1; k < q; ++k) {
    const double b = k * (k + 2 * lambda - 1) / (4 * (k + lambda) * (k + lambda - 1));
    J(k, k - 1) = J(k - 1, k) = std::sqrt(b);
  }
  const Eigen::SelfAdjointEigenSolver<Mat> es(J);
  const double mu0 = std::sqrt(std::numbers::pi) * std::tgamma(lambda + 0.5) / std::tgamma(lambda + 1);
  t.resize(q);
  w.resize(q);
  for (int k = 0; k < q; ++k) {
    t[k] = es.eigenvalues()[k];
    w[k] = mu0 * es.eigenvectors()(0, k) * es.eigenvectors()(0, k);
  }
}

// product rule on S^(m-1): u = (t, sqrt(1 - t^2) v), v on S^(m-2)
void sphere_rule(int m, int q, std::vector<Vec>& pts, std::vector<double>& wts) {
  if (m == 1) {
    pts = {Vec::Constant(1, 1.0), Vec::Constant(1, -1.0)};
    wts = {1.0, 1.0};
    return;
  }
  if (m == 2) {
    const int M = 2 * q;
    pts.clear();
    wts.assign(M, 2 * std::numbers::pi / M);
    for (int k = 0; k < M; ++k) {
      const double a = 2 * std::numbers::pi * k / M;
      pts.push_back((Vec(2) << std::cos(a), std::sin(a)).finished());
    }
    return;
  }
  std::vector<Vec> sub;
  std::vector<double> subw, t, w;
  sphere_rule(m - 1, q, sub, subw);
  gegenbauer_rule(q, 0.5 * (m - 2), t, w);
  pts.clear();
  wts.clear();
  for (int k = 0; k < q; ++k) {
    const double r = std::sqrt(std::max(0.0, 1 - t[k] * t[k]));
    for (std::size_t s = 0; s < sub.size(); ++s) {
      Vec u(m);
      u[0] = t[k];
      u.tail(m - 1) = r * sub[s];
      pts.push_back(std::move(u));
      wts.push_back(w[k] * subw[s]);
    }
  }
}

// Haar-distributed orthogonal matrix
Mat random_rotation(int n, Rng& rng) {
  Mat Z(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) Z(i, j) = rng.normal();
  const Eigen::HouseholderQR<Mat> qr(Z);
  Mat Q = qr.householderQ();
  const Mat R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < n; ++j)
    if (R(j, j) < 0) Q.col(j) *= -1.0;
  return Q;
}

}  // namespace

DirectionSet make_direction_set(int n, int samples, std::uint64_t seed, int replicates) {
  if (n < 1 || replicates < 2 || samples < replicates)
    throw Error(ErrorCode::SpecValidation, "direction set needs n >= 1, replicates >= 2, samples >= replicates");
  const int target = samples / replicates;
  // the rule has 2 q^(n-1) points
  int q = 2;
  if (n >= 2) {
    q = std::max(2, static_cast<int>(std::floor(std::pow(target / 2.0, 1.0 / (n - 1)))));
  }
  std::vector<Vec> base;
  std::vector<double> bw;
  sphere_rule(n, q, base, bw);
  const double total = std::accumulate(bw.begin(), bw.end(), 0.0);
  DirectionSet set;
  set.dimension = n;
  set.replicates = replicates;
  for (int r = 0; r < replicates; ++r) {
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(r)));
    const Mat Q = random_rotation(n, rng);
    for (std::size_t s = 0; s < base.size(); ++s) {
      set.directions.push_back(Q * base[s]);
      set.weights.push_back(bw[s] / total);
    }
  }
  return set;
}

namespace {

// frame A with A^T gbar A = I, gbar the mean of g over the coordinate
// directions; sampling y = A w makes the unit ball nearly round
Mat whitening_frame(const FinslerMetric& metric, const Vec& x) {
  const int n = metric.dimension();
  Mat gbar = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (double s : {1.0, -1.0}) gbar += vertical_hessian(metric, x, s * Vec::Unit(n, i));
  gbar /= 2.0 * n;
  const Eigen::LLT<Mat> llt(gbar);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::DegenerateMetric, "averaged g is not positive definite");
  return llt.matrixU().solve(Mat::Identity(n, n));
}

BinetLegendreMetric radial_estimate(const FinslerMetric& metric, const Vec& x, const DirectionSet& dirs,
                                    const Mat& A) {
  const int n = metric.dimension();
  if (dirs.dimension != n) throw Error(ErrorCode::DimensionMismatch, "direction set dimension differs from metric");
  if (!metric.in_chart(x)) throw Error(ErrorCode::OutOfChart, "Binet-Legendre point outside the chart");
  const int per = dirs.per_replicate();
  // int_B y y^T = 1/(n+2) int_S u u^T F^-(n+2),  vol(B) = 1/n int_S F^-n
  std::vector<Mat> gs;
  Mat inv_sum = Mat::Zero(n, n);
  for (int r = 0; r < dirs.replicates; ++r) {
    Mat M = Mat::Zero(n, n);
    double V = 0.0;
    Vec y(n);
    for (int s = 0; s < per; ++s) {
      const Vec& u = dirs.directions[static_cast<std::size_t>(r) * per + s];
      y.noalias() = A * u;
      const double F2 = F2_at(metric, x, y);
      if (!(F2 > 0.0)) throw Error(ErrorCode::SamplingFailure, "non-positive F on a sampled direction");
      const double w = dirs.weights[static_cast<std::size_t>(r) * per + s] * std::pow(F2, -0.5 * n);
      V += w;
      M.noalias() += (w / F2) * u * u.transpose();
    }
    const Mat inv = symmetrize(A * (n * M / V) * A.transpose());
    inv_sum += inv;
    gs.push_back(inv.inverse());
  }
  BinetLegendreMetric out;
  out.x = x;
  out.inverse = inv_sum / dirs.replicates;
  require_spd(out.inverse, "Binet-Legendre");
  out.g = symmetrize(out.inverse.inverse());
  out.std_error = batch_error(gs);
  out.samples = per * dirs.replicates;
  out.accepted = out.samples;
  out.method = BLMethod::radial_qmc;
  return out;
}

}  // namespace

BinetLegendreMetric binet_legendre_metric(const FinslerMetric& metric, const Vec& x, const DirectionSet& dirs) {
  if (dirs.dimension != metric.dimension())
    throw Error(ErrorCode::DimensionMismatch, "direction set dimension differs from metric");
  if (!metric.in_chart(x)) throw Error(ErrorCode::OutOfChart, "Binet-Legendre point outside the chart");
  return radial_estimate(metric, x, dirs, whitening_frame(metric, x));
}

BinetLegendreMetric binet_legendre_metric(const FinslerMetric& metric, const Vec& x, int mc_samples,
                                          std::uint64_t seed, BLMethod method) {
  if (mc_samples < 10000) throw Error(ErrorCode::SpecValidation, "Binet-Legendre needs at least 1e4 samples");
  if (static_cast<int>(x.size()) != metric.dimension())
    throw Error(ErrorCode::DimensionMismatch, "point dimension differs from metric dimension");
  if (!metric.in_chart(x)) throw Error(ErrorCode::OutOfChart, "Binet-Legendre point outside the chart");
  if (method == BLMethod::rejection) return rejection_estimate(metric, x, mc_samples, seed);
  auto out = binet_legendre_metric(metric, x, make_direction_set(metric.dimension(), mc_samples, seed));
  out.seed = seed;
  return out;
}

Tensor3 binet_legendre_christoffel(const FinslerMetric& metric, const Vec& x, const DirectionSet& dirs,
                                   double step) {
  const int n = metric.dimension();
  if (!metric.in_chart(x)) throw Error(ErrorCode::OutOfChart, "stencil centre outside the chart");
  // one frame for the whole stencil keeps the estimates smooth in x
  const Mat A = whitening_frame(metric, x);
  const Mat g0 = radial_estimate(metric, x, dirs, A).g;
  std::vector<Mat> dg;
  for (int a = 0; a < n; ++a) {
    const double h = step * std::max(1.0, std::abs(x[a]));
    auto at = [&](double s) {
      Vec xs = x;
      xs[a] += s * h;
      if (!metric.in_chart(xs)) throw Error(ErrorCode::OutOfChart, "stencil point outside the chart");
      return radial_estimate(metric, xs, dirs, A).g;
    };
    dg.push_back((at(-2) - 8.0 * at(-1) + 8.0 * at(1) - at(2)) / (12.0 * h));
  }
  return christoffel(g0, dg);
}

CoincidenceReport compare_chern_levicivita(const FinslerMetric& metric, const ChartDomain& region, int samples,
                                           double tol, int mc_samples, std::uint64_t seed,
                                           const JetEngine& engine) {
  if (samples < 1) throw Error(ErrorCode::SpecValidation, "coincidence check needs at least 1 point");
  if (!(tol > 0.0)) throw Error(ErrorCode::SpecValidation, "coincidence tolerance must be positive");
  if (mc_samples < 10000) throw Error(ErrorCode::SpecValidation, "coincidence check needs at least 1e4 samples");
  const ChartDomain box = region_or_default(metric, region);
  const auto berwald = is_berwald(metric, std::max(2, samples), 4, kBerwaldTolerance, Rng::derive(seed, 0), engine,
                                  box);
  if (!berwald.berwald) {
    std::ostringstream os;
    os << "Gamma deviation " << berwald.max_deviation << " exceeds " << berwald.tolerance;
    throw Error(ErrorCode::NotBerwald, os.str());
  }
  constexpr double kStep = 0.02;
  // keep the stencil inside the chart
  ChartDomain inner = box;
  for (std::size_t a = 0; a < inner.size(); ++a) {
    const double pad = 2.0 * kStep * std::max({1.0, std::abs(box[a].lo), std::abs(box[a].hi)});
    inner[a].lo = std::max(box[a].lo, metric.chart()[a].lo + pad);
    inner[a].hi = std::min(box[a].hi, metric.chart()[a].hi - pad);
    if (inner[a].lo > inner[a].hi) throw Error(ErrorCode::OutOfChart, "region too thin for the stencil");
  }
  const DirectionSet dirs = make_direction_set(metric.dimension(), mc_samples, Rng::derive(seed, 1));
  CoincidenceReport rep;
  rep.metric_id = metric.id();
  rep.tolerance = tol;
  rep.mc_samples = dirs.per_replicate() * dirs.replicates;
  rep.stencil_step = kStep;
  rep.berwald_deviation = berwald.max_deviation;
  for (int p = 0; p < samples; ++p) {
    Rng rng(Rng::derive(seed, 2 + static_cast<std::uint64_t>(p)));
    const Vec x = sample_point(inner, rng);
    const Vec y = rng.unit_vector(metric.dimension());
    const Tensor3 chern = local_geometry(metric, x, y, engine).gamma;
    const Tensor3 lc = binet_legendre_christoffel(metric, x, dirs, kStep);
    const double dev = chern.max_abs_diff(lc);
    rep.points.push_back(x);
    rep.point_deviation.push_back(dev);
    rep.max_deviation = std::max(rep.max_deviation, dev);
  }
  rep.passed = rep.max_deviation < tol;
  rep.note = "tolerance budget dominated by Monte Carlo error of g_F";
  return rep;
}

ProductConnectionReport product_connection_check(const FinslerMetric& m1, const FinslerMetric& m2, int samples,
                                                 double tol_gamma, double tol_R, std::uint64_t seed,
                                                 const JetEngine& engine) {
  if (samples < 1) throw Error(ErrorCode::SpecValidation, "product check needs at least 1 point");
  const auto prod = make_product_metric({m1, m2});
  const int n = prod.dimension();
  const int n1 = m1.dimension();
  auto block = [n1](int i) { return i < n1 ? 0 : 1; };
  auto put = [](Vec& full, const Vec& part, int off) { full.segment(off, part.size()) = part; };
  ProductConnectionReport rep;
  rep.metric_id = prod.id();
  rep.samples = samples;
  rep.tolerance_gamma = tol_gamma;
  rep.tolerance_R = tol_R;
  rep.factor_K.assign(2, std::nullopt);
  const ChartDomain box = inset(prod.chart(), 0.05);
  bool mixed_seen = false;
  for (int p = 0; p < samples; ++p) {
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(p)));
    const Vec x = sample_point(box, rng);
    const Vec y = rng.unit_vector(n);
    const auto geo = local_geometry(prod, x, y, engine, GeometryLevel::curvature);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        for (int k = 0; k < n; ++k) {
          if (block(i) == block(j) && block(j) == block(k)) continue;
          rep.max_mixed_gamma = std::max(rep.max_mixed_gamma, std::abs(geo.gamma(i, j, k)));
        }
        for (int k = 0; k < n; ++k)
          for (int l = 0; l < n; ++l)
            if (block(k) != block(l)) rep.max_mixed_R = std::max(rep.max_mixed_R, std::abs(geo.hh(j, i, k, l)));
      }
    }
    // flags supported in single blocks; F^2 of a non-Riemannian factor is not
    // smooth where its block of y vanishes, so such orientations are skipped
    for (int pole = 0; pole < 2; ++pole) {
      for (int cloth = 0; cloth < 2; ++cloth) {
        const int dp = pole == 0 ? n1 : n - n1;
        const int dc = cloth == 0 ? n1 : n - n1;
        if (pole == cloth && dp < 2) continue;
        Vec yf = Vec::Zero(n), Vf = Vec::Zero(n);
        put(yf, rng.unit_vector(dp), pole == 0 ? 0 : n1);
        put(Vf, rng.unit_vector(dc), cloth == 0 ? 0 : n1);
        try {
          const double K = flag_curvature(prod, Flag{x, yf, Vf}, engine).K;
          if (pole != cloth) {
            rep.max_mixed_K = std::max(rep.max_mixed_K, std::abs(K));
            mixed_seen = true;
          } else {
            auto& r = rep.factor_K[pole];
            r = r ? std::pair{std::min(r->first, K), std::max(r->second, K)} : std::pair{K, K};
          }
        } catch (const Error& e) {
          if (e.code() != ErrorCode::DifferentiationFailure && e.code() != ErrorCode::DegenerateMetric) throw;
        }
      }
    }
  }
  rep.passed = mixed_seen && rep.max_mixed_gamma < tol_gamma && rep.max_mixed_R < tol_R && rep.max_mixed_K < tol_R;
  return rep;
}

namespace {

// barycentric interpolation on Chebyshev points of the first kind
struct ChebyshevTable {
  double t0 = 0.0, t1 = 1.0;
  std::vector<double> nodes, weights;
  std::vector<Tensor3> values;

  Tensor3 operator()(double t) const {
    Tensor3 out(values.front().extent());
    double den = 0.0;
    std::vector<double> c(nodes.size());
    for (std::size_t m = 0; m < nodes.size(); ++m) {
      const double d = t - nodes[m];
      if (d == 0.0) return values[m];
      c[m] = weights[m] / d;
      den += c[m];
    }
    for (std::size_t m = 0; m < nodes.size(); ++m)
      for (std::size_t e = 0; e < out.size(); ++e) out.data()[e] += c[m] * values[m].data()[e];
    for (auto& v : out.data()) v /= den;
    return out;
  }
};

}  // namespace

TransportCoincidenceReport levi_civita_transport_check(const FinslerMetric& metric, const Curve& curve,
                                                       int mc_samples, std::uint64_t seed, int nodes) {
  if (curve.empty()) throw Error(ErrorCode::SpecValidation, "empty curve");
  if (nodes < 4) throw Error(ErrorCode::SpecValidation, "at least 4 interpolation nodes");
  const int n = metric.dimension();
  const DirectionSet dirs = make_direction_set(n, mc_samples, seed);
  constexpr double kStep = 0.02;
  std::vector<ChebyshevTable> tables;
  for (const auto& seg : curve.segments()) {
    ChebyshevTable tab;
    tab.t0 = seg.t0;
    tab.t1 = seg.t1;
    for (int m = 0; m < nodes; ++m) {
      const double th = std::numbers::pi * (m + 0.5) / nodes;
      const double t = 0.5 * (seg.t0 + seg.t1) + 0.5 * (seg.t1 - seg.t0) * std::cos(th);
      tab.nodes.push_back(t);
      tab.weights.push_back((m % 2 == 0 ? 1.0 : -1.0) * std::sin(th));
      tab.values.push_back(binet_legendre_christoffel(metric, curve.position(t), dirs, kStep));
    }
    tables.push_back(std::move(tab));
  }
  TransportCoincidenceReport rep;
  rep.nodes = nodes;
  rep.mc_samples = dirs.per_replicate() * dirs.replicates;
  rep.nonlinear_map = Mat(n, n);
  rep.levi_civita_map = Mat(n, n);
  for (int c = 0; c < n; ++c) {
    rep.nonlinear_map.col(c) = parallel_transport(metric, curve, Vec::Unit(n, c)).output;
    Vec W = Vec::Unit(n, c);
    for (std::size_t s = 0; s < tables.size(); ++s) {
      const auto& tab = tables[s];
      OdeStats stats;
      const double eps = 1e-12 * std::max(1.0, tab.t1 - tab.t0);
      integrate_dopri5(
          [&](double t, const Vec& w) -> Vec {
            const double tc = std::clamp(t, tab.t0 + eps, tab.t1 - eps);
            return -contract_gamma(tab(tc), w, curve.velocity(tc));
          },
          tab.t0, tab.t1, W, StepControl{}, stats);
    }
    rep.levi_civita_map.col(c) = W;
  }
  const double scale = std::max(1.0, rep.nonlinear_map.cwiseAbs().maxCoeff());
  rep.max_deviation = (rep.nonlinear_map - rep.levi_civita_map).cwiseAbs().maxCoeff() / scale;
  return rep;
}

std::string to_string(Consistency c) {
  switch (c) {
    case Consistency::consistent_with_theorem:
      return "consistent_with_theorem";
    case Consistency::not_applicable:
      return "not_applicable";
    case Consistency::contradiction:
      return "CONTRADICTION";
    case Consistency::inconclusive:
      return "inconclusive";
  }
  return "unknown";
}

RigidityVerdict verify_rigidity(const FinslerMetric& metric, const ChartDomain& region, const RigidityBudget& budget,
                                const RigidityTolerances& tol, std::uint64_t seed, const JetEngine& engine) {
  const ChartDomain box = region_or_default(metric, region);
  RigidityVerdict v;
  v.metric_id = metric.id();
  v.tolerances = tol;
  v.seed = seed;
  v.berwald = is_berwald(metric, budget.point_samples, budget.indicatrix_samples, tol.berwald, Rng::derive(seed, 1),
                         engine, box);
  v.evaluations = budget.point_samples * budget.indicatrix_samples;
  v.is_berwald = v.berwald.berwald;
  if (!v.is_berwald) {
    v.consistency = Consistency::not_applicable;
    v.note = "not Berwald; the theorem does not apply";
    return v;
  }
  try {
    v.riemann = is_riemannian(metric, budget.riemann_samples, tol.riemann, Rng::derive(seed, 2), engine, box);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::WitnessDisagreement) throw;
    v.consistency = Consistency::inconclusive;
    v.note = e.what();
    return v;
  }
  v.evaluations += 4 * budget.riemann_samples;
  v.is_riemannian = v.riemann->riemannian;
  if (v.is_riemannian) {
    v.consistency = Consistency::consistent_with_theorem;
    v.note = "Riemannian; consistent trivially";
    return v;
  }
  const auto search = find_vanishing_flag(metric, box, budget.flags, Rng::derive(seed, 3), engine, tol.vanish);
  v.evaluations += search.evaluations;
  v.best_abs_K = std::abs(search.best.K);
  if (search.found) {
    v.witness = search.best;
    v.witness_mixed = search.mixed_blocks;
    v.consistency = Consistency::consistent_with_theorem;
    v.note = search.mixed_blocks ? "vanishing flag with pole and cloth in different factors" : "vanishing flag found";
  } else {
    v.consistency = Consistency::contradiction;
    std::ostringstream os;
    os << "numerical counterexample candidate: re-examine tolerances (best |K| = " << v.best_abs_K
       << ", tolerance " << tol.vanish << ", " << search.evaluations << " evaluations)";
    v.note = os.str();
  }
  return v;
}

}  // namespace finsler
