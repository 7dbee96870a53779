#include "finsler/curvature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

#include <Eigen/Eigenvalues>

#include "finsler/error.hpp"
#include "finsler/random.hpp"

namespace finsler {

HHCurvature hh_curvature_chern(const FinslerMetric& metric, const Vec& x, const Vec& y, const JetEngine& engine) {
  auto geo = local_geometry(metric, x, y, engine, GeometryLevel::curvature);
  return {x, y, std::move(geo.hh)};
}

Mat riemann_curvature_spray(const FinslerMetric& metric, const Vec& x, const Vec& y, const JetEngine& engine) {
  return local_geometry(metric, x, y, engine, GeometryLevel::curvature).spray_riemann;
}

Mat contract_hh(const Tensor4& hh, const Vec& y) {
  const int n = hh.extent();
  Mat R = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < n; ++k) {
      double v = 0.0;
      for (int j = 0; j < n; ++j) {
        for (int l = 0; l < n; ++l) v += y[j] * hh(j, i, k, l) * y[l];
      }
      R(i, k) = v;
    }
  }
  return R;
}

FlagCurvatureValue flag_curvature(const LocalGeometry& geo, const Vec& V) {
  const Mat& g = geo.g;
  const Vec& y = geo.y;
  if (V.size() != y.size()) throw Error(ErrorCode::DimensionMismatch, "cloth vector has the wrong dimension");
  const double gyy = y.dot(g * y), gvv = V.dot(g * V), gyv = y.dot(g * V);
  const double gram = gyy * gvv - gyv * gyv;
  if (!(gram > kFlagFloor * gyy * gvv)) {
    throw Error(ErrorCode::DegenerateFlag, "pole and cloth vector are (nearly) parallel");
  }
  // V^i (y^j R_jikl y^l) V^k with R_jikl = g_is R_j^s_kl
  const Mat Ry = contract_hh(geo.hh, y);
  FlagCurvatureValue out;
  out.K = V.dot(g * (Ry * V)) / gram;
  out.flag = {geo.x, y, V};
  out.gram = gram;
  return out;
}

FlagCurvatureValue flag_curvature(const FinslerMetric& metric, const Flag& flag, const JetEngine& engine) {
  if (flag.V.norm() < kDegeneracyFloor) throw Error(ErrorCode::DegenerateFlag, "cloth vector below degeneracy floor");
  const auto geo = local_geometry(metric, flag.x, flag.y, engine, GeometryLevel::curvature);
  return flag_curvature(geo, flag.V);
}

namespace {

Flag draw_flag(const FinslerMetric& metric, const ChartDomain& region, Rng& rng) {
  const int n = metric.dimension();
  Flag f;
  f.x = sample_point(region, rng);
  f.y = rng.unit_vector(n);
  // redraw until the pair is comfortably independent in the Euclidean sense
  for (;;) {
    f.V = rng.unit_vector(n);
    if (std::abs(f.V.dot(f.y)) < 0.99) break;
  }
  return f;
}

}  // namespace

ScanReport scan_flags(const FinslerMetric& metric, const ChartDomain& region, const ScanGrid& grid,
                      std::uint64_t seed, const JetEngine& engine, int workers) {
  if (grid.flags < 1) throw Error(ErrorCode::ConfigError, "scan needs at least one flag");
  if (region.size() != static_cast<std::size_t>(metric.dimension()))
    throw Error(ErrorCode::DimensionMismatch, "scan region has the wrong dimension");
  for (std::size_t a = 0; a < region.size(); ++a) {
    if (region[a].lo < metric.chart()[a].lo || region[a].hi > metric.chart()[a].hi || region[a].lo > region[a].hi)
      throw Error(ErrorCode::OutOfChart, "scan region is not inside the chart domain");
  }
  std::vector<ScanRecord> rec(static_cast<std::size_t>(grid.flags));
  auto work = [&](int begin, int end) {
    for (int i = begin; i < end; ++i) {
      Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(i)));
      const Flag f = draw_flag(metric, region, rng);
      const auto K = flag_curvature(metric, f, engine);
      rec[i] = {f.x, f.y, f.V, K.K};
    }
  };
  workers = std::clamp(workers, 1, grid.flags);
  if (workers == 1) {
    work(0, grid.flags);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errs(static_cast<std::size_t>(workers));
    const int chunk = (grid.flags + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          work(w * chunk, std::min(grid.flags, (w + 1) * chunk));
        } catch (...) {
          errs[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errs)
      if (e) std::rethrow_exception(e);
  }

  ScanReport r;
  r.metric_id = metric.id();
  std::ostringstream desc;
  desc << "uniform x in region, y and V uniform on the Euclidean sphere, " << grid.flags << " flags";
  r.grid = desc.str();
  r.region = region;
  r.samples = grid.flags;
  r.seed = seed;
  r.min_abs_K = std::numeric_limits<double>::infinity();
  r.min_K = std::numeric_limits<double>::infinity();
  r.max_K = -std::numeric_limits<double>::infinity();
  for (const auto& s : rec) {
    if (std::abs(s.K) < r.min_abs_K) {
      r.min_abs_K = std::abs(s.K);
      r.argmin = {s.x, s.y, s.V};
    }
    r.min_K = std::min(r.min_K, s.K);
    r.max_K = std::max(r.max_K, s.K);
  }
  const int nb = std::max(1, grid.buckets);
  const double lo = r.min_K, hi = r.max_K;
  const double w = (hi - lo) / nb;
  r.bucket_edges.resize(static_cast<std::size_t>(nb + 1));
  for (int b = 0; b <= nb; ++b) r.bucket_edges[b] = b == nb ? hi : lo + b * w;
  r.bucket_counts.assign(static_cast<std::size_t>(nb), 0);
  for (const auto& s : rec) {
    int b = w > 0.0 ? static_cast<int>((s.K - lo) / w) : 0;
    r.bucket_counts[std::clamp(b, 0, nb - 1)] += 1;
  }
  r.records = std::move(rec);
  return r;
}

PoleSpectrum pole_spectrum(const LocalGeometry& geo) {
  const int n = static_cast<int>(geo.y.size());
  const Mat& g = geo.g;
  const Vec& y = geo.y;
  const double gyy = y.dot(g * y);
  // g-orthonormal basis of the complement of y by Gram-Schmidt on the axes
  std::vector<Vec> basis{y / std::sqrt(gyy)};
  for (int a = 0; a < n && static_cast<int>(basis.size()) < n; ++a) {
    Vec v = Vec::Unit(n, a);
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : basis) v -= b.dot(g * v) * b;
    }
    const double nv = std::sqrt(std::max(0.0, v.dot(g * v)));
    if (nv > 1e-6) basis.push_back(v / nv);
  }
  Mat B(n, n - 1);
  for (int c = 1; c < n; ++c) B.col(c - 1) = basis[c];
  const Mat Ry = contract_hh(geo.hh, y);
  Mat S = g * Ry;
  S = 0.5 * (S + S.transpose()).eval();
  const Mat Sr = B.transpose() * S * B;
  Eigen::SelfAdjointEigenSolver<Mat> es(Sr);
  const Vec lam = es.eigenvalues() / gyy;
  PoleSpectrum p;
  p.K_min = lam[0];
  p.K_max = lam[n - 2];
  p.V_min = B * es.eigenvectors().col(0);
  p.V_max = B * es.eigenvectors().col(n - 2);
  int best = 0;
  for (int c = 1; c < n - 1; ++c)
    if (std::abs(lam[c]) < std::abs(lam[best])) best = c;
  const double scale = std::max(std::abs(p.K_min), std::abs(p.K_max));
  if (std::abs(lam[best]) > 1e-12 * scale && p.K_min < 0.0 && p.K_max > 0.0) {
    // cos^2 K_min + sin^2 K_max = 0
    p.V_zero = std::sqrt(p.K_max) * p.V_min + std::sqrt(-p.K_min) * p.V_max;
    p.V_zero /= std::sqrt(p.V_zero.dot(g * p.V_zero));
    p.K_zero = 0.0;
  } else {
    p.V_zero = B * es.eigenvectors().col(best);
    p.K_zero = lam[best];
  }
  return p;
}

bool is_mixed_flag(const FinslerMetric& metric, const Vec& y, const Vec& V, double rel) {
  const auto& dims = metric.factor_dims();
  if (dims.size() < 2) return false;
  auto block_of = [&](const Vec& v) {
    int start = 0, found = -1;
    for (std::size_t b = 0; b < dims.size(); ++b) {
      const double nb = v.segment(start, dims[b]).norm();
      if (nb > rel * v.norm()) {
        if (found >= 0) return -1;
        found = static_cast<int>(b);
      }
      start += dims[b];
    }
    return found;
  };
  const int by = block_of(y), bv = block_of(V);
  return by >= 0 && bv >= 0 && by != bv;
}

namespace {

struct Candidate {
  Vec x, y;
  PoleSpectrum spec;
  double score = std::numeric_limits<double>::infinity();
};

}  // namespace

VanishingFlagResult find_vanishing_flag(const FinslerMetric& metric, const ChartDomain& region,
                                        const FlagSearchBudget& budget, std::uint64_t seed,
                                        const JetEngine& engine, double vanish_tol) {
  if (budget.max_evaluations < 1) throw Error(ErrorCode::ConfigError, "flag search budget must be at least 1");
  const int n = metric.dimension();
  if (n < 2) throw Error(ErrorCode::DegenerateFlag, "flags need dimension at least 2");
  VanishingFlagResult res;
  auto evaluate = [&](const Vec& x, const Vec& y) {
    Candidate c;
    c.x = x;
    c.y = y;
    ++res.evaluations;
    try {
      const auto geo = local_geometry(metric, x, y, engine, GeometryLevel::curvature);
      c.spec = pole_spectrum(geo);
      c.score = std::abs(c.spec.K_zero);
    } catch (const Error& e) {
      // poles where F is not smooth (a vanishing non-Riemannian product block) are skipped
      if (e.code() != ErrorCode::DifferentiationFailure && e.code() != ErrorCode::DegenerateMetric) throw;
    }
    return c;
  };
  auto witness = [&](const Candidate& c) {
    const auto geo = local_geometry(metric, c.x, c.y, engine, GeometryLevel::curvature);
    return flag_curvature(geo, c.spec.V_zero);
  };

  Rng rng(seed);
  const auto& dims = metric.factor_dims();
  std::vector<Candidate> starts;
  const int nstarts = std::min(budget.coarse_starts, budget.max_evaluations);
  for (int s = 0; s < nstarts; ++s) {
    const Vec x = sample_point(region, rng);
    Vec y = rng.unit_vector(n);
    // alternate factor-aligned poles so mixed sections are always probed
    if (dims.size() > 1 && s % 2 == 0) {
      const std::size_t b = static_cast<std::size_t>(s / 2) % dims.size();
      int start = 0;
      for (std::size_t k = 0; k < b; ++k) start += dims[k];
      Vec yb = Vec::Zero(n);
      yb.segment(start, dims[b]) = rng.unit_vector(dims[b]);
      y = yb;
    }
    starts.push_back(evaluate(x, y));
  }
  // prefer mixed witnesses among the vanishing ones, then smallest |K|
  const Candidate* best = nullptr;
  bool best_mixed = false;
  for (const auto& c : starts) {
    const bool mixed = c.score < vanish_tol && is_mixed_flag(metric, c.y, c.spec.V_zero);
    if (!best || (mixed && !best_mixed) || (mixed == best_mixed && c.score < best->score)) {
      best = &c;
      best_mixed = mixed;
    }
  }
  Candidate cur = *best;
  if (!std::isfinite(cur.score))
    throw Error(ErrorCode::DifferentiationFailure, "no coarse start admitted a smooth evaluation");

  // damped descent on |K_zero| over (x, y) with forward-difference gradients
  double step = 0.1;
  const ChartDomain box = region;
  auto clamp_x = [&](Vec x) {
    for (int a = 0; a < n; ++a) x[a] = std::clamp(x[a], box[a].lo, box[a].hi);
    return x;
  };
  for (int it = 0; it < budget.descent_steps && cur.score >= vanish_tol; ++it) {
    if (res.evaluations + 2 * n + 1 > budget.max_evaluations) break;
    const double h = 1e-5;
    Vec gx(n), gy(n);
    for (int a = 0; a < n; ++a) {
      Vec xp = cur.x;
      xp[a] += h * std::max(1.0, box[a].width());
      xp = clamp_x(xp);
      const double dx = xp[a] - cur.x[a];
      const double sx = dx != 0.0 ? evaluate(xp, cur.y).score : cur.score;
      gx[a] = std::isfinite(sx) && dx != 0.0 ? (sx - cur.score) / dx : 0.0;
      Vec yp = cur.y;
      yp[a] += h;
      const double sy = evaluate(cur.x, yp.normalized()).score;
      gy[a] = std::isfinite(sy) ? (sy - cur.score) / h : 0.0;
    }
    gy -= gy.dot(cur.y) * cur.y;
    const double gn = std::sqrt(gx.squaredNorm() + gy.squaredNorm());
    if (gn == 0.0) break;
    Candidate trial = evaluate(clamp_x(cur.x - step * gx / gn), (cur.y - step * gy / gn).normalized());
    if (trial.score < cur.score) {
      cur = std::move(trial);
      step = std::min(0.5, step * 1.5);
    } else {
      step *= 0.3;
      if (step < 1e-10) break;
    }
  }

  res.best = witness(cur);
  ++res.evaluations;
  res.found = std::abs(res.best.K) < vanish_tol;
  res.mixed_blocks = is_mixed_flag(metric, res.best.flag.y, res.best.flag.V);
  return res;
}

}  // namespace finsler
