#pragma once

// Traveling-salesman sums, regularity diagnostics, the Reifenberg-flatness
// test and the hole-filling surface Sigma.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include "flatness/beta.hpp"
#include "flatness/dyadic.hpp"
#include "flatness/netcubes.hpp"
#include "flatness/parallel.hpp"

namespace flatness {

// ---------------------------------------------------------------------------
// Ball sampling

/// Geometric ladder r = rmax, rmax/2, ... >= rmin with `per_scale` random
/// centers drawn from `centers` at each scale.
inline std::vector<Ball> ladder_balls(std::span<const Point> centers, double rmin, double rmax, int per_scale,
                                      std::uint64_t seed) {
  std::vector<Ball> out;
  if (centers.empty() || per_scale < 1 || !(rmax >= rmin) || !(rmin > 0.0)) return out;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, centers.size() - 1);
  for (double r = rmax; r >= rmin * (1 - 1e-12); r *= 0.5)
    for (int k = 0; k < per_scale; ++k) out.emplace_back(centers[pick(rng)], r);
  return out;
}

/// `count` balls with centers drawn from `centers` and log-uniform radii in [rmin, rmax].
inline std::vector<Ball> random_balls(std::span<const Point> centers, double rmin, double rmax, int count,
                                      std::uint64_t seed) {
  std::vector<Ball> out;
  if (centers.empty() || count < 1 || !(rmax >= rmin) || !(rmin > 0.0)) return out;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, centers.size() - 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < count; ++k) {
    const Point& c = centers[pick(rng)];
    out.emplace_back(c, rmin * std::pow(rmax / rmin, u(rng)));
  }
  return out;
}

struct ScaleStat {
  double radius = 0.0;
  double min = std::numeric_limits<double>::infinity();
  double max = 0.0;
};

struct RegularityReport {
  double lower = std::numeric_limits<double>::infinity();  ///< min of measure / r^d
  double upper = 0.0;                                       ///< max of measure / r^d
  Ball worst_lower;
  Ball worst_upper;
  std::vector<double> ratios;    ///< per ball, in input order
  std::vector<ScaleStat> scales; ///< by distinct radius, decreasing
  double quotient() const { return lower > 0.0 ? upper / lower : std::numeric_limits<double>::infinity(); }
};

namespace tst_detail {

inline RegularityReport summarize(const std::vector<Ball>& balls, std::vector<double> ratios) {
  RegularityReport rep;
  std::map<double, ScaleStat, std::greater<>> by_radius;
  for (std::size_t i = 0; i < balls.size(); ++i) {
    const double v = ratios[i];
    if (v < rep.lower) {
      rep.lower = v;
      rep.worst_lower = balls[i];
    }
    if (v > rep.upper) {
      rep.upper = v;
      rep.worst_upper = balls[i];
    }
    auto& s = by_radius[balls[i].radius];
    s.radius = balls[i].radius;
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
  }
  for (const auto& [r, s] : by_radius) rep.scales.push_back(s);
  rep.ratios = std::move(ratios);
  return rep;
}

}  // namespace tst_detail

/// Content quotient H^d_inf(E ∩ B) / r^d over the given balls.
inline RegularityReport content_regularity(const SampledSet& E, int d, const std::vector<Ball>& balls,
                                           unsigned threads = 1) {
  E.validate();
  const int floor = default_floor_level(E.h);
  const KdTree index(E.points);
  std::vector<double> ratios(balls.size());
  parallel_for(balls.size(), threads, [&](std::size_t i) {
    std::vector<Point> local;
    for (auto k : index.radius(balls[i].center, balls[i].radius)) local.push_back(E.points[k]);
    ratios[i] = dyadic_content(local, d, floor) / std::pow(balls[i].radius, d);
  });
  return tst_detail::summarize(balls, std::move(ratios));
}

/// Lower content regularity: infimum over sampled (x, r) in E x [8h, diam] of
/// H^d_inf(E ∩ B(x,r)) / r^d, `trials` centers per dyadic scale.
inline RegularityReport lower_regularity_check(const SampledSet& E, int d, int trials = 64, std::uint64_t seed = 0,
                                               unsigned threads = 1) {
  E.validate();
  if (trials < 1) throw UsageError("trials must be >= 1");
  const double diam = diameter(E.points);
  const double rmin = kResolutionFloor * E.h;
  if (diam < rmin) throw ResolutionError("set diameter below the resolution floor 8h");
  return content_regularity(E, d, ladder_balls(E.points, rmin, diam, trials, seed), threads);
}

/// Two-sided H^d(S ∩ B) / r^d over the given balls, by face quadrature.
inline RegularityReport ahlfors_check(const SkeletonSet& S, const std::vector<Ball>& balls, unsigned threads = 1) {
  std::vector<double> ratios(balls.size());
  parallel_for(balls.size(), threads, [&](std::size_t i) {
    const double r = balls[i].radius;
    ratios[i] = skeleton_measure_in_ball(S, balls[i], r / 64.0) / std::pow(r, S.d());
  });
  return tst_detail::summarize(balls, std::move(ratios));
}

/// Ladder version: centers from a sample of S at spacing rmin/4.
inline RegularityReport ahlfors_check(const SkeletonSet& S, double rmin, double rmax, int trials = 64,
                                      std::uint64_t seed = 0, unsigned threads = 1) {
  if (trials < 1) throw UsageError("trials must be >= 1");
  const auto sample = skeleton_sample(S, rmin / 4.0);
  return ahlfors_check(S, ladder_balls(sample.points, rmin, rmax, trials, seed), threads);
}

/// For sampled sets H^d is replaced by dyadic content.
inline RegularityReport ahlfors_check(const SampledSet& E, int d, int trials = 64, std::uint64_t seed = 0,
                                      unsigned threads = 1) {
  return lower_regularity_check(E, d, trials, seed, threads);
}

// ---------------------------------------------------------------------------
// Traveling-salesman sums

struct TstReport {
  std::size_t region = 0;
  int d = 1;
  double diam_term = 0.0;      ///< l(R)^d
  double set_diam = 0.0;       ///< diam(E ∩ R)
  double beta_sum = 0.0;       ///< sum of beta^{d,p}(C0 Q)^2 l(Q)^d over Q in R
  double beta_inf_sum = 0.0;   ///< same with beta_inf
  double bwgl_sum = 0.0;       ///< sum of l(Q)^d over BWGL-bad Q in R
  double measure_est = 0.0;    ///< dyadic content of E ∩ R
  std::size_t cubes = 0;
  std::size_t skipped = 0;     ///< below the resolution floor
  std::size_t bwgl_bad = 0;

  /// (measure + BWGL) / (l(R)^d + beta sum)
  double forward_ratio() const { return (measure_est + bwgl_sum) / (diam_term + beta_sum); }
  double inverse_ratio() const { return (diam_term + beta_sum) / (measure_est + bwgl_sum); }
};

/// Exact sums over the subtree of R. `records` is indexed by cube id.
inline TstReport tst_sums(const CubeTree& tree, const SampledSet& E, std::span<const BetaRecord> records,
                          std::size_t R, int d) {
  if (R >= tree.size()) throw UsageError("region id out of range");
  const auto ids = tree.descendants(R);
  std::vector<std::size_t> gaps;
  for (auto id : ids)
    if (id >= records.size() || records[id].cube_id != id) gaps.push_back(id);
  if (!gaps.empty()) {
    std::string msg = "tst_sums: missing beta records for cubes";
    for (std::size_t i = 0; i < gaps.size() && i < 20; ++i) msg += " " + std::to_string(gaps[i]);
    if (gaps.size() > 20) msg += " ... (" + std::to_string(gaps.size()) + " total)";
    throw UsageError(msg);
  }
  TstReport rep;
  rep.region = R;
  rep.d = d;
  rep.diam_term = std::pow(tree.cube(R).side, d);
  for (auto id : ids) {
    const auto& rec = records[id];
    ++rep.cubes;
    if (rec.skipped) {
      ++rep.skipped;
      continue;
    }
    const double ld = std::pow(rec.side, d);
    rep.beta_sum += rec.beta_dp * rec.beta_dp * ld;
    rep.beta_inf_sum += rec.beta_inf * rec.beta_inf * ld;
    if (rec.is_bwgl_bad) {
      rep.bwgl_sum += ld;
      ++rep.bwgl_bad;
    }
  }
  std::vector<Point> pts;
  for (auto s : tree.cube(R).members) pts.push_back(E.points[s]);
  rep.set_diam = diameter(pts);
  rep.measure_est = dyadic_content(pts, d, default_floor_level(E.h));
  return rep;
}

// ---------------------------------------------------------------------------
// Reifenberg flatness as the computable sufficient condition for TC

struct ReifenbergConfig {
  int d = 1;
  double eps = 0.1;
  int per_scale = 64;
  std::vector<double> radii;  ///< empty: ladder from diam/2 down to max(8h, h/eps)
  SearchBudget budget;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct ScaleMargin {
  double radius = 0.0;
  double worst = 0.0;   ///< max over centers of inf_L d_{x,r}(E, L)
  double margin = 0.0;  ///< eps - worst
  Ball witness;
};

struct ReifenbergReport {
  bool pass = true;
  double worst = 0.0;
  Ball witness;
  std::vector<ScaleMargin> scales;  ///< decreasing radius
};

inline ReifenbergReport reifenberg_tc_test(const SampledSet& E, const ReifenbergConfig& cfg) {
  E.validate();
  if (!(cfg.eps > 0.0 && cfg.eps < 1.0)) throw UsageError("eps must lie in (0,1)");
  if (cfg.d < 1 || cfg.d >= E.n) throw UsageError("d must satisfy 0 < d < n");
  if (cfg.per_scale < 1) throw UsageError("per_scale must be >= 1");
  const double rmin = kResolutionFloor * E.h;
  std::vector<double> radii = cfg.radii;
  // Below h/eps the sampling gap h/2 alone exceeds eps r/2.
  if (radii.empty())
    for (double r = diameter(E.points) / 2.0; r >= std::max(rmin, E.h / cfg.eps); r *= 0.5) radii.push_back(r);
  for (double r : radii)
    if (r < rmin) throw ResolutionError("reifenberg_tc_test: radius below the resolution floor 8h");
  std::sort(radii.begin(), radii.end(), std::greater<>());

  const BetaEngine engine(E);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, E.size() - 1);
  std::vector<Ball> balls;
  for (double r : radii)
    for (int k = 0; k < cfg.per_scale; ++k) balls.emplace_back(E.points[pick(rng)], r);
  std::vector<double> val(balls.size());
  parallel_for(balls.size(), cfg.threads, [&](std::size_t i) {
    val[i] = engine.bwgl(balls[i], cfg.d, cfg.budget, cube_seed(cfg.seed, i)).value;
  });

  ReifenbergReport rep;
  std::size_t i = 0;
  for (double r : radii) {
    ScaleMargin s;
    s.radius = r;
    s.witness = balls[i];
    for (int k = 0; k < cfg.per_scale; ++k, ++i)
      if (val[i] > s.worst) {
        s.worst = val[i];
        s.witness = balls[i];
      }
    s.margin = cfg.eps - s.worst;
    if (s.worst >= rep.worst) {
      rep.worst = s.worst;
      rep.witness = s.witness;
    }
    rep.pass = rep.pass && s.worst < cfg.eps;
    rep.scales.push_back(s);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Hole-filling surface Sigma = Q0 ∪ (union over BWGL-bad Q of E_Q)

struct SigmaSurface {
  std::size_t q0 = 0;
  int n = 0;
  int d = 1;
  double h = 0.0;
  double kappa = 0.25;
  double eps = 0.05;
  double A = 2.0;
  std::vector<std::size_t> bad;               ///< BWGL-bad cube ids inside Q0
  std::vector<int> k;                         ///< k(Q) per bad cube
  std::vector<std::vector<DyadicCube>> S;     ///< S(Q) per bad cube
  SkeletonSet skeleton;                       ///< union of E_Q
  std::vector<Point> base;                    ///< samples of Q0

  bool flat() const { return bad.empty(); }

  /// Base samples not inside a closed cube of any S(Q); the rest is covered
  /// by the skeleton part.
  std::vector<Point> uncovered_base() const {
    if (bad.empty()) return base;
    std::unordered_set<DyadicCube, DyadicCubeHash> cells;
    std::vector<int> levels;
    for (const auto& fam : S)
      for (const auto& q : fam) {
        cells.insert(q);
        levels.push_back(q.level);
      }
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    std::vector<Point> out;
    for (const auto& p : base) {
      bool covered = false;
      for (int j : levels) {
        // Closed cubes: check the cube and its neighbours sharing the point.
        const DyadicCube c = DyadicCube::containing(p, j);
        for (unsigned m = 0; m < (1u << n) && !covered; ++m) {
          DyadicCube q = c;
          bool ok = true;
          for (int i = 0; i < n; ++i) {
            if (!((m >> i) & 1u)) continue;
            const double lo = std::ldexp(static_cast<double>(c.corner[static_cast<std::size_t>(i)]), -j);
            if (p[i] != lo) ok = false;
            --q.corner[static_cast<std::size_t>(i)];
          }
          if (ok && cells.count(q)) covered = true;
        }
        if (covered) break;
      }
      if (!covered) out.push_back(p);
    }
    return out;
  }

  /// H^d(Sigma): skeleton measure plus dyadic content of the uncovered base.
  double measure() const {
    const double skel = skeleton.empty() ? 0.0 : skeleton_measure(skeleton);
    const auto rest = uncovered_base();
    return skel + (rest.empty() ? 0.0 : dyadic_content(rest, d, default_floor_level(h)));
  }

  /// A sample of Sigma at spacing h: skeleton points plus all base samples.
  SampledSet sample() const {
    std::vector<Point> pts = base;
    if (!skeleton.empty()) {
      auto sk = skeleton_sample(skeleton, h);
      pts.insert(pts.end(), sk.points.begin(), sk.points.end());
    }
    return SampledSet(std::move(pts), h, n, d);
  }
};

/// k(Q) with kappa l(Q) / 2 < 2^{-k} <= kappa l(Q).
inline int sigma_level(double side, double kappa) {
  return static_cast<int>(std::ceil(-std::log2(kappa * side) - 1e-12));
}

/// Builds Sigma from BWGL flags already present in `records` (indexed by cube id).
inline SigmaSurface build_sigma(const CubeTree& tree, const SampledSet& E, std::size_t Q0,
                                std::span<const BetaRecord> records, const BetaConfig& cfg, double kappa) {
  if (!(kappa > 0.0 && kappa < 1.0)) throw UsageError("kappa must lie in (0,1)");
  if (std::abs(std::ldexp(1.0, static_cast<int>(std::lround(std::log2(kappa)))) - kappa) > 1e-15)
    throw UsageError("kappa must be a power of 2");
  if (!cfg.compute_bwgl) throw UsageError("build_sigma needs records with BWGL flags");
  SigmaSurface sg;
  sg.q0 = Q0;
  sg.n = E.n;
  sg.d = cfg.d;
  sg.h = E.h;
  sg.kappa = kappa;
  sg.eps = cfg.eps;
  sg.A = cfg.A;
  sg.skeleton = SkeletonSet(E.n, cfg.d);
  for (auto s : tree.cube(Q0).members) sg.base.push_back(E.points[s]);
  for (auto id : tree.descendants(Q0)) {
    if (id >= records.size() || records[id].cube_id != id) throw UsageError("build_sigma: missing beta record");
    const auto& rec = records[id];
    if (rec.skipped || !rec.is_bwgl_bad) continue;
    const int k = sigma_level(rec.side, kappa);
    std::vector<Point> pts;
    for (auto s : tree.cube(id).members) pts.push_back(E.points[s]);
    auto fam = cubes_meeting(pts, k);
    for (const auto& q : fam) sg.skeleton.insert_cube_skeleton(q);
    sg.bad.push_back(id);
    sg.k.push_back(k);
    sg.S.push_back(std::move(fam));
  }
  return sg;
}

struct SigmaComparability {
  double measure = 0.0;     ///< H^d(Sigma)
  double bound = 0.0;       ///< measure_est(Q0) + BWGL sum of E in Q0
  double beta_term = 0.0;   ///< l(Q0)^d + content-beta sum of E over Q0
  /// Optional re-run of the beta pipeline on a sample of Sigma.
  bool rerun = false;
  double sigma_beta_term = 0.0;
  std::size_t sigma_points = 0;
  int sigma_depth = 0;

  /// (l(Q0)^d + beta sum) / H^d(Sigma) and its inverse.
  double forward_ratio() const { return beta_term / measure; }
  double inverse_ratio() const { return measure / beta_term; }
  /// H^d(Sigma) / (measure_est(Q0) + BWGL(Q0)).
  double measure_ratio() const { return measure / bound; }
  /// (l^d + beta sum of Sigma) / H^d(Sigma).
  double sigma_ratio() const { return sigma_beta_term / measure; }
};

/// Compares H^d(Sigma) with the TST sums of E over Q0. With `rerun_depth` >= 0
/// the beta pipeline is also run on a sample of Sigma, with a cube tree of at
/// most that depth.
inline SigmaComparability sigma_comparability(const SigmaSurface& sg, const TstReport& q0_report, const BetaConfig& cfg,
                                              double lambda = CubeTree::kDefaultLambda, int rerun_depth = -1,
                                              unsigned threads = 1) {
  SigmaComparability out;
  out.measure = sg.measure();
  out.bound = q0_report.measure_est + q0_report.bwgl_sum;
  out.beta_term = q0_report.diam_term + q0_report.beta_sum;
  if (rerun_depth < 0) return out;
  const SampledSet S = sg.sample();
  out.rerun = true;
  out.sigma_points = S.size();
  out.sigma_depth = std::min(rerun_depth, CubeTree::max_legal_depth(diameter(S.points), S.h, lambda));
  const CubeTree tree(S, lambda, out.sigma_depth);
  const BetaEngine engine(S);
  BetaConfig c = cfg;
  c.compute_bwgl = false;
  const auto recs = beta_batch(tree, engine, c, threads);
  const auto rep = tst_sums(tree, S, recs, tree.root(), cfg.d);
  out.sigma_beta_term = rep.diam_term + rep.beta_sum;
  return out;
}

}  // namespace flatness
