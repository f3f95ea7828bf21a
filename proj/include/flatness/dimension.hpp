#pragma once

// Uniform non-flatness, net counts on dyadic skeleta, the nested-family
// dimension lower bound and a box-counting estimator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "flatness/beta.hpp"
#include "flatness/dyadic.hpp"
#include "flatness/netcubes.hpp"
#include "flatness/nets.hpp"

namespace flatness {

using Rational = boost::multiprecision::cpp_rational;

// ---------------------------------------------------------------------------
// Wiggliness

struct WigglinessReport {
  std::size_t region = 0;
  double beta0 = std::numeric_limits<double>::infinity();  ///< min content beta over covered cubes
  double beta0_inf = std::numeric_limits<double>::infinity();  ///< same for beta_inf
  std::size_t witness = 0;                                  ///< cube attaining beta0
  std::vector<double> beta_m;     ///< per tree level: sum of beta^2 l^d over D_m(R)
  std::vector<double> side_sum;   ///< per tree level: sum of l^d over covered cubes
  std::size_t covered = 0;
};

inline WigglinessReport wiggliness(const CubeTree& tree, std::span<const BetaRecord> records, std::size_t R, int d) {
  WigglinessReport rep;
  rep.region = R;
  const int base = tree.cube(R).level;
  rep.beta_m.assign(static_cast<std::size_t>(tree.depth() - base + 1), 0.0);
  rep.side_sum.assign(rep.beta_m.size(), 0.0);
  for (auto id : tree.descendants(R)) {
    if (id >= records.size() || records[id].cube_id != id) throw UsageError("wiggliness: missing beta record");
    const auto& rec = records[id];
    if (rec.skipped) continue;
    ++rep.covered;
    const auto m = static_cast<std::size_t>(rec.level - base);
    const double ld = std::pow(rec.side, d);
    rep.beta_m[m] += rec.beta_dp * rec.beta_dp * ld;
    rep.side_sum[m] += ld;
    if (rec.beta_dp < rep.beta0) {
      rep.beta0 = rec.beta_dp;
      rep.witness = id;
    }
    rep.beta0_inf = std::min(rep.beta0_inf, rec.beta_inf);
  }
  if (rep.covered == 0) rep.beta0 = rep.beta0_inf = 0.0;
  return rep;
}

// ---------------------------------------------------------------------------
// Net counts on E_{R,k}

inline constexpr double kDefaultSkeletonFactor = 0.25;

struct NetCount {
  std::size_t card = 0;            ///< Card(A)
  std::vector<Point> net;          ///< the net points z_j
  std::vector<DyadicCube> owner;   ///< level-k cube of a skeleton cube through z_j that meets E ∩ I
  std::size_t skeleton_cubes = 0;  ///< cubes of side c 2^{-k} meeting E ∩ I
};

namespace dimension_detail {

inline int factor_shift(double c) {
  if (!(c > 0.0 && c <= 1.0)) throw UsageError("skeleton factor c must lie in (0, 1]");
  const int s = static_cast<int>(std::lround(-std::log2(c)));
  if (std::abs(std::ldexp(1.0, -s) - c) > 1e-15) throw UsageError("skeleton factor c must be a power of 2");
  return s;
}

}  // namespace dimension_detail

/// Card(A) for a maximal 2^{-k}-separated net of E_{R,k} ∩ I, where E_{R,k}
/// is the union of d-skeleta of the level-(k + log2(1/c)) cubes meeting E ∩ I.
/// `pts` are the samples of E (resolution h).
inline NetCount net_count(std::span<const Point> pts, double h, int d, const DyadicCube& I, int k,
                          double c = kDefaultSkeletonFactor) {
  if (dyadic_side(k) < kResolutionFloor * h)
    throw ResolutionError("net_count: 2^-" + std::to_string(k) + " is below the resolution floor 8h");
  if (k < I.level) throw UsageError("net_count: k must not be coarser than the cube I");
  const int j = k + dimension_detail::factor_shift(c);
  const Box ib = I.box();
  std::vector<Point> inside;
  for (const auto& p : pts)
    if (DyadicCube::containing(p, I.level) == I) inside.push_back(p);
  NetCount out;
  if (inside.empty()) return out;
  SkeletonSet S(I.n, d);
  const auto cubes = cubes_meeting(inside, j);
  out.skeleton_cubes = cubes.size();
  for (const auto& q : cubes) S.insert_cube_skeleton(q);
  const auto sample = skeleton_sample(S, dyadic_side(j) / 4.0);
  std::vector<Point> clipped;
  for (const auto& p : sample.points)
    if (ib.contains(p)) clipped.push_back(p);
  std::unordered_set<DyadicCube, DyadicCubeHash> source(cubes.begin(), cubes.end());
  const double s = dyadic_side(j);
  for (auto i : maximal_net(clipped, dyadic_side(k))) {
    const Point& z = clipped[i];
    const auto base = DyadicCube::containing(z, j);
    // z lies on the closed skeleton of some source cube; search the cubes
    // whose closure holds z (offsets -1 along coordinates on a cell wall).
    std::optional<DyadicCube> src;
    for (unsigned m = 0; m < (1u << I.n) && !src; ++m) {
      DyadicCube q = base;
      bool ok = true;
      for (int a = 0; a < I.n && ok; ++a) {
        if (!((m >> a) & 1u)) continue;
        const auto ia = static_cast<std::size_t>(a);
        if (std::abs(z[a] - static_cast<double>(base.corner[ia]) * s) > 1e-9 * s) ok = false;
        else --q.corner[ia];
      }
      if (ok && source.count(q)) src = q;
    }
    if (!src) throw InvariantViolation("net_count: net point off the skeleton of E_{R,k}");
    out.net.push_back(z);
    out.owner.push_back(src->ancestor(k));
  }
  out.card = out.net.size();
  return out;
}

inline NetCount net_count(const SampledSet& E, int d, const DyadicCube& I, int k, double c = kDefaultSkeletonFactor) {
  return net_count(E.points, E.h, d, I, k, c);
}

// ---------------------------------------------------------------------------
// Nested families and the dimension bound

struct NestedLevel {
  int level = 0;                   ///< dyadic level of the cubes of S_j
  std::vector<DyadicCube> cubes;   ///< S_j, sorted
  std::vector<std::size_t> parent; ///< index into the previous S_{j-1}
  std::vector<Rational> mass;      ///< mu(J)
  std::size_t min_card = 0;        ///< min over I in S_{j-1} of Card(A(I))
  std::size_t min_children = 0;    ///< min over I in S_{j-1} of #S(I)
};

struct DimensionEstimate {
  double beta0 = 0.0;
  int kappa = 0;
  int kappa_wanted = 0;       ///< ceil(1/beta0^2) before clamping
  bool partial = false;       ///< kappa or the family depth was clamped by resolution
  int top_level = 0;          ///< N0
  std::vector<NestedLevel> families;
  double implied_exponent = 0.0;  ///< log2(min #S(I)) / kappa over all steps
  double box_dim = 0.0;
  // Frostman bookkeeping
  bool mass_conserved = true;     ///< sum over S_j of mu = 1 exactly, every j
  bool nested = true;             ///< each J in S_j lies in its parent
  bool meets_region = true;       ///< each J meets the samples of R
  bool mass_bound = true;         ///< mu(J) <= (min #S)^{-j}
};

struct BoxDimension {
  double slope = 0.0;
  std::vector<int> levels;
  std::vector<std::size_t> counts;
};

/// Least-squares slope of log2 #(occupied level-j cubes) against j over
/// [jmin, jmax].
inline BoxDimension box_dimension(std::span<const Point> pts, int jmin, int jmax) {
  if (jmax <= jmin) throw UsageError("box_dimension: need jmin < jmax");
  BoxDimension out;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int j = jmin; j <= jmax; ++j) {
    const auto n = cubes_meeting(pts, j).size();
    out.levels.push_back(j);
    out.counts.push_back(n);
    const double x = j, y = std::log2(static_cast<double>(n));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double m = static_cast<double>(out.levels.size());
  out.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  return out;
}

/// Default range: from two levels below the set's own scale down to cubes of
/// side 8h.
inline BoxDimension box_dimension(const SampledSet& E) {
  E.validate();
  const double diam = diameter(E.points);
  if (!(diam > 0.0)) throw UsageError("box_dimension: set has zero diameter");
  const int jmin = static_cast<int>(std::floor(-std::log2(diam))) + 2;
  const int jmax = default_floor_level(E.h);
  if (jmax <= jmin) throw ResolutionError("box_dimension: resolution leaves fewer than two scales");
  return box_dimension(E.points, jmin, jmax);
}

/// Runs the nested-family construction below the dyadic cube of level N0
/// containing the samples of R. kappa = ceil(1/beta0^2) unless
/// `kappa_override` > 0, clamped so that at least one step fits above 8h.
inline DimensionEstimate bj_dimension_bound(const SampledSet& E, const CubeTree& tree,
                                            std::span<const BetaRecord> records, std::size_t R, int d,
                                            int kappa_override = 0, double c = kDefaultSkeletonFactor) {
  const auto wig = wiggliness(tree, records, R, d);
  if (!(wig.beta0 > 0.0)) throw UsageError("bj_dimension_bound: set is not uniformly non-flat (beta0 = 0)");
  DimensionEstimate est;
  est.beta0 = wig.beta0;
  est.kappa_wanted = kappa_override > 0 ? kappa_override : static_cast<int>(std::ceil(1.0 / (wig.beta0 * wig.beta0)));

  std::vector<Point> region;
  for (auto s : tree.cube(R).members) region.push_back(E.points[s]);
  const int kmax = default_floor_level(E.h);
  // N0: finest level whose cube still contains every sample of R, if any;
  // otherwise the level comparable to l(R).
  int N0 = static_cast<int>(std::floor(-std::log2(tree.cube(R).side)));
  while (N0 < kmax && cubes_meeting(region, N0 + 1).size() == 1) ++N0;
  est.top_level = N0;
  est.kappa = std::min(est.kappa_wanted, kmax - N0);
  if (est.kappa < est.kappa_wanted) est.partial = true;
  if (est.kappa < 1) throw ResolutionError("bj_dimension_bound: no refinement step fits above the resolution floor");

  const auto tops = cubes_meeting(region, N0);
  std::vector<DyadicCube> prev = tops;
  std::vector<Rational> prev_mass(prev.size(), Rational(1, static_cast<long>(prev.size())));
  std::size_t global_min = std::numeric_limits<std::size_t>::max();
  for (int j = 1; N0 + j * est.kappa <= kmax; ++j) {
    NestedLevel L;
    L.level = N0 + j * est.kappa;
    L.min_card = std::numeric_limits<std::size_t>::max();
    L.min_children = std::numeric_limits<std::size_t>::max();
    std::vector<std::pair<DyadicCube, std::size_t>> found;
    for (std::size_t i = 0; i < prev.size(); ++i) {
      const auto nc = net_count(region, E.h, d, prev[i], L.level, c);
      std::vector<DyadicCube> kids = nc.owner;
      std::sort(kids.begin(), kids.end());
      kids.erase(std::unique(kids.begin(), kids.end()), kids.end());
      L.min_card = std::min(L.min_card, nc.card);
      L.min_children = std::min(L.min_children, kids.size());
      for (const auto& q : kids) {
        found.push_back({q, i});
        L.mass.push_back(prev_mass[i] / static_cast<long>(kids.size()));
      }
    }
    for (const auto& [q, p] : found) {
      L.cubes.push_back(q);
      L.parent.push_back(p);
    }
    if (L.cubes.empty()) break;
    global_min = std::min(global_min, L.min_children);
    Rational total = 0;
    for (const auto& m : L.mass) total += m;
    if (total != 1) est.mass_conserved = false;
    for (std::size_t t = 0; t < L.cubes.size(); ++t) {
      if (!L.cubes[t].inside(prev[L.parent[t]])) est.nested = false;
      bool meets = false;
      const Box b = L.cubes[t].box();
      for (const auto& p : region)
        if (b.contains(p)) {
          meets = true;
          break;
        }
      if (!meets) est.meets_region = false;
    }
    prev = L.cubes;
    prev_mass = L.mass;
    est.families.push_back(std::move(L));
  }
  if (est.families.empty()) {
    est.partial = true;
  } else {
    est.implied_exponent = std::log2(static_cast<double>(global_min)) / est.kappa;
    // mu(J) is a product of 1/#S(I) along the chain, hence at most min^{-j}.
    for (std::size_t j = 0; j < est.families.size(); ++j) {
      Rational bound = 1;
      for (std::size_t s = 0; s <= j; ++s) bound /= static_cast<long>(global_min);
      for (const auto& m : est.families[j].mass)
        if (m > bound) est.mass_bound = false;
    }
  }
  est.box_dim = box_dimension(E).slope;
  return est;
}

}  // namespace flatness
