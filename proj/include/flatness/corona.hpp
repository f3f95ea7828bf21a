#pragma once

// Frostman Bad cubes, stopping-time forests, smoothed distance, Whitney
// families, skeleton approximants E_R / E_rho and a Federer-Fleming
// projection of sample points onto them.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <random>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "flatness/beta.hpp"
#include "flatness/dyadic.hpp"
#include "flatness/netcubes.hpp"

namespace flatness {

// ---------------------------------------------------------------------------
// Frostman measure and Bad(m)

struct FrostmanState {
  int d = 0;
  int m = 0;    ///< deepest level
  int top = 0;  ///< coarsest level reached by the passes
  /// mu[k - top]: the masses of level-k cubes under mu_m^k, sorted by cube.
  std::vector<std::vector<std::pair<DyadicCube, double>>> mu;
  std::vector<DyadicCube> bad;     ///< sorted
  std::vector<double> total_mass;  ///< total after the seed and after each pass (m, m-1, ..., top)
  double max_density = 0.0;        ///< max over cubes above level m of mu/l^d

  bool empty() const { return mu.empty(); }
  bool is_bad(const DyadicCube& q) const { return std::binary_search(bad.begin(), bad.end(), q); }

  double packing_sum() const {
    double s = 0.0;
    for (const auto& q : bad) s += std::pow(q.side(), d);
    return s;
  }

  const std::vector<std::pair<DyadicCube, double>>& level(int k) const {
    return mu[static_cast<std::size_t>(k - top)];
  }
};

inline FrostmanState frostman_bad_cubes(std::span<const Point> pts, int d, int m, int top) {
  FrostmanState st;
  st.d = d;
  st.m = m;
  st.top = std::min(top, m);
  if (pts.empty()) return st;
  const auto levels = static_cast<std::size_t>(m - st.top + 1);
  st.mu.assign(levels, {});
  auto& seed = st.mu[levels - 1];
  const double seed_mass = std::pow(dyadic_side(m), d);
  for (const auto& q : cubes_meeting(pts, m)) {
    seed.push_back({q, seed_mass});
    st.bad.push_back(q);
  }
  st.total_mass.push_back(seed_mass * static_cast<double>(seed.size()));
  for (int k = m; k > st.top; --k) {
    const auto& fine = st.mu[static_cast<std::size_t>(k - st.top)];
    std::map<DyadicCube, double> up;
    for (const auto& [q, w] : fine) up[q.parent()] += w;
    auto& coarse = st.mu[static_cast<std::size_t>(k - 1 - st.top)];
    double total = 0.0;
    for (auto [J, w] : up) {
      const double cap = std::pow(J.side(), d);
      if (w > 2.0 * cap) {
        st.bad.push_back(J);
        w = cap;
      }
      st.max_density = std::max(st.max_density, w / cap);
      coarse.push_back({J, w});
      total += w;
    }
    st.total_mass.push_back(total);
  }
  std::sort(st.bad.begin(), st.bad.end());
  return st;
}

/// Coarsest level: 0, or coarser if the set does not fit in a unit cube.
inline FrostmanState frostman_bad_cubes(const SampledSet& E, int d, int m) {
  if (E.empty()) return FrostmanState{d, m, m, {}, {}, {}, 0.0};
  if (dyadic_side(m) < kResolutionFloor * E.h)
    throw ResolutionError("frostman: level " + std::to_string(m) + " is finer than 8h; deepest legal level is " +
                          std::to_string(default_floor_level(E.h)));
  const double diam = diameter(E.points);
  int top = 0;
  if (diam > 1.0) top = static_cast<int>(std::floor(-std::log2(diam)));
  return frostman_bad_cubes(E.points, d, m, std::min(top, m));
}

/// Dyadic level comparable to the net cubes at depth k0: 2^{-m} >= l_{k0} > 2^{-m-1}.
inline int frostman_level_for(const CubeTree& tree, int k0) {
  const double side = 5.0 * std::pow(tree.lambda(), k0) * tree.diam();
  return static_cast<int>(std::floor(-std::log2(side)));
}

// ---------------------------------------------------------------------------
// Stopping-time forest

struct StoppingTree {
  std::size_t top = 0;
  int generation = 0;
  std::vector<std::size_t> cubes;        ///< Tree(R), sorted
  std::vector<std::size_t> stop;         ///< minimal cubes of Tree(R)
  std::vector<std::size_t> neighbors;    ///< N(R)
  std::vector<std::size_t> forest;       ///< Forest(R), sorted
  std::vector<std::size_t> forest_stop;  ///< Stop(R): minimal cubes of Forest(R)
  std::vector<std::size_t> next;         ///< Next(R)
};

class StoppingForest {
 public:
  double M = 4.0;
  double C0 = 2.0;
  int k0 = 0;
  std::vector<StoppingTree> trees;
  std::vector<std::vector<std::size_t>> generations;  ///< tree indices per Top generation
  std::vector<std::size_t> tree_of;                   ///< cube id -> tree index
  std::vector<char> stop_condition;                   ///< per cube: meets a comparable Bad cube

  std::vector<std::size_t> tops() const {
    std::vector<std::size_t> out;
    for (const auto& t : trees) out.push_back(t.top);
    return out;
  }

  double top_packing(const CubeTree& ct, int d) const {
    double s = 0.0;
    for (const auto& t : trees) s += std::pow(ct.cube(t.top).side, d);
    return s;
  }

  /// Every cube of D(k0) lies in exactly one tree.
  bool partitions(const CubeTree& ct) const {
    std::vector<int> seen(ct.size(), 0);
    for (const auto& t : trees)
      for (auto id : t.cubes) ++seen[id];
    for (const auto& q : ct.cubes())
      if (q.level <= k0 && seen[q.id] != 1) return false;
    return true;
  }

  /// Coherence: contains its top, parent-closed below the top (hence
  /// sandwich-closed) and sibling-complete.
  bool coherent(const CubeTree& ct, std::size_t t) const {
    const auto& tr = trees[t];
    auto in = [&](std::size_t id) { return std::binary_search(tr.cubes.begin(), tr.cubes.end(), id); };
    if (!in(tr.top)) return false;
    for (auto id : tr.cubes) {
      if (id == tr.top) continue;
      const auto p = ct.cube(id).parent;
      if (p == KdTree::npos || !in(p)) return false;
      for (auto s : ct.children(p))
        if (!in(s)) return false;
    }
    return true;
  }
};

namespace corona_detail {

/// Calls f on every dyadic cube of the given level meeting the open ball.
template <class F>
void for_cubes_meeting_ball(const Ball& B, int level, int n, F&& f) {
  const double s = dyadic_side(level);
  std::array<std::int64_t, kMaxDim> lo{}, hi{};
  for (int i = 0; i < n; ++i) {
    lo[static_cast<std::size_t>(i)] = static_cast<std::int64_t>(std::floor((B.center[i] - B.radius) / s));
    hi[static_cast<std::size_t>(i)] = static_cast<std::int64_t>(std::floor((B.center[i] + B.radius) / s));
  }
  DyadicCube q;
  q.level = level;
  q.n = n;
  q.corner = lo;
  while (true) {
    if (intersects(q.box(), B)) f(q);
    int i = 0;
    while (i < n && ++q.corner[static_cast<std::size_t>(i)] > hi[static_cast<std::size_t>(i)]) {
      q.corner[static_cast<std::size_t>(i)] = lo[static_cast<std::size_t>(i)];
      ++i;
    }
    if (i >= n) break;
  }
}

inline double cube_count_in_ball(const Ball& B, int level, int n) {
  return std::pow(2.0 * B.radius / dyadic_side(level) + 2.0, n);
}

}  // namespace corona_detail

/// Stopping-time decomposition of D(k0). A cube stops its parent when M B_Q
/// meets a Bad cube I with lambda l(I) <= l(Q) <= l(I).
inline StoppingForest build_forest(const CubeTree& ct, const SampledSet& E, const FrostmanState& bad, double M,
                                   double C0, int k0) {
  if (k0 < 0 || k0 > ct.depth()) throw UsageError("forest depth must lie in [0, tree depth]");
  if (!(M > 1.0)) throw UsageError("M must be > 1");
  if (!(C0 >= 1.0)) throw UsageError("C0 must be >= 1");
  StoppingForest F;
  F.M = M;
  F.C0 = C0;
  F.k0 = k0;
  const int n = ct.ambient_dim();
  const double lambda = ct.lambda();

  std::unordered_set<DyadicCube, DyadicCubeHash> badset(bad.bad.begin(), bad.bad.end());
  std::map<int, std::vector<DyadicCube>> bad_by_level;
  for (const auto& q : bad.bad) bad_by_level[q.level].push_back(q);

  F.stop_condition.assign(ct.size(), 0);
  for (const auto& q : ct.cubes()) {
    if (q.level > k0 || q.side <= 0.0) continue;
    const Ball MB(q.center, M * q.side);
    // Levels j with lambda 2^{-j} <= l(Q) <= 2^{-j}.
    const int jlo = static_cast<int>(std::ceil(-std::log2(q.side / lambda) - 1e-12));
    const int jhi = static_cast<int>(std::floor(-std::log2(q.side) + 1e-12));
    bool hit = false;
    for (int j = jlo; j <= jhi && !hit; ++j) {
      const double s = dyadic_side(j);
      if (lambda * s > q.side * (1 + 1e-12) || q.side > s * (1 + 1e-12)) continue;
      auto it = bad_by_level.find(j);
      if (it == bad_by_level.end()) continue;
      if (static_cast<double>(it->second.size()) < corona_detail::cube_count_in_ball(MB, j, n)) {
        for (const auto& I : it->second)
          if (intersects(I.box(), MB)) {
            hit = true;
            break;
          }
      } else {
        corona_detail::for_cubes_meeting_ball(MB, j, n, [&](const DyadicCube& I) {
          if (!hit && badset.count(I)) hit = true;
        });
      }
    }
    F.stop_condition[q.id] = hit ? 1 : 0;
  }

  // One stopping-time run from a cube, memoized: (tree cubes, minimal cubes).
  std::unordered_map<std::size_t, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> runs;
  auto run = [&](std::size_t start) -> const std::pair<std::vector<std::size_t>, std::vector<std::size_t>>& {
    auto it = runs.find(start);
    if (it != runs.end()) return it->second;
    std::vector<std::size_t> tree{start}, stop, frontier{start};
    while (!frontier.empty()) {
      std::vector<std::size_t> nxt;
      for (auto P : frontier) {
        const auto& kids = ct.children(P);
        bool stopped = ct.cube(P).level >= k0 || kids.empty();
        for (auto c : kids)
          if (F.stop_condition[c]) stopped = true;
        if (stopped) {
          stop.push_back(P);
          continue;
        }
        for (auto c : kids) {
          tree.push_back(c);
          nxt.push_back(c);
        }
      }
      frontier = std::move(nxt);
    }
    std::sort(tree.begin(), tree.end());
    std::sort(stop.begin(), stop.end());
    return runs.emplace(start, std::make_pair(std::move(tree), std::move(stop))).first->second;
  };

  F.tree_of.assign(ct.size(), KdTree::npos);
  std::vector<std::size_t> current{ct.root()};
  int gen = 0;
  while (!current.empty()) {
    std::sort(current.begin(), current.end());
    std::vector<std::size_t> ids;
    std::vector<std::size_t> upcoming;
    for (auto R : current) {
      StoppingTree t;
      t.top = R;
      t.generation = gen;
      const auto& r = run(R);
      t.cubes = r.first;
      t.stop = r.second;
      // N(R): same-generation cubes with a member inside 2 C0 B_R.
      const Ball nb = ct.ball(R, 2.0 * C0);
      for (auto id : ct.level(ct.cube(R).level)) {
        const auto& q = ct.cube(id);
        const double dc = dist(q.center, nb.center);
        if (dc >= nb.radius + q.side) continue;  // outer containment
        bool meets = dc < nb.radius;
        for (auto s : q.members) {
          if (meets) break;
          meets = nb.contains(E.points[s]);
        }
        if (meets) t.neighbors.push_back(id);
      }
      std::vector<std::size_t> forest;
      for (auto Q : t.neighbors) {
        const auto& rq = run(Q);
        forest.insert(forest.end(), rq.first.begin(), rq.first.end());
        t.forest_stop.insert(t.forest_stop.end(), rq.second.begin(), rq.second.end());
      }
      std::sort(forest.begin(), forest.end());
      forest.erase(std::unique(forest.begin(), forest.end()), forest.end());
      std::sort(t.forest_stop.begin(), t.forest_stop.end());
      t.forest_stop.erase(std::unique(t.forest_stop.begin(), t.forest_stop.end()), t.forest_stop.end());
      t.forest = std::move(forest);
      for (auto S : t.stop)
        for (auto c : ct.children(S))
          if (ct.cube(c).level <= k0) t.next.push_back(c);
      std::sort(t.next.begin(), t.next.end());
      upcoming.insert(upcoming.end(), t.next.begin(), t.next.end());
      for (auto id : t.cubes) F.tree_of[id] = F.trees.size();
      ids.push_back(F.trees.size());
      F.trees.push_back(std::move(t));
    }
    F.generations.push_back(std::move(ids));
    current = std::move(upcoming);
    ++gen;
  }
  return F;
}

// ---------------------------------------------------------------------------
// Smoothed distance d_R(x) = min over S in Stop(R) of l(S) + dist(x, S)

class SmoothedDistance {
 public:
  SmoothedDistance(const CubeTree& ct, const SampledSet& E, const StoppingForest& F, std::size_t t) {
    const auto& tr = F.trees.at(t);
    fallback_ = ct.cube(tr.top).side;
    std::vector<Point> pts;
    std::vector<double> w;
    for (auto S : tr.forest_stop) {
      min_side_ = std::min(min_side_, ct.cube(S).side);
      for (auto s : ct.cube(S).members) {
        pts.push_back(E.points[s]);
        w.push_back(ct.cube(S).side);
      }
    }
    if (!pts.empty()) {
      index_ = KdTree(pts);
      index_.set_weights(std::move(w));
    }
  }

  /// With an empty Stop(R) the value is l(R).
  double operator()(const Point& x) const { return index_.empty() ? fallback_ : index_.weighted_nearest(x); }
  /// Infimum over a box.
  double operator()(const Box& b) const { return index_.empty() ? fallback_ : index_.weighted_nearest(b); }
  double min_stop_side() const { return min_side_; }

 private:
  KdTree index_;
  double fallback_ = 0.0;
  double min_side_ = std::numeric_limits<double>::infinity();
};

inline double smoothed_distance(const CubeTree& ct, const SampledSet& E, const StoppingForest& F, std::size_t t,
                                const Point& x) {
  return SmoothedDistance(ct, E, F, t)(x);
}

// ---------------------------------------------------------------------------
// Whitney family C_R

inline constexpr double kDefaultTau = 1.0 / 8.0;

struct WhitneyFamily {
  std::size_t tree = 0;  ///< index into StoppingForest::trees
  std::size_t top = 0;   ///< cube id of R
  double tau = kDefaultTau;
  Ball region;           ///< 2 C0 B_R
  std::vector<DyadicCube> cubes;  ///< sorted
  double ratio_min = std::numeric_limits<double>::infinity();  ///< l(I) / (tau d_R(I))
  double ratio_max = 0.0;

  double smallest_side() const {
    double s = std::numeric_limits<double>::infinity();
    for (const auto& q : cubes) s = std::min(s, q.side());
    return s;
  }
  bool contains(const DyadicCube& q) const { return std::binary_search(cubes.begin(), cubes.end(), q); }
};

/// Maximal dyadic I meeting E ∩ 2 C0 B_R with l(I) < tau d_R(I), by a
/// top-down scan.
inline WhitneyFamily whitney_family(const CubeTree& ct, const SampledSet& E, const StoppingForest& F, std::size_t t,
                                    double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw UsageError("tau must lie in (0, 1)");
  const auto& tr = F.trees.at(t);
  WhitneyFamily fam;
  fam.tree = t;
  fam.top = tr.top;
  fam.tau = tau;
  fam.region = ct.ball(tr.top, 2.0 * F.C0);
  const SmoothedDistance dR(ct, E, F, t);
  KdTree index(E.points);
  const auto local = index.radius(fam.region.center, fam.region.radius);
  if (local.empty()) return fam;

  const double sup = dR(fam.region.center) + fam.region.radius;
  int j0 = static_cast<int>(std::floor(-std::log2(tau * sup)));
  while (dyadic_side(j0) < tau * sup) --j0;

  struct Item {
    DyadicCube q;
    std::vector<std::size_t> pts;
  };
  std::map<DyadicCube, std::vector<std::size_t>> start;
  for (auto i : local) start[DyadicCube::containing(E.points[i], j0)].push_back(i);
  std::vector<Item> stack;
  for (auto it = start.rbegin(); it != start.rend(); ++it) stack.push_back({it->first, std::move(it->second)});
  while (!stack.empty()) {
    Item cur = std::move(stack.back());
    stack.pop_back();
    const double dI = dR(cur.q.box());
    if (cur.q.side() < tau * dI) {
      const double r = cur.q.side() / (tau * dI);
      fam.ratio_min = std::min(fam.ratio_min, r);
      fam.ratio_max = std::max(fam.ratio_max, r);
      fam.cubes.push_back(cur.q);
      continue;
    }
    std::map<DyadicCube, std::vector<std::size_t>> kids;
    for (auto i : cur.pts) kids[DyadicCube::containing(E.points[i], cur.q.level + 1)].push_back(i);
    for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back({it->first, std::move(it->second)});
  }
  std::sort(fam.cubes.begin(), fam.cubes.end());
  const double smallest = fam.smallest_side();
  if (smallest < E.h) {
    double legal = tau;
    while (legal * smallest / tau < E.h) legal *= 2.0;
    throw ResolutionError("whitney_family: tau=" + std::to_string(tau) + " gives cubes of side " +
                          std::to_string(smallest) + " below the resolution h=" + std::to_string(E.h) +
                          "; use tau >= " + std::to_string(legal) + " or a shallower forest depth");
  }
  return fam;
}

/// d-skeleta of the Whitney cubes.
inline SkeletonSet skeleton_Er(const WhitneyFamily& fam, int n, int d) {
  SkeletonSet S(n, d);
  for (const auto& q : fam.cubes) S.insert_cube_skeleton(q);
  return S;
}

// ---------------------------------------------------------------------------
// Face helpers

inline Face cube_as_face(const DyadicCube& q) {
  Face f;
  f.level = q.level;
  f.n = q.n;
  f.anchor = q.corner;
  f.free_mask = (1u << q.n) - 1;
  return f;
}

/// Codimension-one faces of a face.
inline std::vector<Face> facets(const Face& f) {
  std::vector<Face> out;
  for (int a = 0; a < f.n; ++a) {
    if (!f.is_free(a)) continue;
    for (int side = 0; side < 2; ++side) {
      Face g = f;
      g.free_mask &= ~(1u << a);
      g.anchor[static_cast<std::size_t>(a)] += side;
      out.push_back(g);
    }
  }
  return out;
}

inline std::vector<Face> face_children(const Face& f) {
  std::vector<int> free_axes;
  for (int a = 0; a < f.n; ++a)
    if (f.is_free(a)) free_axes.push_back(a);
  std::vector<Face> out;
  const unsigned k = static_cast<unsigned>(free_axes.size());
  for (unsigned bits = 0; bits < (1u << k); ++bits) {
    Face g = f;
    g.level = f.level + 1;
    for (int a = 0; a < f.n; ++a) g.anchor[static_cast<std::size_t>(a)] = 2 * f.anchor[static_cast<std::size_t>(a)];
    for (unsigned b = 0; b < k; ++b)
      if ((bits >> b) & 1u) g.anchor[static_cast<std::size_t>(free_axes[b])] += 1;
    out.push_back(g);
  }
  return out;
}

inline void subdivide_to(const Face& f, int level, std::vector<Face>& out) {
  if (f.level >= level) {
    out.push_back(f);
    return;
  }
  for (const auto& c : face_children(f)) subdivide_to(c, level, out);
}

inline bool box_inside(const Box& inner, const Box& outer) {
  for (int i = 0; i < inner.lo.n; ++i)
    if (inner.lo[i] < outer.lo[i] || inner.hi[i] > outer.hi[i]) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Tile refinement

struct TileRefinement {
  int n = 0;
  int d = 0;
  /// families[m] for m = d..n; families[n] are the cubes themselves.
  std::vector<std::vector<Face>> families;
  SkeletonSet E_R;
  std::size_t tiles_created = 0;
};

namespace corona_detail {

/// Replace every face that strictly contains another face of the same
/// orientation by its subdivision, so that the family has disjoint relative
/// interiors and the finest tiling wins.
inline std::vector<Face> canonical_tiling(const std::vector<Face>& in) {
  std::unordered_set<Face, FaceHash> have(in.begin(), in.end());
  std::unordered_set<Face, FaceHash> marked;
  int min_level = std::numeric_limits<int>::max();
  for (const auto& f : in) min_level = std::min(min_level, f.level);
  for (const auto& f : in)
    for (int shift = 1; f.level - shift >= min_level; ++shift) {
      auto g = f.coarser(shift);
      if (!g) break;
      if (!marked.insert(*g).second) break;
    }
  std::vector<Face> out;
  std::vector<Face> stack(in.begin(), in.end());
  std::unordered_set<Face, FaceHash> emitted;
  while (!stack.empty()) {
    Face f = stack.back();
    stack.pop_back();
    if (marked.count(f)) {
      for (const auto& c : face_children(f)) stack.push_back(c);
    } else if (emitted.insert(f).second) {
      out.push_back(f);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace corona_detail

/// Descending-dimension face subdivision: each m-face of a member of the
/// (m+1)-family is tiled at the smallest size of a strictly smaller member
/// with an m-face inside it; E_R is the union of the d-family and the
/// d-skeleta of the cubes.
inline TileRefinement tile_refinement(const std::vector<DyadicCube>& cubes, int n, int d) {
  if (d < 0 || d >= n) throw UsageError("tile_refinement: need 0 <= d < n");
  TileRefinement T;
  T.n = n;
  T.d = d;
  T.families.assign(static_cast<std::size_t>(n) + 1, {});
  T.E_R = SkeletonSet(n, d);
  if (cubes.empty()) return T;
  auto& top = T.families[static_cast<std::size_t>(n)];
  for (const auto& q : cubes) top.push_back(cube_as_face(q));
  std::sort(top.begin(), top.end());
  top.erase(std::unique(top.begin(), top.end()), top.end());
  for (int m = n - 1; m >= d; --m) {
    const auto& G = T.families[static_cast<std::size_t>(m + 1)];
    std::unordered_set<Face, FaceHash> faces;
    std::vector<Face> order;
    int min_level = std::numeric_limits<int>::max();
    for (const auto& g : G)
      for (const auto& f : facets(g))
        if (faces.insert(f).second) {
          order.push_back(f);
          min_level = std::min(min_level, f.level);
        }
    // Finest level of a strictly smaller co-face whose facet lies in F.
    std::unordered_map<Face, int, FaceHash> tile_level;
    for (const auto& g : G)
      for (const auto& f : facets(g))
        for (int shift = 1; f.level - shift >= min_level; ++shift) {
          auto c = f.coarser(shift);
          if (!c) break;
          if (faces.count(*c)) {
            auto [it, fresh] = tile_level.emplace(*c, f.level);
            if (!fresh) it->second = std::max(it->second, f.level);
          }
        }
    std::sort(order.begin(), order.end());
    std::vector<Face> fam;
    for (const auto& f : order) {
      auto it = tile_level.find(f);
      if (it == tile_level.end()) {
        fam.push_back(f);
      } else {
        const std::size_t before = fam.size();
        subdivide_to(f, it->second, fam);
        T.tiles_created += fam.size() - before;
      }
    }
    T.families[static_cast<std::size_t>(m)] = corona_detail::canonical_tiling(fam);
  }
  for (const auto& q : cubes) T.E_R.insert_cube_skeleton(q);
  for (const auto& f : T.families[static_cast<std::size_t>(d)]) T.E_R.insert(f);
  return T;
}

inline TileRefinement tile_refinement(const WhitneyFamily& fam, int n, int d) {
  if (fam.cubes.empty()) throw UsageError("tile_refinement: empty Whitney family");
  return tile_refinement(fam.cubes, n, d);
}

// ---------------------------------------------------------------------------
// E_rho: d-skeleta of all rho-cubes meeting E_R

/// `stc_min` stands for min(eta_1, alpha_1), the constants of the skeletal
/// condition, which enter only through the bound on rho.
inline SkeletonSet fine_skeleton_E_rho(const SkeletonSet& ER, double rho, double smallest_cube, double ell_R,
                                       double stc_min = 1.0) {
  if (!(rho > 0.0)) throw UsageError("rho must be positive");
  const double j_exact = -std::log2(rho);
  const int j = static_cast<int>(std::lround(j_exact));
  if (std::abs(dyadic_side(j) - rho) > 1e-15 * rho) throw UsageError("rho must be a power of 2");
  if (!(rho < smallest_cube))
    throw UsageError("rho=" + std::to_string(rho) + " violates rho < smallest Whitney cube side " +
                     std::to_string(smallest_cube));
  const double bound = stc_min * ell_R / (1000.0 * std::sqrt(static_cast<double>(ER.n())));
  if (!(rho < bound))
    throw UsageError("rho=" + std::to_string(rho) + " violates rho < min(eta1,alpha1) l(R) / (1000 sqrt n) = " +
                     std::to_string(bound));
  SkeletonSet out(ER.n(), ER.d());
  std::unordered_set<DyadicCube, DyadicCubeHash> seen;
  const int n = ER.n();
  for (const auto& f : ER.faces()) {
    const Box b = f.box();
    std::array<std::int64_t, kMaxDim> lo{}, hi{};
    for (int i = 0; i < n; ++i) {
      lo[static_cast<std::size_t>(i)] = static_cast<std::int64_t>(std::ceil(std::ldexp(b.lo[i], j))) - 1;
      hi[static_cast<std::size_t>(i)] = static_cast<std::int64_t>(std::floor(std::ldexp(b.hi[i], j)));
    }
    DyadicCube q;
    q.level = j;
    q.n = n;
    q.corner = lo;
    while (true) {
      if (seen.insert(q).second) out.insert_cube_skeleton(q);
      int i = 0;
      while (i < n && ++q.corner[static_cast<std::size_t>(i)] > hi[static_cast<std::size_t>(i)]) {
        q.corner[static_cast<std::size_t>(i)] = lo[static_cast<std::size_t>(i)];
        ++i;
      }
      if (i >= n) break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Appendix witnesses and approximation quality

struct AppendixWitnesses {
  double a1_min = std::numeric_limits<double>::infinity();  ///< best l(I_S) / (tau l(S)) per S, min over S
  double a1_max = 0.0;                                       ///< and max over S
  std::size_t a1_missing = 0;  ///< stop cubes with no Whitney cube inside B(zeta_S, l(S)/2)
  double a2_c = 0.0;           ///< smallest c working for every I in C_R
  std::size_t stops = 0;
};

inline AppendixWitnesses appendix_witnesses(const CubeTree& ct, const StoppingForest& F, const WhitneyFamily& fam) {
  AppendixWitnesses w;
  const auto& tr = F.trees.at(fam.tree);
  const double tau = fam.tau;
  for (auto S : tr.stop) {
    const auto& s = ct.cube(S);
    if (!(s.side > 0.0)) continue;
    ++w.stops;
    const Ball half(s.center, 0.5 * s.side);
    double best = -1.0, best_log = std::numeric_limits<double>::infinity();
    for (const auto& I : fam.cubes) {
      const Box b = I.box();
      bool inside = true;
      for (unsigned c = 0; c < (1u << I.n) && inside; ++c) {
        Point p(I.n);
        for (int i = 0; i < I.n; ++i) p[i] = ((c >> i) & 1u) ? b.hi[i] : b.lo[i];
        if (!half.contains(p)) inside = false;
      }
      if (!inside) continue;
      const double r = I.side() / (tau * s.side);
      if (std::abs(std::log(r)) < best_log) {
        best_log = std::abs(std::log(r));
        best = r;
      }
    }
    if (best < 0.0) {
      ++w.a1_missing;
      continue;
    }
    w.a1_min = std::min(w.a1_min, best);
    w.a1_max = std::max(w.a1_max, best);
  }
  // dist(I, Q) is bounded above by the distance from I to the center of Q.
  for (const auto& I : fam.cubes) {
    const Box b = I.box();
    double c_best = std::numeric_limits<double>::infinity();
    for (auto Q : tr.forest) {
      const auto& q = ct.cube(Q);
      if (q.side < I.side()) continue;
      const double c = tau * std::max(q.side, dist(b, q.center)) / I.side();
      c_best = std::min(c_best, c);
    }
    w.a2_c = std::max(w.a2_c, c_best);
  }
  return w;
}

/// Distances from points to the union of the faces of a skeleton set.
class SkeletonDistance {
 public:
  explicit SkeletonDistance(const SkeletonSet& S) {
    for (const auto& f : S.faces()) by_level_[f.level].push_back(f);
    for (auto& [lev, faces] : by_level_) {
      std::vector<Point> centers;
      for (const auto& f : faces) {
        const Box b = f.box();
        centers.push_back((b.lo + b.hi) * 0.5);
      }
      trees_.emplace(lev, KdTree(centers));
    }
  }

  double operator()(const Point& x) const {
    double best = std::numeric_limits<double>::infinity();
    // Coarse levels first give a bound that prunes the finer ones.
    for (const auto& [lev, faces] : by_level_) {
      const double half_diag = 0.5 * std::sqrt(static_cast<double>(x.n)) * dyadic_side(lev);
      const auto& t = trees_.at(lev);
      if (!std::isfinite(best)) {
        const auto [i, d2] = t.nearest(x);
        best = std::min(best, dist(faces[i].box(), x));
      }
      for (auto i : t.radius(x, best + half_diag)) best = std::min(best, dist(faces[i].box(), x));
    }
    return best;
  }

 private:
  std::map<int, std::vector<Face>> by_level_;
  std::map<int, KdTree> trees_;
};

struct ApproximationReport {
  double max_ratio = 0.0;  ///< max of dist(x, E_R) / (tau d_R(x))
  std::vector<double> ratios;
  std::size_t samples = 0;
};

/// dist(x, E_R) / (tau d_R(x)) over samples of E inside 2 C0 B_R.
inline ApproximationReport approximation_error(const CubeTree& ct, const SampledSet& E, const StoppingForest& F,
                                               const WhitneyFamily& fam, const SkeletonSet& ER) {
  ApproximationReport rep;
  const SmoothedDistance dR(ct, E, F, fam.tree);
  const SkeletonDistance dist_ER(ER);
  KdTree index(E.points);
  for (auto i : index.radius(fam.region.center, fam.region.radius)) {
    const Point& x = E.points[i];
    const double r = dist_ER(x) / (fam.tau * dR(x));
    rep.ratios.push_back(r);
    rep.max_ratio = std::max(rep.max_ratio, r);
  }
  rep.samples = rep.ratios.size();
  return rep;
}

inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto k = static_cast<std::size_t>(std::floor(pos));
  const double t = pos - static_cast<double>(k);
  return k + 1 < v.size() ? v[k] * (1 - t) + v[k + 1] * t : v[k];
}

// ---------------------------------------------------------------------------
// Federer-Fleming projection of samples

/// Cubes of the sheath around `local` (C_R(x,r)): dyadic J not in C_R whose
/// interior avoids the local cubes, touching some local cube, with
/// min l(N(J)) <= l(J) <= max l(N(J)). Greedy largest-first, corner order.
inline std::vector<DyadicCube> sheath(const std::vector<DyadicCube>& all, const std::vector<DyadicCube>& local) {
  if (local.empty()) return {};
  std::unordered_set<DyadicCube, DyadicCubeHash> in_all(all.begin(), all.end());
  std::unordered_set<DyadicCube, DyadicCubeHash> occupied(local.begin(), local.end());
  std::unordered_set<DyadicCube, DyadicCubeHash> above;  // strict ancestors of occupied cubes
  int coarse = std::numeric_limits<int>::max(), fine = std::numeric_limits<int>::min();
  for (const auto& q : local) {
    coarse = std::min(coarse, q.level);
    fine = std::max(fine, q.level);
  }
  auto mark_above = [&](const DyadicCube& q) {
    for (int l = q.level - 1; l >= coarse - 1; --l)
      if (!above.insert(q.ancestor(l)).second) break;
  };
  for (const auto& q : local) mark_above(q);
  auto overlaps = [&](const DyadicCube& J) {
    if (occupied.count(J) || above.count(J)) return true;
    for (int l = J.level - 1; l >= coarse - 1; --l)
      if (occupied.count(J.ancestor(l))) return true;
    return false;
  };
  std::vector<DyadicCube> cand;
  const int n = local.front().n;
  for (const auto& I : local) {
    const Box b = I.box();
    for (int j = coarse; j <= fine; ++j) {
      std::array<std::int64_t, kMaxDim> lo{}, hi{};
      for (int i = 0; i < n; ++i) {
        lo[static_cast<std::size_t>(i)] = static_cast<std::int64_t>(std::ceil(std::ldexp(b.lo[i], j))) - 1;
        hi[static_cast<std::size_t>(i)] = static_cast<std::int64_t>(std::floor(std::ldexp(b.hi[i], j)));
      }
      DyadicCube J;
      J.level = j;
      J.n = n;
      J.corner = lo;
      while (true) {
        // Only cubes on the boundary layer of the range touch I from outside.
        cand.push_back(J);
        int i = 0;
        while (i < n && ++J.corner[static_cast<std::size_t>(i)] > hi[static_cast<std::size_t>(i)]) {
          J.corner[static_cast<std::size_t>(i)] = lo[static_cast<std::size_t>(i)];
          ++i;
        }
        if (i >= n) break;
      }
    }
  }
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
  std::vector<DyadicCube> out;
  for (const auto& J : cand) {
    if (in_all.count(J) || overlaps(J)) continue;
    const Box jb = J.box();
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& I : local)
      if (dist2(I.box(), jb) == 0.0) {
        lo = std::min(lo, I.side());
        hi = std::max(hi, I.side());
      }
    if (!(lo <= J.side() && J.side() <= hi)) continue;
    out.push_back(J);
    occupied.insert(J);
    mark_above(J);
  }
  return out;
}

struct FFReport {
  std::vector<std::size_t> indices;  ///< samples inside D^2_R(x,r)
  std::vector<Point> before;
  std::vector<Point> after;
  std::vector<double> cube_side;  ///< side of the family cube initially containing the sample
  std::vector<int> category;      ///< 0 outside D^2, 1 outer sheath face, 2 on a d-face of E_R
  std::vector<DyadicCube> local;  ///< C_R(x,r)
  std::vector<DyadicCube> sheath;
  std::size_t fixed_violations = 0;        ///< pi(y) != y outside D^2
  std::size_t containment_violations = 0;  ///< pi(I) not inside I
  std::size_t skeleton_violations = 0;     ///< pi(y) in a local cube but off E_R
  std::size_t displacement_violations = 0;
  double max_displacement_ratio = 0.0;  ///< |pi(y) - y| / (sqrt n side)
  bool ok() const {
    return fixed_violations == 0 && containment_violations == 0 && skeleton_violations == 0 &&
           displacement_violations == 0;
  }
};

namespace corona_detail {

/// Closed membership of a point in a face.
inline bool face_contains_point(const Face& f, const Point& p) { return f.box().contains(p); }

/// Relative-interior membership.
inline bool face_interior_contains(const Face& f, const Point& p) {
  const Box b = f.box();
  for (int i = 0; i < f.n; ++i) {
    if (f.is_free(i)) {
      if (!(p[i] > b.lo[i] && p[i] < b.hi[i])) return false;
    } else if (p[i] != b.lo[i]) {
      return false;
    }
  }
  return true;
}

/// Index of cells (faces of one dimension with disjoint relative interiors)
/// for locating the cell whose relative interior holds a point.
class CellIndex {
 public:
  explicit CellIndex(const std::vector<Face>& cells) : cells_(cells) {
    for (std::size_t i = 0; i < cells_.size(); ++i) {
      map_.emplace(cells_[i], i);
      levels_.insert(cells_[i].level);
      masks_.insert(cells_[i].free_mask);
    }
  }

  std::size_t locate(const Point& p) const {
    for (int lev : levels_)
      for (unsigned mask : masks_) {
        Face f;
        f.level = lev;
        f.n = p.n;
        f.free_mask = mask;
        bool ok = true;
        for (int i = 0; i < p.n && ok; ++i) {
          const double t = std::ldexp(p[i], lev);
          const double fl = std::floor(t);
          if (!((mask >> i) & 1u) && fl != t) ok = false;
          f.anchor[static_cast<std::size_t>(i)] = static_cast<std::int64_t>(fl);
        }
        if (!ok) continue;
        auto it = map_.find(f);
        if (it != map_.end() && face_interior_contains(f, p)) return it->second;
      }
    return npos;
  }

  const Face& cell(std::size_t i) const { return cells_[i]; }
  std::size_t size() const { return cells_.size(); }
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

 private:
  std::vector<Face> cells_;
  std::unordered_map<Face, std::size_t, FaceHash> map_;
  std::set<int> levels_;
  std::set<unsigned> masks_;
};

/// Center in the relative interior of f at distance >= h from every image
/// point: seeded random candidates, then the farthest point of a grid.
inline Point pick_center(const Face& f, const std::vector<Point>& image, double h, std::uint64_t seed) {
  const Box b = f.box();
  auto clearance = [&](const Point& c) {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& y : image) m = std::min(m, dist(c, y));
    return m;
  };
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int attempt = 0; attempt < 16; ++attempt) {
    Point c = b.lo;
    for (int i = 0; i < f.n; ++i)
      if (f.is_free(i)) c[i] = b.lo[i] + u(rng) * (b.hi[i] - b.lo[i]);
    if (clearance(c) >= h) return c;
  }
  std::vector<int> free_axes;
  for (int i = 0; i < f.n; ++i)
    if (f.is_free(i)) free_axes.push_back(i);
  const int g = 7;
  std::vector<int> idx(free_axes.size(), 0);
  Point best = b.lo;
  double best_clear = -1.0;
  while (true) {
    Point c = b.lo;
    for (std::size_t k = 0; k < free_axes.size(); ++k) {
      const int a = free_axes[k];
      c[a] = b.lo[a] + (idx[k] + 1.0) / (g + 1.0) * (b.hi[a] - b.lo[a]);
    }
    const double cl = clearance(c);
    if (cl > best_clear) {
      best_clear = cl;
      best = c;
    }
    std::size_t k = 0;
    while (k < idx.size() && ++idx[k] >= g) {
      idx[k] = 0;
      ++k;
    }
    if (k >= idx.size()) break;
  }
  if (best_clear < h)
    throw ResolutionError("porosity violated at resolution: every candidate center of a face of side " +
                          std::to_string(f.side()) + " lies within h=" + std::to_string(h) + " of the image");
  return best;
}

/// Push y away from c along the ray until it meets the boundary of f.
inline Point radial_to_boundary(const Face& f, const Point& c, const Point& y) {
  const Box b = f.box();
  double t = std::numeric_limits<double>::infinity();
  int hit = -1;
  bool high = false;
  for (int i = 0; i < f.n; ++i) {
    if (!f.is_free(i)) continue;
    const double v = y[i] - c[i];
    if (v > 0) {
      const double s = (b.hi[i] - c[i]) / v;
      if (s < t) {
        t = s;
        hit = i;
        high = true;
      }
    } else if (v < 0) {
      const double s = (b.lo[i] - c[i]) / v;
      if (s < t) {
        t = s;
        hit = i;
        high = false;
      }
    }
  }
  Point p = y;
  for (int i = 0; i < f.n; ++i)
    if (f.is_free(i)) p[i] = std::clamp(c[i] + t * (y[i] - c[i]), b.lo[i], b.hi[i]);
  if (hit >= 0) p[hit] = high ? b.hi[hit] : b.lo[hit];
  return p;
}

inline std::uint64_t face_seed(std::uint64_t seed, const Face& f) { return cube_seed(seed, FaceHash{}(f)); }

}  // namespace corona_detail

/// pi = pi_{n-d} o ... o pi_1 on the samples of E: stage 1 radially projects
/// the interior points of each cube of C_R(x,r) and its sheath onto the cube
/// boundary; later stages project within the tiled faces of decreasing
/// dimension that lie in the cubes of C_R(x,r).
inline FFReport federer_fleming_project(const SampledSet& E, const std::vector<DyadicCube>& C_R, const Ball& B,
                                        int d, std::uint64_t seed) {
  using namespace corona_detail;
  E.validate();
  const int n = E.n;
  if (d < 0 || d >= n) throw UsageError("federer_fleming_project: need 0 <= d < n");
  FFReport rep;
  for (const auto& q : C_R)
    if (intersects(q.box(), B)) rep.local.push_back(q);
  rep.sheath = sheath(C_R, rep.local);
  std::vector<DyadicCube> fam = rep.local;
  fam.insert(fam.end(), rep.sheath.begin(), rep.sheath.end());
  std::sort(fam.begin(), fam.end());
  if (fam.empty()) return rep;

  // Tiles over the whole local family so faces shared with smaller sheath
  // cubes are subdivided too; stage cells are those inside C_R(x,r).
  const TileRefinement tiles = tile_refinement(fam, n, d);
  auto inside_local = [&](const Face& f) {
    const Box fb = f.box();
    for (const auto& q : rep.local)
      if (box_inside(fb, q.box())) return true;
    return false;
  };

  std::vector<Face> cube_cells;
  for (const auto& q : fam) cube_cells.push_back(cube_as_face(q));
  const CellIndex cubes_ix(cube_cells);

  // Samples in the closed union D^2.
  std::vector<Point> pos;
  for (std::size_t i = 0; i < E.points.size(); ++i) {
    const Point& y = E.points[i];
    double side = -1.0;
    for (const auto& q : fam)
      if (q.box().contains(y)) side = std::max(side, q.side());
    if (side < 0.0) continue;
    rep.indices.push_back(i);
    rep.before.push_back(y);
    rep.cube_side.push_back(side);
    pos.push_back(y);
  }

  auto stage = [&](const CellIndex& ix, std::uint64_t stage_seed) {
    std::vector<std::vector<std::size_t>> members(ix.size());
    for (std::size_t k = 0; k < pos.size(); ++k) {
      const auto c = ix.locate(pos[k]);
      if (c != CellIndex::npos) members[c].push_back(k);
    }
    for (std::size_t c = 0; c < ix.size(); ++c) {
      if (members[c].empty()) continue;
      std::vector<Point> image;
      for (auto k : members[c]) image.push_back(pos[k]);
      const Point ctr = pick_center(ix.cell(c), image, E.h, face_seed(stage_seed, ix.cell(c)));
      for (auto k : members[c]) pos[k] = radial_to_boundary(ix.cell(c), ctr, pos[k]);
    }
  };
  stage(cubes_ix, seed);
  for (int m = n - 1; m > d; --m) {
    std::vector<Face> cells;
    for (const auto& f : tiles.families[static_cast<std::size_t>(m)])
      if (inside_local(f)) cells.push_back(f);
    stage(CellIndex(cells), cube_seed(seed, static_cast<std::size_t>(m)));
  }
  rep.after = pos;

  // Property checks.
  SkeletonSet ER(n, d);
  for (const auto& q : rep.local) ER.insert_cube_skeleton(q);
  for (const auto& f : tiles.families[static_cast<std::size_t>(d)])
    if (inside_local(f)) ER.insert(f);
  const SkeletonDistance on_ER(ER);
  for (std::size_t k = 0; k < pos.size(); ++k) {
    const Point& y = rep.before[k];
    const Point& p = pos[k];
    for (const auto& q : fam) {
      const Box qb = q.box();
      if (qb.contains(y) && !qb.contains(p)) ++rep.containment_violations;
    }
    bool in_local = false;
    for (const auto& q : rep.local)
      if (q.box().contains(p)) in_local = true;
    const bool on_skeleton = on_ER(p) == 0.0;
    if (in_local && !on_skeleton) ++rep.skeleton_violations;
    rep.category.push_back(on_skeleton ? 2 : 1);
    const double ratio = dist(p, y) / (std::sqrt(static_cast<double>(n)) * rep.cube_side[k]);
    rep.max_displacement_ratio = std::max(rep.max_displacement_ratio, ratio);
    if (ratio > 1.0 + 1e-12) ++rep.displacement_violations;
  }
  return rep;
}

}  // namespace flatness
