#pragma once

// Dyadic grid, exact truncated dyadic Hausdorff content, and skeleton sets
// (finite unions of d-faces of dyadic cubes).

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "flatness/geom.hpp"
#include "flatness/nets.hpp"

namespace flatness {

using Corner = std::array<std::int64_t, kMaxDim>;

inline std::int64_t dyadic_coord(double x, int level) {
  return static_cast<std::int64_t>(std::floor(std::ldexp(x, level)));
}

/// Side of a level-j cube, 2^{-j}.
inline double dyadic_side(int level) { return std::ldexp(1.0, -level); }

/// Largest level whose side is at least 8h.
inline int default_floor_level(double h) {
  if (!(h > 0.0)) throw UsageError("resolution must be positive");
  int j = static_cast<int>(std::floor(-std::log2(kResolutionFloor * h)));
  while (dyadic_side(j) < kResolutionFloor * h) --j;
  while (dyadic_side(j + 1) >= kResolutionFloor * h) ++j;
  return j;
}

/// Half-open cube prod [c_i 2^{-j}, (c_i + 1) 2^{-j}).
struct DyadicCube {
  int level = 0;
  int n = 0;
  Corner corner{};

  double side() const { return dyadic_side(level); }

  static DyadicCube containing(const Point& p, int level) {
    DyadicCube q;
    q.level = level;
    q.n = p.n;
    for (int i = 0; i < p.n; ++i) q.corner[static_cast<std::size_t>(i)] = dyadic_coord(p[i], level);
    return q;
  }

  Box box() const {
    Box b;
    b.lo = Point(n);
    b.hi = Point(n);
    const double s = side();
    for (int i = 0; i < n; ++i) {
      b.lo[i] = static_cast<double>(corner[static_cast<std::size_t>(i)]) * s;
      b.hi[i] = b.lo[i] + s;
    }
    return b;
  }

  Point center() const {
    Point c(n);
    const double s = side();
    for (int i = 0; i < n; ++i) c[i] = (static_cast<double>(corner[static_cast<std::size_t>(i)]) + 0.5) * s;
    return c;
  }

  bool contains(const Point& p) const {
    for (int i = 0; i < n; ++i)
      if (dyadic_coord(p[i], level) != corner[static_cast<std::size_t>(i)]) return false;
    return true;
  }

  DyadicCube parent() const {
    DyadicCube q = *this;
    --q.level;
    for (int i = 0; i < n; ++i) q.corner[static_cast<std::size_t>(i)] >>= 1;
    return q;
  }

  /// Ancestor at a coarser (smaller) level.
  DyadicCube ancestor(int coarser) const {
    DyadicCube q = *this;
    const int shift = level - coarser;
    q.level = coarser;
    for (int i = 0; i < n; ++i) q.corner[static_cast<std::size_t>(i)] >>= shift;
    return q;
  }

  std::vector<DyadicCube> children() const {
    std::vector<DyadicCube> out;
    for (unsigned m = 0; m < (1u << n); ++m) {
      DyadicCube q = *this;
      ++q.level;
      for (int i = 0; i < n; ++i)
        q.corner[static_cast<std::size_t>(i)] = 2 * corner[static_cast<std::size_t>(i)] + ((m >> i) & 1u);
      out.push_back(q);
    }
    return out;
  }

  /// Whether this cube is contained in `other` (same or coarser level).
  bool inside(const DyadicCube& other) const {
    return other.level <= level && ancestor(other.level) == other;
  }

  bool operator==(const DyadicCube& o) const { return level == o.level && n == o.n && corner == o.corner; }
  auto operator<=>(const DyadicCube& o) const {
    if (auto c = level <=> o.level; c != 0) return c;
    return corner <=> o.corner;
  }
};

struct DyadicCubeHash {
  std::size_t operator()(const DyadicCube& q) const noexcept {
    detail::CellKey k{q.corner};
    return detail::CellKeyHash{}(k) ^ (static_cast<std::size_t>(q.level) * 0x9e3779b97f4a7c15ull);
  }
};

/// Level-j cubes containing at least one sample, sorted by corner.
inline std::vector<DyadicCube> cubes_meeting(std::span<const Point> pts, int level) {
  std::vector<DyadicCube> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(DyadicCube::containing(p, level));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline std::vector<DyadicCube> cubes_meeting(const SampledSet& E, int level) {
  if (dyadic_side(level) < E.h) throw ResolutionError("cubes_meeting: level finer than resolution");
  return cubes_meeting(E.points, level);
}

/// Dyadic tree over the floor cells of a point set, supporting the exact
/// truncated content DP both in batch and incrementally.
///
/// C(I) = l(I)^d at the floor level, C(I) = min(l(I)^d, sum over children of C)
/// above it; the content is the sum of C over the top level.
class ContentIndex {
 public:
  ContentIndex(std::span<const Point> pts, int d, int floor_level) : d_(d), floor_(floor_level) {
    if (pts.empty()) return;
    const int n = pts[0].n;
    if (d < 0 || d > n) throw UsageError("content dimension must be in 0..n");
    std::unordered_map<DyadicCube, std::uint32_t, DyadicCubeHash> index;
    std::vector<DyadicCube> level_cubes;
    point_cell_.reserve(pts.size());
    for (const auto& p : pts) {
      const DyadicCube q = DyadicCube::containing(p, floor_level);
      auto [it, fresh] = index.try_emplace(q, static_cast<std::uint32_t>(level_cubes.size()));
      if (fresh) level_cubes.push_back(q);
      point_cell_.push_back(it->second);
    }
    num_cells_ = level_cubes.size();
    parent_.assign(num_cells_, -1);
    weight_.assign(num_cells_, std::pow(dyadic_side(floor_level), d));

    // Climb until one cube remains or the cube cost l^d reaches the level's
    // total: past that point no coarser cube can lower the content of this
    // set or of any subset, so the truncation is exact.
    std::vector<double> cost(num_cells_, weight_[0]);
    double total = weight_[0] * static_cast<double>(num_cells_);
    int level = floor_level;
    std::size_t first = 0;  // first node index of the current level
    while (level_cubes.size() > 1 && std::pow(dyadic_side(level), d) < total) {
      std::unordered_map<DyadicCube, std::uint32_t, DyadicCubeHash> up;
      std::vector<DyadicCube> next;
      std::vector<double> next_cost;
      const std::size_t base = parent_.size();
      for (std::size_t i = 0; i < level_cubes.size(); ++i) {
        const DyadicCube pq = level_cubes[i].parent();
        auto [it, fresh] = up.try_emplace(pq, static_cast<std::uint32_t>(base + next.size()));
        if (fresh) {
          next.push_back(pq);
          next_cost.push_back(0.0);
        }
        next_cost[it->second - base] += cost[i];
        parent_[first + i] = static_cast<std::int32_t>(it->second);
      }
      --level;
      const double w = std::pow(dyadic_side(level), d);
      total = 0.0;
      for (auto& c : next_cost) {
        c = std::min(c, w);
        total += c;
      }
      first = base;
      parent_.resize(base + next.size(), -1);
      weight_.resize(base + next.size(), w);
      level_cubes = std::move(next);
      cost = std::move(next_cost);
    }
    top_level_ = level;
    top_count_ = level_cubes.size();
  }

  std::size_t num_cells() const { return num_cells_; }
  std::size_t num_nodes() const { return parent_.size(); }
  int top_level() const { return top_level_; }
  std::size_t top_count() const { return top_count_; }
  int floor_level() const { return floor_; }
  /// Floor-cell index of each input point.
  const std::vector<std::uint32_t>& point_cell() const { return point_cell_; }

  /// Incremental evaluator: add floor cells one at a time, read the content of
  /// the union so far in O(depth) per insertion.
  class Accumulator {
   public:
    explicit Accumulator(const ContentIndex& ix)
        : ix_(&ix), sum_(ix.num_nodes(), 0.0), c_(ix.num_nodes(), 0.0), present_(ix.num_cells_, 0) {}

    void reset() {
      for (auto k : touched_) {
        sum_[k] = 0.0;
        c_[k] = 0.0;
      }
      for (auto k : touched_cells_) present_[k] = 0;
      touched_.clear();
      touched_cells_.clear();
      total_ = 0.0;
    }

    void add_cell(std::uint32_t cell) {
      if (present_[cell]) return;
      present_[cell] = 1;
      touched_cells_.push_back(cell);
      std::size_t node = cell;
      double delta = ix_->weight_[node];
      c_[node] = delta;
      touched_.push_back(node);
      while (true) {
        const std::int32_t p = ix_->parent_[node];
        if (p < 0) {
          total_ += delta;
          return;
        }
        const auto pu = static_cast<std::size_t>(p);
        if (sum_[pu] == 0.0 && c_[pu] == 0.0) touched_.push_back(pu);
        sum_[pu] += delta;
        const double nc = std::min(ix_->weight_[pu], sum_[pu]);
        delta = nc - c_[pu];
        c_[pu] = nc;
        if (delta == 0.0) return;
        node = pu;
      }
    }

    double value() const { return total_; }

   private:
    const ContentIndex* ix_;
    std::vector<double> sum_, c_;
    std::vector<char> present_;
    std::vector<std::size_t> touched_;
    std::vector<std::uint32_t> touched_cells_;
    double total_ = 0.0;
  };

  /// Content of all indexed points.
  double total() const {
    Accumulator acc(*this);
    for (std::uint32_t c = 0; c < num_cells_; ++c) acc.add_cell(c);
    return acc.value();
  }

 private:
  int d_ = 0;
  int floor_ = 0;
  int top_level_ = 0;
  std::size_t top_count_ = 0;
  std::size_t num_cells_ = 0;
  std::vector<std::uint32_t> point_cell_;
  std::vector<std::int32_t> parent_;
  std::vector<double> weight_;
};

/// Exact dyadic d-content of a point set truncated at floor_level.
inline double dyadic_content(std::span<const Point> pts, int d, int floor_level) {
  if (pts.empty()) return 0.0;
  return ContentIndex(pts, d, floor_level).total();
}

inline double dyadic_content(const SampledSet& E, int d, int floor_level) {
  if (E.points.empty()) return 0.0;
  if (dyadic_side(floor_level) < E.h) throw ResolutionError("dyadic_content: floor finer than resolution");
  return dyadic_content(E.points, d, floor_level);
}

inline double dyadic_content(const SampledSet& E, int d) {
  return dyadic_content(E, d, default_floor_level(E.h));
}

// ---------------------------------------------------------------------------
// Faces and skeleton sets

/// Axis-parallel face of a dyadic cube: coordinates on free axes range over
/// [a_i, a_i + 1] 2^{-j}; frozen axes are fixed at a_i 2^{-j}.
struct Face {
  int level = 0;
  int n = 0;
  Corner anchor{};
  unsigned free_mask = 0;

  int dim() const { return std::popcount(free_mask); }
  double side() const { return dyadic_side(level); }
  bool is_free(int axis) const { return (free_mask >> axis) & 1u; }

  Box box() const {
    Box b;
    b.lo = Point(n);
    b.hi = Point(n);
    const double s = side();
    for (int i = 0; i < n; ++i) {
      b.lo[i] = static_cast<double>(anchor[static_cast<std::size_t>(i)]) * s;
      b.hi[i] = b.lo[i] + (is_free(i) ? s : 0.0);
    }
    return b;
  }

  /// The same face expressed at a coarser level, if it lies in the plane of
  /// a coarser face of equal orientation (frozen coordinates on that grid).
  std::optional<Face> coarser(int shift) const {
    Face f = *this;
    f.level -= shift;
    for (int i = 0; i < n; ++i) {
      auto& a = f.anchor[static_cast<std::size_t>(i)];
      if (!is_free(i) && (a & ((std::int64_t{1} << shift) - 1)) != 0) return std::nullopt;
      a >>= shift;
    }
    return f;
  }

  bool operator==(const Face& o) const = default;
  auto operator<=>(const Face& o) const {
    if (auto c = level <=> o.level; c != 0) return c;
    if (auto c = free_mask <=> o.free_mask; c != 0) return c;
    return anchor <=> o.anchor;
  }
};

struct FaceHash {
  std::size_t operator()(const Face& f) const noexcept {
    detail::CellKey k{f.anchor};
    return detail::CellKeyHash{}(k) ^ (static_cast<std::size_t>(f.level) * 0x9e3779b97f4a7c15ull) ^
           (static_cast<std::size_t>(f.free_mask) << 48);
  }
};

/// All dim-dimensional faces of a dyadic cube (its dim-skeleton).
inline std::vector<Face> cube_faces(const DyadicCube& q, int dim) {
  std::vector<Face> out;
  const int n = q.n;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    if (std::popcount(mask) != dim) continue;
    // Each frozen axis sits on the low or the high side of the cube.
    const unsigned frozen = ((1u << n) - 1) & ~mask;
    for (unsigned sides = 0; sides < (1u << n); ++sides) {
      if ((sides & ~frozen) != 0) continue;
      Face f;
      f.level = q.level;
      f.n = n;
      f.free_mask = mask;
      for (int i = 0; i < n; ++i)
        f.anchor[static_cast<std::size_t>(i)] = q.corner[static_cast<std::size_t>(i)] + (((sides >> i) & 1u) ? 1 : 0);
      out.push_back(f);
    }
  }
  return out;
}

/// Deduplicated set of faces of common dimension d.
class SkeletonSet {
 public:
  SkeletonSet() = default;
  SkeletonSet(int n, int d) : n_(n), d_(d) {
    if (d < 0 || d >= n) throw UsageError("skeleton dimension must satisfy 0 <= d < n");
  }

  int n() const { return n_; }
  int d() const { return d_; }
  std::size_t size() const { return faces_.size(); }
  bool empty() const { return faces_.empty(); }

  bool insert(const Face& f) {
    if (f.dim() != d_ || f.n != n_) throw UsageError("skeleton face has wrong dimension");
    if (!set_.insert(f).second) return false;
    faces_.push_back(f);
    sorted_ = false;
    return true;
  }

  void insert_cube_skeleton(const DyadicCube& q) {
    for (const auto& f : cube_faces(q, d_)) insert(f);
  }

  void merge(const SkeletonSet& o) {
    for (const auto& f : o.faces()) insert(f);
  }

  bool contains(const Face& f) const { return set_.count(f) != 0; }

  /// Faces in canonical (level, mask, anchor) order.
  const std::vector<Face>& faces() const {
    if (!sorted_) {
      std::sort(faces_.begin(), faces_.end());
      sorted_ = true;
    }
    return faces_;
  }

  /// Whether f is covered by a strictly coarser face of the set.
  bool covered_by_coarser(const Face& f) const {
    if (faces_.empty()) return false;
    const int min_level = faces().front().level;
    for (int shift = 1; f.level - shift >= min_level; ++shift) {
      auto g = f.coarser(shift);
      if (!g) return false;  // frozen coordinates leave the coarser grid for good
      if (set_.count(*g)) return true;
    }
    return false;
  }

 private:
  int n_ = 0;
  int d_ = 0;
  mutable std::vector<Face> faces_;
  mutable bool sorted_ = true;
  std::unordered_set<Face, FaceHash> set_;
};

/// H^d of the union of faces. Same-orientation dyadic faces either nest or have
/// disjoint relative interiors, and faces of different orientation meet in
/// lower-dimensional sets, so the measure is the sum over faces not covered by
/// a coarser face of the set.
inline double skeleton_measure(const SkeletonSet& S) {
  double total = 0.0;
  for (const auto& f : S.faces())
    if (!S.covered_by_coarser(f)) total += std::pow(f.side(), S.d());
  return total;
}

/// Approximate H^d(S ∩ B) by midpoint quadrature on each uncovered face, with
/// sub-cells of side at most `cell`.
inline double skeleton_measure_in_ball(const SkeletonSet& S, const Ball& B, double cell) {
  const int d = S.d();
  double total = 0.0;
  for (const auto& f : S.faces()) {
    const Box fb = f.box();
    if (!intersects(fb, B)) continue;
    if (S.covered_by_coarser(f)) continue;
    const double s = f.side();
    // Entire face inside the ball: exact.
    bool inside = true;
    for (unsigned corner = 0; corner < (1u << f.n) && inside; ++corner) {
      Point p(f.n);
      for (int i = 0; i < f.n; ++i) p[i] = ((corner >> i) & 1u) ? fb.hi[i] : fb.lo[i];
      if (!B.contains(p)) inside = false;
    }
    if (inside) {
      total += std::pow(s, d);
      continue;
    }
    int q = 0;
    while (s / std::ldexp(1.0, q) > cell) ++q;
    const std::int64_t m = std::int64_t{1} << q;
    const double step = s / static_cast<double>(m);
    const double w = std::pow(step, d);
    std::array<std::int64_t, kMaxDim> idx{};
    std::vector<int> free_axes;
    for (int i = 0; i < f.n; ++i)
      if (f.is_free(i)) free_axes.push_back(i);
    while (true) {
      Point p = fb.lo;
      for (int k = 0; k < d; ++k)
        p[free_axes[static_cast<std::size_t>(k)]] += (static_cast<double>(idx[static_cast<std::size_t>(k)]) + 0.5) * step;
      if (B.contains(p)) total += w;
      int k = 0;
      while (k < d && ++idx[static_cast<std::size_t>(k)] >= m) {
        idx[static_cast<std::size_t>(k)] = 0;
        ++k;
      }
      if (k >= d) break;
    }
  }
  return total;
}

/// Regular sample of every face on the dyadic lattice of spacing
/// min(face side, largest power of two <= h), boundaries included,
/// deduplicated. The result is an h-net of the union of faces.
inline SampledSet skeleton_sample(const SkeletonSet& S, double h) {
  if (S.empty()) throw UsageError("empty skeleton");
  if (!(h > 0.0)) throw UsageError("skeleton_sample: h must be positive");
  const int jh = static_cast<int>(std::ceil(-std::log2(h)));
  int finest = jh;
  for (const auto& f : S.faces()) finest = std::max(finest, f.level);
  std::vector<Point> pts;
  std::unordered_set<detail::CellKey, detail::CellKeyHash> seen;
  for (const auto& f : S.faces()) {
    const int lev = std::max(jh, f.level);
    const std::int64_t m = std::int64_t{1} << (lev - f.level);
    const std::int64_t scale = std::int64_t{1} << (finest - lev);
    std::array<std::int64_t, kMaxDim> idx{};
    std::vector<int> free_axes;
    for (int i = 0; i < f.n; ++i)
      if (f.is_free(i)) free_axes.push_back(i);
    const int d = static_cast<int>(free_axes.size());
    while (true) {
      detail::CellKey key;
      Point p(f.n);
      for (int i = 0; i < f.n; ++i) {
        std::int64_t c = f.anchor[static_cast<std::size_t>(i)] * m;
        key.c[static_cast<std::size_t>(i)] = c;
      }
      for (int k = 0; k < d; ++k) key.c[static_cast<std::size_t>(free_axes[static_cast<std::size_t>(k)])] += idx[static_cast<std::size_t>(k)];
      for (int i = 0; i < f.n; ++i) {
        key.c[static_cast<std::size_t>(i)] *= scale;
        p[i] = std::ldexp(static_cast<double>(key.c[static_cast<std::size_t>(i)]), -finest);
      }
      if (seen.insert(key).second) pts.push_back(p);
      int k = 0;
      while (k < d && ++idx[static_cast<std::size_t>(k)] > m) {
        idx[static_cast<std::size_t>(k)] = 0;
        ++k;
      }
      if (k >= d) break;
    }
  }
  return SampledSet(std::move(pts), h, S.n(), S.d());
}

}  // namespace flatness
