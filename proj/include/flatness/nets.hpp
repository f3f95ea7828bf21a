#pragma once

// Separated nets and the normalized local Hausdorff distance.

#include <cmath>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "flatness/geom.hpp"
#include "flatness/kdtree.hpp"

namespace flatness {

namespace detail {

struct CellKey {
  std::array<std::int64_t, kMaxDim> c{};
  bool operator==(const CellKey&) const = default;
};

struct CellKeyHash {
  std::size_t operator()(const CellKey& k) const noexcept {
    std::uint64_t h = 1469598103934665603ull;
    for (auto v : k.c) {
      h ^= static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
      h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
  }
};

/// Uniform hash grid used for separation tests during net construction.
class HashGrid {
 public:
  HashGrid(int n, double cell) : n_(n), cell_(cell) {}

  void insert(const Point& p, std::size_t id) { cells_[key(p)].push_back({p, id}); }

  /// Whether some stored point lies at distance < r (r <= cell).
  bool any_closer(const Point& p, double r) const {
    const CellKey k = key(p);
    const double r2 = r * r;
    bool found = false;
    visit(k, 0, [&](const CellKey& kk) {
      if (found) return;
      auto it = cells_.find(kk);
      if (it == cells_.end()) return;
      for (const auto& e : it->second)
        if (dist2(e.p, p) < r2) {
          found = true;
          return;
        }
    });
    return found;
  }

 private:
  struct Entry {
    Point p;
    std::size_t id;
  };

  CellKey key(const Point& p) const {
    CellKey k;
    for (int i = 0; i < n_; ++i) k.c[static_cast<std::size_t>(i)] = static_cast<std::int64_t>(std::floor(p[i] / cell_));
    return k;
  }

  template <class F>
  void visit(CellKey k, int axis, F&& f) const {
    if (axis == n_) {
      f(k);
      return;
    }
    const auto base = k.c[static_cast<std::size_t>(axis)];
    for (std::int64_t off = -1; off <= 1; ++off) {
      k.c[static_cast<std::size_t>(axis)] = base + off;
      visit(k, axis + 1, f);
    }
  }

  int n_;
  double cell_;
  std::unordered_map<CellKey, std::vector<Entry>, CellKeyHash> cells_;
};

}  // namespace detail

/// Greedy maximal `sep`-separated subset of `pts`, returned as point indices.
///
/// Indices in `seed` are kept first (they must already be sep-separated); the
/// remaining points are scanned in index order and kept when every kept point is
/// at distance >= sep. The result is maximal: every point lies within sep of it.
inline std::vector<std::size_t> maximal_net(std::span<const Point> pts, double sep,
                                            std::span<const std::size_t> seed = {}) {
  if (!(sep > 0.0)) throw UsageError("net separation must be positive");
  std::vector<std::size_t> out;
  if (pts.empty()) return out;
  detail::HashGrid grid(pts[0].n, sep);
  std::vector<char> taken(pts.size(), 0);
  for (std::size_t i : seed) {
    out.push_back(i);
    taken[i] = 1;
    grid.insert(pts[i], i);
  }
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (taken[i]) continue;
    if (!grid.any_closer(pts[i], sep)) {
      out.push_back(i);
      taken[i] = 1;
      grid.insert(pts[i], i);
    }
  }
  return out;
}

/// Net of the sample points of E at separation sep (sep >= h), as points.
inline std::vector<Point> farthest_point_sampling_net(const SampledSet& E, double sep) {
  if (sep < E.h) throw UsageError("net separation must be at least h");
  std::vector<Point> out;
  for (std::size_t i : maximal_net(E.points, sep)) out.push_back(E.points[i]);
  return out;
}

/// Regular grid on flat L intersected with the open ball B, spacing `step`,
/// centered at the projection of B's center. Points outside `window` are dropped.
inline std::vector<Point> flat_grid_in_ball(const AffineFlat& L, const Ball& B, double step,
                                            const Box* window = nullptr) {
  std::vector<Point> out;
  const Point c0 = L.project(B.center);
  const double off2 = dist2(c0, B.center);
  const double r2 = B.radius * B.radius;
  if (off2 >= r2) return out;
  const double rr = std::sqrt(r2 - off2);
  const auto K = static_cast<std::int64_t>(std::floor(rr / step));
  const int d = L.dim();
  std::array<std::int64_t, kMaxDim> idx{};
  idx.fill(-K);
  while (true) {
    Point g = c0;
    for (int k = 0; k < d; ++k) g += L.direction(k) * (static_cast<double>(idx[static_cast<std::size_t>(k)]) * step);
    if (dist2(g, B.center) < r2 && (window == nullptr || window->contains(g))) out.push_back(g);
    int k = 0;
    while (k < d && ++idx[static_cast<std::size_t>(k)] > K) {
      idx[static_cast<std::size_t>(k)] = -K;
      ++k;
    }
    if (k == d) break;
  }
  return out;
}

/// Grid spacing used to sample a flat inside B: min(h, diam(B)/64).
inline double flat_grid_step(double h, const Ball& B) { return std::min(h, B.diameter() / 64.0); }

/// (2/diam B) * max(sup_{y in E∩B} dist(y,L), sup_{y in L∩B} dist(y,E)) with
/// L∩B sampled at spacing `step`. `index` must be built over E.points.
/// Flat samples outside E.window are ignored.
inline double local_hausdorff(const SampledSet& E, const KdTree& index, const AffineFlat& L, const Ball& B,
                              double step) {
  if (L.ambient_dim() != E.n || B.center.n != E.n) throw UsageError("local_hausdorff: dimension mismatch");
  double sup_e = 0.0;
  bool any_e = false;
  for (std::size_t i : index.radius(B.center, B.radius)) {
    any_e = true;
    sup_e = std::max(sup_e, dist_point_flat(index.point(i), L));
  }
  const auto grid = flat_grid_in_ball(L, B, step, E.window.restricts() ? &E.window : nullptr);
  if (!any_e && grid.empty()) throw UsageError("empty comparison");
  double sup_f = 0.0;
  for (const auto& g : grid) sup_f = std::max(sup_f, index.nearest_dist(g));
  return 2.0 / B.diameter() * std::max(sup_e, sup_f);
}

inline double local_hausdorff(const SampledSet& E, const AffineFlat& L, const Ball& B) {
  KdTree index(E.points);
  return local_hausdorff(E, index, L, B, flat_grid_step(E.h, B));
}

/// Two sampled sets compared inside B.
inline double local_hausdorff(const SampledSet& E, const SampledSet& F, const Ball& B) {
  if (E.n != F.n || B.center.n != E.n) throw UsageError("local_hausdorff: dimension mismatch");
  KdTree ie(E.points), iff(F.points);
  double sup_e = 0.0, sup_f = 0.0;
  const auto in_e = ie.radius(B.center, B.radius);
  const auto in_f = iff.radius(B.center, B.radius);
  if (in_e.empty() && in_f.empty()) throw UsageError("empty comparison");
  if (E.points.empty() || F.points.empty()) throw UsageError("empty comparison");
  for (std::size_t i : in_e) sup_e = std::max(sup_e, iff.nearest_dist(E.points[i]));
  for (std::size_t i : in_f) sup_f = std::max(sup_f, ie.nearest_dist(F.points[i]));
  return 2.0 / B.diameter() * std::max(sup_e, sup_f);
}

}  // namespace flatness
