#pragma once

// Euclidean primitives: points, balls, boxes, affine flats and finite h-nets.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flatness/errors.hpp"

namespace flatness {

inline constexpr int kMaxDim = 4;

/// Sub-resolution floor: scale-dependent operations refuse radii below
/// kResolutionFloor * h.
inline constexpr double kResolutionFloor = 8.0;

struct Point {
  std::array<double, kMaxDim> x{};
  int n = 0;

  Point() = default;
  explicit Point(int dim) : n(dim) {}
  Point(std::initializer_list<double> coords) : n(static_cast<int>(coords.size())) {
    if (n < 1 || n > kMaxDim) throw UsageError("point dimension must be in 1..4");
    std::copy(coords.begin(), coords.end(), x.begin());
  }

  double& operator[](int i) { return x[static_cast<std::size_t>(i)]; }
  double operator[](int i) const { return x[static_cast<std::size_t>(i)]; }

  bool finite() const {
    for (int i = 0; i < n; ++i)
      if (!std::isfinite((*this)[i])) return false;
    return true;
  }

  Point& operator+=(const Point& o) {
    for (int i = 0; i < n; ++i) (*this)[i] += o[i];
    return *this;
  }
  Point& operator-=(const Point& o) {
    for (int i = 0; i < n; ++i) (*this)[i] -= o[i];
    return *this;
  }
  Point& operator*=(double s) {
    for (int i = 0; i < n; ++i) (*this)[i] *= s;
    return *this;
  }
  friend Point operator+(Point a, const Point& b) { return a += b; }
  friend Point operator-(Point a, const Point& b) { return a -= b; }
  friend Point operator*(Point a, double s) { return a *= s; }
  friend Point operator*(double s, Point a) { return a *= s; }
  friend bool operator==(const Point& a, const Point& b) {
    if (a.n != b.n) return false;
    for (int i = 0; i < a.n; ++i)
      if (a[i] != b[i]) return false;
    return true;
  }
};

inline double dot(const Point& a, const Point& b) {
  double s = 0.0;
  for (int i = 0; i < a.n; ++i) s += a[i] * b[i];
  return s;
}
inline double norm2(const Point& a) { return dot(a, a); }
inline double norm(const Point& a) { return std::sqrt(norm2(a)); }
inline double dist2(const Point& a, const Point& b) {
  double s = 0.0;
  for (int i = 0; i < a.n; ++i) {
    const double t = a[i] - b[i];
    s += t * t;
  }
  return s;
}
inline double dist(const Point& a, const Point& b) { return std::sqrt(dist2(a, b)); }

/// Open ball B(center, radius) = {y : |y - center| < radius}.
struct Ball {
  Point center;
  double radius = 1.0;

  Ball() = default;
  Ball(Point c, double r) : center(c), radius(r) {
    if (!(r > 0.0)) throw UsageError("ball radius must be positive");
  }
  bool contains(const Point& p) const { return dist2(p, center) < radius * radius; }
  double diameter() const { return 2.0 * radius; }
};

/// Closed axis-aligned box; infinite bounds are allowed (used for sampling windows).
struct Box {
  Point lo;
  Point hi;

  static Box everything(int n) {
    Box b;
    b.lo = Point(n);
    b.hi = Point(n);
    for (int i = 0; i < n; ++i) {
      b.lo[i] = -std::numeric_limits<double>::infinity();
      b.hi[i] = std::numeric_limits<double>::infinity();
    }
    return b;
  }
  int dim() const { return lo.n; }
  bool contains(const Point& p) const {
    for (int i = 0; i < lo.n; ++i)
      if (p[i] < lo[i] || p[i] > hi[i]) return false;
    return true;
  }
  /// Whether some bound is finite.
  bool restricts() const {
    for (int i = 0; i < lo.n; ++i)
      if (std::isfinite(lo[i]) || std::isfinite(hi[i])) return true;
    return false;
  }
  bool bounded() const {
    for (int i = 0; i < lo.n; ++i)
      if (!std::isfinite(lo[i]) || !std::isfinite(hi[i])) return false;
    return true;
  }
  /// Whether the closed ball of the given center and radius lies inside.
  bool contains_ball(const Point& c, double r) const {
    for (int i = 0; i < lo.n; ++i)
      if (c[i] - r < lo[i] || c[i] + r > hi[i]) return false;
    return true;
  }
};

inline double dist2(const Box& b, const Point& p) {
  double s = 0.0;
  for (int i = 0; i < p.n; ++i) {
    double t = 0.0;
    if (p[i] < b.lo[i]) t = b.lo[i] - p[i];
    else if (p[i] > b.hi[i]) t = p[i] - b.hi[i];
    s += t * t;
  }
  return s;
}
inline double dist(const Box& b, const Point& p) { return std::sqrt(dist2(b, p)); }

inline double dist2(const Box& a, const Box& b) {
  double s = 0.0;
  for (int i = 0; i < a.lo.n; ++i) {
    double t = 0.0;
    if (a.hi[i] < b.lo[i]) t = b.lo[i] - a.hi[i];
    else if (b.hi[i] < a.lo[i]) t = a.lo[i] - b.hi[i];
    s += t * t;
  }
  return s;
}
inline double dist(const Box& a, const Box& b) { return std::sqrt(dist2(a, b)); }

inline bool intersects(const Box& b, const Ball& ball) {
  return dist2(b, ball.center) < ball.radius * ball.radius;
}

/// d-dimensional affine plane through `base` spanned by an orthonormal frame.
class AffineFlat {
 public:
  AffineFlat() = default;

  /// Orthonormalizes `directions` (Gram-Schmidt); throws if they are dependent.
  AffineFlat(const Point& base, std::span<const Point> directions) : base_(base) {
    dim_ = static_cast<int>(directions.size());
    if (dim_ < 1 || dim_ >= base.n)
      throw UsageError("flat dimension must satisfy 0 < d < n");
    for (int k = 0; k < dim_; ++k) {
      Point v = directions[static_cast<std::size_t>(k)];
      if (v.n != base.n) throw UsageError("flat direction has wrong dimension");
      for (int pass = 0; pass < 2; ++pass)
        for (int j = 0; j < k; ++j) v -= frame_[j] * dot(v, frame_[j]);
      const double len = norm(v);
      if (!(len > 1e-12)) throw UsageError("flat directions are linearly dependent");
      frame_[k] = v * (1.0 / len);
    }
    // Normal frame: coordinate axes orthogonalized against the tangent frame.
    int m = 0;
    for (int axis = 0; axis < base.n && m < base.n - dim_; ++axis) {
      Point v(base.n);
      v[axis] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (int j = 0; j < dim_; ++j) v -= frame_[j] * dot(v, frame_[j]);
        for (int j = 0; j < m; ++j) v -= normal_[j] * dot(v, normal_[j]);
      }
      const double len = norm(v);
      if (len > 1e-6) normal_[m++] = v * (1.0 / len);
    }
  }

  const Point& base() const { return base_; }
  int dim() const { return dim_; }
  int ambient_dim() const { return base_.n; }
  const Point& direction(int k) const { return frame_[k]; }
  const Point& normal(int k) const { return normal_[k]; }
  std::span<const Point> frame() const { return {frame_.data(), static_cast<std::size_t>(dim_)}; }

  /// Orthogonal projection of p onto the flat.
  Point project(const Point& p) const {
    Point v = p - base_;
    Point out = base_;
    for (int k = 0; k < dim_; ++k) out += frame_[k] * dot(v, frame_[k]);
    return out;
  }

  /// Largest deviation of the frame from orthonormality.
  double frame_error() const {
    double e = 0.0;
    for (int a = 0; a < dim_; ++a)
      for (int b = 0; b < dim_; ++b)
        e = std::max(e, std::abs(dot(frame_[a], frame_[b]) - (a == b ? 1.0 : 0.0)));
    return e;
  }

 private:
  Point base_;
  std::array<Point, kMaxDim> frame_{};
  std::array<Point, kMaxDim> normal_{};
  int dim_ = 0;
};

/// Euclidean distance from p to the flat: norm of the normal-frame coordinates.
inline double dist_point_flat(const Point& p, const AffineFlat& flat) {
  if (p.n != flat.ambient_dim()) throw UsageError("dist_point_flat: dimension mismatch");
  const Point v = p - flat.base();
  double s = 0.0;
  for (int k = 0; k < flat.ambient_dim() - flat.dim(); ++k) {
    const double t = dot(v, flat.normal(k));
    s += t * t;
  }
  return std::sqrt(s);
}

/// A finite h-net standing in for a set E in R^n.
///
/// Contract: every point of the underlying set lies within `h` of a sample and
/// every sample lies within `h` of the set. `window` marks the region where the
/// sample is complete; it is unbounded for samples of bounded sets and bounded
/// for patches cut out of unbounded sets (planes, graphs).
struct SampledSet {
  std::vector<Point> points;
  double h = 0.0;
  int n = 0;
  int d = 0;
  Box window;

  SampledSet() = default;
  SampledSet(std::vector<Point> pts, double resolution, int ambient, int nominal)
      : points(std::move(pts)), h(resolution), n(ambient), d(nominal), window(Box::everything(ambient)) {}

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  /// Throws UsageError when the structural invariants do not hold.
  void validate() const {
    if (n < 1 || n > kMaxDim) throw UsageError("ambient dimension must be in 1..4");
    if (d < 0 || d >= n) throw UsageError("nominal dimension must satisfy 0 <= d < n");
    if (!(h > 0.0)) throw UsageError("resolution h must be positive");
    if (points.empty()) throw UsageError("sampled set is empty");
    for (const auto& p : points) {
      if (p.n != n) throw UsageError("point dimension does not match ambient dimension");
      if (!p.finite()) throw UsageError("point has a non-finite coordinate");
    }
  }
};

/// Exact diameter for small sets, otherwise a 2-approximation refined by a
/// double sweep; used only for scale bookkeeping.
inline double diameter(std::span<const Point> pts) {
  if (pts.size() < 2) return 0.0;
  if (pts.size() <= 2048) {
    double best = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i)
      for (std::size_t j = i + 1; j < pts.size(); ++j) best = std::max(best, dist2(pts[i], pts[j]));
    return std::sqrt(best);
  }
  // Bounding-box diagonal bounds the diameter from above; double sweeps from
  // the extreme points of every axis bound it from below.
  double best = 0.0;
  const int n = pts[0].n;
  for (int axis = 0; axis < n; ++axis) {
    auto [mn, mx] = std::minmax_element(pts.begin(), pts.end(),
                                        [axis](const Point& a, const Point& b) { return a[axis] < b[axis]; });
    for (const Point* start : {&*mn, &*mx}) {
      const Point* far = start;
      for (int sweep = 0; sweep < 3; ++sweep) {
        double fd = 0.0;
        const Point* next = far;
        for (const auto& p : pts) {
          const double t = dist2(*far, p);
          if (t > fd) {
            fd = t;
            next = &p;
          }
        }
        best = std::max(best, fd);
        far = next;
      }
    }
  }
  return std::sqrt(best);
}

inline Box bounding_box(std::span<const Point> pts) {
  if (pts.empty()) throw UsageError("bounding_box of empty set");
  Box b;
  b.lo = pts[0];
  b.hi = pts[0];
  for (const auto& p : pts)
    for (int i = 0; i < p.n; ++i) {
      b.lo[i] = std::min(b.lo[i], p[i]);
      b.hi[i] = std::max(b.hi[i], p[i]);
    }
  return b;
}

}  // namespace flatness
