#pragma once

// Deterministic generators of sample sets with known ground truth.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "flatness/geom.hpp"

namespace flatness {

struct GeneratorSpec {
  std::string kind = "plane";  ///< plane | line | lipschitz_graph | reifenberg_perturbed_plane |
                               ///< cantor_4corner | cantor_8corner_3d | koch_snowflake |
                               ///< polygonal_curve | sphere
  int n = 0;                   ///< ambient dimension (0: kind default)
  int d = 0;                   ///< nominal dimension (0: kind default)
  double h = 1.0 / 32.0;       ///< sample spacing for continuum kinds
  int depth = 5;               ///< IFS depth for self-similar kinds
  double theta_deg = 60.0;     ///< Koch angle
  double param = 0.5;          ///< Lipschitz constant, perturbation delta
  int vertices = 6;            ///< polygonal_curve vertex count
  double offset_x = 0.0;       ///< translation of self-similar sets
  double offset_y = 0.0;
  std::uint64_t seed = 1;
};

struct GroundTruth {
  int d = 0;
  std::optional<double> analytic_dimension;
  std::optional<double> lipschitz_constant;
  std::optional<double> length;  ///< curves
  bool flat = false;
};

struct Generated {
  SampledSet set;
  GroundTruth truth;
};

namespace gen_detail {

/// Regular grid on [0,1]^d with spacing <= step, endpoints included.
inline std::vector<std::vector<double>> unit_grid(int d, double step) {
  const auto m = static_cast<std::int64_t>(std::ceil(1.0 / step - 1e-9));
  std::vector<std::vector<double>> out;
  std::vector<std::int64_t> idx(static_cast<std::size_t>(d), 0);
  while (true) {
    std::vector<double> p(static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k) p[static_cast<std::size_t>(k)] = static_cast<double>(idx[static_cast<std::size_t>(k)]) / static_cast<double>(m);
    out.push_back(std::move(p));
    int k = 0;
    while (k < d && ++idx[static_cast<std::size_t>(k)] > m) {
      idx[static_cast<std::size_t>(k)] = 0;
      ++k;
    }
    if (k == d) break;
  }
  return out;
}

inline Box graph_window(int n, int d) {
  Box w = Box::everything(n);
  for (int k = 0; k < d; ++k) {
    w.lo[k] = 0.0;
    w.hi[k] = 1.0;
  }
  return w;
}

/// Graph of f over [0,1]^(n-1) sampled so that consecutive samples lie within h.
template <class F>
SampledSet graph_sample(int n, double h, double lip, F&& f) {
  const int d = n - 1;
  const double step = h / std::sqrt((1.0 + lip * lip) * d);
  std::vector<Point> pts;
  for (const auto& u : unit_grid(d, step)) {
    Point p(n);
    for (int k = 0; k < d; ++k) p[k] = u[static_cast<std::size_t>(k)];
    p[n - 1] = f(u);
    pts.push_back(p);
  }
  SampledSet s(std::move(pts), h, n, d);
  s.window = graph_window(n, d);
  return s;
}

/// Piecewise-linear zigzag on [0,1] with slopes in [-L, L], seeded knots.
struct Zigzag {
  std::vector<double> values;
  double operator()(double x) const {
    const double m = static_cast<double>(values.size() - 1);
    const double t = std::clamp(x, 0.0, 1.0) * m;
    const auto i = std::min(static_cast<std::size_t>(t), values.size() - 2);
    const double a = t - static_cast<double>(i);
    return values[i] * (1.0 - a) + values[i + 1] * a;
  }
};

inline Zigzag make_zigzag(double lip, std::uint64_t seed, int knots = 16) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Zigzag z;
  z.values.push_back(0.0);
  for (int i = 0; i < knots; ++i) z.values.push_back(z.values.back() + lip * u(rng) / knots);
  return z;
}

inline double weierstrass(double x, double delta, int terms) {
  double s = 0.0;
  for (int k = 0; k < terms; ++k) {
    const double f = 2.0 * std::numbers::pi * std::ldexp(1.0, k);
    s += std::ldexp(1.0, -(k + 1)) * std::sin(f * x) / f;
  }
  return delta * s;
}

/// Corner Cantor set with maps x -> x/4 + {0, 3/4}^n; samples are the
/// cylinder centers at the given depth.
inline std::vector<Point> corner_cantor(int n, int depth, double offx, double offy) {
  const int maps = 1 << n;
  std::vector<Point> pts;
  std::int64_t total = 1;
  for (int i = 0; i < depth; ++i) total *= maps;
  for (std::int64_t word = 0; word < total; ++word) {
    Point p(n);
    for (int a = 0; a < n; ++a) p[a] = 0.5 * std::pow(0.25, depth);
    std::int64_t w = word;
    double scale = 1.0;
    for (int lvl = 0; lvl < depth; ++lvl) {
      const auto digit = static_cast<int>(w % maps);
      w /= maps;
      for (int a = 0; a < n; ++a)
        if ((digit >> a) & 1) p[a] += 0.75 * scale;
      scale *= 0.25;
    }
    p[0] += offx;
    if (n > 1) p[1] += offy;
    pts.push_back(p);
  }
  return pts;
}

inline std::vector<Point> koch_polyline(double theta, int depth) {
  const double s = 1.0 / (2.0 + 2.0 * std::cos(theta));
  std::vector<Point> pts{Point{0.0, 0.0}, Point{1.0, 0.0}};
  for (int lvl = 0; lvl < depth; ++lvl) {
    std::vector<Point> next{pts.front()};
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
      const Point a = pts[i], b = pts[i + 1];
      const Point v = b - a;
      const Point u = v * s;
      const Point ur{u[0] * std::cos(theta) - u[1] * std::sin(theta), u[0] * std::sin(theta) + u[1] * std::cos(theta)};
      const Point p1 = a + u;
      const Point p2 = p1 + ur;
      const Point p3 = b - u;
      next.push_back(p1);
      next.push_back(p2);
      next.push_back(p3);
      next.push_back(b);
    }
    pts = std::move(next);
  }
  return pts;
}

inline std::vector<Point> densify_polyline(const std::vector<Point>& verts, double h) {
  std::vector<Point> out;
  for (std::size_t i = 0; i + 1 < verts.size(); ++i) {
    const double len = dist(verts[i], verts[i + 1]);
    const auto m = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(len / h)));
    for (std::int64_t k = 0; k < m; ++k) out.push_back(verts[i] + (verts[i + 1] - verts[i]) * (static_cast<double>(k) / static_cast<double>(m)));
  }
  out.push_back(verts.back());
  return out;
}

}  // namespace gen_detail

inline Generated generate(const GeneratorSpec& spec) {
  using namespace gen_detail;
  Generated g;
  const std::string& k = spec.kind;
  if (!(spec.h > 0.0) && k != "cantor_4corner" && k != "cantor_8corner_3d" && k != "koch_snowflake")
    throw UsageError("h must be positive");
  if (spec.h > 0.5 && (k == "plane" || k == "line" || k == "lipschitz_graph" || k == "reifenberg_perturbed_plane" ||
                       k == "polygonal_curve" || k == "sphere"))
    throw UsageError("h must be at most 1/2");

  if (k == "plane" || k == "line") {
    const int n = spec.n ? spec.n : (k == "line" ? 2 : 3);
    const int d = spec.d ? spec.d : (k == "line" ? 1 : n - 1);
    if (n < 2 || n > kMaxDim || d < 1 || d >= n) throw UsageError("plane: need 0 < d < n <= 4");
    std::vector<Point> pts;
    for (const auto& u : unit_grid(d, spec.h)) {
      Point p(n);
      for (int a = 0; a < d; ++a) p[a] = u[static_cast<std::size_t>(a)];
      pts.push_back(p);
    }
    g.set = SampledSet(std::move(pts), spec.h, n, d);
    g.set.window = graph_window(n, d);
    g.truth.d = d;
    g.truth.analytic_dimension = d;
    g.truth.flat = true;
    g.truth.lipschitz_constant = 0.0;
    if (d == 1) g.truth.length = 1.0;
  } else if (k == "lipschitz_graph") {
    const int n = spec.n ? spec.n : 2;
    if (n < 2 || n > kMaxDim) throw UsageError("lipschitz_graph: n in 2..4");
    if (!(spec.param >= 0.0)) throw UsageError("lipschitz_graph: constant must be nonnegative");
    std::vector<Zigzag> z;
    for (int a = 0; a < n - 1; ++a) z.push_back(make_zigzag(spec.param / (n - 1), spec.seed + static_cast<std::uint64_t>(a)));
    g.set = graph_sample(n, spec.h, spec.param, [&](const std::vector<double>& u) {
      double s = 0.0;
      for (int a = 0; a < n - 1; ++a) s += z[static_cast<std::size_t>(a)](u[static_cast<std::size_t>(a)]);
      return s;
    });
    g.truth.d = n - 1;
    g.truth.analytic_dimension = n - 1;
    g.truth.lipschitz_constant = spec.param;
  } else if (k == "reifenberg_perturbed_plane") {
    const int n = spec.n ? spec.n : 2;
    if (n < 2 || n > kMaxDim) throw UsageError("reifenberg_perturbed_plane: n in 2..4");
    if (!(spec.param >= 0.0 && spec.param < 1.0)) throw UsageError("perturbation delta must lie in [0,1)");
    const int terms = std::max(1, static_cast<int>(std::ceil(std::log2(1.0 / spec.h))));
    g.set = graph_sample(n, spec.h, spec.param, [&](const std::vector<double>& u) {
      double s = 0.0;
      for (double x : u) s += weierstrass(x, spec.param, terms);
      return s / static_cast<double>(u.size());
    });
    g.truth.d = n - 1;
    g.truth.analytic_dimension = n - 1;
    g.truth.lipschitz_constant = spec.param;
  } else if (k == "cantor_4corner" || k == "cantor_8corner_3d") {
    const int n = k == "cantor_4corner" ? 2 : 3;
    if (spec.depth < 1 || spec.depth > (n == 2 ? 9 : 6)) throw UsageError("cantor depth out of range");
    auto pts = corner_cantor(n, spec.depth, spec.offset_x, spec.offset_y);
    const double h = std::sqrt(static_cast<double>(n)) * std::pow(0.25, spec.depth);
    g.set = SampledSet(std::move(pts), h, n, spec.d ? spec.d : 1);
    g.truth.d = g.set.d;
    g.truth.analytic_dimension = std::log(1 << n) / std::log(4.0);
  } else if (k == "koch_snowflake") {
    if (!(spec.theta_deg > 0.0 && spec.theta_deg <= 60.0)) throw UsageError("koch angle must lie in (0, 60] degrees");
    if (spec.depth < 1 || spec.depth > 9) throw UsageError("koch depth out of range");
    const double th = spec.theta_deg * std::numbers::pi / 180.0;
    auto pts = koch_polyline(th, spec.depth);
    const double h = std::pow(1.0 / (2.0 + 2.0 * std::cos(th)), spec.depth);
    for (auto& p : pts) {
      p[0] += spec.offset_x;
      p[1] += spec.offset_y;
    }
    g.set = SampledSet(std::move(pts), h, 2, 1);
    g.truth.d = 1;
    g.truth.analytic_dimension = std::log(4.0) / std::log(2.0 + 2.0 * std::cos(th));
  } else if (k == "polygonal_curve") {
    if (spec.vertices < 2) throw UsageError("polygonal_curve needs at least 2 vertices");
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Point> verts;
    for (int i = 0; i < spec.vertices; ++i) verts.push_back(Point{u(rng), u(rng)});
    double len = 0.0;
    for (std::size_t i = 0; i + 1 < verts.size(); ++i) len += dist(verts[i], verts[i + 1]);
    g.set = SampledSet(densify_polyline(verts, spec.h), spec.h, 2, 1);
    g.truth.d = 1;
    g.truth.analytic_dimension = 1.0;
    g.truth.length = len;
  } else if (k == "sphere") {
    const int n = spec.n ? spec.n : 3;
    std::vector<Point> pts;
    if (n == 2) {
      const auto m = static_cast<std::int64_t>(std::ceil(2.0 * std::numbers::pi / spec.h));
      for (std::int64_t i = 0; i < m; ++i) {
        const double t = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(m);
        pts.push_back(Point{std::cos(t), std::sin(t)});
      }
    } else if (n == 3) {
      // Fibonacci lattice; the area per point is kept below h^2 so the covering radius stays under h.
      const auto m = static_cast<std::int64_t>(std::ceil(4.0 * std::numbers::pi / (spec.h * spec.h)));
      const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
      for (std::int64_t i = 0; i < m; ++i) {
        const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(m);
        const double rr = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double t = golden * static_cast<double>(i);
        pts.push_back(Point{rr * std::cos(t), rr * std::sin(t), z});
      }
    } else {
      throw UsageError("sphere: n must be 2 or 3");
    }
    g.set = SampledSet(std::move(pts), spec.h, n, n - 1);
    g.truth.d = n - 1;
    g.truth.analytic_dimension = n - 1;
    if (n == 2) g.truth.length = 2.0 * std::numbers::pi;
  } else {
    throw UsageError("unknown generator kind: " + k);
  }
  return g;
}

}  // namespace flatness
