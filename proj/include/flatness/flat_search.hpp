#pragma once

// Best-flat search: PCA initialization plus seeded multi-start Nelder-Mead over
// a chart of the affine Grassmannian.

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "flatness/geom.hpp"

namespace flatness {

struct SearchBudget {
  int restarts = 3;
  int iterations = 120;  ///< objective evaluations per local search
};

struct FlatSearchResult {
  AffineFlat flat;
  double value = 0.0;
  int evaluations = 0;
};

namespace detail {

inline Eigen::MatrixXd complete_basis(const AffineFlat& L) {
  const int n = L.ambient_dim();
  const int d = L.dim();
  Eigen::MatrixXd Q(n, n);
  int cols = 0;
  auto add = [&](Eigen::VectorXd v) {
    for (int pass = 0; pass < 2; ++pass)
      for (int j = 0; j < cols; ++j) v -= Q.col(j).dot(v) * Q.col(j);
    const double len = v.norm();
    if (len < 1e-8) return;
    Q.col(cols++) = v / len;
  };
  for (int k = 0; k < d; ++k) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = L.direction(k)[i];
    add(v);
  }
  for (int i = 0; i < n && cols < n; ++i) add(Eigen::VectorXd::Unit(n, i));
  return Q;
}

}  // namespace detail

/// Least-squares flat through pts (mean plus top-d principal directions).
/// With fewer than two distinct points the frame falls back to coordinate axes.
inline AffineFlat pca_flat(std::span<const Point> pts, int d, const Point& fallback) {
  const int n = fallback.n;
  if (d < 1 || d >= n) throw UsageError("flat dimension must satisfy 0 < d < n");
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
  if (pts.empty()) {
    for (int i = 0; i < n; ++i) mean[i] = fallback[i];
  } else {
    for (const auto& p : pts)
      for (int i = 0; i < n; ++i) mean[i] += p[i];
    mean /= static_cast<double>(pts.size());
  }
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(n, n);
  for (const auto& p : pts) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = p[i] - mean[i];
    cov.noalias() += v * v.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  std::vector<Point> dirs;
  Point base(n);
  for (int i = 0; i < n; ++i) base[i] = mean[i];
  // Eigenvalues ascend; take the top d and complete with axes if they vanish.
  for (int k = 0; k < d; ++k) {
    Point v(n);
    const auto col = es.eigenvectors().col(n - 1 - k);
    for (int i = 0; i < n; ++i) v[i] = col[i];
    dirs.push_back(v);
  }
  try {
    return AffineFlat(base, dirs);
  } catch (const UsageError&) {
    dirs.clear();
    for (int k = 0; k < d; ++k) {
      Point v(n);
      v[k] = 1.0;
      dirs.push_back(v);
    }
    return AffineFlat(base, dirs);
  }
}

/// Minimizes `objective` over d-flats near the points of a ball of radius r.
/// Starts from `starts` (the first is the chart origin of the first local
/// search) and performs `budget.restarts` further searches from perturbations
/// of the best flat found. The returned value is the best evaluated, so it is
/// an upper bound on the infimum and never exceeds any start's value.
inline FlatSearchResult search_flat(std::span<const AffineFlat> starts, double r,
                                    const std::function<double(const AffineFlat&)>& objective,
                                    const SearchBudget& budget, std::uint64_t seed) {
  if (starts.empty()) throw UsageError("search_flat: no starting flat");
  const int n = starts[0].ambient_dim();
  const int d = starts[0].dim();
  const int m = n - d;
  const int D = d * m + m;

  FlatSearchResult best;
  best.value = std::numeric_limits<double>::infinity();
  auto consider = [&](const AffineFlat& L, double v) {
    ++best.evaluations;
    if (v < best.value) {
      best.value = v;
      best.flat = L;
    }
  };
  for (const auto& s : starts) {
    consider(s, objective(s));
    if (best.value <= 0.0) return best;
  }

  std::mt19937_64 rng(seed ^ 0x5851f42d4c957f2dull);
  std::normal_distribution<double> gauss(0.0, 1.0);

  auto local_search = [&](const AffineFlat& origin, std::vector<double> x0, double step) {
    const Eigen::MatrixXd Q = detail::complete_basis(origin);
    const Point b0 = origin.base();
    auto make = [&](const std::vector<double>& x) -> std::optional<AffineFlat> {
      std::vector<Point> dirs;
      for (int i = 0; i < d; ++i) {
        Point u(n);
        for (int a = 0; a < n; ++a) u[a] = Q(a, i);
        for (int j = 0; j < m; ++j)
          for (int a = 0; a < n; ++a) u[a] += x[static_cast<std::size_t>(i * m + j)] * Q(a, d + j);
        dirs.push_back(u);
      }
      Point base = b0;
      for (int j = 0; j < m; ++j)
        for (int a = 0; a < n; ++a) base[a] += r * x[static_cast<std::size_t>(d * m + j)] * Q(a, d + j);
      try {
        return AffineFlat(base, dirs);
      } catch (const UsageError&) {
        return std::nullopt;
      }
    };
    auto f = [&](const std::vector<double>& x) {
      auto L = make(x);
      if (!L) return std::numeric_limits<double>::infinity();
      const double v = objective(*L);
      consider(*L, v);
      return v;
    };

    // Nelder-Mead with standard coefficients.
    std::vector<std::vector<double>> simplex(static_cast<std::size_t>(D) + 1, x0);
    std::vector<double> fv(static_cast<std::size_t>(D) + 1);
    for (int i = 0; i < D; ++i) simplex[static_cast<std::size_t>(i) + 1][static_cast<std::size_t>(i)] += step;
    int evals = 0;
    for (std::size_t k = 0; k < fv.size(); ++k) {
      fv[k] = f(simplex[k]);
      ++evals;
    }
    while (evals < budget.iterations && best.value > 0.0) {
      std::vector<std::size_t> ord(simplex.size());
      std::iota(ord.begin(), ord.end(), std::size_t{0});
      std::sort(ord.begin(), ord.end(), [&](auto a, auto b) { return fv[a] < fv[b]; });
      const auto lo = ord.front(), hi = ord.back(), second = ord[ord.size() - 2];
      if (fv[hi] - fv[lo] <= 1e-14 * std::max(1.0, std::abs(fv[lo]))) break;
      std::vector<double> centroid(static_cast<std::size_t>(D), 0.0);
      for (std::size_t k = 0; k < simplex.size(); ++k)
        if (k != hi)
          for (int i = 0; i < D; ++i) centroid[static_cast<std::size_t>(i)] += simplex[k][static_cast<std::size_t>(i)] / D;
      auto along = [&](double t) {
        std::vector<double> y(static_cast<std::size_t>(D));
        for (int i = 0; i < D; ++i)
          y[static_cast<std::size_t>(i)] = centroid[static_cast<std::size_t>(i)] +
                                           t * (simplex[hi][static_cast<std::size_t>(i)] - centroid[static_cast<std::size_t>(i)]);
        return y;
      };
      auto xr = along(-1.0);
      const double fr = f(xr);
      ++evals;
      if (fr < fv[lo]) {
        auto xe = along(-2.0);
        const double fe = f(xe);
        ++evals;
        if (fe < fr) {
          simplex[hi] = xe;
          fv[hi] = fe;
        } else {
          simplex[hi] = xr;
          fv[hi] = fr;
        }
      } else if (fr < fv[second]) {
        simplex[hi] = xr;
        fv[hi] = fr;
      } else {
        auto xc = fr < fv[hi] ? along(-0.5) : along(0.5);
        const double fc = f(xc);
        ++evals;
        if (fc < std::min(fr, fv[hi])) {
          simplex[hi] = xc;
          fv[hi] = fc;
        } else {
          for (auto k : ord) {
            if (k == lo) continue;
            for (int i = 0; i < D; ++i)
              simplex[k][static_cast<std::size_t>(i)] =
                  simplex[lo][static_cast<std::size_t>(i)] + 0.5 * (simplex[k][static_cast<std::size_t>(i)] - simplex[lo][static_cast<std::size_t>(i)]);
            fv[k] = f(simplex[k]);
            ++evals;
          }
        }
      }
    }
  };

  local_search(best.flat, std::vector<double>(static_cast<std::size_t>(D), 0.0), 0.1);
  for (int rs = 0; rs < budget.restarts && best.value > 0.0; ++rs) {
    std::vector<double> x0(static_cast<std::size_t>(D));
    for (int i = 0; i < D; ++i) x0[static_cast<std::size_t>(i)] = (i < d * m ? 0.25 : 0.1) * gauss(rng);
    local_search(best.flat, x0, 0.1);
  }
  return best;
}

}  // namespace flatness
