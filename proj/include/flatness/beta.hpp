#pragma once

// Flatness coefficients: beta_inf, content beta^{d,p} (exact Choquet integral
// against dyadic content), and bilateral BWGL distances.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "flatness/dyadic.hpp"
#include "flatness/flat_search.hpp"
#include "flatness/kdtree.hpp"
#include "flatness/netcubes.hpp"
#include "flatness/nets.hpp"
#include "flatness/parallel.hpp"

namespace flatness {

/// p(d) = 2d/(d-2) for d > 2, infinity otherwise.
inline double p_cutoff(int d) {
  return d > 2 ? 2.0 * d / (d - 2.0) : std::numeric_limits<double>::infinity();
}

struct BetaConfig {
  int d = 1;
  double p = 2.0;
  double C0 = 2.0;
  double A = 2.0;
  double eps = 0.05;
  SearchBudget budget;
  std::uint64_t seed = 0;
  bool compute_bwgl = true;

  void validate(int n) const {
    if (d < 1 || d >= n) throw UsageError("d must satisfy 0 < d < n");
    if (!(p >= 1.0) || !(p < p_cutoff(d))) throw UsageError("p must satisfy 1 <= p < p(d)");
    if (!(C0 >= 1.0)) throw UsageError("C0 must be >= 1");
    if (!(A > 1.0)) throw UsageError("A must be > 1");
    if (!(eps > 0.0 && eps < 1.0)) throw UsageError("eps must lie in (0,1)");
    if (budget.restarts < 0 || budget.iterations < 1) throw UsageError("invalid search budget");
  }
};

struct BetaRecord {
  std::size_t cube_id = 0;
  int level = 0;
  double side = 0.0;
  double beta_inf = 0.0;
  double beta_dp = 0.0;
  double p = 2.0;
  double C0 = 2.0;
  AffineFlat best_flat;
  double bwgl_dist = 0.0;
  bool is_bwgl_bad = false;
  bool skipped = false;  ///< resolution floor: ball(Q, C0) radius < 8h
};

struct FlatValue {
  double value = 0.0;
  AffineFlat flat;
};

/// Beta evaluator bound to one sample set; thread-safe for concurrent queries.
class BetaEngine {
 public:
  explicit BetaEngine(const SampledSet& E) : BetaEngine(E, default_floor_level(E.h)) {}

  BetaEngine(const SampledSet& E, int content_floor) : E_(&E), index_(E.points), floor_(content_floor) {
    E.validate();
    if (dyadic_side(content_floor) < E.h) throw ResolutionError("content floor finer than resolution");
  }

  const SampledSet& set() const { return *E_; }
  const KdTree& index() const { return index_; }
  int content_floor() const { return floor_; }

  std::vector<Point> points_in(const Ball& B) const {
    std::vector<Point> out;
    for (auto i : index_.radius(B.center, B.radius)) out.push_back(E_->points[i]);
    return out;
  }

  /// sup_{z in E∩B} dist(z, L) / r for one flat.
  static double beta_inf_of(std::span<const Point> local, const AffineFlat& L, double r) {
    double s = 0.0;
    for (const auto& z : local) s = std::max(s, dist_point_flat(z, L));
    return s / r;
  }

  FlatValue beta_inf(const Ball& B, int d, const SearchBudget& budget, std::uint64_t seed,
                     std::span<const AffineFlat> hints = {}) const {
    check_ball(B, d);
    const auto local = points_in(B);
    if (local.empty()) throw UsageError("beta_inf: E ∩ B is empty");
    std::vector<AffineFlat> starts{pca_flat(local, d, B.center)};
    starts.insert(starts.end(), hints.begin(), hints.end());
    auto res = search_flat(starts, B.radius,
                           [&](const AffineFlat& L) { return beta_inf_of(local, L, B.radius); }, budget, seed);
    return {res.value, res.flat};
  }

  /// Content-beta objective for a fixed ball; reusable across many flats.
  class ContentObjective {
   public:
    ContentObjective(std::vector<Point> local, const Ball& B, int d, double p, int floor)
        : local_(std::move(local)), r_(B.radius), d_(d), p_(p), index_(local_, d, floor), acc_(index_) {}

    double operator()(const AffineFlat& L) {
      const auto& cell = index_.point_cell();
      umax_.assign(index_.num_cells(), 0.0);
      for (std::size_t i = 0; i < local_.size(); ++i) {
        const double u = dist_point_flat(local_[i], L) / r_;
        umax_[cell[i]] = std::max(umax_[cell[i]], u);
      }
      order_.resize(umax_.size());
      std::iota(order_.begin(), order_.end(), std::uint32_t{0});
      std::sort(order_.begin(), order_.end(), [&](auto a, auto b) {
        return umax_[a] > umax_[b] || (umax_[a] == umax_[b] && a < b);
      });
      // H(t) = content of cells with u > t is a step function; integrate
      // H(t) t^{p-1} over [0,1] exactly.
      acc_.reset();
      double integral = 0.0;
      for (std::size_t k = 0; k < order_.size(); ++k) {
        const double hi = std::min(umax_[order_[k]], 1.0);
        if (hi <= 0.0) break;
        acc_.add_cell(order_[k]);
        const double lo = k + 1 < order_.size() ? std::min(umax_[order_[k + 1]], 1.0) : 0.0;
        if (hi > lo) integral += acc_.value() * (std::pow(hi, p_) - std::pow(lo, p_)) / p_;
      }
      return std::pow(integral / std::pow(r_, d_), 1.0 / p_);
    }

    std::span<const Point> local() const { return local_; }

   private:
    std::vector<Point> local_;
    double r_;
    int d_;
    double p_;
    ContentIndex index_;
    ContentIndex::Accumulator acc_;
    std::vector<double> umax_;
    std::vector<std::uint32_t> order_;
  };

  double beta_content_of(const Ball& B, int d, double p, const AffineFlat& L) const {
    check_ball(B, d);
    const auto local = points_in(B);
    if (local.empty()) throw UsageError("beta_content: E ∩ B is empty");
    ContentObjective obj(local, B, d, p, floor_);
    return obj(L);
  }

  FlatValue beta_content(const Ball& B, int d, double p, const SearchBudget& budget, std::uint64_t seed,
                         std::span<const AffineFlat> hints = {}) const {
    check_ball(B, d);
    if (!(p >= 1.0) || !(p < p_cutoff(d))) throw UsageError("p must satisfy 1 <= p < p(d)");
    auto local = points_in(B);
    if (local.empty()) throw UsageError("beta_content: E ∩ B is empty");
    std::vector<AffineFlat> starts{pca_flat(local, d, B.center)};
    starts.insert(starts.end(), hints.begin(), hints.end());
    ContentObjective obj(std::move(local), B, d, p, floor_);
    auto res = search_flat(starts, B.radius, [&](const AffineFlat& L) { return obj(L); }, budget, seed);
    return {res.value, res.flat};
  }

  /// Flat-sampling step for d_B: min(h, diam/64), capped below at diam/256 for d >= 2.
  double bwgl_step(const Ball& B, int d) const {
    double step = flat_grid_step(E_->h, B);
    if (d >= 2) step = std::max(step, B.diameter() / 256.0);
    return step;
  }

  double bwgl_of(const Ball& B, const AffineFlat& L) const {
    return local_hausdorff(*E_, index_, L, B, bwgl_step(B, L.dim()));
  }

  /// inf over flats of d_B(E, L); the search runs on a coarse flat grid and the
  /// best candidates are re-evaluated on the fine grid.
  FlatValue bwgl(const Ball& B, int d, const SearchBudget& budget, std::uint64_t seed,
                 std::span<const AffineFlat> hints = {}) const {
    check_ball(B, d);
    const auto local = points_in(B);
    std::vector<AffineFlat> starts{pca_flat(local, d, B.center)};
    starts.insert(starts.end(), hints.begin(), hints.end());
    const double fine = bwgl_step(B, d);
    const double coarse = std::max(fine, B.diameter() / 32.0);
    const Box* window = E_->window.restricts() ? &E_->window : nullptr;
    auto objective = [&](const AffineFlat& L) {
      double s = 0.0;
      for (const auto& z : local) s = std::max(s, dist_point_flat(z, L));
      for (const auto& g : flat_grid_in_ball(L, B, coarse, window)) s = std::max(s, index_.nearest_dist(g));
      return 2.0 / B.diameter() * s;
    };
    auto res = search_flat(starts, B.radius, objective, budget, seed);
    FlatValue best{std::numeric_limits<double>::infinity(), res.flat};
    std::vector<AffineFlat> finalists = starts;
    finalists.push_back(res.flat);
    for (const auto& L : finalists) {
      const double v = local_hausdorff(*E_, index_, L, B, fine);
      if (v < best.value) best = {v, L};
    }
    return best;
  }

 private:
  void check_ball(const Ball& B, int d) const {
    if (B.center.n != E_->n) throw UsageError("ball dimension mismatch");
    if (d < 1 || d >= E_->n) throw UsageError("d must satisfy 0 < d < n");
    if (B.radius < kResolutionFloor * E_->h)
      throw ResolutionError("ball radius below the resolution floor 8h");
  }

  const SampledSet* E_;
  KdTree index_;
  int floor_;
};

// Convenience wrappers building a temporary engine.
inline FlatValue beta_inf(const SampledSet& E, const Ball& B, int d, const SearchBudget& budget = {},
                          std::uint64_t seed = 0) {
  return BetaEngine(E).beta_inf(B, d, budget, seed);
}

inline FlatValue beta_content(const SampledSet& E, const Ball& B, int d, double p, const SearchBudget& budget = {},
                              std::uint64_t seed = 0) {
  return BetaEngine(E).beta_content(B, d, p, budget, seed);
}

inline std::uint64_t cube_seed(std::uint64_t seed, std::size_t id) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (static_cast<std::uint64_t>(id) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline BetaRecord beta_of_cube(const CubeTree& tree, std::size_t id, const BetaEngine& engine, const BetaConfig& cfg) {
  const NetCube& q = tree.cube(id);
  BetaRecord rec;
  rec.cube_id = id;
  rec.level = q.level;
  rec.side = q.side;
  rec.p = cfg.p;
  rec.C0 = cfg.C0;
  const Ball b = tree.ball(id, cfg.C0);
  if (b.radius < kResolutionFloor * engine.set().h) {
    rec.skipped = true;
    return rec;
  }
  const std::uint64_t s = cube_seed(cfg.seed, id);
  const auto bi = engine.beta_inf(b, cfg.d, cfg.budget, s);
  const AffineFlat hint[] = {bi.flat};
  const auto bc = engine.beta_content(b, cfg.d, cfg.p, cfg.budget, s + 1, hint);
  rec.beta_inf = bi.value;
  rec.beta_dp = bc.value;
  rec.best_flat = bc.flat;
  if (cfg.compute_bwgl) {
    const AffineFlat hints[] = {bi.flat, bc.flat};
    const auto bw = engine.bwgl(tree.ball(id, cfg.A), cfg.d, cfg.budget, s + 2, hints);
    rec.bwgl_dist = bw.value;
    rec.is_bwgl_bad = bw.value >= cfg.eps;
  }
  return rec;
}

/// Records for every cube of the tree, indexed by cube id.
inline std::vector<BetaRecord> beta_batch(const CubeTree& tree, const BetaEngine& engine, const BetaConfig& cfg,
                                          unsigned threads = 1) {
  cfg.validate(tree.ambient_dim());
  std::vector<BetaRecord> out(tree.size());
  parallel_for(tree.size(), threads, [&](std::size_t i) { out[i] = beta_of_cube(tree, i, engine, cfg); });
  return out;
}

}  // namespace flatness
