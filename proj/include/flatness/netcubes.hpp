#pragma once

// Christ-David cubes on a sample, built from nested maximal lambda^k-nets.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "flatness/geom.hpp"
#include "flatness/kdtree.hpp"
#include "flatness/nets.hpp"

namespace flatness {

struct NetCube {
  std::size_t id = 0;
  int level = 0;
  std::size_t center_index = 0;  ///< sample index of the net point
  Point center;
  double side = 0.0;  ///< l(Q) = 5 lambda^k diam(E)
  std::size_t parent = KdTree::npos;
  std::vector<std::size_t> children;
  std::vector<std::size_t> members;  ///< sorted sample indices
};

struct CubeTreeCheck {
  bool partition = true;
  bool nesting = true;
  bool outer_containment = true;  ///< Q ⊆ B(zeta_Q, l(Q)) on samples
  bool inner_containment = true;  ///< B(zeta_Q, c5 l(Q)) ∩ E ⊆ Q on samples
  double inner_constant = 0.0;    ///< largest c with B(zeta_Q, c l(Q)) ∩ E ⊆ Q for all Q
  double outer_constant = 0.0;    ///< smallest c with Q ⊆ closed B(zeta_Q, c l(Q)) for all Q
  double separation_constant = 0.0;  ///< min same-level center distance / lambda^k diam
  bool ok() const { return partition && nesting && outer_containment; }
};

class CubeTree {
 public:
  static constexpr double kDefaultLambda = 0.5;
  static constexpr double kDefaultC5 = 1.0 / 500.0;

  /// Deepest level k with 5 lambda^k diam(E) >= 8h.
  static int max_legal_depth(double diam, double h, double lambda) {
    if (!(diam > 0.0)) return 0;
    int k = 0;
    while (5.0 * std::pow(lambda, k + 1) * diam >= kResolutionFloor * h) ++k;
    return k;
  }

  CubeTree() = default;

  CubeTree(const SampledSet& E, double lambda, int depth, double c5 = kDefaultC5)
      : lambda_(lambda), c5_(c5), depth_(depth), n_(E.n) {
    E.validate();
    if (!(lambda > 0.0 && lambda <= 0.5)) throw UsageError("lambda must lie in (0, 1/2]");
    if (depth < 0) throw UsageError("depth must be nonnegative");
    diam_ = diameter(E.points);
    const int legal = max_legal_depth(diam_, E.h, lambda);
    if (depth > legal)
      throw ResolutionError("cube tree depth " + std::to_string(depth) + " exceeds the resolution floor; max legal depth is " +
                            std::to_string(legal));
    build(E);
  }

  double lambda() const { return lambda_; }
  double c5() const { return c5_; }
  int depth() const { return depth_; }
  double diam() const { return diam_; }
  int ambient_dim() const { return n_; }

  const std::vector<NetCube>& cubes() const { return cubes_; }
  const NetCube& cube(std::size_t id) const { return cubes_[id]; }
  std::size_t size() const { return cubes_.size(); }
  /// Cube ids of one level, in id order.
  const std::vector<std::size_t>& level(int k) const { return levels_[static_cast<std::size_t>(k)]; }
  std::size_t root() const { return 0; }

  /// Cube of a given level containing sample i.
  std::size_t cube_of(std::size_t sample, int k) const {
    return membership_[static_cast<std::size_t>(k)][sample];
  }

  const std::vector<std::size_t>& children(std::size_t id) const { return cubes_[id].children; }

  Ball ball(std::size_t id, double C) const { return Ball(cubes_[id].center, C * cubes_[id].side); }

  /// Q and all its descendants, breadth-first (hence level-ordered).
  std::vector<std::size_t> descendants(std::size_t id) const {
    std::vector<std::size_t> out{id};
    for (std::size_t i = 0; i < out.size(); ++i)
      for (auto c : cubes_[out[i]].children) out.push_back(c);
    return out;
  }

  CubeTreeCheck check(const SampledSet& E) const {
    CubeTreeCheck r;
    r.inner_constant = std::numeric_limits<double>::infinity();
    r.separation_constant = std::numeric_limits<double>::infinity();
    KdTree index(E.points);
    for (int k = 0; k <= depth_; ++k) {
      std::vector<int> seen(E.points.size(), 0);
      for (auto id : level(k))
        for (auto s : cubes_[id].members) ++seen[s];
      for (int c : seen)
        if (c != 1) r.partition = false;
      const double sep = std::pow(lambda_, k) * diam_;
      const auto& ids = level(k);
      if (ids.size() > 1 && sep > 0.0) {
        std::vector<Point> centers;
        for (auto id : ids) centers.push_back(cubes_[id].center);
        KdTree ci(centers);
        for (std::size_t a = 0; a < centers.size(); ++a) {
          const auto near = ci.radius(centers[a], 2.0 * sep);
          for (auto b : near)
            if (b != a) r.separation_constant = std::min(r.separation_constant, dist(centers[a], centers[b]) / sep);
        }
      }
    }
    for (const auto& q : cubes_) {
      if (q.parent != KdTree::npos) {
        const auto& pm = cubes_[q.parent].members;
        if (!std::includes(pm.begin(), pm.end(), q.members.begin(), q.members.end())) r.nesting = false;
      }
      double far = 0.0;
      for (auto s : q.members) far = std::max(far, dist(E.points[s], q.center));
      r.outer_constant = std::max(r.outer_constant, far / q.side);
      if (far >= q.side) r.outer_containment = false;
      // Nearest sample outside Q measures the achieved inner constant.
      const auto near = index.radius(q.center, q.side);
      double inner = 1.0;
      for (auto s : near)
        if (!std::binary_search(q.members.begin(), q.members.end(), s))
          inner = std::min(inner, dist(E.points[s], q.center) / q.side);
      r.inner_constant = std::min(r.inner_constant, inner);
    }
    r.inner_containment = r.inner_constant >= c5_;
    return r;
  }

 private:
  void build(const SampledSet& E) {
    const auto& pts = E.points;
    // Level 0 is the single net point 0; each deeper net extends the previous one.
    std::vector<std::vector<std::size_t>> nets;
    nets.push_back({0});
    for (int k = 1; k <= depth_; ++k) {
      const double sep = std::pow(lambda_, k) * diam_;
      nets.push_back(sep > 0.0 ? maximal_net(pts, sep, nets.back()) : nets.back());
    }
    levels_.assign(static_cast<std::size_t>(depth_) + 1, {});
    membership_.assign(static_cast<std::size_t>(depth_) + 1, std::vector<std::size_t>(pts.size(), 0));
    std::vector<std::size_t> first_id;
    for (int k = 0; k <= depth_; ++k) {
      first_id.push_back(cubes_.size());
      for (auto s : nets[static_cast<std::size_t>(k)]) {
        NetCube q;
        q.id = cubes_.size();
        q.level = k;
        q.center_index = s;
        q.center = pts[s];
        q.side = 5.0 * std::pow(lambda_, k) * diam_;
        levels_[static_cast<std::size_t>(k)].push_back(q.id);
        cubes_.push_back(std::move(q));
      }
    }
    // Parent of a level-(k+1) net point: nearest level-k net point (lowest index on ties).
    for (int k = 1; k <= depth_; ++k) {
      std::vector<Point> up;
      for (auto s : nets[static_cast<std::size_t>(k - 1)]) up.push_back(pts[s]);
      KdTree ui(up);
      for (auto id : levels_[static_cast<std::size_t>(k)]) {
        const auto [j, d2] = ui.nearest(cubes_[id].center);
        const std::size_t pid = first_id[static_cast<std::size_t>(k - 1)] + j;
        cubes_[id].parent = pid;
        cubes_[pid].children.push_back(id);
      }
    }
    // Samples go to the nearest deepest-level net point; coarser membership
    // follows the parent links so that cubes nest.
    {
      std::vector<Point> deep;
      for (auto s : nets.back()) deep.push_back(pts[s]);
      KdTree di(deep);
      const std::size_t base = first_id.back();
      for (std::size_t i = 0; i < pts.size(); ++i) {
        std::size_t id = base + di.nearest(pts[i]).first;
        for (int k = depth_; k >= 0; --k) {
          membership_[static_cast<std::size_t>(k)][i] = id;
          cubes_[id].members.push_back(i);
          id = cubes_[id].parent;
        }
      }
    }
  }

  double lambda_ = kDefaultLambda;
  double c5_ = kDefaultC5;
  int depth_ = 0;
  int n_ = 0;
  double diam_ = 0.0;
  std::vector<NetCube> cubes_;
  std::vector<std::vector<std::size_t>> levels_;
  std::vector<std::vector<std::size_t>> membership_;
};

}  // namespace flatness
