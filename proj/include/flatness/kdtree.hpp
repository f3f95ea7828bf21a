#pragma once

// Static k-d tree over a point array. Built once, queried concurrently.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "flatness/geom.hpp"

namespace flatness {

class KdTree {
 public:
  static constexpr std::size_t kLeafSize = 8;
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  KdTree() = default;

  explicit KdTree(std::span<const Point> pts) : pts_(pts.begin(), pts.end()) {
    order_.resize(pts_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (!pts_.empty()) {
      nodes_.reserve(2 * pts_.size() / kLeafSize + 2);
      build(0, pts_.size());
    }
  }

  /// Optional per-point weights enabling weighted_nearest().
  void set_weights(std::vector<double> w) {
    if (w.size() != pts_.size()) throw UsageError("KdTree weights: size mismatch");
    weights_ = std::move(w);
    if (!nodes_.empty()) fill_min_weight(0);
  }

  std::size_t size() const { return pts_.size(); }
  bool empty() const { return pts_.empty(); }
  const Point& point(std::size_t i) const { return pts_[i]; }
  std::span<const Point> points() const { return pts_; }

  /// Index of the nearest point (ties by lowest index) and its squared distance.
  std::pair<std::size_t, double> nearest(const Point& q) const {
    std::size_t best = npos;
    double bd = std::numeric_limits<double>::infinity();
    if (!nodes_.empty()) nearest_rec(0, q, best, bd);
    return {best, bd};
  }

  double nearest_dist(const Point& q) const {
    auto [i, d2] = nearest(q);
    return i == npos ? std::numeric_limits<double>::infinity() : std::sqrt(d2);
  }

  /// min over points y of weight(y) + |q - y|; requires set_weights().
  double weighted_nearest(const Point& q) const {
    if (weights_.empty()) throw UsageError("KdTree: weights not set");
    double best = std::numeric_limits<double>::infinity();
    if (!nodes_.empty()) weighted_rec(0, q, best);
    return best;
  }

  /// min over points y of weight(y) + dist(y, b), i.e. the infimum over the
  /// box of the weighted nearest distance.
  double weighted_nearest(const Box& b) const {
    if (weights_.empty()) throw UsageError("KdTree: weights not set");
    double best = std::numeric_limits<double>::infinity();
    if (!nodes_.empty()) weighted_rec(0, b, best);
    return best;
  }

  /// Indices of points with |p - c| < r, in increasing index order.
  std::vector<std::size_t> radius(const Point& c, double r) const {
    std::vector<std::size_t> out;
    if (!nodes_.empty() && r > 0.0) radius_rec(0, c, r * r, out);
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Whether some point satisfies |p - c| < r.
  bool any_within(const Point& c, double r) const {
    return !nodes_.empty() && r > 0.0 && any_rec(0, c, r * r);
  }

 private:
  struct Node {
    Box box;
    std::size_t begin = 0, end = 0;
    std::size_t left = npos, right = npos;
    double min_weight = 0.0;
  };

  std::size_t build(std::size_t begin, std::size_t end) {
    const std::size_t id = nodes_.size();
    nodes_.push_back({});
    Box box;
    box.lo = pts_[order_[begin]];
    box.hi = box.lo;
    for (std::size_t i = begin; i < end; ++i) {
      const Point& p = pts_[order_[i]];
      for (int a = 0; a < p.n; ++a) {
        box.lo[a] = std::min(box.lo[a], p[a]);
        box.hi[a] = std::max(box.hi[a], p[a]);
      }
    }
    nodes_[id].box = box;
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    if (end - begin > kLeafSize) {
      int axis = 0;
      double spread = -1.0;
      for (int a = 0; a < box.lo.n; ++a)
        if (box.hi[a] - box.lo[a] > spread) {
          spread = box.hi[a] - box.lo[a];
          axis = a;
        }
      if (spread > 0.0) {
        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                         order_.begin() + static_cast<std::ptrdiff_t>(mid),
                         order_.begin() + static_cast<std::ptrdiff_t>(end),
                         [&](std::size_t a, std::size_t b) {
                           const double pa = pts_[a][axis], pb = pts_[b][axis];
                           return pa < pb || (pa == pb && a < b);
                         });
        const std::size_t l = build(begin, mid);
        const std::size_t r = build(mid, end);
        nodes_[id].left = l;
        nodes_[id].right = r;
      }
    }
    return id;
  }

  double fill_min_weight(std::size_t id) {
    Node& nd = nodes_[id];
    double m = std::numeric_limits<double>::infinity();
    if (nd.left == npos) {
      for (std::size_t i = nd.begin; i < nd.end; ++i) m = std::min(m, weights_[order_[i]]);
    } else {
      const double l = fill_min_weight(nd.left);
      const double r = fill_min_weight(nodes_[id].right);
      m = std::min(l, r);
    }
    nodes_[id].min_weight = m;
    return m;
  }

  void nearest_rec(std::size_t id, const Point& q, std::size_t& best, double& bd) const {
    const Node& nd = nodes_[id];
    if (dist2(nd.box, q) > bd) return;
    if (nd.left == npos) {
      for (std::size_t i = nd.begin; i < nd.end; ++i) {
        const std::size_t k = order_[i];
        const double t = dist2(pts_[k], q);
        if (t < bd || (t == bd && k < best)) {
          bd = t;
          best = k;
        }
      }
      return;
    }
    const double dl = dist2(nodes_[nd.left].box, q);
    const double dr = dist2(nodes_[nd.right].box, q);
    if (dl <= dr) {
      nearest_rec(nd.left, q, best, bd);
      nearest_rec(nd.right, q, best, bd);
    } else {
      nearest_rec(nd.right, q, best, bd);
      nearest_rec(nd.left, q, best, bd);
    }
  }

  template <class Q>
  void weighted_rec(std::size_t id, const Q& q, double& best) const {
    const Node& nd = nodes_[id];
    if (nd.min_weight + dist(nd.box, q) >= best) return;
    if (nd.left == npos) {
      for (std::size_t i = nd.begin; i < nd.end; ++i) {
        const std::size_t k = order_[i];
        best = std::min(best, weights_[k] + dist(q, pts_[k]));
      }
      return;
    }
    const double dl = nodes_[nd.left].min_weight + dist(nodes_[nd.left].box, q);
    const double dr = nodes_[nd.right].min_weight + dist(nodes_[nd.right].box, q);
    if (dl <= dr) {
      weighted_rec(nd.left, q, best);
      weighted_rec(nd.right, q, best);
    } else {
      weighted_rec(nd.right, q, best);
      weighted_rec(nd.left, q, best);
    }
  }

  void radius_rec(std::size_t id, const Point& c, double r2, std::vector<std::size_t>& out) const {
    const Node& nd = nodes_[id];
    if (dist2(nd.box, c) >= r2) return;
    if (nd.left == npos) {
      for (std::size_t i = nd.begin; i < nd.end; ++i)
        if (dist2(pts_[order_[i]], c) < r2) out.push_back(order_[i]);
      return;
    }
    radius_rec(nd.left, c, r2, out);
    radius_rec(nd.right, c, r2, out);
  }

  bool any_rec(std::size_t id, const Point& c, double r2) const {
    const Node& nd = nodes_[id];
    if (dist2(nd.box, c) >= r2) return false;
    if (nd.left == npos) {
      for (std::size_t i = nd.begin; i < nd.end; ++i)
        if (dist2(pts_[order_[i]], c) < r2) return true;
      return false;
    }
    return any_rec(nd.left, c, r2) || any_rec(nd.right, c, r2);
  }

  std::vector<Point> pts_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  std::vector<double> weights_;
};

}  // namespace flatness
