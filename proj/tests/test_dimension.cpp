#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "flatness/dimension.hpp"
#include "flatness/gen.hpp"

using namespace flatness;

namespace {

SampledSet segment(double h, double y = 0.3) {
  std::vector<Point> pts;
  for (double x = 0.0; x < 1.0; x += h) pts.push_back(Point{x, y});
  return SampledSet(std::move(pts), h, 2, 1);
}

SampledSet koch(double theta_deg, int depth) {
  GeneratorSpec s;
  s.kind = "koch_snowflake";
  s.theta_deg = theta_deg;
  s.depth = depth;
  s.offset_x = 0.2718;
  s.offset_y = 0.1414;
  return generate(s).set;
}

SampledSet cantor(int depth) {
  GeneratorSpec s;
  s.kind = "cantor_4corner";
  s.depth = depth;
  s.offset_x = 0.2718;
  s.offset_y = 0.1414;
  return generate(s).set;
}

struct Run {
  SampledSet E;
  CubeTree tree;
  std::vector<BetaRecord> recs;
};

Run run(SampledSet E, int depth) {
  Run r{std::move(E), {}, {}};
  r.tree = CubeTree(r.E, 0.5, depth);
  const BetaEngine eng(r.E);
  BetaConfig cfg;
  cfg.d = 1;
  cfg.compute_bwgl = false;
  r.recs = beta_batch(r.tree, eng, cfg);
  return r;
}

const DyadicCube kUnit{0, 2, {0, 0}};

}  // namespace

TEST(Wiggliness, FlatSegmentIsZeroAndBoundRefuses) {
  GeneratorSpec s;
  s.kind = "line";
  s.h = 1.0 / 64;
  auto r = run(generate(s).set, 3);
  const auto w = wiggliness(r.tree, r.recs, 0, 1);
  EXPECT_GT(w.covered, 0u);
  EXPECT_LT(w.beta0, 1e-9);
  EXPECT_THROW(bj_dimension_bound(r.E, r.tree, r.recs, 0, 1), UsageError);
}

TEST(Wiggliness, Beta0IsMinAndBetaMDominates) {
  auto r = run(cantor(4), 4);
  const auto w = wiggliness(r.tree, r.recs, 0, 1);
  ASSERT_GT(w.beta0, 0.0);
  for (const auto& rec : r.recs)
    if (!rec.skipped) EXPECT_LE(w.beta0, rec.beta_dp);
  EXPECT_DOUBLE_EQ(r.recs[w.witness].beta_dp, w.beta0);
  for (std::size_t m = 0; m < w.beta_m.size(); ++m)
    EXPECT_GE(w.beta_m[m], w.beta0 * w.beta0 * w.side_sum[m] * (1 - 1e-12));
}

// The root cube has side 5 diam, so the coarsest balls see the whole set from
// far away; from level 2 on every ball meets the Cantor geometry at its own
// scale and the sup-beta clears the angle-sweep bound.
TEST(Wiggliness, CantorBetaInfAtSelfSimilarScales) {
  auto r = run(cantor(4), 4);
  std::size_t checked = 0;
  for (const auto& rec : r.recs) {
    if (rec.skipped || rec.level < 2) continue;
    EXPECT_GE(rec.beta_inf, 0.1) << "cube " << rec.cube_id << " level " << rec.level;
    ++checked;
  }
  EXPECT_GT(checked, 4u);
}

TEST(NetCount, FlatScalingMatchesLatticeCount) {
  const auto E = segment(1.0 / 2048);
  std::vector<double> cards;
  for (int k = 2; k <= 6; ++k) {
    const auto nc = net_count(E, 1, kUnit, k);
    // One row of 2^(k+2) skeleton cubes; the skeleton spans [0,1] x a strip
    // of height 2^-(k+2), so a 2^-k net has between 2^k and 2^(k+1)+1 points.
    EXPECT_EQ(nc.skeleton_cubes, std::size_t{1} << (k + 2));
    EXPECT_GE(nc.card, std::size_t{1} << k);
    EXPECT_LE(nc.card, (std::size_t{1} << (k + 1)) + 1);
    cards.push_back(static_cast<double>(nc.card));
  }
  for (std::size_t i = 1; i < cards.size(); ++i) EXPECT_NEAR(cards[i] / cards[i - 1], 2.0, 0.2);
}

TEST(NetCount, SinglePointIsOneNetPoint) {
  const SampledSet E({Point{0.3, 0.7}}, 1e-4, 2, 1);
  for (int k = 0; k <= 8; ++k) EXPECT_EQ(net_count(E, 1, kUnit, k).card, 1u) << k;
}

TEST(NetCount, OwnersAreCubesOfIMeetingE) {
  const auto E = cantor(6);
  const DyadicCube I = DyadicCube::containing(E.points[0], 1);
  const auto nc = net_count(E, 1, I, 5);
  ASSERT_EQ(nc.owner.size(), nc.card);
  for (std::size_t i = 0; i < nc.card; ++i) {
    EXPECT_TRUE(nc.owner[i].inside(I));
    bool meets = false;
    for (const auto& p : E.points) meets = meets || nc.owner[i].contains(p);
    EXPECT_TRUE(meets);
    const Box b = nc.owner[i].box();
    for (int a = 0; a < 2; ++a) {
      EXPECT_GE(nc.net[i][a], b.lo[a] - 1e-12);
      EXPECT_LE(nc.net[i][a], b.hi[a] + 1e-12);
    }
  }
}

TEST(NetCount, MonotoneUnderSuperset) {
  const auto E = cantor(6);
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Point> sub;
    std::bernoulli_distribution keep(0.3);
    for (const auto& p : E.points)
      if (keep(rng)) sub.push_back(p);
    for (int k = 2; k <= 5; ++k) {
      const auto a = net_count(sub, E.h, 1, kUnit, k);
      const auto b = net_count(E.points, E.h, 1, kUnit, k);
      EXPECT_LE(a.card, b.card) << "trial " << trial << " k " << k;
    }
  }
}

TEST(NetCount, KochGrowthExponent) {
  const auto E = koch(60.0, 7);
  std::vector<double> xs, ys;
  for (int k = 3; k <= 7; ++k) {
    xs.push_back(k);
    ys.push_back(std::log2(static_cast<double>(net_count(E, 1, kUnit, k).card)));
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) mx += xs[i], my += ys[i];
  mx /= static_cast<double>(xs.size());
  my /= static_cast<double>(xs.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) sxy += (xs[i] - mx) * (ys[i] - my), sxx += (xs[i] - mx) * (xs[i] - mx);
  EXPECT_NEAR(sxy / sxx, std::log(4.0) / std::log(3.0), 0.15);
}

TEST(NetCount, ResolutionFloorAndArguments) {
  const auto E = segment(1.0 / 64);
  EXPECT_THROW(net_count(E, 1, kUnit, 5), ResolutionError);
  EXPECT_THROW(net_count(E, 1, DyadicCube{3, 2, {0, 0}}, 2), UsageError);
  EXPECT_THROW(net_count(E, 1, kUnit, 2, 0.3), UsageError);
}

TEST(BoxDimension, Segment) { EXPECT_NEAR(box_dimension(segment(1.0 / 4096)).slope, 1.0, 0.05); }

TEST(BoxDimension, Square) {
  const double h = 1.0 / 256;
  std::vector<Point> pts;
  for (double x = 0.0; x < 1.0; x += h)
    for (double y = 0.0; y < 1.0; y += h) pts.push_back(Point{x, y, 0.3});
  EXPECT_NEAR(box_dimension(SampledSet(std::move(pts), h, 3, 2)).slope, 2.0, 0.05);
}

TEST(BoxDimension, Koch60) { EXPECT_NEAR(box_dimension(koch(60.0, 7)).slope, std::log(4.0) / std::log(3.0), 0.05); }

TEST(BoxDimension, Cantor) { EXPECT_NEAR(box_dimension(cantor(6)).slope, 1.0, 0.1); }

TEST(BoxDimension, NeedsTwoLevels) {
  EXPECT_THROW(box_dimension(std::vector<Point>{Point{0.0, 0.0}}, 3, 3), UsageError);
}

TEST(Bound, NestedFamiliesSatisfyFrostmanBookkeeping) {
  auto r = run(koch(60.0, 5), 4);
  const auto est = bj_dimension_bound(r.E, r.tree, r.recs, 0, 1, 2);
  EXPECT_EQ(est.kappa, 2);
  ASSERT_GE(est.families.size(), 2u);
  EXPECT_TRUE(est.mass_conserved);
  EXPECT_TRUE(est.nested);
  EXPECT_TRUE(est.meets_region);
  EXPECT_TRUE(est.mass_bound);
  const auto tops = cubes_meeting(r.E.points, est.top_level);
  std::vector<DyadicCube> prev = tops;
  for (const auto& L : est.families) {
    EXPECT_EQ(L.level, est.top_level + 2 * (&L - est.families.data() + 1));
    Rational total = 0;
    for (std::size_t t = 0; t < L.cubes.size(); ++t) {
      total += L.mass[t];
      EXPECT_TRUE(L.cubes[t].inside(prev[L.parent[t]]));
    }
    EXPECT_EQ(total, 1);
    EXPECT_TRUE(std::is_sorted(L.parent.begin(), L.parent.end()));
    EXPECT_LE(L.min_children, L.min_card);
    prev = L.cubes;
  }
  EXPECT_GT(est.implied_exponent, 0.0);
}

TEST(Bound, KappaFromBeta0IsClamped) {
  auto r = run(koch(60.0, 5), 4);
  const auto est = bj_dimension_bound(r.E, r.tree, r.recs, 0, 1);
  EXPECT_EQ(est.kappa_wanted, static_cast<int>(std::ceil(1.0 / (est.beta0 * est.beta0))));
  EXPECT_TRUE(est.partial);
  EXPECT_EQ(est.kappa, default_floor_level(r.E.h) - est.top_level);
  EXPECT_EQ(est.families.size(), 1u);
}
