#include <gtest/gtest.h>

#include <numbers>

#include "flatness/gen.hpp"
#include "flatness/tst.hpp"

using namespace flatness;

namespace {

SampledSet line_at(double h, double y = 0.3) {
  std::vector<Point> pts;
  for (double x = 0.0; x <= 1.0 + 1e-12; x += h) pts.push_back(Point{x, y});
  return SampledSet(std::move(pts), h, 2, 1);
}

// Windowed line along the x-axis, as emitted by the generator.
SampledSet window_line(double h) {
  GeneratorSpec s;
  s.kind = "line";
  s.h = h;
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

Run run(SampledSet E, int depth, BetaConfig cfg = {}) {
  Run r{std::move(E), {}, {}};
  r.tree = CubeTree(r.E, 0.5, depth);
  const BetaEngine eng(r.E);
  r.recs = beta_batch(r.tree, eng, cfg);
  return r;
}

}  // namespace

TEST(Balls, LadderHalvesRadius) {
  const auto E = line_at(1.0 / 64);
  const auto balls = ladder_balls(E.points, 0.1, 0.8, 5, 1);
  ASSERT_EQ(balls.size(), 20u);
  EXPECT_DOUBLE_EQ(balls[0].radius, 0.8);
  EXPECT_DOUBLE_EQ(balls[19].radius, 0.1);
  const auto rb = random_balls(E.points, 0.1, 0.8, 50, 2);
  for (const auto& b : rb) {
    EXPECT_GE(b.radius, 0.1);
    EXPECT_LE(b.radius, 0.8);
  }
  EXPECT_EQ(random_balls(E.points, 0.1, 0.8, 50, 2)[7].radius, rb[7].radius);
}

// ---------------------------------------------------------------- regularity

TEST(LowerRegularity, DensePlaneNearOne) {
  GeneratorSpec s;
  s.kind = "plane";
  s.h = 1.0 / 64;
  const auto E = generate(s).set;
  const auto rep = lower_regularity_check(E, 2, 16, 3);
  EXPECT_GT(rep.lower, 0.2);
  EXPECT_LT(rep.lower, 1.5);
  EXPECT_GE(rep.upper, rep.lower);
}

TEST(LowerRegularity, TwoPointsAreNotRegular) {
  SampledSet E({Point{0.0, 0.0}, Point{1.0, 0.0}}, 1.0 / 1024, 2, 1);
  const auto rep = lower_regularity_check(E, 1, 4, 0);
  EXPECT_LT(rep.lower, 0.05);
  EXPECT_GE(rep.lower, 0.0);
}

TEST(LowerRegularity, StableUnderRefinement) {
  const double a = lower_regularity_check(line_at(1.0 / 128), 1, 32, 9).lower;
  const double b = lower_regularity_check(line_at(1.0 / 256), 1, 32, 9).lower;
  EXPECT_GT(a, 0.0);
  EXPECT_NEAR(b / a, 1.0, 0.2);
}

TEST(Ahlfors, SegmentInteriorBallsGiveTwo) {
  SkeletonSet S(2, 1);
  for (int i = 0; i < 16; ++i) {
    Face f;
    f.level = 4;
    f.n = 2;
    f.free_mask = 0b01;
    f.anchor = {i, 0};
    S.insert(f);
  }
  std::vector<Ball> balls;
  for (int k = 0; k < 20; ++k) balls.emplace_back(Point{0.3 + 0.02 * k, 0.0}, 0.05 + 0.01 * k);
  const auto rep = ahlfors_check(S, balls);
  EXPECT_NEAR(rep.lower, 2.0, 0.04);
  EXPECT_NEAR(rep.upper, 2.0, 0.04);
}

TEST(Ahlfors, GridSkeletonBand) {
  SkeletonSet S(2, 1);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) {
      DyadicCube q;
      q.level = 3;
      q.n = 2;
      q.corner = {i, j};
      S.insert_cube_skeleton(q);
    }
  const auto rep = ahlfors_check(S, 1.0 / 16, 1.0, 16, 4);
  EXPECT_GT(rep.lower, 0.5);
  EXPECT_LT(rep.quotient(), 50.0);
  EXPECT_EQ(rep.scales.size(), 5u);
}

TEST(Ahlfors, SinglePointLowerIsZero) {
  SampledSet E({Point{0.5, 0.5}, Point{0.5, 0.5 + 1e-3}}, 1.0 / 1024, 2, 1);
  EXPECT_THROW(ahlfors_check(E, 1, 4), ResolutionError);
  SampledSet F({Point{0.0, 0.0}, Point{0.0, 0.5}}, 1.0 / 1024, 2, 1);
  EXPECT_LT(ahlfors_check(F, 1, 4).lower, 0.05);
}

// ------------------------------------------------------------------ tst sums

TEST(TstSums, LineHasZeroBetaAndNoBwgl) {
  auto r = run(window_line(1.0 / 256), 4);
  const auto rep = tst_sums(r.tree, r.E, r.recs, 0, 1);
  EXPECT_LT(rep.beta_sum, 1e-12);
  EXPECT_LT(rep.beta_inf_sum, 1e-12);
  EXPECT_EQ(rep.bwgl_sum, 0.0);
  EXPECT_NEAR(rep.measure_est, 1.0, 0.05);
  EXPECT_DOUBLE_EQ(rep.diam_term, r.tree.cube(0).side);
}

TEST(TstSums, AdditiveOverChildren) {
  auto r = run(cantor(3), 4);
  const auto root = tst_sums(r.tree, r.E, r.recs, 0, 1);
  double beta = r.recs[0].beta_dp * r.recs[0].beta_dp * r.recs[0].side;
  double bw = r.recs[0].is_bwgl_bad ? r.recs[0].side : 0.0;
  for (auto c : r.tree.children(0)) {
    const auto sub = tst_sums(r.tree, r.E, r.recs, c, 1);
    beta += sub.beta_sum;
    bw += sub.bwgl_sum;
    EXPECT_LE(sub.beta_sum, root.beta_sum);
  }
  EXPECT_NEAR(root.beta_sum, beta, 1e-12);
  EXPECT_NEAR(root.bwgl_sum, bw, 1e-12);
}

TEST(TstSums, MissingRecordsListed) {
  auto r = run(line_at(1.0 / 64), 2);
  r.recs.resize(3);
  try {
    tst_sums(r.tree, r.E, r.recs, 0, 1);
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("missing"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find(" 3"), std::string::npos);
  }
}

TEST(TstSums, CantorBwglTermGrowsWithDepth) {
  std::vector<double> bw, meas;
  for (int depth : {2, 3}) {
    const auto E = cantor(depth);
    auto r = run(E, CubeTree::max_legal_depth(diameter(E.points), E.h, 0.5));
    const auto rep = tst_sums(r.tree, r.E, r.recs, 0, 1);
    // Oracle: every cube of a Cantor set is far from lines at eps = 0.05.
    double all = 0.0;
    for (const auto& q : r.tree.cubes())
      if (!r.recs[q.id].skipped) all += q.side;
    EXPECT_NEAR(rep.bwgl_sum, all, 1e-9);
    bw.push_back(rep.bwgl_sum);
    meas.push_back(rep.measure_est);
  }
  EXPECT_GT(bw[1], bw[0] * 1.15);
  EXPECT_NEAR(meas[1], meas[0], 0.25 * meas[0]);
}

TEST(TstSums, LipschitzGraphBetaBoundedByMeasure) {
  std::vector<double> q;
  for (double h : {1.0 / 128, 1.0 / 256, 1.0 / 512}) {
    GeneratorSpec s;
    s.kind = "lipschitz_graph";
    s.param = 0.3;
    s.h = h;
    BetaConfig cfg;
    cfg.compute_bwgl = false;
    auto r = run(generate(s).set, 4, cfg);
    const auto rep = tst_sums(r.tree, r.E, r.recs, 0, 1);
    q.push_back(rep.beta_sum / rep.measure_est);
  }
  for (double v : q) EXPECT_LT(v, 1.0);
  EXPECT_NEAR(q[2] / q[0], 1.0, 0.3);
}

// ---------------------------------------------------------------- Reifenberg

TEST(Reifenberg, LinePasses) {
  ReifenbergConfig cfg;
  cfg.eps = 0.05;
  cfg.per_scale = 6;
  const auto rep = reifenberg_tc_test(window_line(1.0 / 128), cfg);
  EXPECT_TRUE(rep.pass);
  EXPECT_LT(rep.worst, 0.05);
  for (const auto& s : rep.scales) EXPECT_GT(s.margin, 0.0);
}

TEST(Reifenberg, GentleSineGraphPassesAtCoarseScales) {
  std::vector<Point> pts;
  const double h = 1.0 / 512;
  for (double x = 0.0; x <= 1.0 + 1e-12; x += h) pts.push_back(Point{x, 0.05 * std::sin(2 * std::numbers::pi * x)});
  SampledSet E(std::move(pts), h, 2, 1);
  E.window = Box{Point{0.0, -1.0}, Point{1.0, 1.0}};
  ReifenbergConfig cfg;
  cfg.eps = 0.2;
  cfg.per_scale = 6;
  cfg.radii = {0.4, 0.2, 0.1};
  const auto rep = reifenberg_tc_test(E, cfg);
  EXPECT_TRUE(rep.pass);
  ASSERT_EQ(rep.scales.size(), 3u);
  EXPECT_DOUBLE_EQ(rep.scales[0].radius, 0.4);
}

TEST(Reifenberg, CantorFailsWithWitness) {
  ReifenbergConfig cfg;
  cfg.eps = 0.05;
  cfg.per_scale = 4;
  const auto E = cantor(3);
  const auto rep = reifenberg_tc_test(E, cfg);
  EXPECT_FALSE(rep.pass);
  EXPECT_GE(rep.worst, 0.05);
  EXPECT_GT(rep.witness.radius, 0.0);
}

TEST(Reifenberg, RejectsBadEps) {
  ReifenbergConfig cfg;
  cfg.eps = 1.5;
  EXPECT_THROW(reifenberg_tc_test(line_at(1.0 / 64), cfg), UsageError);
}

// --------------------------------------------------------------------- Sigma

TEST(Sigma, FlatInputIsQ0) {
  auto r = run(window_line(1.0 / 256), 4);
  const auto sg = build_sigma(r.tree, r.E, 0, r.recs, BetaConfig{}, 0.25);
  EXPECT_TRUE(sg.flat());
  EXPECT_TRUE(sg.skeleton.empty());
  EXPECT_EQ(sg.base.size(), r.E.size());
  EXPECT_DOUBLE_EQ(sg.measure(), dyadic_content(r.E, 1));
}

TEST(Sigma, OneBadCubeSkeletonScale) {
  auto r = run(window_line(1.0 / 256), 3);
  const std::size_t id = r.tree.level(2).front();
  r.recs[id].is_bwgl_bad = true;
  const auto sg = build_sigma(r.tree, r.E, 0, r.recs, BetaConfig{}, 0.25);
  ASSERT_EQ(sg.bad.size(), 1u);
  const double s = r.tree.cube(id).side;
  const double side = dyadic_side(sg.k[0]);
  EXPECT_GE(side, s / 8);
  EXPECT_LE(side, s / 2);
  // E_Q lies within sqrt(n) 2^{-k} of the samples of Q.
  const KdTree qi([&] {
    std::vector<Point> p;
    for (auto m : r.tree.cube(id).members) p.push_back(r.E.points[m]);
    return p;
  }());
  for (const auto& f : sg.skeleton.faces()) {
    const Box b = f.box();
    EXPECT_LE(qi.nearest_dist((b.lo + b.hi) * 0.5), std::sqrt(2.0) * side + 1e-12);
  }
  EXPECT_THROW(build_sigma(r.tree, r.E, 0, r.recs, BetaConfig{}, 0.3), UsageError);
}

TEST(Sigma, MeasureBoundedByContentPlusBwgl) {
  const auto E = cantor(3);
  auto r = run(E, CubeTree::max_legal_depth(diameter(E.points), E.h, 0.5));
  const auto rep = tst_sums(r.tree, r.E, r.recs, 0, 1);
  const auto sg = build_sigma(r.tree, r.E, 0, r.recs, BetaConfig{}, 0.25);
  const auto cmp = sigma_comparability(sg, rep, BetaConfig{});
  EXPECT_GT(cmp.measure, 0.0);
  EXPECT_LT(cmp.measure_ratio(), 2.0);
  EXPECT_GT(cmp.forward_ratio(), 0.0);
  EXPECT_NEAR(cmp.forward_ratio() * cmp.inverse_ratio(), 1.0, 1e-12);
  EXPECT_FALSE(cmp.rerun);
}

TEST(Sigma, ContainmentRaisesBeta) {
  const auto E = cantor(2);
  auto r = run(E, 3);
  const auto sg = build_sigma(r.tree, r.E, 0, r.recs, BetaConfig{}, 0.25);
  const SampledSet S = sg.sample();
  const BetaEngine eE(E), eS(S);
  for (const auto& q : r.tree.cubes()) {
    const Ball B = r.tree.ball(q.id, 2.0);
    if (B.radius < kResolutionFloor * S.h) continue;
    const double bE = eE.beta_inf(B, 1, {}, 1).value;
    const double bS = eS.beta_inf(B, 1, {}, 1).value;
    EXPECT_GE(bS, bE - 0.05) << q.id;
  }
}

TEST(Sigma, RerunOnSample) {
  const auto E = cantor(2);
  auto r = run(E, 3);
  const auto rep = tst_sums(r.tree, r.E, r.recs, 0, 1);
  const auto sg = build_sigma(r.tree, r.E, 0, r.recs, BetaConfig{}, 0.25);
  BetaConfig cfg;
  cfg.budget = {1, 40};
  const auto cmp = sigma_comparability(sg, rep, cfg, 0.5, 3);
  EXPECT_TRUE(cmp.rerun);
  EXPECT_GT(cmp.sigma_points, E.size());
  EXPECT_GT(cmp.sigma_ratio(), 0.0);
  EXPECT_TRUE(std::isfinite(cmp.sigma_ratio()));
}
