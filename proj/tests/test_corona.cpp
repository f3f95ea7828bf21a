#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>

#include "flatness/corona.hpp"
#include "flatness/gen.hpp"

using namespace flatness;

namespace {

SampledSet shifted_line(double h, double y) {
  std::vector<Point> pts;
  for (double x = 0.0; x <= 1.0 + 1e-12; x += h) pts.push_back(Point{x, y});
  return SampledSet(std::move(pts), h, 2, 1);
}

DyadicCube cube(int level, std::initializer_list<std::int64_t> corner) {
  DyadicCube q;
  q.level = level;
  q.n = static_cast<int>(corner.size());
  std::size_t i = 0;
  for (auto c : corner) q.corner[i++] = c;
  return q;
}

// Independent Frostman oracle: recursive masses over a map keyed by cube.
std::map<DyadicCube, double> oracle_mu(const std::vector<Point>& pts, int d, int m, int k) {
  std::map<DyadicCube, double> cur;
  for (const auto& p : pts) cur[DyadicCube::containing(p, m)] = std::pow(dyadic_side(m), d);
  for (int j = m; j > k; --j) {
    std::map<DyadicCube, double> up;
    for (const auto& [q, w] : cur) up[q.parent()] += w;
    for (auto& [J, w] : up)
      if (w > 2.0 * std::pow(J.side(), d)) w = std::pow(J.side(), d);
    cur = std::move(up);
  }
  return cur;
}

struct Pipeline {
  SampledSet E;
  CubeTree ct;
  FrostmanState bad;
  StoppingForest F;
};

Pipeline pipeline(SampledSet E, int depth, double M = 4.0, double C0 = 2.0) {
  Pipeline p{std::move(E), {}, {}, {}};
  p.ct = CubeTree(p.E, 0.5, depth);
  p.bad = frostman_bad_cubes(p.E, p.E.d, frostman_level_for(p.ct, depth));
  p.F = build_forest(p.ct, p.E, p.bad, M, C0, depth);
  return p;
}

}  // namespace

// ---------------------------------------------------------------- Frostman

TEST(Frostman, DenseLineOnlyFinestLevelIsBad) {
  const auto E = shifted_line(1.0 / 1024, 0.3);
  const int m = 5;
  const auto st = frostman_bad_cubes(E, 1, m);
  for (const auto& q : st.bad) EXPECT_EQ(q.level, m);
  EXPECT_EQ(st.bad.size(), cubes_meeting(E, m).size());
  EXPECT_LE(st.max_density, 2.0);
}

TEST(Frostman, MatchesOracleMasses) {
  GeneratorSpec s;
  s.kind = "koch_snowflake";
  s.theta_deg = 45;
  s.depth = 6;
  s.offset_x = 0.11;
  s.offset_y = 0.07;
  const auto E = generate(s).set;
  const int m = 5;
  const auto st = frostman_bad_cubes(E, 1, m);
  for (int k = st.top; k <= m; ++k) {
    const auto ref = oracle_mu(E.points, 1, m, k);
    const auto& lev = st.level(k);
    ASSERT_EQ(lev.size(), ref.size()) << "level " << k;
    for (const auto& [q, w] : lev) EXPECT_NEAR(w, ref.at(q), 1e-12);
  }
}

TEST(Frostman, MassNonIncreasingAndDensityBounded) {
  GeneratorSpec s;
  s.kind = "lipschitz_graph";
  s.param = 1.0;
  s.h = 1.0 / 1024;
  const auto E = generate(s).set;
  for (int m = 3; m <= 6; ++m) {
    const auto st = frostman_bad_cubes(E, 1, m);
    for (std::size_t i = 1; i < st.total_mass.size(); ++i) EXPECT_LE(st.total_mass[i], st.total_mass[i - 1] + 1e-12);
    EXPECT_LE(st.max_density, 2.0);
    // Every level-k cube with positive mass lies below a Bad cube or is one.
    for (int k = st.top; k <= m; ++k)
      for (const auto& [q, w] : st.level(k)) {
        if (w > 0 && !st.is_bad(q)) {
          bool below = false;
          for (int j = k + 1; j <= m && !below; ++j)
            for (const auto& b : st.bad)
              if (b.level == j && b.inside(q)) below = true;
          EXPECT_TRUE(below);
        }
      }
  }
}

TEST(Frostman, PackingStableAcrossLevels) {
  const auto E = shifted_line(1.0 / 2048, 0.3);
  std::vector<double> sums;
  for (int m = 4; m <= 8; ++m) sums.push_back(frostman_bad_cubes(E, 1, m).packing_sum());
  const double ref = sums.front();
  for (double v : sums) EXPECT_NEAR(v / ref, 1.0, 0.2);
}

TEST(Frostman, EmptySet) {
  SampledSet E({}, 0.01, 2, 1);
  const auto st = frostman_bad_cubes(E, 1, 3);
  EXPECT_TRUE(st.empty());
  EXPECT_TRUE(st.bad.empty());
  EXPECT_EQ(st.packing_sum(), 0.0);
}

TEST(Frostman, LevelBelowResolutionThrows) {
  const auto E = shifted_line(1.0 / 64, 0.3);
  EXPECT_THROW(frostman_bad_cubes(E, 1, 6), ResolutionError);
}

// ------------------------------------------------------------------ Forest

TEST(Forest, PartitionsAndCoherent) {
  GeneratorSpec s;
  s.kind = "koch_snowflake";
  s.theta_deg = 60;
  s.depth = 6;
  s.offset_x = 0.2718;
  s.offset_y = 0.1414;
  auto P = pipeline(generate(s).set, 6);
  EXPECT_TRUE(P.F.partitions(P.ct));
  for (std::size_t t = 0; t < P.F.trees.size(); ++t) EXPECT_TRUE(P.F.coherent(P.ct, t)) << t;
  EXPECT_EQ(P.F.trees.front().top, 0u);
  // Stop cubes are minimal: none has a child in its own tree.
  for (const auto& tr : P.F.trees)
    for (auto S : tr.stop)
      for (auto c : P.ct.children(S)) EXPECT_FALSE(std::binary_search(tr.cubes.begin(), tr.cubes.end(), c));
}

TEST(Forest, NextIsChildrenOfStop) {
  GeneratorSpec s;
  s.kind = "lipschitz_graph";
  s.param = 2.0;
  s.h = 1.0 / 512;
  auto P = pipeline(generate(s).set, 5);
  for (const auto& tr : P.F.trees) {
    std::set<std::size_t> expect;
    for (auto S : tr.stop)
      for (auto c : P.ct.children(S))
        if (P.ct.cube(c).level <= P.F.k0) expect.insert(c);
    EXPECT_EQ(std::vector<std::size_t>(expect.begin(), expect.end()), tr.next);
  }
}

TEST(Forest, FlatSetHasFewTops) {
  auto P = pipeline(shifted_line(1.0 / 1024, 0.3), 5);
  EXPECT_TRUE(P.F.partitions(P.ct));
  // A flat line stops only at comparable Bad cubes, i.e. at the bottom.
  for (std::size_t t = 1; t < P.F.trees.size(); ++t) EXPECT_GE(P.ct.cube(P.F.trees[t].top).level, 4);
  EXPECT_LE(P.F.generations.size(), 2u);
}

// -------------------------------------------------------- Smoothed distance

TEST(SmoothedDistance, SingleStopCube) {
  SampledSet E({Point{0.0, 0.0}, Point{1.0, 0.0}}, 0.01, 2, 1);
  CubeTree ct(E, 0.5, 0);
  const auto bad = frostman_bad_cubes(E.points, 1, 0, 0);
  const auto F = build_forest(ct, E, bad, 4.0, 2.0, 0);
  ASSERT_EQ(F.trees.front().forest_stop.size(), 1u);
  const double l = ct.cube(0).side;
  EXPECT_NEAR(smoothed_distance(ct, E, F, 0, Point{0.0, 3.0}), l + 3.0, 1e-12);
  EXPECT_NEAR(smoothed_distance(ct, E, F, 0, Point{0.5, 0.0}), l + 0.5, 1e-12);
}

TEST(SmoothedDistance, LipschitzAndBoundedOnStopCubes) {
  GeneratorSpec s;
  s.kind = "koch_snowflake";
  s.theta_deg = 30;
  s.depth = 6;
  s.offset_x = 0.2718;
  s.offset_y = 0.1414;
  auto P = pipeline(generate(s).set, 6);
  const SmoothedDistance dR(P.ct, P.E, P.F, 0);
  for (auto S : P.F.trees[0].forest_stop)
    for (auto i : P.ct.cube(S).members) EXPECT_LE(dR(P.E.points[i]), P.ct.cube(S).side + 1e-12);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.5, 1.5);
  for (int k = 0; k < 300; ++k) {
    const Point x{u(rng), u(rng)}, y{u(rng), u(rng)};
    EXPECT_LE(std::abs(dR(x) - dR(y)), dist(x, y) + 1e-12);
    // Box infimum is a lower bound for every point inside.
    Box b;
    b.lo = Point{std::min(x[0], y[0]), std::min(x[1], y[1])};
    b.hi = Point{std::max(x[0], y[0]), std::max(x[1], y[1])};
    EXPECT_LE(dR(b), std::min(dR(x), dR(y)) + 1e-12);
  }
}

// ----------------------------------------------------------------- Whitney

TEST(Whitney, MaximalDisjointAndRatioBounded) {
  GeneratorSpec s;
  s.kind = "lipschitz_graph";
  s.param = 1.0;
  s.h = 1.0 / 1024;
  auto P = pipeline(generate(s).set, 5);
  const auto fam = whitney_family(P.ct, P.E, P.F, 0, kDefaultTau);
  ASSERT_FALSE(fam.cubes.empty());
  const SmoothedDistance dR(P.ct, P.E, P.F, 0);
  for (std::size_t i = 0; i < fam.cubes.size(); ++i) {
    const auto& I = fam.cubes[i];
    EXPECT_LT(I.side(), fam.tau * dR(I.box()));
    // Maximal: the parent fails the Whitney condition.
    const auto J = I.parent();
    EXPECT_GE(J.side(), fam.tau * dR(J.box()));
    for (std::size_t k = i + 1; k < fam.cubes.size(); ++k) {
      EXPECT_FALSE(fam.cubes[k].inside(I));
      EXPECT_FALSE(I.inside(fam.cubes[k]));
    }
  }
  EXPECT_GT(fam.ratio_min, 0.5 - 1e-12);
  EXPECT_LT(fam.ratio_max, 1.0);
  // Every sample of E in 2 C0 B_R is covered.
  for (const auto& p : P.E.points) {
    if (!fam.region.contains(p)) continue;
    bool hit = false;
    for (const auto& I : fam.cubes) hit |= I.box().contains(p);
    EXPECT_TRUE(hit);
  }
}

TEST(Whitney, AppendixWitnesses) {
  GeneratorSpec s;
  s.kind = "koch_snowflake";
  s.theta_deg = 45;
  s.depth = 7;
  s.offset_x = 0.2718;
  s.offset_y = 0.1414;
  auto P = pipeline(generate(s).set, 6);
  const auto fam = whitney_family(P.ct, P.E, P.F, 0, kDefaultTau);
  const auto w = appendix_witnesses(P.ct, P.F, fam);
  EXPECT_EQ(w.a1_missing, 0u);
  EXPECT_GT(w.a1_min, 0.1);
  EXPECT_LT(w.a1_max, 10.0);
  EXPECT_LT(w.a2_c, 4.0);
}

TEST(Whitney, TinyTauHitsResolution) {
  auto P = pipeline(shifted_line(1.0 / 256, 0.3), 4);
  EXPECT_THROW(whitney_family(P.ct, P.E, P.F, 0, 1.0 / 4096), ResolutionError);
  EXPECT_THROW(whitney_family(P.ct, P.E, P.F, 0, 1.5), UsageError);
}

TEST(Whitney, SkeletonApproximatesE) {
  GeneratorSpec s;
  s.kind = "lipschitz_graph";
  s.param = 0.5;
  s.h = 1.0 / 1024;
  auto P = pipeline(generate(s).set, 5);
  const auto fam = whitney_family(P.ct, P.E, P.F, 0, kDefaultTau);
  const auto T = tile_refinement(fam, 2, 1);
  const auto rep = approximation_error(P.ct, P.E, P.F, fam, T.E_R);
  EXPECT_GT(rep.samples, 0u);
  EXPECT_LT(rep.max_ratio, 1.0);
}

// ------------------------------------------------------------------- Tiles

TEST(Tiles, UniformFamilyCreatesNone) {
  std::vector<DyadicCube> cubes;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) cubes.push_back(cube(2, {i, j}));
  const auto T = tile_refinement(cubes, 2, 1);
  EXPECT_EQ(T.tiles_created, 0u);
  SkeletonSet plain(2, 1);
  for (const auto& q : cubes) plain.insert_cube_skeleton(q);
  EXPECT_EQ(T.E_R.size(), plain.size());
  EXPECT_DOUBLE_EQ(skeleton_measure(T.E_R), skeleton_measure(plain));
}

TEST(Tiles, UnitCubeNextToHalfCube) {
  // [0,1]^2 and [1,1.5]x[0,0.5]: the shared edge x = 1 is tiled at side 1/2.
  const auto T = tile_refinement({cube(0, {0, 0}), cube(1, {2, 0})}, 2, 1);
  Face lo, hi;
  lo.level = hi.level = 1;
  lo.n = hi.n = 2;
  lo.free_mask = hi.free_mask = 0b10;
  lo.anchor = {2, 0};
  hi.anchor = {2, 1};
  EXPECT_TRUE(T.E_R.contains(lo));
  EXPECT_TRUE(T.E_R.contains(hi));
  EXPECT_GE(T.tiles_created, 2u);
  // Exhaustive oracle: the d-family consists of the half-side edges of the
  // unit cube's right edge plus all untouched edges, with no nesting.
  const auto& fam1 = T.families[1];
  for (std::size_t i = 0; i < fam1.size(); ++i)
    for (std::size_t k = 0; k < fam1.size(); ++k)
      if (i != k && fam1[i].free_mask == fam1[k].free_mask) {
        EXPECT_FALSE(box_inside(fam1[i].box(), fam1[k].box()) && fam1[i].level != fam1[k].level);
      }
  // The union measure is unchanged: tiling only refines.
  SkeletonSet plain(2, 1);
  plain.insert_cube_skeleton(cube(0, {0, 0}));
  plain.insert_cube_skeleton(cube(1, {2, 0}));
  EXPECT_DOUBLE_EQ(skeleton_measure(T.E_R), skeleton_measure(plain));
}

TEST(Tiles, ThreeDimensionalMixedSides) {
  const auto T = tile_refinement({cube(0, {0, 0, 0}), cube(2, {4, 0, 0})}, 3, 1);
  EXPECT_GT(T.tiles_created, 0u);
  // The edge {x=1,y=0.25,z in [0,0.25]} of the small cube lies in E_R.
  Face e;
  e.level = 2;
  e.n = 3;
  e.free_mask = 0b100;
  e.anchor = {4, 1, 0};
  EXPECT_TRUE(T.E_R.contains(e));
  SkeletonSet plain(3, 1);
  plain.insert_cube_skeleton(cube(0, {0, 0, 0}));
  plain.insert_cube_skeleton(cube(2, {4, 0, 0}));
  EXPECT_GE(skeleton_measure(T.E_R), skeleton_measure(plain) - 1e-12);
}

// ------------------------------------------------------------------- E_rho

TEST(ERho, SingleEdgeMatchesExhaustiveScan) {
  SkeletonSet ER(2, 1);
  Face f;
  f.level = 0;
  f.n = 2;
  f.free_mask = 0b01;
  f.anchor = {0, 0};
  ER.insert(f);
  const double rho = 0.5;
  const auto S = fine_skeleton_E_rho(ER, rho, 1.0, 1e4);
  // Oracle: every level-1 cube in a window whose closed box meets the edge.
  SkeletonSet ref(2, 1);
  int count = 0;
  for (int a = -6; a <= 6; ++a)
    for (int b = -6; b <= 6; ++b) {
      const auto q = cube(1, {a, b});
      const Box qb = q.box();
      if (qb.hi[0] >= 0.0 && qb.lo[0] <= 1.0 && qb.hi[1] >= 0.0 && qb.lo[1] <= 0.0) {
        ++count;
        ref.insert_cube_skeleton(q);
      }
    }
  EXPECT_EQ(count, 8);
  EXPECT_EQ(S.size(), ref.size());
  for (const auto& g : ref.faces()) EXPECT_TRUE(S.contains(g));
}

TEST(ERho, ConstraintViolationsNameTheBound) {
  SkeletonSet ER(2, 1);
  Face f;
  f.n = 2;
  f.free_mask = 0b01;
  ER.insert(f);
  EXPECT_THROW(fine_skeleton_E_rho(ER, 0.3, 1.0, 1e4), UsageError);
  EXPECT_THROW(fine_skeleton_E_rho(ER, 1.0, 1.0, 1e4), UsageError);
  try {
    fine_skeleton_E_rho(ER, 0.5, 1.0, 1.0);
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("1000 sqrt n"), std::string::npos);
  }
}

TEST(ERho, ContainsER) {
  const auto T = tile_refinement({cube(0, {0, 0}), cube(1, {2, 0})}, 2, 1);
  const auto S = fine_skeleton_E_rho(T.E_R, 1.0 / 8, 0.5, 1e4);
  const SkeletonDistance dS(S);
  std::mt19937_64 rng(3);
  for (const auto& f : T.E_R.faces()) {
    const Box b = f.box();
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 10; ++k) {
      Point p(2);
      for (int i = 0; i < 2; ++i) p[i] = b.lo[i] + u(rng) * (b.hi[i] - b.lo[i]);
      EXPECT_NEAR(dS(p), 0.0, 1e-12);
    }
  }
  EXPECT_GE(skeleton_measure(S), skeleton_measure(T.E_R));
}

// ---------------------------------------------------------- Federer-Fleming

TEST(FedererFleming, SingleInteriorPointLandsOnCubeBoundary) {
  SampledSet E({Point{0.3, 0.6}}, 0.01, 2, 1);
  const auto q = cube(0, {0, 0});
  const auto rep = federer_fleming_project(E, {q}, Ball(Point{0.5, 0.5}, 0.1), 1, 11);
  ASSERT_EQ(rep.after.size(), 1u);
  const Point& p = rep.after[0];
  EXPECT_TRUE(q.box().contains(p));
  const bool on_edge = p[0] == 0.0 || p[0] == 1.0 || p[1] == 0.0 || p[1] == 1.0;
  EXPECT_TRUE(on_edge);
  EXPECT_TRUE(rep.ok());
}

TEST(FedererFleming, PointOnSkeletonStaysPut) {
  SampledSet E({Point{0.25, 0.0}}, 0.01, 2, 1);
  const auto rep = federer_fleming_project(E, {cube(0, {0, 0})}, Ball(Point{0.5, 0.5}, 0.1), 1, 1);
  ASSERT_EQ(rep.after.size(), 1u);
  EXPECT_EQ(rep.after[0][0], 0.25);
  EXPECT_EQ(rep.after[0][1], 0.0);
}

TEST(FedererFleming, RandomSetsSatisfyProperties) {
  struct Case {
    int n, d;
  };
  for (auto [n, d] : {Case{2, 1}, Case{3, 2}, Case{3, 1}}) {
    std::mt19937_64 rng(100 + n * 10 + d);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Point> pts;
    for (int k = 0; k < 400; ++k) {
      Point p(n);
      for (int i = 0; i < n; ++i) p[i] = 0.1 + 0.8 * u(rng);
      pts.push_back(p);
    }
    SampledSet E(std::move(pts), 1e-3, n, d);
    std::vector<DyadicCube> C;
    for (int k = 0; k < (1 << n); ++k) {
      DyadicCube q;
      q.level = 1;
      q.n = n;
      for (int i = 0; i < n; ++i) q.corner[static_cast<std::size_t>(i)] = (k >> i) & 1;
      if (k == 0) {
        // Replace one half cube by its children to mix sizes.
        for (int c = 0; c < (1 << n); ++c) {
          DyadicCube r = q;
          r.level = 2;
          for (int i = 0; i < n; ++i) r.corner[static_cast<std::size_t>(i)] = (c >> i) & 1;
          C.push_back(r);
        }
      } else {
        C.push_back(q);
      }
    }
    Point c(n);
    for (int i = 0; i < n; ++i) c[i] = 0.5;
    const auto rep = federer_fleming_project(E, C, Ball(c, 0.9), d, 42);
    EXPECT_EQ(rep.containment_violations, 0u) << n << "," << d;
    EXPECT_EQ(rep.skeleton_violations, 0u) << n << "," << d;
    EXPECT_EQ(rep.displacement_violations, 0u) << n << "," << d;
    EXPECT_EQ(rep.after.size(), 400u);
  }
}

TEST(FedererFleming, DenseCubeViolatesPorosity) {
  std::vector<Point> pts;
  const double h = 1.0 / 64;
  for (double x = 0.0; x <= 0.25 + 1e-12; x += h)
    for (double y = 0.0; y <= 0.25 + 1e-12; y += h) pts.push_back(Point{x, y});
  SampledSet E(std::move(pts), h, 2, 1);
  EXPECT_THROW(federer_fleming_project(E, {cube(2, {0, 0})}, Ball(Point{0.1, 0.1}, 0.05), 1, 0), ResolutionError);
}
