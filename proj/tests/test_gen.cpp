#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <set>

#include "flatness/dimension.hpp"
#include "flatness/gen.hpp"
#include "flatness/tst.hpp"

using namespace flatness;

namespace {

bool same_bytes(const SampledSet& a, const SampledSet& b) {
  if (a.size() != b.size() || a.h != b.h || a.n != b.n || a.d != b.d) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::memcmp(&a.points[i].x, &b.points[i].x, sizeof(a.points[i].x)) != 0) return false;
  return true;
}

GeneratorSpec spec(const char* kind) {
  GeneratorSpec s;
  s.kind = kind;
  return s;
}

}  // namespace

TEST(Generate, EveryKindIsDeterministic) {
  for (const char* kind : {"plane", "line", "lipschitz_graph", "reifenberg_perturbed_plane", "cantor_4corner",
                           "cantor_8corner_3d", "koch_snowflake", "polygonal_curve", "sphere"}) {
    auto s = spec(kind);
    s.h = 1.0 / 16;
    s.depth = 3;
    s.seed = 42;
    const auto a = generate(s);
    const auto b = generate(s);
    EXPECT_TRUE(same_bytes(a.set, b.set)) << kind;
    EXPECT_GT(a.set.size(), 0u) << kind;
    EXPECT_NO_THROW(a.set.validate()) << kind;
    ASSERT_TRUE(a.truth.analytic_dimension.has_value()) << kind;
  }
}

TEST(Generate, SeedChangesRandomKinds) {
  auto s = spec("polygonal_curve");
  s.h = 1.0 / 32;
  const auto a = generate(s);
  s.seed = 2;
  EXPECT_FALSE(same_bytes(a.set, generate(s).set));
}

TEST(Generate, PlaneBetaInfIsZero) {
  auto s = spec("plane");
  s.h = 0.01;
  const auto E = generate(s).set;
  EXPECT_TRUE(generate(s).truth.flat);
  for (const auto& c : {Point{0.5, 0.5, 0.0}, Point{0.2, 0.7, 0.0}, Point{0.9, 0.1, 0.0}})
    EXPECT_LT(beta_inf(E, Ball(c, 0.15), 2).value, 1e-12);
}

TEST(Generate, Koch60AnalyticDimension) {
  auto s = spec("koch_snowflake");
  s.depth = 6;
  const auto g = generate(s);
  EXPECT_NEAR(*g.truth.analytic_dimension, std::log(4.0) / std::log(3.0), 1e-12);
  EXPECT_EQ(g.set.size(), 4096u + 1);
  EXPECT_NEAR(box_dimension(g.set).slope, *g.truth.analytic_dimension, 0.06);
}

TEST(Generate, Cantor4CornerDepth5) {
  auto s = spec("cantor_4corner");
  s.depth = 5;
  const auto g = generate(s);
  ASSERT_EQ(g.set.size(), 1024u);
  std::set<std::pair<double, double>> distinct;
  for (const auto& p : g.set.points) distinct.insert({p[0], p[1]});
  EXPECT_EQ(distinct.size(), 1024u);
  // Closed-form IFS coordinates: centres sit on the lattice (2 + 12 m) 4^-6 per
  // axis, siblings 3/4 4^-4 apart, and no two centres are closer than that.
  const double unit = std::pow(0.25, 6);
  double min_sep = 1e9;
  for (std::size_t i = 0; i < g.set.size(); ++i) {
    for (int a = 0; a < 2; ++a) {
      const double m = (g.set.points[i][a] / unit - 2.0) / 12.0;
      EXPECT_NEAR(m, std::round(m), 1e-9);
    }
    for (std::size_t j = i + 1; j < g.set.size(); ++j) min_sep = std::min(min_sep, dist(g.set.points[i], g.set.points[j]));
  }
  EXPECT_NEAR(min_sep, 0.75 * std::pow(0.25, 4), 1e-12);
  EXPECT_NEAR(g.set.h, std::sqrt(2.0) * std::pow(0.25, 5), 1e-15);
}

TEST(Generate, PolygonalLengthMatchesVertices) {
  auto s = spec("polygonal_curve");
  s.h = 1.0 / 128;
  s.vertices = 5;
  const auto g = generate(s);
  double len = 0.0;
  for (std::size_t i = 0; i + 1 < g.set.size(); ++i) len += dist(g.set.points[i], g.set.points[i + 1]);
  EXPECT_NEAR(len, *g.truth.length, 1e-9);
}

TEST(Generate, SamplesAreHDense) {
  auto s = spec("sphere");
  s.n = 2;
  s.h = 0.05;
  const auto g = generate(s);
  for (std::size_t i = 0; i < g.set.size(); ++i)
    EXPECT_LE(dist(g.set.points[i], g.set.points[(i + 1) % g.set.size()]), s.h);
}

TEST(Generate, RejectsBadParameters) {
  auto s = spec("koch_snowflake");
  s.theta_deg = 75;
  EXPECT_THROW(generate(s), UsageError);
  EXPECT_THROW(generate(spec("torus")), UsageError);
  s = spec("plane");
  s.h = 0.0;
  EXPECT_THROW(generate(s), UsageError);
  s = spec("reifenberg_perturbed_plane");
  s.param = 1.5;
  EXPECT_THROW(generate(s), UsageError);
}

TEST(Generate, PerturbedPlanePassesReifenbergAtFourDelta) {
  for (double delta : {0.01, 0.03}) {
    auto s = spec("reifenberg_perturbed_plane");
    s.h = 1.0 / 512;
    s.param = delta;
    const auto E = generate(s).set;
    ReifenbergConfig cfg;
    cfg.eps = 4 * delta;
    cfg.per_scale = 16;
    cfg.seed = 3;
    const auto rep = reifenberg_tc_test(E, cfg);
    EXPECT_TRUE(rep.pass) << "delta " << delta << " worst " << rep.worst;
    EXPECT_GT(rep.scales.size(), 3u);
  }
}
