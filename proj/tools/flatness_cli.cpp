// flatness: batch driver for the beta / TST / corona / sigma / dimension
// pipeline. Exit codes: 0 ok, 1 invariant violation, 2 usage, 3 resolution.

#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flatness/flatness.hpp"

using namespace flatness;

namespace {

// Settings merged from the config file and the flags. Every value actually
// consumed is recorded in normalized form in `used`; that map is the
// reproducibility header.
class Settings {
 public:
  ConfigMap given;
  ConfigMap used;

  bool has(const std::string& k) const { return given.count(k) != 0; }

  std::string str(const std::string& k, const std::string& def) {
    const auto v = has(k) ? given.at(k) : def;
    used[k] = v;
    return v;
  }
  double num(const std::string& k, double def) {
    const double v = has(k) ? parse_double(given.at(k)) : def;
    used[k] = format_double(v);
    return v;
  }
  long long integer(const std::string& k, long long def) {
    const long long v = has(k) ? parse_int(given.at(k)) : def;
    used[k] = std::to_string(v);
    return v;
  }
  // Read but kept out of the header: values that must not change the output.
  unsigned threads() const { return has("threads") ? static_cast<unsigned>(parse_int(given.at("threads"))) : 1u; }
  std::string out() const { return has("out") ? given.at("out") : std::string(); }
};

struct Command {
  CLI::App* app = nullptr;
  std::string config_path;
  std::map<std::string, std::string> flags;
  std::vector<std::pair<std::string, CLI::Option*>> options;
};

const std::vector<std::pair<std::string, std::string>> kInputKeys = {
    {"input", "point file ('-' for stdin); default: generator if --kind, else stdin"},
    {"kind", "generator kind"},
    {"n", "ambient dimension (generator)"},
    {"d", "nominal dimension"},
    {"h", "sample spacing"},
    {"depth", "IFS depth of self-similar generators"},
    {"theta", "Koch angle in degrees"},
    {"param", "Lipschitz constant / perturbation delta"},
    {"vertices", "polygonal curve vertex count"},
    {"offset_x", "translation of self-similar sets"},
    {"offset_y", "translation of self-similar sets"},
    {"seed", "random seed"},
};

const std::vector<std::pair<std::string, std::string>> kPipelineKeys = {
    {"p", "content beta exponent"},
    {"C0", "beta ball inflation"},
    {"A", "BWGL ball inflation"},
    {"eps", "BWGL threshold"},
    {"lambda", "net cube ratio"},
    {"k0", "cube tree depth (default: min(6, max legal))"},
};

void add_keys(Command& c, const std::vector<std::pair<std::string, std::string>>& keys) {
  for (const auto& [k, help] : keys) {
    std::string flag = "--" + k;
    for (auto& ch : flag)
      if (ch == '_') ch = '-';
    c.options.push_back({k, c.app->add_option(flag, c.flags[k], help)});
  }
}

// Options bind to members, so commands live on the heap and never move.
std::unique_ptr<Command> make_command(CLI::App& app, const std::string& name, const std::string& desc,
                     std::initializer_list<const std::vector<std::pair<std::string, std::string>>*> groups,
                     const std::vector<std::pair<std::string, std::string>>& extra = {}) {
  auto c = std::make_unique<Command>();
  c->app = app.add_subcommand(name, desc);
  c->app->add_option("--config", c->config_path, "key=value config file; flags override it");
  for (const auto* g : groups) add_keys(*c, *g);
  add_keys(*c, extra);
  add_keys(*c, {{"threads", "worker threads (output does not depend on it)"}, {"out", "output file (default stdout)"}});
  return c;
}

Settings settings_of(const Command& c) {
  Settings s;
  if (!c.config_path.empty()) s.given = parse_config_file(c.config_path);
  for (const auto& [k, opt] : c.options)
    if (opt->count() > 0) s.given[k] = c.flags.at(k);
  return s;
}

void emit(const Settings& s, const std::string& text) {
  if (s.out().empty()) {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream f(s.out(), std::ios::binary);
  if (!f) throw UsageError("cannot write " + s.out());
  f << text;
}

GeneratorSpec generator_spec(Settings& s) {
  GeneratorSpec g;
  g.kind = s.str("kind", g.kind);
  g.n = static_cast<int>(s.integer("n", g.n));
  g.d = static_cast<int>(s.integer("d", g.d));
  g.h = s.num("h", g.h);
  g.depth = static_cast<int>(s.integer("depth", g.depth));
  g.theta_deg = s.num("theta", g.theta_deg);
  g.param = s.num("param", g.param);
  g.vertices = static_cast<int>(s.integer("vertices", g.vertices));
  g.offset_x = s.num("offset_x", g.offset_x);
  g.offset_y = s.num("offset_y", g.offset_y);
  g.seed = static_cast<std::uint64_t>(s.integer("seed", static_cast<long long>(g.seed)));
  return g;
}

SampledSet load_input(Settings& s) {
  if (s.has("input") || !s.has("kind")) {
    PointReadOptions o;
    if (s.has("d")) o.d = static_cast<int>(s.integer("d", 0));
    if (s.has("h")) o.h = s.num("h", 0.0);
    const auto path = s.str("input", "-");
    if (path == "-") return read_points(std::cin, o);
    return read_points_file(path, o);
  }
  return generate(generator_spec(s)).set;
}

BetaConfig beta_config(Settings& s, const SampledSet& E, bool bwgl) {
  BetaConfig c;
  c.d = E.d;
  c.p = s.num("p", c.p);
  c.C0 = s.num("C0", c.C0);
  c.A = s.num("A", c.A);
  c.eps = s.num("eps", c.eps);
  c.seed = static_cast<std::uint64_t>(s.integer("seed", 1));
  c.compute_bwgl = bwgl;
  c.validate(E.n);
  return c;
}

CubeTree cube_tree(Settings& s, const SampledSet& E) {
  const double lambda = s.num("lambda", CubeTree::kDefaultLambda);
  const int legal = CubeTree::max_legal_depth(diameter(E.points), E.h, lambda);
  const int k0 = static_cast<int>(s.integer("k0", std::min(6, legal)));
  return CubeTree(E, lambda, k0);
}

struct Pipeline {
  SampledSet E;
  CubeTree tree;
  BetaConfig cfg;
  std::vector<BetaRecord> recs;
};

Pipeline pipeline(Settings& s, bool bwgl) {
  Pipeline p;
  p.E = load_input(s);
  p.tree = cube_tree(s, p.E);
  p.cfg = beta_config(s, p.E, bwgl);
  const BetaEngine eng(p.E);
  p.recs = beta_batch(p.tree, eng, p.cfg, s.threads());
  return p;
}

// ---------------------------------------------------------------------------
// Subcommands

int run_gen(Settings& s) {
  const auto g = generate(generator_spec(s));
  std::ostringstream os;
  os << repro_comment("gen", s.used);
  write_points(os, g.set);
  emit(s, os.str());
  return 0;
}

int run_beta(Settings& s) {
  auto p = pipeline(s, true);
  emit(s, repro_comment("beta", s.used) + beta_csv(p.recs));
  return 0;
}

int run_tst(Settings& s) {
  auto p = pipeline(s, true);
  const auto rep = tst_sums(p.tree, p.E, p.recs, p.tree.root(), p.cfg.d);
  Json body;
  body["root"] = to_json(rep);
  Json tops = Json::array();
  for (auto id : p.tree.children(p.tree.root())) tops.push_back(to_json(tst_sums(p.tree, p.E, p.recs, id, p.cfg.d)));
  body["children"] = std::move(tops);
  emit(s, report_document("tst", s.used, std::move(body)));
  return 0;
}

int run_corona(Settings& s) {
  auto E = load_input(s);
  auto tree = cube_tree(s, E);
  const int k0 = tree.depth();
  const double M = s.num("M", 4.0);
  const double C0 = s.num("C0", 2.0);
  const double tau = s.num("tau", kDefaultTau);
  const double rho = s.has("rho") ? s.num("rho", 0.0) : 0.0;
  const auto bad = frostman_bad_cubes(E, E.d, frostman_level_for(tree, k0));
  const auto F = build_forest(tree, E, bad, M, C0, k0);

  Json body;
  body["top_cubes"] = F.tops();
  double packing = 0.0;
  for (const auto& q : bad.bad) packing += std::pow(q.side(), E.d);
  body["bad_packing_sum"] = packing;
  body["bad_cubes"] = bad.bad.size();
  Json trees = Json::array(), counts = Json::array();
  std::vector<double> all_ratios;
  for (std::size_t t = 0; t < F.trees.size(); ++t) {
    const auto& tr = F.trees[t];
    Json j;
    j["top"] = tr.top;
    j["generation"] = tr.generation;
    j["cubes"] = tr.cubes.size();
    j["stop"] = tr.stop.size();
    try {
      const auto fam = whitney_family(tree, E, F, t, tau);
      const auto ER = skeleton_Er(fam, E.n, E.d);
      const auto ap = approximation_error(tree, E, F, fam, ER);
      const auto wit = appendix_witnesses(tree, F, fam);
      j["whitney_cubes"] = fam.cubes.size();
      j["whitney_ratio"] = {fam.ratio_min, fam.ratio_max};
      j["skeleton_faces"] = ER.size();
      j["skeleton_measure"] = skeleton_measure(ER);
      j["approximation_max"] = ap.max_ratio;
      j["a1"] = {wit.a1_min, wit.a1_max};
      j["a1_missing"] = wit.a1_missing;
      j["a2_c"] = wit.a2_c;
      if (rho > 0.0) j["e_rho_faces"] = fine_skeleton_E_rho(ER, rho, fam.smallest_side(), tree.cube(tr.top).side).size();
      counts.push_back(fam.cubes.size());
      all_ratios.insert(all_ratios.end(), ap.ratios.begin(), ap.ratios.end());
    } catch (const ResolutionError& e) {
      j["error"] = e.what();
      counts.push_back(nullptr);
    }
    trees.push_back(std::move(j));
  }
  body["whitney_counts"] = std::move(counts);
  Json q;
  for (double p : {0.5, 0.9, 0.99, 1.0}) q[format_double(p)] = quantile(all_ratios, p);
  body["approximation_error_quantiles"] = std::move(q);
  body["trees"] = std::move(trees);
  emit(s, report_document("corona", s.used, std::move(body)));
  return 0;
}

int run_sigma(Settings& s) {
  auto p = pipeline(s, true);
  const double kappa = s.num("kappa", 0.25);
  const int rerun = static_cast<int>(s.integer("sigma_rerun_depth", -1));
  const auto sg = build_sigma(p.tree, p.E, p.tree.root(), p.recs, p.cfg, kappa);
  const auto rep = tst_sums(p.tree, p.E, p.recs, p.tree.root(), p.cfg.d);
  const auto cmp = sigma_comparability(sg, rep, p.cfg, p.tree.lambda(), rerun, s.threads());
  Json body;
  body["flat"] = sg.flat();
  body["bad_cubes"] = sg.bad.size();
  body["skeleton_faces"] = sg.skeleton.size();
  body["comparability"] = to_json(cmp);
  emit(s, report_document("sigma", s.used, std::move(body)));
  return 0;
}

int run_dimension(Settings& s) {
  auto p = pipeline(s, false);
  const int steps = static_cast<int>(s.integer("kappa_steps", 0));
  const double c = s.num("c", kDefaultSkeletonFactor);
  const auto est = bj_dimension_bound(p.E, p.tree, p.recs, p.tree.root(), p.cfg.d, steps, c);
  std::string param = "";
  if (s.used.count("kind")) param = s.used.at("kind") == "koch_snowflake" ? s.used.at("theta") : s.used.at("param");
  std::string csv = repro_comment("dimension", s.used);
  csv += "theta_or_generator_param,beta0,implied_exponent,box_dim,kappa,partial\n";
  csv += param + ',' + format_double(est.beta0) + ',' + format_double(est.implied_exponent) + ',' +
         format_double(est.box_dim) + ',' + std::to_string(est.kappa) + ',' + (est.partial ? "1" : "0") + '\n';
  emit(s, csv);
  return 0;
}

// ---------------------------------------------------------------------------
// verify: invariant suite on a named fixture

GeneratorSpec fixture(const std::string& name, int depth) {
  GeneratorSpec g;
  if (name == "cantor4") {
    g.kind = "cantor_4corner";
  } else if (name == "cantor8") {
    g.kind = "cantor_8corner_3d";
  } else if (name == "koch") {
    g.kind = "koch_snowflake";
  } else if (name == "line" || name == "plane") {
    g.kind = name;
    g.h = std::ldexp(1.0, -depth);
  } else if (name == "lipschitz") {
    g.kind = "lipschitz_graph";
    g.h = std::ldexp(1.0, -depth);
  } else if (name == "polygon") {
    g.kind = "polygonal_curve";
    g.h = std::ldexp(1.0, -depth);
  } else {
    throw UsageError("unknown fixture '" + name + "' (cantor4 | cantor8 | koch | line | plane | lipschitz | polygon)");
  }
  g.depth = depth;
  g.offset_x = 0.2718;
  g.offset_y = 0.1414;
  return g;
}

struct Checks {
  Json list = Json::array();
  bool ok = true;
  void add(const std::string& name, bool pass, Json value = nullptr) {
    Json j;
    j["check"] = name;
    j["pass"] = pass;
    if (!value.is_null()) j["value"] = std::move(value);
    list.push_back(std::move(j));
    ok = ok && pass;
  }
};

int run_verify(Settings& s) {
  const auto name = s.str("fixture", "cantor4");
  const int depth = static_cast<int>(s.integer("depth", 4));
  auto spec = fixture(name, depth);
  spec.seed = static_cast<std::uint64_t>(s.integer("seed", 1));
  const auto gen = generate(spec);
  const auto& E = gen.set;
  Checks ck;

  const auto tree = cube_tree(s, E);
  const auto tc = tree.check(E);
  ck.add("tree.partition", tc.partition);
  ck.add("tree.nesting", tc.nesting);
  ck.add("tree.outer_containment", tc.outer_containment, tc.outer_constant);

  const auto cfg = beta_config(s, E, true);
  const BetaEngine eng(E);
  const auto recs = beta_batch(tree, eng, cfg, s.threads());
  bool finite = true, coherent = true;
  double max_beta = 0.0;
  std::size_t bad = 0;
  for (const auto& r : recs) {
    if (r.skipped) continue;
    finite = finite && std::isfinite(r.beta_inf) && std::isfinite(r.beta_dp) && r.beta_inf >= 0 && r.beta_dp >= 0;
    coherent = coherent && (r.is_bwgl_bad == (r.bwgl_dist >= cfg.eps));
    max_beta = std::max({max_beta, r.beta_inf, r.beta_dp});
    bad += r.is_bwgl_bad;
  }
  ck.add("beta.finite_nonnegative", finite);
  ck.add("beta.bwgl_coherent", coherent, bad);
  if (gen.truth.flat) ck.add("beta.flat_zero", max_beta < 1e-9 && bad == 0, max_beta);
  const auto serial = beta_batch(tree, eng, cfg, 1);
  ck.add("beta.thread_invariant", beta_csv(serial) == beta_csv(recs));

  const int k0 = tree.depth();
  const auto fr = frostman_bad_cubes(E, E.d, frostman_level_for(tree, k0));
  bool decreasing = true;
  for (std::size_t i = 1; i < fr.total_mass.size(); ++i)
    decreasing = decreasing && fr.total_mass[i] <= fr.total_mass[i - 1] * (1 + 1e-12);
  ck.add("frostman.mass_nonincreasing", decreasing, fr.total_mass.empty() ? 0.0 : fr.total_mass.back());
  const auto F = build_forest(tree, E, fr, 4.0, cfg.C0, k0);
  ck.add("forest.partition", F.partitions(tree), F.trees.size());
  bool coh = true;
  for (std::size_t t = 0; t < F.trees.size(); ++t) coh = coh && F.coherent(tree, t);
  ck.add("forest.coherent", coh);

  const auto rep = tst_sums(tree, E, recs, tree.root(), E.d);
  double child_sum = 0.0;
  for (auto c : tree.children(tree.root())) {
    const auto cr = tst_sums(tree, E, recs, c, E.d);
    child_sum += cr.beta_sum;
  }
  const auto& root = recs[tree.root()];
  const double own = root.skipped ? 0.0 : root.beta_dp * root.beta_dp * std::pow(root.side, E.d);
  ck.add("tst.additive", std::abs(rep.beta_sum - own - child_sum) <= 1e-9 * std::max(1.0, rep.beta_sum),
         rep.forward_ratio());

  const auto sg = build_sigma(tree, E, tree.root(), recs, cfg, 0.25);
  const auto cmp = sigma_comparability(sg, rep, cfg, tree.lambda());
  ck.add("sigma.measure_positive", cmp.measure > 0.0, cmp.measure_ratio());
  if (gen.truth.flat) ck.add("sigma.flat_is_q0", sg.flat());

  try {
    const auto bd = box_dimension(E);
    ck.add("dimension.box_in_range", bd.slope >= 0.0 && bd.slope <= E.n, bd.slope);
  } catch (const ResolutionError&) {
    ck.add("dimension.box_in_range", true, "skipped: fewer than two scales above 8h");
  }

  Json body;
  body["fixture"] = name;
  body["points"] = E.size();
  body["checks"] = std::move(ck.list);
  body["ok"] = ck.ok;
  emit(s, report_document("verify", s.used, std::move(body)));
  return ck.ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flatness coefficients, traveling-salesman sums and corona decompositions of point samples"};
  app.set_help_flag("--help", "Print this help message and exit");
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  std::vector<std::pair<std::unique_ptr<Command>, std::function<int(Settings&)>>> cmds;
  cmds.push_back({make_command(app, "gen", "write a generated point set", {&kInputKeys}), run_gen});
  cmds.push_back({make_command(app, "beta", "per-cube beta CSV", {&kInputKeys, &kPipelineKeys}), run_beta});
  cmds.push_back({make_command(app, "tst", "traveling-salesman sums (JSON)", {&kInputKeys, &kPipelineKeys}), run_tst});
  cmds.push_back({make_command(app, "corona", "stopping forest, Whitney families, skeleton approximation (JSON)",
                               {&kInputKeys, &kPipelineKeys},
                               {{"M", "Bad-cube ball inflation"}, {"tau", "Whitney factor"}, {"rho", "E_rho grid"}}),
                  run_corona});
  cmds.push_back({make_command(app, "sigma", "Sigma surface estimates (JSON)", {&kInputKeys, &kPipelineKeys},
                               {{"kappa", "skeleton scale factor (power of 2 in (0,1))"},
                                {"sigma_rerun_depth", "re-run betas on a Sigma sample at this tree depth"}}),
                  run_sigma});
  cmds.push_back({make_command(app, "dimension", "uniform wiggliness and dimension estimates (CSV)",
                               {&kInputKeys, &kPipelineKeys},
                               {{"kappa_steps", "levels per refinement step (0: from beta0)"},
                                {"c", "skeleton cube factor"}}),
                  run_dimension});
  cmds.push_back({make_command(app, "verify", "invariant suite on a fixture; exit 1 on a violation", {&kPipelineKeys},
                               {{"fixture", "cantor4 | cantor8 | koch | line | plane | lipschitz | polygon"},
                                {"depth", "fixture depth (IFS depth, or -log2 h for continua)"},
                                {"seed", "random seed"}}),
                  run_verify});

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  try {
    for (auto& [c, fn] : cmds)
      if (c->app->parsed()) {
        auto s = settings_of(*c);
        return fn(s);
      }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const ResolutionError& e) {
    std::cerr << "resolution error: " << e.what() << '\n';
    return 3;
  } catch (const InvariantViolation& e) {
    std::cerr << "invariant violation: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
