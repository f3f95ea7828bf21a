#pragma once

// Point-cloud files, key=value configs and report serialization. All number
// formatting goes through std::to_chars / std::from_chars (or nlohmann's
// own shortest round-trip printer), so output never depends on the locale.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "flatness/beta.hpp"
#include "flatness/dimension.hpp"
#include "flatness/dyadic.hpp"
#include "flatness/errors.hpp"
#include "flatness/geom.hpp"
#include "flatness/netcubes.hpp"
#include "flatness/tst.hpp"

namespace flatness {

inline constexpr std::string_view kVersion = "0.3.0";

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Numbers

/// Shortest decimal that round-trips to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw InvariantViolation("format_double: to_chars failed");
  return std::string(buf, end);
}

inline double parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
    throw UsageError("not a number: '" + std::string(s) + "'");
  return v;
}

inline long long parse_int(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
    throw UsageError("not an integer: '" + std::string(s) + "'");
  return v;
}

// ---------------------------------------------------------------------------
// Point clouds

/// One point per line, coordinates separated by single spaces, preceded by a
/// JSON header line {"n":..,"d":..,"h":..}.
inline void write_points(std::ostream& os, const SampledSet& E, bool header = true) {
  if (header) {
    Json j;
    j["n"] = E.n;
    j["d"] = E.d;
    j["h"] = E.h;
    if (E.window.restricts()) {
      // Infinite bounds are written as null.
      auto side = [&](const Point& b) {
        Json a = Json::array();
        for (int i = 0; i < E.n; ++i) a.push_back(std::isfinite(b[i]) ? Json(b[i]) : Json(nullptr));
        return a;
      };
      j["window"] = {{"lo", side(E.window.lo)}, {"hi", side(E.window.hi)}};
    }
    os << j.dump() << '\n';
  }
  std::string line;
  for (const auto& p : E.points) {
    line.clear();
    for (int i = 0; i < p.n; ++i) {
      if (i) line += ' ';
      line += format_double(p[i]);
    }
    line += '\n';
    os << line;
  }
}

struct PointReadOptions {
  std::optional<int> d;     ///< overrides the header
  std::optional<double> h;  ///< overrides the header
};

/// Reads the point-cloud format. Without a header, n is taken from the first
/// data line and d, h must come from `opt`. Blank lines and lines starting
/// with '#' are ignored.
inline SampledSet read_points(std::istream& is, const PointReadOptions& opt = {}) {
  std::optional<int> n, d = opt.d;
  std::optional<double> h = opt.h;
  Json window;
  std::vector<Point> pts;
  std::string line;
  std::size_t lineno = 0;
  bool first = true;
  while (std::getline(is, line)) {
    ++lineno;
    std::string_view v(line);
    while (!v.empty() && (v.front() == ' ' || v.front() == '\t')) v.remove_prefix(1);
    if (v.empty() || v.front() == '#' || v == "\r") continue;
    if (first && v.front() == '{') {
      first = false;
      Json j;
      try {
        j = Json::parse(v);
      } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("point file header: ") + e.what());
      }
      if (j.contains("n")) n = j["n"].get<int>();
      if (!d && j.contains("d")) d = j["d"].get<int>();
      if (!h && j.contains("h")) h = j["h"].get<double>();
      if (j.contains("window")) window = j["window"];
      continue;
    }
    first = false;
    Point p;
    std::vector<double> xs;
    std::size_t pos = 0;
    while (pos < v.size()) {
      while (pos < v.size() && (v[pos] == ' ' || v[pos] == '\t' || v[pos] == '\r')) ++pos;
      if (pos >= v.size()) break;
      std::size_t end = pos;
      while (end < v.size() && v[end] != ' ' && v[end] != '\t' && v[end] != '\r') ++end;
      try {
        xs.push_back(parse_double(v.substr(pos, end - pos)));
      } catch (const UsageError& e) {
        throw UsageError("line " + std::to_string(lineno) + ": " + e.what());
      }
      pos = end;
    }
    if (!n) n = static_cast<int>(xs.size());
    if (static_cast<int>(xs.size()) != *n)
      throw UsageError("line " + std::to_string(lineno) + ": expected " + std::to_string(*n) + " coordinates, got " +
                       std::to_string(xs.size()));
    if (*n < 1 || *n > kMaxDim) throw UsageError("ambient dimension must lie in 1..4");
    p = Point(*n);
    for (int i = 0; i < *n; ++i) p.x[static_cast<std::size_t>(i)] = xs[static_cast<std::size_t>(i)];
    pts.push_back(p);
  }
  if (!n) throw UsageError("point file holds no points and no header");
  if (!h) throw UsageError("sample spacing h missing: give it in the header or on the command line");
  if (!d) throw UsageError("dimension d missing: give it in the header or on the command line");
  SampledSet E(std::move(pts), *h, *n, *d);
  if (!window.is_null()) {
    auto bound = [&](const Json& a, Point& b) {
      if (!a.is_array() || static_cast<int>(a.size()) != *n) throw UsageError("point file header: bad window");
      for (int i = 0; i < *n; ++i)
        if (!a[static_cast<std::size_t>(i)].is_null()) b[i] = a[static_cast<std::size_t>(i)].get<double>();
    };
    bound(window.value("lo", Json()), E.window.lo);
    bound(window.value("hi", Json()), E.window.hi);
  }
  E.validate();
  return E;
}

inline SampledSet read_points_file(const std::string& path, const PointReadOptions& opt = {}) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot open " + path);
  return read_points(f, opt);
}

// ---------------------------------------------------------------------------
// key=value configs and the reproducibility header

using ConfigMap = std::map<std::string, std::string>;

/// "key = value" per line; '#' starts a comment; later keys win.
inline ConfigMap parse_config(std::istream& is) {
  ConfigMap out;
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return std::string();
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto c = line.find('#'); c != std::string::npos) line.erase(c);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError("config line " + std::to_string(lineno) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw UsageError("config line " + std::to_string(lineno) + ": empty key");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

inline ConfigMap parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot open config " + path);
  return parse_config(f);
}

/// Canonical text of a config: sorted "key=value" lines.
inline std::string canonical_config(const ConfigMap& cfg) {
  std::string s;
  for (const auto& [k, v] : cfg) s += k + "=" + v + "\n";
  return s;
}

/// FNV-1a 64 of the canonical config, as 16 hex digits.
inline std::string config_hash(const ConfigMap& cfg) {
  std::uint64_t x = 0xcbf29ce484222325ull;
  for (unsigned char c : canonical_config(cfg)) {
    x ^= c;
    x *= 0x100000001b3ull;
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, x >>= 4) out[static_cast<std::size_t>(i)] = hex[x & 15u];
  return out;
}

inline Json repro_header(std::string_view command, const ConfigMap& cfg) {
  Json h;
  h["tool"] = "flatness";
  h["version"] = std::string(kVersion);
  h["command"] = std::string(command);
  h["config_hash"] = config_hash(cfg);
  if (auto it = cfg.find("seed"); it != cfg.end()) h["seed"] = it->second;
  Json c = Json::object();
  for (const auto& [k, v] : cfg) c[k] = v;
  h["config"] = std::move(c);
  return h;
}

/// The header as '#'-prefixed lines for CSV outputs.
inline std::string repro_comment(std::string_view command, const ConfigMap& cfg) {
  std::string s = "# flatness " + std::string(kVersion) + " " + std::string(command) + " config_hash=" +
                  config_hash(cfg) + "\n";
  for (const auto& [k, v] : cfg) s += "# " + k + "=" + v + "\n";
  return s;
}

// ---------------------------------------------------------------------------
// Reports

inline std::string beta_csv(std::span<const BetaRecord> records) {
  std::vector<const BetaRecord*> order;
  for (const auto& r : records) order.push_back(&r);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->cube_id < b->cube_id; });
  std::string s = "cube_id,level,side,beta_inf,beta_dp,bwgl_dist,bwgl_bad,skipped\n";
  for (const auto* r : order) {
    s += std::to_string(r->cube_id) + ',' + std::to_string(r->level) + ',' + format_double(r->side) + ',' +
         format_double(r->beta_inf) + ',' + format_double(r->beta_dp) + ',' + format_double(r->bwgl_dist) + ',' +
         (r->is_bwgl_bad ? "1" : "0") + ',' + (r->skipped ? "1" : "0") + '\n';
  }
  return s;
}

inline Json point_json(const Point& p) {
  Json a = Json::array();
  for (int i = 0; i < p.n; ++i) a.push_back(p[i]);
  return a;
}

inline Json tree_json(const CubeTree& tree) {
  Json j;
  j["lambda"] = tree.lambda();
  j["depth"] = tree.depth();
  j["diam"] = tree.diam();
  Json cubes = Json::array();
  for (const auto& q : tree.cubes()) {
    Json c;
    c["id"] = q.id;
    c["level"] = q.level;
    c["center"] = point_json(q.center);
    c["side"] = q.side;
    c["parent"] = q.parent == KdTree::npos ? Json(nullptr) : Json(q.parent);
    c["member_count"] = q.members.size();
    cubes.push_back(std::move(c));
  }
  j["cubes"] = std::move(cubes);
  return j;
}

inline Json skeleton_json(const SkeletonSet& S) {
  Json a = Json::array();
  for (const auto& f : S.faces()) {
    Json fj;
    fj["level"] = f.level;
    Json corner = Json::array(), frozen = Json::array();
    for (int i = 0; i < f.n; ++i) {
      corner.push_back(f.anchor[static_cast<std::size_t>(i)]);
      if (!f.is_free(i)) frozen.push_back(i);
    }
    fj["corner"] = std::move(corner);
    fj["dim"] = f.dim();
    fj["frozen_axes"] = std::move(frozen);
    fj["sides"] = f.side();
    a.push_back(std::move(fj));
  }
  return a;
}

inline Json to_json(const TstReport& r) {
  Json j;
  j["region"] = r.region;
  j["d"] = r.d;
  j["diam_term"] = r.diam_term;
  j["set_diam"] = r.set_diam;
  j["beta_sum"] = r.beta_sum;
  j["beta_inf_sum"] = r.beta_inf_sum;
  j["bwgl_sum"] = r.bwgl_sum;
  j["measure_est"] = r.measure_est;
  j["cubes"] = r.cubes;
  j["skipped"] = r.skipped;
  j["bwgl_bad"] = r.bwgl_bad;
  j["forward_ratio"] = r.forward_ratio();
  j["inverse_ratio"] = r.inverse_ratio();
  return j;
}

inline Json to_json(const ReifenbergReport& r) {
  Json j;
  j["pass"] = r.pass;
  j["worst"] = r.worst;
  j["witness"] = {{"center", point_json(r.witness.center)}, {"radius", r.witness.radius}};
  Json s = Json::array();
  for (const auto& m : r.scales)
    s.push_back({{"radius", m.radius}, {"worst", m.worst}, {"margin", m.margin}});
  j["scales"] = std::move(s);
  return j;
}

inline Json to_json(const SigmaComparability& c) {
  Json j;
  j["measure"] = c.measure;
  j["bound"] = c.bound;
  j["beta_term"] = c.beta_term;
  j["forward_ratio"] = c.forward_ratio();
  j["inverse_ratio"] = c.inverse_ratio();
  j["measure_ratio"] = c.measure_ratio();
  if (c.rerun) {
    j["sigma_beta_term"] = c.sigma_beta_term;
    j["sigma_points"] = c.sigma_points;
    j["sigma_depth"] = c.sigma_depth;
    j["sigma_ratio"] = c.sigma_ratio();
  }
  return j;
}

inline Json to_json(const WigglinessReport& w) {
  Json j;
  j["region"] = w.region;
  j["beta0"] = w.beta0;
  j["beta0_inf"] = w.beta0_inf;
  j["witness"] = w.witness;
  j["covered"] = w.covered;
  j["beta_m"] = w.beta_m;
  j["side_sum"] = w.side_sum;
  return j;
}

inline Json to_json(const DimensionEstimate& e) {
  Json j;
  j["beta0"] = e.beta0;
  j["kappa"] = e.kappa;
  j["kappa_wanted"] = e.kappa_wanted;
  j["partial"] = e.partial;
  j["top_level"] = e.top_level;
  j["implied_exponent"] = e.implied_exponent;
  j["box_dim"] = e.box_dim;
  j["mass_conserved"] = e.mass_conserved;
  j["nested"] = e.nested;
  j["meets_region"] = e.meets_region;
  j["mass_bound"] = e.mass_bound;
  Json fams = Json::array();
  for (const auto& L : e.families) {
    Json f;
    f["level"] = L.level;
    f["cubes"] = L.cubes.size();
    f["min_card"] = L.min_card;
    f["min_children"] = L.min_children;
    Rational mx = 0;
    for (const auto& m : L.mass) mx = std::max(mx, m);
    f["max_mass"] = mx.str();
    fams.push_back(std::move(f));
  }
  j["families"] = std::move(fams);
  return j;
}

/// Header + body as one JSON document, newline-terminated.
inline std::string report_document(std::string_view command, const ConfigMap& cfg, Json body) {
  Json doc;
  doc["header"] = repro_header(command, cfg);
  doc["report"] = std::move(body);
  return doc.dump(2) + "\n";
}

}  // namespace flatness
