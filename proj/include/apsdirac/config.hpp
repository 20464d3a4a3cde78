#pragma once

/// Run-configuration parsing: a small sectioned key = value format with
/// numbers, quoted strings, booleans and flat arrays. Parsing fails closed:
/// unknown sections or keys are errors, and every problem is reported with
/// its line number in one pass.

#include "apsdirac/core.hpp"
#include "apsdirac/data.hpp"
#include "apsdirac/evolution.hpp"
#include "apsdirac/geometry.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

namespace apsdirac {

struct GeometryConfig {
  int dim = 2;
  std::string family = "static";
  double base = 1.0;
  double rate = 0.0;   // exp_warp, linear_warp
  double amp = 0.0;    // sin_warp
  double omega = 1.0;  // sin_warp
  std::string table;   // tabulated: CSV side file
  int radial = 32;
  int angular = 32;
  double length = 1.0;  // n=1
  double r_in = 1.0;    // n=2
  double r_out = 2.0;
  double t_min = -0.25;
  double t_max = 0.25;
};

struct DataConfig {
  std::string psi0 = "gaussian";  // gaussian | random | none
  GaussianSpec bump = {1.5, pi, 0.08, 0.5, SpinVec(1.0, 0.0), 1.0};
  std::string source = "none";  // none | gaussian_pulse
  PulseSpec pulse;
};

struct SchemeConfig {
  std::string scheme = "midpoint";  // midpoint | mollified_picard
  double dt = 0.0;                  // 0: derived from steps
  int steps = 200;
  std::vector<double> epsilon_schedule = {0.2, 0.1, 0.05, 0.025};
  double picard_tol = 1e-10;
  int picard_max_iter = 60;
  bool parallel = false;
};

struct OutputConfig {
  std::string directory = "out";
  bool snapshots = false;
  int snapshot_stride = 1;
  std::vector<std::string> diagnostics = {"energy", "flux", "norms"};
};

struct RunConfig {
  GeometryConfig geometry;
  std::map<std::string, BoundaryTag> boundary;  // left/right or inner/outer
  DataConfig data;
  SchemeConfig scheme;
  OutputConfig output;

  double window() const { return geometry.t_max - geometry.t_min; }
  double resolved_dt() const {
    return scheme.dt > 0 ? scheme.dt : window() / scheme.steps;
  }
};

namespace cfgdetail {

struct Line {
  int number = 0;
  std::string section;
  std::string key;
  std::string value;
};

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

class Reader {
 public:
  explicit Reader(const std::string& text) {
    std::istringstream in(text);
    std::string raw;
    int number = 0;
    std::string section;
    while (std::getline(in, raw)) {
      ++number;
      const auto hash = raw.find('#');
      if (hash != std::string::npos) raw = raw.substr(0, hash);
      const std::string line = trim(raw);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') {
          errors.push_back("line " + std::to_string(number) +
                           ": malformed section header");
          continue;
        }
        section = trim(line.substr(1, line.size() - 2));
        sections_seen.insert(section);
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        errors.push_back("line " + std::to_string(number) +
                         ": expected key = value");
        continue;
      }
      lines.push_back({number, section, trim(line.substr(0, eq)),
                       trim(line.substr(eq + 1))});
    }
  }

  std::vector<Line> lines;
  std::set<std::string> sections_seen;
  std::vector<std::string> errors;
};

inline bool parse_double(const std::string& s, double& out) {
  try {
    std::size_t pos = 0;
    out = std::stod(s, &pos);
    return pos == s.size();
  } catch (...) {
    return false;
  }
}

inline bool parse_int(const std::string& s, int& out) {
  try {
    std::size_t pos = 0;
    out = std::stoi(s, &pos);
    return pos == s.size();
  } catch (...) {
    return false;
  }
}

inline std::string unquote(const std::string& s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                        (s.front() == '\'' && s.back() == '\'')))
    return s.substr(1, s.size() - 2);
  return s;
}

inline bool parse_list(const std::string& s, std::vector<std::string>& out) {
  if (s.size() < 2 || s.front() != '[' || s.back() != ']') return false;
  std::string body = s.substr(1, s.size() - 2);
  out.clear();
  std::string item;
  std::istringstream in(body);
  while (std::getline(in, item, ',')) {
    const std::string t = trim(item);
    if (!t.empty()) out.push_back(unquote(t));
  }
  return true;
}

}  // namespace cfgdetail

inline RunConfig parse_config(const std::string& text) {
  cfgdetail::Reader reader(text);
  std::vector<std::string> errors = reader.errors;
  RunConfig cfg;
  cfg.boundary.clear();

  auto err = [&](const cfgdetail::Line& ln, const std::string& msg) {
    errors.push_back("line " + std::to_string(ln.number) + ": " + msg);
  };

  const std::set<std::string> known_sections = {"geometry", "boundary", "data",
                                                "scheme", "output"};
  for (const auto& sec : reader.sections_seen)
    if (!known_sections.count(sec))
      errors.push_back("unknown section [" + sec + "]");

  for (const auto& ln : reader.lines) {
    auto num = [&](double& slot) {
      double v;
      if (cfgdetail::parse_double(ln.value, v))
        slot = v;
      else
        err(ln, "expected a number for '" + ln.key + "'");
    };
    auto integer = [&](int& slot) {
      int v;
      if (cfgdetail::parse_int(ln.value, v))
        slot = v;
      else
        err(ln, "expected an integer for '" + ln.key + "'");
    };
    auto str = [&](std::string& slot) { slot = cfgdetail::unquote(ln.value); };
    auto boolean = [&](bool& slot) {
      const std::string v = cfgdetail::unquote(ln.value);
      if (v == "true" || v == "false")
        slot = (v == "true");
      else
        err(ln, "expected true/false for '" + ln.key + "'");
    };

    if (ln.section == "geometry") {
      auto& g = cfg.geometry;
      if (ln.key == "dim") integer(g.dim);
      else if (ln.key == "family") str(g.family);
      else if (ln.key == "base") num(g.base);
      else if (ln.key == "rate") num(g.rate);
      else if (ln.key == "amp") num(g.amp);
      else if (ln.key == "omega") num(g.omega);
      else if (ln.key == "table") str(g.table);
      else if (ln.key == "I") integer(g.radial);
      else if (ln.key == "K") integer(g.angular);
      else if (ln.key == "L") num(g.length);
      else if (ln.key == "r_in") num(g.r_in);
      else if (ln.key == "r_out") num(g.r_out);
      else if (ln.key == "t_min") num(g.t_min);
      else if (ln.key == "t_max") num(g.t_max);
      else err(ln, "unknown key '" + ln.key + "' in [geometry]");
    } else if (ln.section == "boundary") {
      const std::string v = cfgdetail::unquote(ln.value);
      if (ln.key != "left" && ln.key != "right" && ln.key != "inner" &&
          ln.key != "outer") {
        err(ln, "unknown key '" + ln.key + "' in [boundary]");
      } else if (v == "APS") {
        cfg.boundary[ln.key] = BoundaryTag::APS;
      } else if (v == "MIT") {
        cfg.boundary[ln.key] = BoundaryTag::MIT;
      } else {
        err(ln, "unknown boundary condition '" + v + "'");
      }
    } else if (ln.section == "data") {
      auto& d = cfg.data;
      if (ln.key == "psi0") str(d.psi0);
      else if (ln.key == "center_s") num(d.bump.center_s);
      else if (ln.key == "center_theta") num(d.bump.center_theta);
      else if (ln.key == "sigma_s") num(d.bump.sigma_s);
      else if (ln.key == "sigma_theta") num(d.bump.sigma_theta);
      else if (ln.key == "amplitude") num(d.bump.amplitude);
      else if (ln.key == "pol_re") {
        std::vector<std::string> items;
        if (cfgdetail::parse_list(ln.value, items) && items.size() == 2) {
          d.bump.polarization[0].real(std::stod(items[0]));
          d.bump.polarization[1].real(std::stod(items[1]));
        } else err(ln, "expected [a, b] for 'pol_re'");
      } else if (ln.key == "pol_im") {
        std::vector<std::string> items;
        if (cfgdetail::parse_list(ln.value, items) && items.size() == 2) {
          d.bump.polarization[0].imag(std::stod(items[0]));
          d.bump.polarization[1].imag(std::stod(items[1]));
        } else err(ln, "expected [a, b] for 'pol_im'");
      } else if (ln.key == "source") str(d.source);
      else if (ln.key == "source_center_s") num(d.pulse.space.center_s);
      else if (ln.key == "source_center_theta") num(d.pulse.space.center_theta);
      else if (ln.key == "source_sigma_s") num(d.pulse.space.sigma_s);
      else if (ln.key == "source_sigma_theta") num(d.pulse.space.sigma_theta);
      else if (ln.key == "source_amplitude") num(d.pulse.space.amplitude);
      else if (ln.key == "source_center_t") num(d.pulse.center_t);
      else if (ln.key == "source_sigma_t") num(d.pulse.sigma_t);
      else err(ln, "unknown key '" + ln.key + "' in [data]");
    } else if (ln.section == "scheme") {
      auto& s = cfg.scheme;
      if (ln.key == "scheme") str(s.scheme);
      else if (ln.key == "dt") num(s.dt);
      else if (ln.key == "steps") integer(s.steps);
      else if (ln.key == "epsilon_schedule") {
        std::vector<std::string> items;
        if (cfgdetail::parse_list(ln.value, items)) {
          s.epsilon_schedule.clear();
          for (const auto& it : items) {
            double v;
            if (cfgdetail::parse_double(it, v))
              s.epsilon_schedule.push_back(v);
            else
              err(ln, "epsilon_schedule entries must be numbers");
          }
        } else err(ln, "expected a list for 'epsilon_schedule'");
      } else if (ln.key == "picard_tol") num(s.picard_tol);
      else if (ln.key == "picard_max_iter") integer(s.picard_max_iter);
      else if (ln.key == "parallel") boolean(s.parallel);
      else err(ln, "unknown key '" + ln.key + "' in [scheme]");
    } else if (ln.section == "output") {
      auto& o = cfg.output;
      if (ln.key == "directory") str(o.directory);
      else if (ln.key == "snapshots") boolean(o.snapshots);
      else if (ln.key == "snapshot_stride") integer(o.snapshot_stride);
      else if (ln.key == "diagnostics") {
        if (!cfgdetail::parse_list(ln.value, o.diagnostics))
          err(ln, "expected a list for 'diagnostics'");
      } else err(ln, "unknown key '" + ln.key + "' in [output]");
    } else if (ln.section.empty()) {
      err(ln, "key '" + ln.key + "' outside any section");
    }
  }

  // semantic validation
  auto& g = cfg.geometry;
  if (g.dim != 1 && g.dim != 2)
    errors.push_back("[geometry] dim must be 1 or 2");
  static const std::set<std::string> families = {
      "static", "exp_warp", "sin_warp", "linear_warp", "tabulated"};
  if (!families.count(g.family))
    errors.push_back("[geometry] unknown family '" + g.family + "'");
  if (g.family == "tabulated" && g.table.empty())
    errors.push_back("[geometry] family 'tabulated' requires 'table'");
  if (!(g.t_min <= 0.0 && g.t_max >= 0.0))
    errors.push_back(
        "[geometry] the time window must contain t = 0 (the Cauchy slice "
        "carries the initial datum)");
  if (g.t_max <= g.t_min) errors.push_back("[geometry] empty time window");
  if (g.radial < 3) errors.push_back("[geometry] I must be at least 3");
  if (g.dim == 2 && (g.angular < 8 || g.angular % 2 != 0))
    errors.push_back("[geometry] K must be even and at least 8");
  if (g.dim == 2 && !(g.r_in > 0 && g.r_out > g.r_in))
    errors.push_back("[geometry] need 0 < r_in < r_out");
  if (g.dim == 1 && g.length <= 0) errors.push_back("[geometry] L must be > 0");

  for (const auto& [name, tag] : cfg.boundary) {
    (void)tag;
    const bool interval_name = (name == "left" || name == "right");
    if (g.dim == 1 && !interval_name)
      errors.push_back("[boundary] key '" + name + "' does not name an "
                       "interval endpoint");
    if (g.dim == 2 && interval_name)
      errors.push_back("[boundary] key '" + name + "' does not name an "
                       "annulus component");
  }

  if (cfg.scheme.scheme != "midpoint" && cfg.scheme.scheme != "mollified_picard")
    errors.push_back("[scheme] unknown scheme '" + cfg.scheme.scheme + "'");
  if (cfg.scheme.dt < 0) errors.push_back("[scheme] dt must be positive");
  if (cfg.scheme.dt == 0 && cfg.scheme.steps <= 0)
    errors.push_back("[scheme] need dt > 0 or steps > 0");
  if (cfg.scheme.dt == 0 && cfg.scheme.steps > 0) {
    // grid must contain the t = 0 slice exactly
    const double dt = cfg.window() / cfg.scheme.steps;
    const double q = -g.t_min / dt;
    if (std::abs(q - std::lround(q)) > 1e-9)
      errors.push_back(
          "[scheme] steps does not place the t = 0 slice on the grid; "
          "adjust steps or the window");
  }
  static const std::set<std::string> known_diag = {"energy", "flux", "norms",
                                                   "support", "spectrum"};
  for (const auto& d : cfg.output.diagnostics)
    if (!known_diag.count(d))
      errors.push_back("[output] unknown diagnostic '" + d + "'");
  if (cfg.output.snapshot_stride < 1)
    errors.push_back("[output] snapshot_stride must be >= 1");
  if (cfg.data.psi0 != "gaussian" && cfg.data.psi0 != "random" &&
      cfg.data.psi0 != "none")
    errors.push_back("[data] unknown psi0 family '" + cfg.data.psi0 + "'");
  if (cfg.data.source != "none" && cfg.data.source != "gaussian_pulse")
    errors.push_back("[data] unknown source family '" + cfg.data.source + "'");

  if (!errors.empty()) {
    std::string msg = "configuration errors:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  // defaults for boundary tags
  if (g.dim == 1) {
    cfg.boundary.try_emplace("left", BoundaryTag::APS);
    cfg.boundary.try_emplace("right", BoundaryTag::APS);
  } else {
    cfg.boundary.try_emplace("inner", BoundaryTag::APS);
    cfg.boundary.try_emplace("outer", BoundaryTag::APS);
  }
  return cfg;
}

inline RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// Tabulated geometry: CSV with header t,node_index,N,...coefficients, rows
// covering every radial node for a set of time samples; values are linearly
// interpolated in t.
struct GeometryTable {
  std::vector<double> t_samples;          // ascending
  std::vector<std::vector<double>> lapse; // [t][node]
  std::vector<std::vector<double>> alpha; // n=2 only
  std::vector<std::vector<double>> warp;  // a (n=1) or f (n=2)
  std::vector<double> nodes;              // node coordinates

  double interp(const std::vector<std::vector<double>>& tab, double t,
                double s) const {
    // nearest node by coordinate (the table is built on the run's mesh)
    std::size_t i = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < nodes.size(); ++j) {
      const double d = std::abs(nodes[j] - s);
      if (d < best) {
        best = d;
        i = j;
      }
    }
    if (t <= t_samples.front()) return tab.front()[i];
    if (t >= t_samples.back()) return tab.back()[i];
    std::size_t a = 0;
    while (a + 1 < t_samples.size() && t_samples[a + 1] < t) ++a;
    const double w =
        (t - t_samples[a]) / (t_samples[a + 1] - t_samples[a]);
    return (1 - w) * tab[a][i] + w * tab[a + 1][i];
  }
};

inline GeometryTable load_geometry_table(const std::string& path, int dim,
                                         const std::vector<double>& nodes) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open geometry table: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw ConfigError("geometry table is empty: " + path);
  const int ncols = dim == 1 ? 4 : 5;
  std::map<double, std::vector<std::vector<double>>> rows;  // t -> per-col
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (cfgdetail::trim(line).empty()) continue;
    std::istringstream ls(line);
    std::vector<double> vals;
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      double v;
      if (!cfgdetail::parse_double(cfgdetail::trim(cell), v))
        throw ConfigError("geometry table line " + std::to_string(lineno) +
                          ": bad number '" + cell + "'");
      vals.push_back(v);
    }
    if (static_cast<int>(vals.size()) != ncols)
      throw ConfigError("geometry table line " + std::to_string(lineno) +
                        ": expected " + std::to_string(ncols) + " columns");
    auto& slot = rows[vals[0]];
    if (slot.empty()) slot.assign(ncols - 2, std::vector<double>(nodes.size(),
                                  std::numeric_limits<double>::quiet_NaN()));
    const int idx = static_cast<int>(vals[1]);
    if (idx < 0 || idx >= static_cast<int>(nodes.size()))
      throw ConfigError("geometry table line " + std::to_string(lineno) +
                        ": node_index out of range");
    for (int c = 2; c < ncols; ++c) slot[c - 2][idx] = vals[c];
  }
  GeometryTable tab;
  tab.nodes = nodes;
  for (auto& [t, cols] : rows) {
    for (const auto& col : cols)
      for (double v : col)
        if (std::isnan(v))
          throw ConfigError(
              "geometry table: incomplete node coverage at t = " +
              std::to_string(t));
    tab.t_samples.push_back(t);
    tab.lapse.push_back(cols[0]);
    if (dim == 1) {
      tab.warp.push_back(cols[1]);
    } else {
      tab.alpha.push_back(cols[1]);
      tab.warp.push_back(cols[2]);
    }
  }
  if (tab.t_samples.empty())
    throw ConfigError("geometry table has no rows: " + path);
  return tab;
}

// Builds the spacetime described by the configuration (tags included).
inline FoliatedSpacetime make_spacetime(const RunConfig& cfg) {
  const auto& g = cfg.geometry;
  MetricCoef warp;
  std::shared_ptr<GeometryTable> table;
  if (g.family == "static") {
    warp = family_static(g.base);
  } else if (g.family == "exp_warp") {
    warp = family_exp_warp(g.base, g.rate);
  } else if (g.family == "sin_warp") {
    warp = family_sin_warp(g.base, g.amp, g.omega);
  } else if (g.family == "linear_warp") {
    const double lo = g.dim == 1 ? 0.0 : g.r_in;
    const double hi = g.dim == 1 ? g.length : g.r_out;
    warp = family_linear_warp(g.base, g.rate, lo, hi);
  } else if (g.family == "tabulated") {
    const double lo = g.dim == 1 ? 0.0 : g.r_in;
    const double hi = g.dim == 1 ? g.length : g.r_out;
    table = std::make_shared<GeometryTable>(
        load_geometry_table(g.table, g.dim, linspace(lo, hi, g.radial)));
    warp = {[table](double t, double s) {
              return table->interp(table->warp, t, s);
            },
            table->t_samples.size() == 1};
  }
  FoliatedSpacetime st =
      g.dim == 1
          ? make_interval(g.length, warp, cfg.boundary.at("left"),
                          cfg.boundary.at("right"), g.t_min, g.t_max)
          : make_annulus(g.r_in, g.r_out, warp, cfg.boundary.at("inner"),
                         cfg.boundary.at("outer"), g.t_min, g.t_max);
  if (table) {
    if (g.dim == 2)
      st.radial_coef = {[table](double t, double s) {
                          return table->interp(table->alpha, t, s);
                        },
                        table->t_samples.size() == 1};
    bool unit = true;
    for (const auto& col : table->lapse)
      for (double v : col)
        if (v != 1.0) unit = false;
    if (!unit) {
      st.unit_lapse = false;
      st.lapse = [table](double t, double s) {
        return table->interp(table->lapse, t, s);
      };
    }
  }
  return st;
}

inline EvolutionConfig make_evolution_config(const RunConfig& cfg) {
  EvolutionConfig ev;
  ev.scheme = cfg.scheme.scheme == "midpoint" ? Scheme::Midpoint
                                              : Scheme::MollifiedPicard;
  ev.dt = cfg.resolved_dt();
  ev.epsilon_schedule = cfg.scheme.epsilon_schedule;
  ev.picard_tol = cfg.scheme.picard_tol;
  ev.picard_max_iter = cfg.scheme.picard_max_iter;
  ev.parallel = cfg.scheme.parallel;
  return ev;
}

}  // namespace apsdirac
