#pragma once

/// Run orchestration for the CLI: executes a parsed configuration, writes
/// diagnostics as CSV plus a JSON summary and manifest, and converts the
/// library's error taxonomy into stable process exit codes.

#include "apsdirac/boundary.hpp"
#include "apsdirac/config.hpp"
#include "apsdirac/diagnostics.hpp"
#include "apsdirac/snapshot.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

namespace apsdirac {

inline constexpr const char* artifact_version = "0.1.0";

// exit codes: 2 config, 3 assumptions, 4 boundary kernel, 5 solver,
// 6 assertion failure, 1 anything else
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const AssumptionError*>(&e)) return 3;
  if (dynamic_cast<const KernelError*>(&e)) return 4;
  if (dynamic_cast<const SolverError*>(&e)) return 5;
  if (dynamic_cast<const AssertionError*>(&e)) return 6;
  if (dynamic_cast<const std::invalid_argument*>(&e)) return 2;
  return 1;
}

namespace iodetail {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_text(const std::filesystem::path& path,
                       const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

inline nlohmann::ordered_json config_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  const auto& g = cfg.geometry;
  j["geometry"] = {{"dim", g.dim},       {"family", g.family},
                   {"base", g.base},     {"rate", g.rate},
                   {"amp", g.amp},       {"omega", g.omega},
                   {"table", g.table},   {"I", g.radial},
                   {"K", g.angular},     {"L", g.length},
                   {"r_in", g.r_in},     {"r_out", g.r_out},
                   {"t_min", g.t_min},   {"t_max", g.t_max}};
  nlohmann::ordered_json b;
  for (const auto& [name, tag] : cfg.boundary) b[name] = to_string(tag);
  j["boundary"] = b;
  const auto& d = cfg.data;
  j["data"] = {{"psi0", d.psi0},
               {"center_s", d.bump.center_s},
               {"center_theta", d.bump.center_theta},
               {"sigma_s", d.bump.sigma_s},
               {"sigma_theta", d.bump.sigma_theta},
               {"amplitude", d.bump.amplitude},
               {"pol_re", {d.bump.polarization[0].real(),
                           d.bump.polarization[1].real()}},
               {"pol_im", {d.bump.polarization[0].imag(),
                           d.bump.polarization[1].imag()}},
               {"source", d.source},
               {"source_center_s", d.pulse.space.center_s},
               {"source_center_theta", d.pulse.space.center_theta},
               {"source_sigma_s", d.pulse.space.sigma_s},
               {"source_sigma_theta", d.pulse.space.sigma_theta},
               {"source_amplitude", d.pulse.space.amplitude},
               {"source_center_t", d.pulse.center_t},
               {"source_sigma_t", d.pulse.sigma_t}};
  const auto& s = cfg.scheme;
  j["scheme"] = {{"scheme", s.scheme},
                 {"dt", cfg.resolved_dt()},
                 {"steps", s.steps},
                 {"epsilon_schedule", s.epsilon_schedule},
                 {"picard_tol", s.picard_tol},
                 {"picard_max_iter", s.picard_max_iter},
                 {"parallel", s.parallel}};
  const auto& o = cfg.output;
  j["output"] = {{"directory", o.directory},
                 {"snapshots", o.snapshots},
                 {"snapshot_stride", o.snapshot_stride},
                 {"diagnostics", o.diagnostics}};
  return j;
}

}  // namespace iodetail

inline std::uint64_t seed_from_env() {
  if (const char* s = std::getenv("APS_DIRAC_SEED")) {
    try {
      return std::stoull(s);
    } catch (...) {
      throw ConfigError("APS_DIRAC_SEED is not an integer");
    }
  }
  return 0x5eed0001u;
}

// Initial datum per the data block; "random" draws a seeded, smooth,
// interior-supported superposition of bumps.
inline Vec build_initial_datum(const RunConfig& cfg, const Mesh& mesh,
                               std::uint64_t seed) {
  const auto& d = cfg.data;
  if (d.psi0 == "none") return Vec::Zero(mesh.value_count());
  if (d.psi0 == "gaussian") return gaussian_field(mesh, d.bump);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> gaussian;
  Vec out = Vec::Zero(mesh.value_count());
  const double lo = mesh.s_min, hi = mesh.s_max;
  const double span = hi - lo;
  for (int b = 0; b < 3; ++b) {
    GaussianSpec g = d.bump;
    g.center_s = lo + span * (0.35 + 0.3 * u(rng));
    g.center_theta = 2 * pi * u(rng);
    g.polarization =
        SpinVec(Complex(gaussian(rng), gaussian(rng)),
                Complex(gaussian(rng), gaussian(rng)));
    g.amplitude = d.bump.amplitude * (0.5 + u(rng));
    out += gaussian_field(mesh, g);
  }
  return out;
}

inline SourceFn build_source(const RunConfig& cfg, const Mesh& mesh) {
  if (cfg.data.source == "none") return nullptr;
  return gaussian_pulse_source(mesh, cfg.data.pulse);
}

struct RunSummary {
  bool pass = true;
  std::vector<std::string> failures;
  nlohmann::ordered_json json;

  void fail(const std::string& what) {
    pass = false;
    failures.push_back(what);
  }
};

namespace iodetail {

inline void write_norms_csv(const std::filesystem::path& dir,
                            const SolveResult& res) {
  std::string csv = "t,norm,projection_residual,herm_residual\n";
  for (std::size_t j = 0; j < res.times.size(); ++j)
    csv += fmt(res.times[j]) + "," + fmt(res.diag[j].norm) + "," +
           fmt(res.diag[j].projection_residual) + "," +
           fmt(res.diag[j].herm_residual) + "\n";
  write_text(dir / "norms.csv", csv);
}

inline void write_energy_csv(const std::filesystem::path& dir,
                             const EnergyReport& rep) {
  std::string csv = "t,F,source_sq_cum,margin_from_start\n";
  for (std::size_t j = 0; j < rep.times.size(); ++j)
    csv += fmt(rep.times[j]) + "," + fmt(rep.F[j]) + "," +
           fmt(rep.source_sq_cum[j]) + "," + fmt(rep.margin_from_start[j]) +
           "\n";
  write_text(dir / "energy.csv", csv);
}

inline void write_flux_csv(const std::filesystem::path& dir,
                           const std::vector<double>& times,
                           const std::vector<double>& flux) {
  std::string csv = "t,flux\n";
  for (std::size_t j = 0; j < times.size(); ++j)
    csv += fmt(times[j]) + "," + fmt(flux[j]) + "\n";
  write_text(dir / "flux.csv", csv);
}

inline void write_support_csv(const std::filesystem::path& dir,
                              const SupportReport& rep) {
  std::string csv =
      "t,mass_total,mass_cone,mass_collar,mass_outside,leakage,"
      "mass_outside_improved,leakage_improved\n";
  for (std::size_t j = 0; j < rep.times.size(); ++j)
    csv += fmt(rep.times[j]) + "," + fmt(rep.mass_total[j]) + "," +
           fmt(rep.mass_cone[j]) + "," + fmt(rep.mass_collar[j]) + "," +
           fmt(rep.mass_outside[j]) + "," + fmt(rep.leakage[j]) + "," +
           fmt(rep.mass_outside_improved[j]) + "," +
           fmt(rep.leakage_improved[j]) + "\n";
  write_text(dir / "support.csv", csv);
}

inline void write_spectrum_csv(const std::filesystem::path& dir,
                               const DiracAssembly& A) {
  std::string csv = "component,mode,eigenvalue\n";
  for (const auto& ring : A.rings) {
    if (A.mesh->spatial_dim == 1) {
      csv += ring.component.name + ",0,-1\n";
      csv += ring.component.name + ",0,1\n";
      continue;
    }
    for (double kappa : A.modes.kappas) {
      const SpinMat Am = mode_adapted_matrix(A.rep, ring, kappa);
      Eigen::SelfAdjointEigenSolver<SpinMat> es(Am);
      csv += ring.component.name + "," + fmt(kappa) + "," +
             fmt(es.eigenvalues()[0]) + "\n";
      csv += ring.component.name + "," + fmt(kappa) + "," +
             fmt(es.eigenvalues()[1]) + "\n";
    }
  }
  write_text(dir / "spectrum.csv", csv);
}

inline void write_manifest(const std::filesystem::path& dir,
                           const RunConfig& cfg, std::uint64_t seed,
                           const std::string& original_text) {
  nlohmann::ordered_json m;
  m["artifact_version"] = artifact_version;
  m["snapshot_format_version"] = snapshot_version;
  m["seed"] = seed;
  m["config"] = config_json(cfg);
  write_text(dir / "manifest.json", m.dump(2) + "\n");
  if (!original_text.empty()) write_text(dir / "config.txt", original_text);
}

inline bool has_diag(const RunConfig& cfg, const std::string& name) {
  for (const auto& d : cfg.output.diagnostics)
    if (d == name) return true;
  return false;
}

}  // namespace iodetail

// Executes the configured pipeline and writes all artifacts. Enabled
// assertions (flux bound, free-flow norm drift, Picard contraction) decide
// pass/fail; the caller maps !pass to exit code 6.
inline RunSummary run(const RunConfig& cfg, const std::filesystem::path& out,
                      const std::string& original_text = "",
                      std::uint64_t seed = seed_from_env()) {
  namespace fs = std::filesystem;
  fs::create_directories(out);
  RunSummary summary;

  const FoliatedSpacetime st = make_spacetime(cfg);
  const auto rep = build_rep(cfg.geometry.dim);
  const Mesh mesh = build_mesh(st, cfg.geometry.radial, cfg.geometry.angular);
  const EvolutionConfig ev = make_evolution_config(cfg);
  const Vec psi0 = build_initial_datum(cfg, mesh, seed);
  const SourceFn f = build_source(cfg, mesh);

  iodetail::write_manifest(out, cfg, seed, original_text);

  SolveResult res;
  nlohmann::ordered_json picard_json;
  if (ev.scheme == Scheme::Midpoint) {
    res = solve_cauchy(st, rep, mesh, psi0, f, ev);
  } else {
    const auto mp = mollified_picard_solve(st, rep, mesh, psi0, f, ev);
    res = mp.per_epsilon.back();
    picard_json["epsilons"] = mp.epsilons;
    picard_json["pairwise_sup_diffs"] = mp.pairwise_sup_diffs;
    std::vector<double> contr;
    std::vector<int> iters;
    for (const auto& r : mp.records) {
      contr.push_back(r.max_contraction());
      iters.push_back(r.max_iterations());
    }
    picard_json["max_contraction"] = contr;
    picard_json["max_iterations"] = iters;
    for (std::size_t i = 0; i < mp.records.size(); ++i) {
      if (mp.records[i].max_contraction() > 0.6)
        summary.fail("picard contraction factor above 0.6 at epsilon " +
                     iodetail::fmt(mp.epsilons[i]));
    }
    for (std::size_t i = 0; i + 1 < mp.pairwise_sup_diffs.size(); ++i)
      if (mp.pairwise_sup_diffs[i + 1] >= mp.pairwise_sup_diffs[i])
        summary.fail("mollified solutions do not converge monotonically");
  }

  nlohmann::ordered_json sj;
  sj["scheme"] = cfg.scheme.scheme;
  sj["steps"] = res.steps();
  sj["dt"] = res.dt();

  if (iodetail::has_diag(cfg, "norms")) iodetail::write_norms_csv(out, res);

  // free-flow norm conservation gate
  if (!f && cfg.data.psi0 != "none" && ev.scheme == Scheme::Midpoint) {
    const double n0 = res.diag[res.anchor_index].norm;
    double drift = 0;
    for (const auto& d : res.diag)
      drift = std::max(drift, std::abs(d.norm - n0));
    const double tol = st.metric_static() ? 1e-10 : 1e-8;
    sj["norm_drift_rel"] = drift / std::max(n0, 1e-300);
    if (drift > tol * n0)
      summary.fail("free-flow norm drift above tolerance");
  }

  if (iodetail::has_diag(cfg, "energy")) {
    const auto erep = energy(res, f);
    iodetail::write_energy_csv(out, erep);
    sj["fitted_gronwall_C"] = erep.fitted_C;
    sj["energy_min_margin"] = erep.min_margin;
    if (erep.min_margin < 0) summary.fail("energy inequality margin negative");
  }

  if (iodetail::has_diag(cfg, "flux")) {
    const auto flux = boundary_flux_series(res);
    iodetail::write_flux_csv(out, res.times, flux);
    double fmax = 0, Fmax = 0;
    for (std::size_t j = 0; j < flux.size(); ++j) {
      fmax = std::max(fmax, std::abs(flux[j]));
      Fmax = std::max(Fmax, slice_energy(*res.reduction, res.physical_at(j),
                                         res.times[j]));
    }
    sj["max_abs_flux"] = fmax;
    sj["max_energy"] = Fmax;
    if (fmax > 1e-11 * std::max(Fmax, 1e-300))
      summary.fail("boundary flux above 1e-11 * max energy");
  }

  if (iodetail::has_diag(cfg, "support") && cfg.data.psi0 != "none") {
    const auto srep = support_mass(res, support_nodes(mesh, psi0));
    iodetail::write_support_csv(out, srep);
    double lmax = 0;
    for (double l : srep.leakage) lmax = std::max(lmax, l);
    sj["max_leakage"] = lmax;
  }

  if (iodetail::has_diag(cfg, "spectrum")) {
    const auto conf = conformal_reduce(st);
    const auto A0 = assemble_spatial_dirac(conf.reduced, rep, mesh, 0.0);
    iodetail::write_spectrum_csv(out, A0);
  }

  if (cfg.output.snapshots) {
    fs::create_directories(out / "snapshots");
    for (std::size_t j = 0; j < res.times.size();
         j += cfg.output.snapshot_stride) {
      char name[32];
      std::snprintf(name, sizeof(name), "snap_%06zu.apsd", j);
      export_snapshot(res.physical_at(static_cast<int>(j)), mesh,
                      res.times[j], out / "snapshots" / name);
    }
  }

  if (!picard_json.empty()) sj["picard"] = picard_json;
  sj["pass"] = summary.pass;
  sj["failures"] = summary.failures;
  summary.json = sj;
  iodetail::write_text(out / "summary.json", sj.dump(2) + "\n");
  return summary;
}

// Green-operator run: applies G+ (or G-) to the configured source and checks
// the defining identity D_M G f = f through the discrete residual.
inline RunSummary run_green(const RunConfig& cfg,
                            const std::filesystem::path& out, bool plus,
                            const std::string& original_text = "",
                            std::uint64_t seed = seed_from_env()) {
  namespace fs = std::filesystem;
  fs::create_directories(out);
  RunSummary summary;
  if (cfg.data.source == "none")
    throw ConfigError("green: [data] source must not be 'none'");
  const FoliatedSpacetime st = make_spacetime(cfg);
  const auto rep = build_rep(cfg.geometry.dim);
  const Mesh mesh = build_mesh(st, cfg.geometry.radial, cfg.geometry.angular);
  const EvolutionConfig ev = make_evolution_config(cfg);
  const SourceFn f = build_source(cfg, mesh);
  const double lo = cfg.data.pulse.center_t - cfg.data.pulse.support_halfwidth();
  const double hi = cfg.data.pulse.center_t + cfg.data.pulse.support_halfwidth();

  iodetail::write_manifest(out, cfg, seed, original_text);
  const auto gr = plus ? green_plus(st, rep, mesh, f, lo, hi, ev)
                       : green_minus(st, rep, mesh, f, lo, hi, ev);
  const auto& res = gr.solution;
  if (iodetail::has_diag(cfg, "norms")) iodetail::write_norms_csv(out, res);

  std::vector<int> ids;
  const auto dmpsi = apply_dirac_physical(res, &ids);
  const auto& red = *res.reduction;
  double num = 0, den = 0;
  std::string csv = "t,residual_norm,source_norm\n";
  for (std::size_t s = 0; s < dmpsi.size(); ++s) {
    const Vec fv = f(res.times[ids[s]]);
    const double rn = red.norm0(dmpsi[s] - fv);
    const double sn = red.norm0(fv);
    csv += iodetail::fmt(res.times[ids[s]]) + "," + iodetail::fmt(rn) + "," +
           iodetail::fmt(sn) + "\n";
    num = std::max(num, rn);
    den = std::max(den, sn);
  }
  iodetail::write_text(out / "green_residual.csv", csv);
  const double rel = num / std::max(den, 1e-300);
  nlohmann::ordered_json sj;
  sj["direction"] = plus ? "plus" : "minus";
  sj["anchor_time"] = gr.anchor_time;
  sj["max_relative_residual"] = rel;
  if (rel > 0.05) summary.fail("green residual above 0.05");
  sj["pass"] = summary.pass;
  sj["failures"] = summary.failures;
  summary.json = sj;
  iodetail::write_text(out / "summary.json", sj.dump(2) + "\n");
  return summary;
}

// Convergence study over nested refinements of the configured run.
inline RunSummary run_study(const RunConfig& cfg,
                            const std::filesystem::path& out, int levels = 3,
                            const std::string& original_text = "",
                            std::uint64_t seed = seed_from_env()) {
  namespace fs = std::filesystem;
  fs::create_directories(out);
  RunSummary summary;
  iodetail::write_manifest(out, cfg, seed, original_text);
  std::vector<SolveResult> results;
  int I = cfg.geometry.radial, K = cfg.geometry.angular,
      steps = cfg.scheme.steps;
  if (cfg.scheme.dt > 0)
    steps = static_cast<int>(std::lround(cfg.window() / cfg.scheme.dt));
  for (int l = 0; l < levels; ++l) {
    RunConfig level_cfg = cfg;
    level_cfg.geometry.radial = I;
    level_cfg.geometry.angular = K;
    level_cfg.scheme.dt = 0;
    level_cfg.scheme.steps = steps;
    const FoliatedSpacetime st = make_spacetime(level_cfg);
    const auto rep = build_rep(cfg.geometry.dim);
    const Mesh mesh = build_mesh(st, I, K);
    const EvolutionConfig ev = make_evolution_config(level_cfg);
    results.push_back(solve_cauchy(st, rep, mesh,
                                   build_initial_datum(level_cfg, mesh, seed),
                                   build_source(level_cfg, mesh), ev));
    I = 2 * I - 1;
    K *= 2;
    steps *= 2;
  }
  const auto conv = self_convergence(results);
  nlohmann::ordered_json sj;
  sj["level_distances"] = conv.level_distances;
  sj["orders"] = conv.orders;
  for (double p : conv.orders)
    if (!(p > 1.5)) summary.fail("observed order below 1.5");
  sj["pass"] = summary.pass;
  sj["failures"] = summary.failures;
  summary.json = sj;
  iodetail::write_text(out / "study.json", sj.dump(2) + "\n");
  return summary;
}

// Assumption validation + boundary kernel check; throws on failure so the
// CLI maps to exit codes 3 and 4.
inline RunSummary run_validate(const RunConfig& cfg) {
  RunSummary summary;
  const FoliatedSpacetime st = make_spacetime(cfg);
  const auto report = validate_assumptions(st);
  nlohmann::ordered_json items = nlohmann::ordered_json::array();
  for (const auto& item : report.items)
    items.push_back({{"name", item.name},
                     {"pass", item.pass},
                     {"violation", item.violation}});
  summary.json["assumptions"] = items;
  if (!report.all_pass())
    throw AssumptionError("validate: standing assumptions violated");
  const auto conf = conformal_reduce(st);
  const auto rep = build_rep(cfg.geometry.dim);
  const Mesh mesh = build_mesh(conf.reduced, cfg.geometry.radial,
                               cfg.geometry.angular);
  const auto A0 = assemble_spatial_dirac(conf.reduced, rep, mesh, 0.0);
  nlohmann::ordered_json kernels = nlohmann::ordered_json::array();
  for (int r = 0; r < static_cast<int>(A0.rings.size()); ++r) {
    const auto adapted = assemble_adapted_operator(A0, r);  // throws on kernel
    const auto kr = kernel_check(adapted);
    kernels.push_back({{"component", A0.rings[r].component.name},
                       {"min_abs_eigenvalue", kr.min_abs},
                       {"pass", kr.pass}});
  }
  summary.json["kernel_checks"] = kernels;
  summary.json["pass"] = true;
  return summary;
}

}  // namespace apsdirac
