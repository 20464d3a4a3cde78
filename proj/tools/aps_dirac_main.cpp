// aps_dirac: solve the Cauchy problem for the Lorentzian Dirac operator with
// APS/MIT spectral boundary conditions on model spacetimes, and run the
// attendant diagnostics. See README.md for the configuration format.

#include "apsdirac/pipeline.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw apsdirac::ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  bool serial = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool needs_out = true) {
  cmd->add_option("--config", opts.config_path, "run configuration file")
      ->required();
  if (needs_out)
    cmd->add_option("--out", opts.out_dir,
                    "output directory (default: [output] directory)");
  cmd->add_flag("--serial", opts.serial,
                "force serial block processing (bit-identical runs)");
}

apsdirac::RunConfig load(const CommonOpts& opts, std::string& text) {
  text = slurp(opts.config_path);
  auto cfg = apsdirac::parse_config(text);
  if (opts.serial) cfg.scheme.parallel = false;
  return cfg;
}

std::string out_dir_for(const CommonOpts& opts,
                        const apsdirac::RunConfig& cfg) {
  return opts.out_dir.empty() ? cfg.output.directory : opts.out_dir;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "aps_dirac: Dirac evolution with APS/MIT spectral boundary conditions "
      "on model spacetimes"};
  app.require_subcommand(1);

  CommonOpts solve_opts, green_opts, study_opts, validate_opts, spectrum_opts;
  std::string green_direction = "plus";
  int study_levels = 3;

  auto* solve = app.add_subcommand("solve", "run the configured Cauchy solve");
  add_common(solve, solve_opts);
  auto* green = app.add_subcommand(
      "green", "apply a Green operator to the configured source");
  add_common(green, green_opts);
  green->add_option("--direction", green_direction,
                    "plus (retarded) or minus (advanced)")
      ->check(CLI::IsMember({"plus", "minus"}));
  auto* study =
      app.add_subcommand("study", "self-convergence study over refinements");
  add_common(study, study_opts);
  study->add_option("--levels", study_levels, "number of nested resolutions")
      ->check(CLI::Range(2, 5));
  auto* validate = app.add_subcommand(
      "validate", "check standing assumptions and boundary kernels");
  add_common(validate, validate_opts, false);
  auto* spectrum = app.add_subcommand(
      "spectrum", "export the boundary operator spectrum as CSV");
  add_common(spectrum, spectrum_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    const std::uint64_t seed = apsdirac::seed_from_env();
    if (solve->parsed()) {
      std::string text;
      const auto cfg = load(solve_opts, text);
      const auto summary =
          apsdirac::run(cfg, out_dir_for(solve_opts, cfg), text, seed);
      std::cout << summary.json.dump(2) << "\n";
      if (!summary.pass) {
        for (const auto& f : summary.failures)
          std::cerr << "assertion failed: " << f << "\n";
        return 6;
      }
    } else if (green->parsed()) {
      std::string text;
      const auto cfg = load(green_opts, text);
      const auto summary =
          apsdirac::run_green(cfg, out_dir_for(green_opts, cfg),
                              green_direction == "plus", text, seed);
      std::cout << summary.json.dump(2) << "\n";
      if (!summary.pass) return 6;
    } else if (study->parsed()) {
      std::string text;
      const auto cfg = load(study_opts, text);
      const auto summary = apsdirac::run_study(
          cfg, out_dir_for(study_opts, cfg), study_levels, text, seed);
      std::cout << summary.json.dump(2) << "\n";
      if (!summary.pass) return 6;
    } else if (validate->parsed()) {
      std::string text;
      const auto cfg = load(validate_opts, text);
      const auto summary = apsdirac::run_validate(cfg);
      std::cout << summary.json.dump(2) << "\n";
    } else if (spectrum->parsed()) {
      std::string text;
      const auto cfg = load(spectrum_opts, text);
      const auto st = apsdirac::make_spacetime(cfg);
      const auto conf = apsdirac::conformal_reduce(st);
      const auto rep = apsdirac::build_rep(cfg.geometry.dim);
      const auto mesh = apsdirac::build_mesh(conf.reduced, cfg.geometry.radial,
                                             cfg.geometry.angular);
      const auto A0 =
          apsdirac::assemble_spatial_dirac(conf.reduced, rep, mesh, 0.0);
      const auto dir = out_dir_for(spectrum_opts, cfg);
      std::filesystem::create_directories(dir);
      apsdirac::iodetail::write_spectrum_csv(dir, A0);
      std::cout << "wrote " << (std::filesystem::path(dir) / "spectrum.csv")
                << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return apsdirac::exit_code_for(e);
  }
  return 0;
}
