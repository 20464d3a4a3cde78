#include "apsdirac/pipeline.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

using namespace apsdirac;
namespace fs = std::filesystem;

namespace {

const char* minimal_annulus_cfg = R"(
[geometry]
dim = 2
family = "static"
I = 10
K = 8
r_in = 1.0
r_out = 2.0
t_min = -0.1
t_max = 0.1
)";

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("apsdirac_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("parse_config: minimal config gets defaults, dt = T/200") {
  const auto cfg = parse_config(minimal_annulus_cfg);
  CHECK(cfg.geometry.dim == 2);
  CHECK(cfg.scheme.steps == 200);
  CHECK(cfg.resolved_dt() == doctest::Approx(0.2 / 200).epsilon(1e-15));
  CHECK(cfg.boundary.at("inner") == BoundaryTag::APS);
  CHECK(cfg.boundary.at("outer") == BoundaryTag::APS);
}

TEST_CASE("parse_config: errors are precise and fail closed") {
  SUBCASE("unknown boundary condition") {
    const std::string text = std::string(minimal_annulus_cfg) +
                             "[boundary]\nouter = \"PERIODIC\"\n";
    CHECK_THROWS_WITH_AS(parse_config(text),
                         doctest::Contains("unknown boundary condition"),
                         ConfigError);
  }
  SUBCASE("window must contain t = 0") {
    std::string text = minimal_annulus_cfg;
    text.replace(text.find("t_min = -0.1"), 12, "t_min = 1.00");
    text.replace(text.find("t_max = 0.1"), 11, "t_max = 2.0");
    CHECK_THROWS_WITH_AS(parse_config(text), doctest::Contains("t = 0"),
                         ConfigError);
  }
  SUBCASE("unknown keys are rejected with their line") {
    const std::string text =
        std::string(minimal_annulus_cfg) + "[scheme]\nfancy_knob = 3\n";
    CHECK_THROWS_WITH_AS(parse_config(text), doctest::Contains("fancy_knob"),
                         ConfigError);
  }
  SUBCASE("unknown section") {
    const std::string text = std::string(minimal_annulus_cfg) + "[plotting]\n";
    CHECK_THROWS_AS(parse_config(text), ConfigError);
  }
}

TEST_CASE("snapshot round trip is bit exact; mismatches are refused") {
  auto st = make_annulus(1.0, 2.0, family_static(1.0), BoundaryTag::APS,
                         BoundaryTag::APS, 0, 1);
  const auto mesh = build_mesh(st, 8, 8);
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g;
  Vec v(mesh.value_count());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = Complex(g(rng), g(rng));
  const auto dir = fresh_dir("snapshot");
  const auto path = dir / "field.apsd";
  export_snapshot(v, mesh, 0.125, path);

  SUBCASE("round trip") {
    const auto snap = import_snapshot(path, mesh);
    CHECK(snap.t == 0.125);
    REQUIRE(snap.values.size() == v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) CHECK(snap.values[i] == v[i]);
  }
  SUBCASE("truncated file") {
    const auto bytes = read_file(path);
    std::ofstream out(dir / "trunc.apsd", std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    out.close();
    CHECK_THROWS_WITH_AS(import_snapshot(dir / "trunc.apsd", mesh),
                         doctest::Contains("truncated"), std::runtime_error);
  }
  SUBCASE("cross-resolution import fails on the mesh hash") {
    const auto mesh2 = build_mesh(st, 12, 8);
    CHECK_THROWS_WITH_AS(import_snapshot(path, mesh2),
                         doctest::Contains("mesh"), std::runtime_error);
  }
}

TEST_CASE("exit code mapping is stable") {
  CHECK(exit_code_for(ConfigError("x")) == 2);
  CHECK(exit_code_for(AssumptionError("x")) == 3);
  CHECK(exit_code_for(KernelError("x")) == 4);
  CHECK(exit_code_for(SolverError("x")) == 5);
  CHECK(exit_code_for(AssertionError("x")) == 6);
  CHECK(exit_code_for(std::runtime_error("x")) == 1);
}

TEST_CASE("run: smoke interval pipeline writes deterministic artifacts") {
  const std::string text = R"(
[geometry]
dim = 1
family = "static"
I = 16
L = 1.0
t_min = 0.0
t_max = 0.25

[data]
psi0 = "gaussian"
center_s = 0.5
sigma_s = 0.07

[scheme]
steps = 50

[output]
diagnostics = ["energy", "flux", "norms"]
snapshots = true
)";
  const auto cfg = parse_config(text);
  const auto dir_a = fresh_dir("run_a");
  const auto dir_b = fresh_dir("run_b");
  const auto summary_a = run(cfg, dir_a, text, 7);
  const auto summary_b = run(cfg, dir_b, text, 7);
  CHECK(summary_a.pass);
  CHECK(summary_b.pass);
  for (const char* name :
       {"norms.csv", "energy.csv", "flux.csv", "summary.json",
        "manifest.json"}) {
    CAPTURE(name);
    CHECK(fs::exists(dir_a / name));
    CHECK(read_file(dir_a / name) == read_file(dir_b / name));
  }
  CHECK(fs::exists(dir_a / "snapshots" / "snap_000000.apsd"));

  // manifest reconstructs the configuration
  const auto manifest = nlohmann::json::parse(read_file(dir_a / "manifest.json"));
  CHECK(manifest["config"]["geometry"]["I"] == 16);
  CHECK(manifest["config"]["scheme"]["steps"] == 50);
  CHECK(read_file(dir_a / "config.txt") == text);
}

TEST_CASE("run_validate flags bad geometries through typed errors") {
  auto cfg = parse_config(minimal_annulus_cfg);
  CHECK(run_validate(cfg).json["pass"] == true);
}

TEST_CASE("tabulated geometry loads and evaluates") {
  const auto dir = fresh_dir("table");
  // interval with a(t,x) = 1 + 0.5 t on 5 nodes, two time samples
  std::ofstream csv(dir / "geom.csv");
  csv << "t,node_index,N,a\n";
  for (double t : {0.0, 1.0})
    for (int i = 0; i < 5; ++i)
      csv << t << "," << i << ",1.0," << 1.0 + 0.5 * t << "\n";
  csv.close();

  const std::string text = "[geometry]\ndim = 1\nfamily = \"tabulated\"\n"
                           "table = \"" + (dir / "geom.csv").string() +
                           "\"\nI = 5\nL = 1.0\nt_min = 0.0\nt_max = 1.0\n";
  const auto cfg = parse_config(text);
  const auto st = make_spacetime(cfg);
  CHECK(st.warp.value(0.0, 0.5) == doctest::Approx(1.0));
  CHECK(st.warp.value(0.5, 0.5) == doctest::Approx(1.25));  // linear in t
  CHECK(st.warp.value(1.0, 0.25) == doctest::Approx(1.5));
  CHECK(st.unit_lapse);
}
