#include "apsdirac/evolution.hpp"

#include <doctest.h>

#include <random>

#include "apsdirac/data.hpp"
#include "oracles.hpp"

using namespace apsdirac;

namespace {

Vec random_field(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = Complex(g(rng), g(rng));
  return v;
}

}  // namespace

TEST_CASE("hamiltonian reduction: static metric gives the identity map") {
  auto st = make_annulus(1.0, 2.0, family_static(1.0), BoundaryTag::APS,
                         BoundaryTag::APS, -0.5, 0.5);
  const auto mesh = build_mesh(st, 8, 8);
  const auto red = hamiltonian_reduce(st, build_rep(2), mesh);
  CHECK((red.rho_values(0.4) - RVec::Ones(mesh.value_count())).cwiseAbs().maxCoeff() ==
        0.0);
  const auto A = red.assemble(0.4);
  for (int m = 0; m < red.block_count(); ++m)
    CHECK((red.reduced_block(A, m) - A.block(m)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("hamiltonian reduction: U is an isometry onto the fixed product") {
  std::mt19937_64 rng(1234);
  auto st = make_annulus(0.5, 1.5, family_exp_warp(1.0, 1.0), BoundaryTag::APS,
                         BoundaryTag::APS, -1.0, 1.0);
  const auto mesh = build_mesh(st, 10, 8);
  const auto red = hamiltonian_reduce(st, build_rep(2), mesh);
  const double t = 0.7;

  // round trip
  const Vec psi = random_field(mesh.value_count(), rng);
  const Vec back = red.inverse(red.forward(psi, t), t);
  CHECK((psi - back).norm() <= 1e-12 * psi.norm());

  // isometry against the weighted-norm oracle computed from sqrt|h_t|
  const auto At = assemble_spatial_dirac(st, red.rep, mesh, t);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Vec v = random_field(mesh.value_count(), rng);
    const double reduced_norm = red.norm0(red.forward(v, t));
    const double phys_norm =
        std::sqrt(v.dot(At.weight.asDiagonal() * v).real());
    worst = std::max(worst,
                     std::abs(reduced_norm - phys_norm) / phys_norm);
  }
  CHECK(worst <= 1e-12);

  // non-unit lapse is rejected
  auto bad = st;
  bad.unit_lapse = false;
  bad.lapse = [](double, double) { return 2.0; };
  CHECK_THROWS_AS(hamiltonian_reduce(bad, build_rep(2), mesh),
                  AssumptionError);
}

TEST_CASE("midpoint step: norm preservation and degenerate cases") {
  SUBCASE("Cayley step of a Hermitian block preserves the norm") {
    auto st = make_interval(1.0, family_static(1.0), BoundaryTag::APS,
                            BoundaryTag::APS, -0.5, 0.5);
    const auto mesh = build_mesh(st, 16, 1);
    const auto A = assemble_spatial_dirac(st, build_rep(1), mesh, 0.0);
    const auto con =
        constrain_with_rows(A.block(0), A.block_weight(),
                            mode_constraint_rows(A, 0));
    std::mt19937_64 rng(5);
    Vec c = random_field(static_cast<int>(con.Q.cols()), rng);
    Vec psi = con.Q * c;
    const double n0 = std::sqrt(
        psi.dot(con.weight.asDiagonal() * psi).real());
    const Vec next = midpoint_step(con, psi, Vec(), 0.01);
    const double n1 = std::sqrt(
        next.dot(con.weight.asDiagonal() * next).real());
    CHECK(std::abs(n1 - n0) <= 1e-12 * n0);
  }
  SUBCASE("zero generator: psi + dt f") {
    const int n = 6;
    const RVec W = RVec::Constant(n, 0.7);
    const auto con =
        constrain_with_rows(Mat::Zero(n, n), W, Mat::Zero(0, n));
    std::mt19937_64 rng(8);
    const Vec psi = random_field(n, rng);
    const Vec f = random_field(n, rng);
    const Vec next = midpoint_step(con, psi, f, 0.3);
    CHECK((next - (psi + 0.3 * f)).norm() <= 1e-13 * psi.norm());
  }
  SUBCASE("single mode: amplification factor is the Cayley phase") {
    ConstrainedDirac con;
    const double lam = 1.7, dt = 0.2;
    con.Q = Mat::Ones(1, 1);
    con.Dc = lam * Mat::Ones(1, 1);
    con.weight = RVec::Ones(1);
    Vec psi = Vec::Ones(1);
    const Vec next = midpoint_step(con, psi, Vec(), dt);
    const Complex expect = (Complex(1, -0.5 * dt * lam)) /
                           (Complex(1, 0.5 * dt * lam));
    CHECK(std::abs(next[0] - expect) <= 1e-14);
    CHECK(std::abs(std::abs(next[0]) - 1.0) <= 1e-14);
  }
}

TEST_CASE("mollifier: identity at eps=0, contraction, scalar value") {
  auto st = make_interval(1.0, family_static(1.0), BoundaryTag::APS,
                          BoundaryTag::APS, -0.5, 0.5);
  const auto mesh = build_mesh(st, 12, 1);
  const auto A = assemble_spatial_dirac(st, build_rep(1), mesh, 0.0);
  const auto con = constrain_with_rows(A.block(0), A.block_weight(),
                                       mode_constraint_rows(A, 0));
  const auto es = eigensystem(con.Dc);
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const Vec c = random_field(static_cast<int>(con.Dc.rows()), rng);
    CHECK((mollifier_apply(es, 0.0, c) - c).norm() <= 1e-12 * c.norm());
    CHECK(mollifier_apply(es, 0.37, c).norm() <= c.norm() * (1 + 1e-13));
  }
  // synthetic single eigenvector with lambda = 0: scaling e^{-eps <0>} = e^-1
  BlockEigensystem single;
  single.eigenvalues = RVec::Zero(1);
  single.eigenvectors = Mat::Ones(1, 1);
  Vec one = Vec::Ones(1);
  CHECK(std::abs(mollifier_apply(single, 1.0, one)[0] - std::exp(-1.0)) <=
        1e-15);
}

TEST_CASE("solve_cauchy: zero data gives the zero solution exactly") {
  auto st = make_annulus(1.0, 2.0, family_static(1.0), BoundaryTag::APS,
                         BoundaryTag::APS, -0.1, 0.2);
  const auto mesh = build_mesh(st, 8, 8);
  EvolutionConfig cfg;
  cfg.dt = 0.01;
  const auto res = solve_cauchy(st, build_rep(2), mesh,
                                Vec::Zero(mesh.value_count()), nullptr, cfg);
  REQUIRE(static_cast<int>(res.reduced.size()) == res.steps() + 1);
  for (const auto& snap : res.reduced) CHECK(snap.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("solve_cauchy: norm conservation on static and warped annuli") {
  GaussianSpec g;
  g.center_s = 1.5;
  g.center_theta = pi;
  g.sigma_s = 0.08;   // boundary tail ~ e^{-19.5}: interior-supported
  g.sigma_theta = 0.6;
  SUBCASE("static flat annulus, 200 steps") {
    auto st = make_annulus(1.0, 2.0, family_static(1.0), BoundaryTag::APS,
                           BoundaryTag::APS, 0.0, 0.5);
    const auto mesh = build_mesh(st, 16, 8);
    EvolutionConfig cfg;
    cfg.dt = 0.5 / 200;
    const auto res = solve_cauchy(st, build_rep(2), mesh,
                                  gaussian_field(mesh, g), nullptr, cfg);
    const double n0 = res.diag[res.anchor_index].norm;
    for (const auto& d : res.diag)
      CHECK(std::abs(d.norm - n0) <= 1e-10 * n0);
  }
  SUBCASE("e^{0.1 t} warp stays isometric in the reduced picture") {
    auto st = make_annulus(1.0, 2.0, family_exp_warp(1.0, 0.1),
                           BoundaryTag::APS, BoundaryTag::APS, 0.0, 0.5);
    const auto mesh = build_mesh(st, 16, 8);
    EvolutionConfig cfg;
    cfg.dt = 0.5 / 100;
    const auto res = solve_cauchy(st, build_rep(2), mesh,
                                  gaussian_field(mesh, g), nullptr, cfg);
    const double n0 = res.diag[res.anchor_index].norm;
    for (const auto& d : res.diag)
      CHECK(std::abs(d.norm - n0) <= 1e-8 * n0);
    // initial-slice restriction equals the datum exactly
    CHECK((res.reduced[res.anchor_index] - gaussian_field(mesh, g)).norm() ==
          0.0);
  }
}

TEST_CASE("green operators: zero source maps to zero") {
  auto st = make_annulus(1.0, 2.0, family_static(1.0), BoundaryTag::APS,
                         BoundaryTag::APS, -0.3, 0.3);
  const auto mesh = build_mesh(st, 8, 8);
  EvolutionConfig cfg;
  cfg.dt = 0.01;
  SourceFn zero = [&](double) { return Vec::Zero(mesh.value_count()); };
  const auto gp = green_plus(st, build_rep(2), mesh, zero, -0.05, 0.05, cfg);
  const auto gm = green_minus(st, build_rep(2), mesh, zero, -0.05, 0.05, cfg);
  for (const auto& snap : gp.solution.reduced)
    CHECK(snap.cwiseAbs().maxCoeff() == 0.0);
  for (const auto& snap : gm.solution.reduced)
    CHECK(snap.cwiseAbs().maxCoeff() == 0.0);
  CHECK(gp.anchor_time < -0.05);
  CHECK(gm.anchor_time > 0.05);
}

TEST_CASE("mollified Picard on the interval") {
  auto st = make_interval(1.0, family_static(1.0), BoundaryTag::APS,
                          BoundaryTag::APS, 0.0, 0.4);
  const auto mesh = build_mesh(st, 14, 1);
  const auto rep = build_rep(1);
  GaussianSpec g;
  g.center_s = 0.5;
  g.sigma_s = 0.07;   // endpoint tail ~ e^{-25}: interior-supported
  EvolutionConfig cfg;
  cfg.dt = 0.4 / 40;

  SUBCASE("zero data stays zero for every epsilon") {
    const auto out = mollified_picard_solve(
        st, rep, mesh, Vec::Zero(mesh.value_count()), nullptr, cfg);
    for (const auto& res : out.per_epsilon)
      for (const auto& snap : res.reduced)
        CHECK(snap.cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("strong damping at eps = 10 reduces to the source quadrature") {
    PulseSpec pulse;
    pulse.space = g;
    pulse.center_t = 0.2;
    pulse.sigma_t = 0.05;
    const SourceFn f = gaussian_pulse_source(mesh, pulse);
    EvolutionConfig strong = cfg;
    strong.epsilon_schedule = {10.0};
    strong.scheme = Scheme::MollifiedPicard;
    const auto out = mollified_picard_solve(
        st, rep, mesh, Vec::Zero(mesh.value_count()), f, strong);
    const auto& res = out.per_epsilon[0];
    const auto& red = *res.reduction;
    // oracle: direct trapezoid of the reduced source, no generator
    double worst = 0;
    for (std::size_t j = 0; j < res.times.size(); ++j) {
      std::vector<Vec> vals;
      for (std::size_t s = 0; s <= j; ++s)
        vals.push_back(red.reduce_source(f(res.times[s]), res.times[s]));
      Vec drift = Vec::Zero(mesh.value_count());
      if (j > 0) {
        drift = oracle::trapezoid(vals, cfg.dt);
      }
      worst = std::max(worst, red.norm0(res.reduced[j] - drift));
    }
    double scale = 0;
    for (const auto& d : res.diag) scale = std::max(scale, d.norm);
    CHECK(worst <= 1e-8 * std::max(scale, 1.0));
  }

  SUBCASE("epsilon schedule converges monotonically toward midpoint") {
    EvolutionConfig mid = cfg;
    const Vec psi0 = gaussian_field(mesh, g);
    const auto res_mid = solve_cauchy(st, rep, mesh, psi0, nullptr, mid);
    EvolutionConfig pic = cfg;
    pic.scheme = Scheme::MollifiedPicard;
    pic.epsilon_schedule = {0.1, 0.05, 0.025, 0.0125};
    const auto out = mollified_picard_solve(st, rep, mesh, psi0, nullptr, pic);
    std::vector<double> dist_to_mid;
    for (const auto& res : out.per_epsilon) {
      double sup = 0;
      for (std::size_t j = 0; j < res.times.size(); ++j)
        sup = std::max(sup, res.reduction->norm0(res.reduced[j] -
                                                 res_mid.reduced[j]));
      dist_to_mid.push_back(sup);
    }
    for (std::size_t j = 0; j + 1 < dist_to_mid.size(); ++j)
      CHECK(dist_to_mid[j + 1] < dist_to_mid[j]);
    // every window converged within the cap with a recorded contraction
    for (const auto& rec : out.records) {
      CHECK(rec.max_iterations() <= pic.picard_max_iter);
      CHECK(rec.max_contraction() <= 0.75);
    }
  }
}

TEST_CASE("time grid construction") {
  int anchor = -1;
  const auto times = make_time_grid(-0.2, 0.3, 0.1, anchor);
  REQUIRE(times.size() == 6);
  CHECK(anchor == 2);
  CHECK(times[anchor] == 0.0);
  CHECK_THROWS_AS(make_time_grid(0.1, 0.5, 0.1, anchor),
                  std::invalid_argument);
  CHECK_THROWS_AS(make_time_grid(-0.25, 0.5, 0.2, anchor),
                  std::invalid_argument);
}

TEST_CASE("conformal pipeline: lapse handled inside solve_cauchy") {
  // N = 1 + 0.5 sin(pi x / L): unit on the boundary, nontrivial inside.
  const double L = 1.0;
  auto base = make_interval(L, family_static(1.0), BoundaryTag::APS,
                            BoundaryTag::APS, 0.0, 0.25);
  auto st = base;
  st.unit_lapse = false;
  st.lapse = [L](double, double x) { return 1.0 + 0.5 * std::sin(pi * x / L); };
  const auto mesh = build_mesh(st, 24, 1);
  const auto rep = build_rep(1);
  GaussianSpec g;
  g.center_s = 0.5;
  g.sigma_s = 0.07;
  const Vec psi0 = gaussian_field(mesh, g);
  EvolutionConfig cfg;
  cfg.dt = 0.25 / 50;

  const auto res = solve_cauchy(st, rep, mesh, psi0, nullptr, cfg);
  CHECK_FALSE(res.conformal.identity);
  // initial physical slice reproduces the datum
  CHECK((res.physical_at(res.anchor_index) - psi0).norm() <=
        1e-12 * psi0.norm());

  // manual route: reduce first, transport the datum, map back by hand
  const auto conf = conformal_reduce(st);
  Vec psi0_hat(psi0.size());
  for (int i = 0; i < mesh.radial_count; ++i) {
    const double w = conf.weights.spinor(0.0, mesh.s_nodes[i]);
    psi0_hat.segment<2>(2 * i) = w * psi0.segment<2>(2 * i);
  }
  const auto res_hat =
      solve_cauchy(conf.reduced, rep, mesh, psi0_hat, nullptr, cfg);
  for (std::size_t j = 0; j < res.times.size(); ++j) {
    Vec manual = res_hat.physical_at(static_cast<int>(j));
    for (int i = 0; i < mesh.radial_count; ++i) {
      const double w = conf.weights.spinor(res.times[j], mesh.s_nodes[i]);
      manual.segment<2>(2 * i) /= w;
    }
    CHECK((res.physical_at(static_cast<int>(j)) - manual).norm() <=
          1e-12 * manual.norm());
  }
}

TEST_CASE("picard error path: iteration cap triggers after window shrinking") {
  auto st = make_interval(1.0, family_static(1.0), BoundaryTag::APS,
                          BoundaryTag::APS, 0.0, 0.4);
  const auto mesh = build_mesh(st, 14, 1);
  GaussianSpec g;
  g.center_s = 0.5;
  g.sigma_s = 0.07;
  EvolutionConfig cfg;
  cfg.dt = 0.4 / 8;  // coarse steps so a single step cannot contract enough
  cfg.scheme = Scheme::MollifiedPicard;
  cfg.epsilon_schedule = {1e-4};
  cfg.picard_max_iter = 1;
  cfg.picard_tol = 1e-14;
  CHECK_THROWS_AS(mollified_picard_solve(st, build_rep(1), mesh,
                                         gaussian_field(mesh, g), nullptr,
                                         cfg),
                  SolverError);
}
