#include "apsdirac/discrete_dirac.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <random>

#include "oracles.hpp"

using namespace apsdirac;

namespace {

Vec random_field(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = Complex(g(rng), g(rng));
  return v;
}

double green_defect(const DiracAssembly& A, const Vec& psi, const Vec& phi) {
  const Complex lhs = A.weighted_inner(A.apply(psi), phi) -
                      A.weighted_inner(psi, A.apply(phi));
  const Complex bd = -A.boundary_pairing_sum(psi, phi);
  return std::abs(lhs - bd);
}

}  // namespace

TEST_CASE("build_mesh: trapezoid weights and boundary bookkeeping") {
  auto st1 = make_interval(1.0, family_static(1.0), BoundaryTag::APS,
                           BoundaryTag::APS, 0, 1);
  SUBCASE("interval, 5 nodes") {
    const auto m = build_mesh(st1, 5, 1);
    const std::vector<double> expect = {0, 0.25, 0.5, 0.75, 1.0};
    for (int i = 0; i < 5; ++i)
      CHECK(m.s_nodes[i] == doctest::Approx(expect[i]).epsilon(1e-15));
    CHECK(m.w_s[0] == doctest::Approx(0.125));
    CHECK(m.w_s[1] == doctest::Approx(0.25));
    CHECK(m.w_s[4] == doctest::Approx(0.125));
    CHECK(m.w_s.sum() == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("annulus 8 x 16") {
    auto st2 = make_annulus(1.0, 2.0, family_static(1.0), BoundaryTag::APS,
                            BoundaryTag::APS, 0, 1);
    const auto m = build_mesh(st2, 8, 16);
    CHECK(m.node_count() == 128);
    int boundary_nodes = 0;
    for (int p = 0; p < m.node_count(); ++p)
      if (m.is_boundary_node(p)) ++boundary_nodes;
    CHECK(boundary_nodes == 32);
  }
  SUBCASE("sizes below minimum are rejected") {
    CHECK_THROWS_AS(build_mesh(st1, 2, 1), std::invalid_argument);
    auto st2 = make_annulus(1.0, 2.0, family_static(1.0), BoundaryTag::APS,
                            BoundaryTag::APS, 0, 1);
    CHECK_THROWS_AS(build_mesh(st2, 8, 7), std::invalid_argument);
    CHECK_THROWS_AS(build_mesh(st2, 8, 6), std::invalid_argument);
  }
}

TEST_CASE("SBP Green identity is exact for random field pairs") {
  std::mt19937_64 rng(7);
  SUBCASE("interval, spatially varying scale") {
    MetricCoef a{[](double, double x) { return 1.0 + 0.3 * std::sin(2 * pi * x); },
                 true};
    auto st = make_interval(1.0, a, BoundaryTag::APS, BoundaryTag::APS, 0, 1);
    const auto mesh = build_mesh(st, 16, 1);
    const auto A = assemble_spatial_dirac(st, build_rep(1), mesh, 0.0);
    const Mat D = A.dense();
    const double scale = D.cwiseAbs().maxCoeff();
    for (int trial = 0; trial < 100; ++trial) {
      const Vec psi = random_field(mesh.value_count(), rng);
      const Vec phi = random_field(mesh.value_count(), rng);
      CHECK(green_defect(A, psi, phi) <=
            1e-12 * scale * psi.norm() * phi.norm());
    }
  }
  SUBCASE("annulus, warped") {
    MetricCoef f{[](double, double r) { return 1.0 + 0.2 * (r - 1.0); }, true};
    auto st = make_annulus(1.0, 2.0, f, BoundaryTag::APS, BoundaryTag::APS, 0,
                           1);
    const auto mesh = build_mesh(st, 10, 8);
    const auto A = assemble_spatial_dirac(st, build_rep(2), mesh, 0.0);
    const double scale = 1.0 / mesh.ds();
    for (int trial = 0; trial < 100; ++trial) {
      const Vec psi = random_field(mesh.value_count(), rng);
      const Vec phi = random_field(mesh.value_count(), rng);
      CHECK(green_defect(A, psi, phi) <=
            1e-12 * scale * psi.norm() * phi.norm());
    }
  }
}

TEST_CASE("interior-supported fields see a symmetric operator") {
  std::mt19937_64 rng(11);
  auto st = make_annulus(1.0, 2.0, family_static(1.0), BoundaryTag::APS,
                         BoundaryTag::APS, 0, 1);
  const auto mesh = build_mesh(st, 10, 8);
  const auto A = assemble_spatial_dirac(st, build_rep(2), mesh, 0.0);
  for (int trial = 0; trial < 20; ++trial) {
    Vec psi = random_field(mesh.value_count(), rng);
    Vec phi = random_field(mesh.value_count(), rng);
    for (int p = 0; p < mesh.node_count(); ++p)
      if (mesh.is_boundary_node(p)) {
        psi.segment<2>(2 * p).setZero();
        phi.segment<2>(2 * p).setZero();
      }
    const Complex d = A.weighted_inner(A.apply(psi), phi) -
                      A.weighted_inner(psi, A.apply(phi));
    CHECK(std::abs(d) <= 1e-12 * psi.norm() * phi.norm() / mesh.ds());
  }
}

TEST_CASE("angular part carries the antiperiodic half-integer spectrum") {
  // On the flat cylinder f = 1 the angular block at mode kappa acts as
  // gammaSigma(e_theta) * i*kappa, with eigenvalues +-kappa.
  auto st = make_annulus(1.0, 2.0, family_static(1.0), BoundaryTag::APS,
                         BoundaryTag::APS, 0, 1);
  const auto mesh = build_mesh(st, 8, 16);
  const auto A = assemble_spatial_dirac(st, build_rep(2), mesh, 0.0);
  const SpinMat g2 = tangential_gamma(A.rep, 2);
  for (int m = 0; m < mesh.angular_count; ++m) {
    const double kappa = A.modes.kappas[m];
    CHECK(std::abs(kappa * 2.0 - std::round(kappa * 2.0)) < 1e-14);
    CHECK(std::abs(std::round(kappa * 2.0)) >= 1.0);  // no zero mode
    // ang = gammaSigma(e_theta) * i kappa is Hermitian with eigenvalues -+kappa
    const SpinMat ang = g2 * Complex(0, kappa);
    Eigen::SelfAdjointEigenSolver<SpinMat> es(ang);
    CHECK(es.eigenvalues()[0] == doctest::Approx(-std::abs(kappa)).epsilon(1e-13));
    CHECK(es.eigenvalues()[1] == doctest::Approx(std::abs(kappa)).epsilon(1e-13));
  }
  // The spectral derivative matrix is exactly anti-Hermitian.
  const Mat S = antiperiodic_derivative(A.modes);
  CHECK((S + S.adjoint()).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("applying D to a smooth interval field converges at order 2") {
  // psi = (sin(pi x) * bump, 0): compactly supported away from the closures.
  auto profile = [](double x) {
    const double d = (x - 0.5) / 0.13;
    return std::sin(pi * x) * std::exp(-d * d);
  };
  auto dprofile = [&](double x) {
    const double h = 1e-6;
    return (profile(x + h) - profile(x - h)) / (2 * h);
  };
  auto st = make_interval(1.0, family_static(1.0), BoundaryTag::APS,
                          BoundaryTag::APS, 0, 1);
  const auto rep = build_rep(1);
  const SpinMat g1 = tangential_gamma(rep, 1);
  std::vector<double> errs;
  for (int I : {33, 65, 129}) {
    const auto mesh = build_mesh(st, I, 1);
    const auto A = assemble_spatial_dirac(st, rep, mesh, 0.0);
    Vec psi = Vec::Zero(mesh.value_count());
    for (int i = 0; i < I; ++i) psi[2 * i] = profile(mesh.s_nodes[i]);
    const Vec got = A.apply(psi);
    double err = 0;
    for (int i = 0; i < I; ++i) {
      const SpinVec exact = g1 * SpinVec(dprofile(mesh.s_nodes[i]), 0.0);
      err = std::max(err, (got.segment<2>(2 * i) - exact).norm());
    }
    errs.push_back(err);
  }
  const double p1 = oracle::observed_order(errs[0], errs[1]);
  const double p2 = oracle::observed_order(errs[1], errs[2]);
  CHECK(p1 > 1.85);
  CHECK(p1 < 2.25);
  CHECK(p2 > 1.85);
  CHECK(p2 < 2.25);
}

TEST_CASE("Fourier block decomposition reassembles the dense operator") {
  MetricCoef f{[](double, double r) { return 1.0 + 0.15 * (r - 1.0); }, true};
  auto st = make_annulus(1.0, 2.0, f, BoundaryTag::APS, BoundaryTag::APS, 0, 1);
  const auto mesh = build_mesh(st, 8, 8);
  const auto A = assemble_spatial_dirac(st, build_rep(2), mesh, 0.0);
  const auto fb = fourier_block_decompose(A);
  CHECK(static_cast<int>(fb.blocks.size()) == mesh.angular_count);
  const Mat D = A.dense();
  const Mat R = reassemble_from_blocks(A, fb);
  CHECK((D - R).cwiseAbs().maxCoeff() <= 1e-12 * D.cwiseAbs().maxCoeff());

  // n=1 input is rejected
  auto st1 = make_interval(1.0, family_static(1.0), BoundaryTag::APS,
                           BoundaryTag::APS, 0, 1);
  const auto mesh1 = build_mesh(st1, 8, 1);
  const auto A1 = assemble_spatial_dirac(st1, build_rep(1), mesh1, 0.0);
  CHECK_THROWS_AS(fourier_block_decompose(A1), std::invalid_argument);
}

TEST_CASE("dense spectrum equals the union of per-mode spectra") {
  auto st = make_annulus(1.0, 2.0, family_static(1.0), BoundaryTag::APS,
                         BoundaryTag::APS, 0, 1);
  const auto mesh = build_mesh(st, 16, 8);
  const auto A = assemble_spatial_dirac(st, build_rep(2), mesh, 0.0);
  const auto fb = fourier_block_decompose(A);

  auto collect = [](const Mat& M) {
    Eigen::ComplexEigenSolver<Mat> es(M);
    std::vector<Complex> v(es.eigenvalues().data(),
                           es.eigenvalues().data() + es.eigenvalues().size());
    return v;
  };
  std::vector<Complex> dense_spec = collect(A.dense());
  std::vector<Complex> block_spec;
  for (const auto& B : fb.blocks) {
    auto s = collect(B);
    block_spec.insert(block_spec.end(), s.begin(), s.end());
  }
  auto key = [](const Complex& a, const Complex& b) {
    if (std::abs(a.real() - b.real()) > 1e-9) return a.real() < b.real();
    return a.imag() < b.imag();
  };
  std::sort(dense_spec.begin(), dense_spec.end(), key);
  std::sort(block_spec.begin(), block_spec.end(), key);
  REQUIRE(dense_spec.size() == block_spec.size());
  for (std::size_t i = 0; i < dense_spec.size(); ++i)
    CHECK(std::abs(dense_spec[i] - block_spec[i]) < 1e-10 / mesh.ds());
}

TEST_CASE("mode transform round trip and Parseval") {
  std::mt19937_64 rng(3);
  auto st = make_annulus(1.0, 2.0, family_static(1.0), BoundaryTag::APS,
                         BoundaryTag::APS, 0, 1);
  const auto mesh = build_mesh(st, 6, 8);
  const auto A = assemble_spatial_dirac(st, build_rep(2), mesh, 0.0);
  const Vec psi = random_field(mesh.value_count(), rng);
  const auto modes = A.to_mode_fields(psi);
  const Vec back = A.from_mode_fields(modes);
  CHECK((psi - back).norm() <= 1e-13 * psi.norm());
  double mode_sq = 0;
  for (const auto& m : modes) mode_sq += m.squaredNorm();
  CHECK(mode_sq == doctest::Approx(psi.squaredNorm()).epsilon(1e-12));
}
