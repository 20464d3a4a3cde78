#include "apsdirac/geometry.hpp"

#include <doctest.h>

#include <cmath>

#include "oracles.hpp"

using namespace apsdirac;

namespace {
FoliatedSpacetime with_lapse(FoliatedSpacetime st,
                             std::function<double(double, double)> N) {
  st.unit_lapse = false;
  st.lapse = std::move(N);
  return st;
}
}  // namespace

TEST_CASE("validate_assumptions: product warps pass with zero violation") {
  // f(t,r) = 1 + 0.1 t r (1 - r) on an annulus inside (0,1)
  MetricCoef f{[](double t, double r) { return 1.0 + 0.1 * t * r * (1 - r); },
               false};
  auto st = make_annulus(0.25, 0.75, f, BoundaryTag::APS, BoundaryTag::APS,
                         0.0, 0.5);
  const auto rep = validate_assumptions(st);
  CHECK(rep.all_pass());
  for (const auto& item : rep.items) CHECK(item.violation <= 1e-10);
}

TEST_CASE("validate_assumptions: boundary lapse check") {
  const double L = 1.0;
  auto base = make_interval(L, constant_coef(1.0), BoundaryTag::APS,
                            BoundaryTag::APS, 0.0, 1.0);
  SUBCASE("sin profile vanishes at the endpoints: pass") {
    auto st = with_lapse(base, [L](double, double x) {
      return 1.0 + 0.5 * std::sin(pi * x / L);
    });
    const auto rep = validate_assumptions(st);
    CHECK(rep.all_pass());
  }
  SUBCASE("cos profile violates N=1 at x=0 by 0.5: fail") {
    auto st = with_lapse(base, [L](double, double x) {
      return 1.0 + 0.5 * std::cos(pi * x / L);
    });
    const auto rep = validate_assumptions(st);
    CHECK_FALSE(rep.all_pass());
    REQUIRE(rep.items[0].name == "lapse_unit_on_boundary");
    CHECK_FALSE(rep.items[0].pass);
    CHECK(rep.items[0].violation == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("mean curvature of model warps") {
  const std::vector<double> nodes = {0.55, 0.8, 1.0, 1.3};
  SUBCASE("f = e^t gives H = -1/2") {
    auto st = make_annulus(0.5, 1.5, family_exp_warp(1.0, 1.0),
                           BoundaryTag::APS, BoundaryTag::APS, -1.0, 1.0);
    const RVec H = mean_curvature(st, 0.3, nodes);
    // oracle: symbolic -(1/2) f'/f = -1/2, and central differences of log f
    for (Eigen::Index i = 0; i < H.size(); ++i) {
      CHECK(H[i] == doctest::Approx(-0.5).epsilon(1e-9));
      const double fd = oracle::central_diff(
          [&](double t) { return std::log(st.sqrt_h(t, nodes[i])); }, 0.3,
          1e-5);
      CHECK(H[i] == doctest::Approx(-fd / 2.0).epsilon(1e-12));
    }
  }
  SUBCASE("static metric gives H = 0") {
    auto st = make_annulus(0.5, 1.5, family_static(1.0), BoundaryTag::APS,
                           BoundaryTag::APS, -1.0, 1.0);
    const RVec H = mean_curvature(st, 0.4, nodes);
    CHECK(H.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("n=1, a = 1 + t x gives H(0, 1) = -1") {
    MetricCoef a{[](double t, double x) { return 1.0 + t * x; }, false};
    auto st = make_interval(2.0, a, BoundaryTag::APS, BoundaryTag::APS, -0.2,
                            0.5);
    const std::vector<double> xs = {1.0};
    const RVec H = mean_curvature(st, 0.0, xs);
    CHECK(H[0] == doctest::Approx(-1.0).epsilon(1e-9));
    const double fd = oracle::central_diff(
        [&](double t) { return std::log(st.sqrt_h(t, 1.0)); }, 0.0, 1e-5);
    CHECK(H[0] == doctest::Approx(-fd).epsilon(1e-12));
  }
  SUBCASE("rejects non-unit lapse") {
    auto st = with_lapse(make_interval(1.0, constant_coef(1.0),
                                       BoundaryTag::APS, BoundaryTag::APS,
                                       0.0, 1.0),
                         [](double, double) { return 2.0; });
    const std::vector<double> xs = {0.5};
    CHECK_THROWS_AS(mean_curvature(st, 0.0, xs), AssumptionError);
    CHECK_THROWS_AS(density_factor(st, 0.0, xs), AssumptionError);
  }
}

TEST_CASE("density factor of model warps") {
  const std::vector<double> nodes = {0.6, 0.9, 1.2};
  SUBCASE("f = e^t gives rho = e^{t/2}") {
    auto st = make_annulus(0.5, 1.5, family_exp_warp(1.0, 1.0),
                           BoundaryTag::APS, BoundaryTag::APS, -1.0, 1.0);
    const double t = 0.7;
    const RVec rho = density_factor(st, t, nodes);
    for (Eigen::Index i = 0; i < rho.size(); ++i) {
      CHECK(rho[i] == doctest::Approx(std::exp(t / 2)).epsilon(1e-12));
      // oracle: direct determinant ratio
      const double ratio = st.sqrt_h(t, nodes[i]) / st.sqrt_h(0.0, nodes[i]);
      CHECK(rho[i] == doctest::Approx(std::sqrt(ratio)).epsilon(1e-14));
    }
    CHECK((density_factor(st, 0.0, nodes) - RVec::Ones(3)).cwiseAbs().maxCoeff() ==
          0.0);
  }
  SUBCASE("n=1, a = (1+t)^2 gives rho = 1+t") {
    MetricCoef a{[](double t, double) { return (1 + t) * (1 + t); }, false};
    auto st = make_interval(1.0, a, BoundaryTag::APS, BoundaryTag::APS, -0.5,
                            1.0);
    const std::vector<double> xs = {0.2, 0.8};
    const RVec rho = density_factor(st, 0.6, xs);
    for (Eigen::Index i = 0; i < rho.size(); ++i)
      CHECK(rho[i] == doctest::Approx(1.6).epsilon(1e-12));
  }
}

TEST_CASE("identity 2 rho^-1 d_t rho = -n H at sampled nodes") {
  const std::vector<double> nodes = {0.55, 0.75, 1.05, 1.45};
  auto check_identity = [&](const FoliatedSpacetime& st, double t) {
    const RVec H = mean_curvature(st, t, nodes);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const double drho = oracle::central_diff(
          [&](double tt) {
            return std::sqrt(st.sqrt_h(tt, nodes[i]) /
                             st.sqrt_h(0.0, nodes[i]));
          },
          t, 1e-5);
      const double rho =
          std::sqrt(st.sqrt_h(t, nodes[i]) / st.sqrt_h(0.0, nodes[i]));
      CHECK(2.0 * drho / rho ==
            doctest::Approx(-st.spatial_dim * H[i]).epsilon(1e-6));
    }
  };
  check_identity(make_annulus(0.5, 1.5, family_exp_warp(1.0, 0.3),
                              BoundaryTag::APS, BoundaryTag::APS, -1, 1),
                 0.4);
  check_identity(make_annulus(0.5, 1.5, family_linear_warp(1.0, 0.4, 0.5, 1.5),
                              BoundaryTag::APS, BoundaryTag::APS, -1, 1),
                 0.25);
}

TEST_CASE("conformal reduction and its weight maps") {
  SUBCASE("unit lapse reduces to the identity") {
    auto st = make_annulus(1.0, 2.0, family_static(1.0), BoundaryTag::APS,
                           BoundaryTag::APS, -1, 1);
    const auto red = conformal_reduce(st);
    CHECK(red.weights.identity);
    CHECK(red.weights.spinor(0.3, 1.5) == 1.0);
    CHECK(red.weights.source(0.3, 1.5) == 1.0);
    CHECK(red.reduced.unit_lapse);
  }
  SUBCASE("n=1: spinor weight is N^0 = 1, source weight N^1") {
    const double L = 1.0;
    auto st = with_lapse(make_interval(L, constant_coef(1.0), BoundaryTag::APS,
                                       BoundaryTag::APS, 0, 1),
                         [L](double, double x) {
                           return 1.0 + std::sin(pi * x / L);
                         });
    const auto red = conformal_reduce(st);
    CHECK(red.weights.spinor(0.0, L / 2) == doctest::Approx(1.0));
    CHECK(red.weights.source(0.0, L / 2) == doctest::Approx(2.0));
    // reduced interval metric is a/N
    CHECK(red.reduced.warp.value(0.0, L / 2) == doctest::Approx(0.5));
    CHECK(red.reduced.unit_lapse);
  }
  SUBCASE("n=2: N = 4 at a node gives spinor weight 2 and source weight 8") {
    auto st = with_lapse(make_annulus(1.0, 2.0, family_static(1.0),
                                      BoundaryTag::APS, BoundaryTag::APS, 0, 1),
                         [](double, double r) {
                           return 1.0 + 3.0 * std::sin(pi * (r - 1.0));
                         });
    const auto red = conformal_reduce(st);
    CHECK(red.weights.spinor(0.2, 1.5) == doctest::Approx(2.0));
    CHECK(red.weights.source(0.2, 1.5) == doctest::Approx(8.0));
    // rescaled metric family N^{-2} h: f -> f/N and alpha -> 1/N
    CHECK(red.reduced.warp.value(0.2, 1.5) == doctest::Approx(0.25));
    CHECK(red.reduced.radial_coef.value(0.2, 1.5) == doctest::Approx(0.25));
  }
  SUBCASE("rejects lapse differing from 1 on the boundary") {
    auto st = with_lapse(make_interval(1.0, constant_coef(1.0),
                                       BoundaryTag::APS, BoundaryTag::APS, 0, 1),
                         [](double, double x) {
                           return 1.0 + 0.5 * std::cos(pi * x);
                         });
    CHECK_THROWS_AS(conformal_reduce(st), AssumptionError);
  }
}
