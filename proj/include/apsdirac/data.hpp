#pragma once

/// Initial-datum and source families: Gaussian bumps with a spinor
/// polarization, plus a separable Gaussian time pulse for sources.

#include "apsdirac/core.hpp"
#include "apsdirac/mesh.hpp"

namespace apsdirac {

struct GaussianSpec {
  double center_s = 0;      // x (n=1) or r (n=2)
  double center_theta = 0;  // n=2 only
  double sigma_s = 0.1;
  double sigma_theta = 0.5;  // radians
  SpinVec polarization = SpinVec(1.0, 0.0);
  double amplitude = 1.0;
};

inline Vec gaussian_field(const Mesh& mesh, const GaussianSpec& g) {
  Vec out = Vec::Zero(mesh.value_count());
  const int K = mesh.spatial_dim == 2 ? mesh.angular_count : 1;
  for (int i = 0; i < mesh.radial_count; ++i) {
    const double ds = mesh.s_nodes[i] - g.center_s;
    const double arg_s = ds * ds / (2.0 * g.sigma_s * g.sigma_s);
    for (int k = 0; k < K; ++k) {
      double arg = arg_s;
      if (mesh.spatial_dim == 2) {
        const double dth = wrap_angle(mesh.theta[k] - g.center_theta);
        arg += dth * dth / (2.0 * g.sigma_theta * g.sigma_theta);
      }
      const double v = g.amplitude * std::exp(-arg);
      const int p = mesh.node_index(i, k);
      out.segment<2>(2 * p) = v * g.polarization;
    }
  }
  return out;
}

struct PulseSpec {
  GaussianSpec space;
  double center_t = 0;
  double sigma_t = 0.05;
  double support_halfwidth() const { return 6.0 * sigma_t; }
};

inline SourceFn gaussian_pulse_source(const Mesh& mesh, const PulseSpec& p) {
  const Vec profile = gaussian_field(mesh, p.space);
  const double tc = p.center_t, st = p.sigma_t;
  return [profile, tc, st](double t) -> Vec {
    const double g = std::exp(-(t - tc) * (t - tc) / (2.0 * st * st));
    return g * profile;
  };
}

// Node ids where the field magnitude exceeds threshold * max: the discrete
// support set used by the propagation diagnostics.
inline std::vector<int> support_nodes(const Mesh& mesh, const Vec& field,
                                      double threshold = 1e-8) {
  double mx = 0;
  for (int p = 0; p < mesh.node_count(); ++p)
    mx = std::max(mx, field.segment<2>(2 * p).norm());
  std::vector<int> out;
  for (int p = 0; p < mesh.node_count(); ++p)
    if (field.segment<2>(2 * p).norm() > threshold * mx) out.push_back(p);
  return out;
}

}  // namespace apsdirac
