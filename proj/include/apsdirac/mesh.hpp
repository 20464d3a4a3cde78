#pragma once

/// Tensor-product meshes with diagonal-norm SBP quadrature weights, and the
/// spinor field container used throughout.

#include "apsdirac/core.hpp"
#include "apsdirac/geometry.hpp"

namespace apsdirac {

struct Mesh {
  int spatial_dim = 1;
  int radial_count = 0;   // I: nodes along the bounded coordinate
  int angular_count = 1;  // K: angular nodes (n=2), 1 otherwise
  double s_min = 0, s_max = 1;
  std::vector<double> s_nodes;  // x or r values, size I
  std::vector<double> theta;    // size K, uniform on [0, 2pi)
  RVec w_s;                     // SBP weights along the bounded coordinate
  double w_theta = 1;           // uniform angular weight (= dtheta)

  int node_count() const {
    return spatial_dim == 1 ? radial_count : radial_count * angular_count;
  }
  int value_count() const { return 2 * node_count(); }
  double ds() const { return s_nodes.size() > 1 ? s_nodes[1] - s_nodes[0] : 0; }
  int node_index(int i, int k) const {
    return spatial_dim == 1 ? i : i * angular_count + k;
  }
  bool is_boundary_node(int p) const {
    const int i = spatial_dim == 1 ? p : p / angular_count;
    return i == 0 || i == radial_count - 1;
  }

  std::uint64_t hash() const {
    std::uint64_t h = fnv1a_mix(1469598103934665603ull,
                                static_cast<std::int64_t>(spatial_dim));
    h = fnv1a_mix(h, static_cast<std::int64_t>(radial_count));
    h = fnv1a_mix(h, static_cast<std::int64_t>(angular_count));
    h = fnv1a_mix(h, s_min);
    h = fnv1a_mix(h, s_max);
    return h;
  }
};

inline Mesh build_mesh(const FoliatedSpacetime& st, int radial, int angular) {
  if (radial < 3)
    throw std::invalid_argument("build_mesh: need at least 3 radial nodes");
  Mesh m;
  m.spatial_dim = st.spatial_dim;
  m.radial_count = radial;
  m.s_min = st.s_min;
  m.s_max = st.s_max;
  m.s_nodes = linspace(st.s_min, st.s_max, radial);
  const double ds = (st.s_max - st.s_min) / (radial - 1);
  m.w_s = RVec::Constant(radial, ds);
  m.w_s[0] = m.w_s[radial - 1] = 0.5 * ds;  // trapezoid-compatible SBP norm
  if (st.spatial_dim == 2) {
    if (angular < 8 || angular % 2 != 0)
      throw std::invalid_argument(
          "build_mesh: angular count must be even and at least 8");
    m.angular_count = angular;
    m.theta.resize(angular);
    m.w_theta = 2.0 * pi / angular;
    for (int k = 0; k < angular; ++k) m.theta[k] = k * m.w_theta;
  }
  return m;
}

struct SpinorField {
  const Mesh* mesh = nullptr;
  double t = 0;
  Vec values;  // size 2*nodes, layout: value(2*p + component)

  static SpinorField zero(const Mesh& m, double t) {
    return {&m, t, Vec::Zero(m.value_count())};
  }
  SpinVec at(int node) const { return values.segment<2>(2 * node); }
  void set(int node, const SpinVec& v) { values.segment<2>(2 * node) = v; }
};

}  // namespace apsdirac
