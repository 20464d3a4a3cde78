#pragma once

/// Foliated model spacetimes g = -N^2 dt^2 + h_t with timelike boundary.
/// Two families are instantiated: an interval with h_t = a(t,x)^2 dx^2 and an
/// annulus with h_t = alpha(t,r)^2 dr^2 + f(t,r)^2 dtheta^2. The radial
/// coefficient alpha is identically 1 for directly constructed spacetimes and
/// becomes 1/N after conformal reduction, which keeps the class closed.

#include "apsdirac/core.hpp"

#include <cmath>
#include <span>

namespace apsdirac {

enum class BoundaryTag { APS, MIT };

inline const char* to_string(BoundaryTag t) {
  return t == BoundaryTag::APS ? "APS" : "MIT";
}

struct MetricCoef {
  std::function<double(double t, double s)> value;
  bool time_independent = false;
};

inline MetricCoef constant_coef(double c) {
  return {[c](double, double) { return c; }, true};
}

struct BoundaryComponent {
  std::string name;        // "left"/"right" or "inner"/"outer"
  double coordinate = 0;   // x or r value of the component
  double outward_sign = 1; // sign of the outward normal along the coordinate
  BoundaryTag tag = BoundaryTag::APS;
};

struct FoliatedSpacetime {
  int spatial_dim = 1;
  MetricCoef warp;         // a(t,x) for n=1, f(t,r) for n=2
  MetricCoef radial_coef;  // alpha(t,r), n=2 only; 1 unless conformally reduced
  std::function<double(double t, double s)> lapse;
  bool unit_lapse = false;
  double s_min = 0, s_max = 1;  // [0,L] or [r_in, r_out]
  double t_min = 0, t_max = 1;
  std::vector<BoundaryComponent> boundary;

  double lapse_at(double t, double s) const {
    return unit_lapse ? 1.0 : lapse(t, s);
  }
  // sqrt(det h_t) at coordinate s: a for n=1, alpha*f for n=2.
  double sqrt_h(double t, double s) const {
    const double w = warp.value(t, s);
    return spatial_dim == 1 ? w : radial_coef.value(t, s) * w;
  }
  bool metric_static() const {
    return warp.time_independent &&
           (spatial_dim == 1 || radial_coef.time_independent);
  }
};

inline FoliatedSpacetime make_interval(double L, MetricCoef a,
                                       BoundaryTag left, BoundaryTag right,
                                       double t_min, double t_max) {
  FoliatedSpacetime st;
  st.spatial_dim = 1;
  st.warp = std::move(a);
  st.radial_coef = constant_coef(1.0);
  st.unit_lapse = true;
  st.s_min = 0;
  st.s_max = L;
  st.t_min = t_min;
  st.t_max = t_max;
  st.boundary = {{"left", 0.0, -1.0, left}, {"right", L, +1.0, right}};
  return st;
}

inline FoliatedSpacetime make_annulus(double r_in, double r_out, MetricCoef f,
                                      BoundaryTag inner, BoundaryTag outer,
                                      double t_min, double t_max) {
  if (r_in <= 0.0)
    throw std::invalid_argument("make_annulus: r_in must be positive");
  FoliatedSpacetime st;
  st.spatial_dim = 2;
  st.warp = std::move(f);
  st.radial_coef = constant_coef(1.0);
  st.unit_lapse = true;
  st.s_min = r_in;
  st.s_max = r_out;
  st.t_min = t_min;
  st.t_max = t_max;
  st.boundary = {{"inner", r_in, -1.0, inner}, {"outer", r_out, +1.0, outer}};
  return st;
}

// Closed-form warp families selectable from the run configuration.
inline MetricCoef family_static(double base) { return constant_coef(base); }

inline MetricCoef family_exp_warp(double base, double rate) {
  return {[base, rate](double t, double) { return base * std::exp(rate * t); },
          rate == 0.0};
}

inline MetricCoef family_sin_warp(double base, double amp, double omega) {
  return {[base, amp, omega](double t, double) {
            return base * (1.0 + amp * std::sin(omega * t));
          },
          amp == 0.0};
}

// w(t,s) = base * (1 + rate * t * u(1-u)) with u the normalized coordinate.
inline MetricCoef family_linear_warp(double base, double rate, double s_min,
                                     double s_max) {
  return {[=](double t, double s) {
            const double u = (s - s_min) / (s_max - s_min);
            return base * (1.0 + rate * t * u * (1.0 - u));
          },
          rate == 0.0};
}

struct GeometricSample {
  double t = 0;
  RVec lapse;
  RVec sqrt_h;
  RVec mean_curvature;
  RVec density_factor;
};

namespace detail {
inline void require_unit_lapse(const FoliatedSpacetime& st, const char* op) {
  if (!st.unit_lapse)
    throw AssumptionError(std::string(op) +
                          ": spacetime must have unit lapse; "
                          "apply conformal_reduce first");
}
}  // namespace detail

// H_t = -(1/n) d/dt log sqrt(det h_t), evaluated per node by central
// differences of the sampled metric.
inline RVec mean_curvature(const FoliatedSpacetime& st, double t,
                           std::span<const double> nodes,
                           double fd_step = 1e-5) {
  detail::require_unit_lapse(st, "mean_curvature");
  RVec H(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const double sp = st.sqrt_h(t + fd_step, nodes[i]);
    const double sm = st.sqrt_h(t - fd_step, nodes[i]);
    H[i] = -(std::log(sp) - std::log(sm)) / (2.0 * fd_step * st.spatial_dim);
  }
  return H;
}

// rho_t = (det h_t / det h_0)^{1/4} per node; rho_0 = 1 identically.
inline RVec density_factor(const FoliatedSpacetime& st, double t,
                           std::span<const double> nodes) {
  detail::require_unit_lapse(st, "density_factor");
  RVec rho(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i)
    rho[i] = std::sqrt(st.sqrt_h(t, nodes[i]) / st.sqrt_h(0.0, nodes[i]));
  return rho;
}

struct ValidationReport {
  struct Item {
    std::string name;
    bool pass = false;
    double violation = 0;
  };
  std::vector<Item> items;
  bool all_pass() const {
    for (const auto& it : items)
      if (!it.pass) return false;
    return true;
  }
};

// Checks the standing assumptions: unit lapse on the boundary, the boundary
// normal frame transported without drift along e0 (measured by finite
// differences of the normalized normal within the slice family), and
// compactness of the boundary (automatic for the model geometries).
inline ValidationReport validate_assumptions(const FoliatedSpacetime& st,
                                             int t_samples = 41,
                                             double tol = 1e-10) {
  ValidationReport rep;
  const auto ts = linspace(st.t_min, st.t_max, t_samples);

  double lapse_viol = 0;
  for (const auto& bc : st.boundary)
    for (double t : ts)
      lapse_viol =
          std::max(lapse_viol, std::abs(st.lapse_at(t, bc.coordinate) - 1.0));
  rep.items.push_back({"lapse_unit_on_boundary", lapse_viol <= tol, lapse_viol});

  // Spatial drift of e_n = alpha^{-1} d_s at the boundary:
  // d_t(1/alpha) + (1/alpha) * Gamma^s_{ts}, with Gamma^s_{ts} = d_t(alpha)/alpha
  // recovered by central differences. Zero for product foliations.
  const double fd = 1e-5;
  double frame_viol = 0;
  for (const auto& bc : st.boundary) {
    auto alpha_of = [&](double t) {
      return st.spatial_dim == 1 ? st.warp.value(t, bc.coordinate)
                                 : st.radial_coef.value(t, bc.coordinate);
    };
    for (double t : ts) {
      const double ap = alpha_of(t + fd), am = alpha_of(t - fd);
      const double a0 = alpha_of(t);
      const double d_inv = (1.0 / ap - 1.0 / am) / (2.0 * fd);
      const double d_log = (ap - am) / (2.0 * fd) / a0;
      frame_viol = std::max(frame_viol, std::abs(d_inv + d_log / a0));
    }
  }
  rep.items.push_back(
      {"normal_frame_parallel_along_e0", frame_viol <= tol, frame_viol});

  rep.items.push_back({"boundary_compact", true, 0.0});
  return rep;
}

// Weight maps attached to the conformal rescaling g -> N^{-2} g: spinors map
// with N^{(n-1)/2}, sources with N^{(n+1)/2}.
struct ConformalWeights {
  int spatial_dim = 1;
  std::function<double(double, double)> lapse;
  bool identity = true;
  double spinor(double t, double s) const {
    return identity ? 1.0
                    : std::pow(lapse(t, s), 0.5 * (spatial_dim - 1));
  }
  double source(double t, double s) const {
    return identity ? 1.0
                    : std::pow(lapse(t, s), 0.5 * (spatial_dim + 1));
  }
};

struct ConformalReduction {
  FoliatedSpacetime reduced;
  ConformalWeights weights;
};

// Rescales to unit lapse. Requires N = 1 on the boundary, otherwise the
// rescaled boundary operator would no longer carry the same spectral
// condition and the reduction is refused.
inline ConformalReduction conformal_reduce(const FoliatedSpacetime& st,
                                           int samples = 41,
                                           double tol = 1e-12) {
  ConformalReduction out;
  out.weights.spatial_dim = st.spatial_dim;
  out.weights.lapse = st.lapse;
  if (st.unit_lapse) {
    out.weights.identity = true;
    out.reduced = st;
    return out;
  }
  const auto ts = linspace(st.t_min, st.t_max, samples);
  for (const auto& bc : st.boundary)
    for (double t : ts)
      if (std::abs(st.lapse(t, bc.coordinate) - 1.0) > tol)
        throw AssumptionError(
            "conformal_reduce: lapse differs from 1 on boundary component '" +
            bc.name + "'");
  out.weights.identity = false;
  out.reduced = st;
  out.reduced.unit_lapse = true;
  out.reduced.lapse = nullptr;
  const auto N = st.lapse;
  const auto w = st.warp.value;
  out.reduced.warp = {[N, w](double t, double s) { return w(t, s) / N(t, s); },
                      false};
  if (st.spatial_dim == 2) {
    const auto al = st.radial_coef.value;
    out.reduced.radial_coef = {
        [N, al](double t, double s) { return al(t, s) / N(t, s); }, false};
  }
  return out;
}

}  // namespace apsdirac
