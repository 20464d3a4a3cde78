#pragma once

/// Discrete spatial Dirac operators with a summation-by-parts structure.
///
/// The bounded coordinate uses the diagonal-norm SBP(2,1) first-derivative
/// pair (H, D1) with H D1 + (H D1)^T = diag(-1, 0, ..., 0, 1), so the
/// discrete integration-by-parts identity is exact. The warped-product
/// zero-order term f'/(2f) is realized by the exact conjugation
/// f^{-1/2} D1 f^{1/2}, which keeps the discrete Green identity a pure
/// boundary sum down to round-off. The angular direction is spectral on
/// antiperiodic (half-integer) Fourier modes; a periodic structure would
/// hand the boundary operator a zero mode, which the kernel-freeness
/// requirement excludes.

#include "apsdirac/core.hpp"
#include "apsdirac/geometry.hpp"
#include "apsdirac/mesh.hpp"
#include "apsdirac/spin_algebra.hpp"

namespace apsdirac {

namespace detail {

// Second-order SBP first derivative: central interior, one-sided closures.
inline Eigen::MatrixXd sbp_derivative(int I, double ds) {
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(I, I);
  D(0, 0) = -1.0 / ds;
  D(0, 1) = 1.0 / ds;
  for (int i = 1; i + 1 < I; ++i) {
    D(i, i - 1) = -0.5 / ds;
    D(i, i + 1) = 0.5 / ds;
  }
  D(I - 1, I - 2) = -1.0 / ds;
  D(I - 1, I - 1) = 1.0 / ds;
  return D;
}

}  // namespace detail

// Unitary transform onto antiperiodic angular modes. Row m holds the mode
// with half-integer wavenumber kappas[m]; modes are ordered ascending.
struct ModeTransform {
  Mat F;                       // K x K, psi_hat = F * psi
  std::vector<double> kappas;  // half-integers, size K
};

inline ModeTransform make_mode_transform(int K) {
  ModeTransform mt;
  mt.F.resize(K, K);
  mt.kappas.resize(K);
  for (int m = 0; m < K; ++m) mt.kappas[m] = -0.5 * K + 0.5 + m;
  const double norm = 1.0 / std::sqrt(static_cast<double>(K));
  for (int m = 0; m < K; ++m)
    for (int k = 0; k < K; ++k) {
      const double th = 2.0 * pi * k / K;
      mt.F(m, k) = norm * std::exp(Complex(0.0, -mt.kappas[m] * th));
    }
  return mt;
}

// Spectral d/dtheta on antiperiodic fields; exactly anti-Hermitian.
inline Mat antiperiodic_derivative(const ModeTransform& mt) {
  const int K = static_cast<int>(mt.kappas.size());
  Vec d(K);
  for (int m = 0; m < K; ++m) d[m] = Complex(0.0, mt.kappas[m]);
  return mt.F.adjoint() * d.asDiagonal() * mt.F;
}

inline std::vector<Vec> split_modes(const Mesh& mesh, const ModeTransform& mt,
                                    const Vec& full) {
  const int I = mesh.radial_count;
  if (mesh.spatial_dim == 1) return {full};
  const int K = mesh.angular_count;
  std::vector<Vec> out(K, Vec(2 * I));
  for (int m = 0; m < K; ++m)
    for (int i = 0; i < I; ++i)
      for (int c = 0; c < 2; ++c) {
        Complex acc = 0;
        for (int k = 0; k < K; ++k)
          acc += mt.F(m, k) * full[2 * (i * K + k) + c];
        out[m][2 * i + c] = acc;
      }
  return out;
}

inline Vec merge_modes(const Mesh& mesh, const ModeTransform& mt,
                       const std::vector<Vec>& mode_fields) {
  const int I = mesh.radial_count;
  if (mesh.spatial_dim == 1) return mode_fields.at(0);
  const int K = mesh.angular_count;
  Vec full = Vec::Zero(2 * I * K);
  for (int m = 0; m < K; ++m)
    for (int i = 0; i < I; ++i)
      for (int c = 0; c < 2; ++c) {
        const Complex v = mode_fields[m][2 * i + c];
        for (int k = 0; k < K; ++k)
          full[2 * (i * K + k) + c] += std::conj(mt.F(m, k)) * v;
      }
  return full;
}

struct BoundaryRing {
  BoundaryComponent component;
  int radial_index = 0;       // 0 (inner/left) or I-1 (outer/right)
  std::vector<int> node_ids;  // mesh node indices on the ring
  SpinMat sigma_n;            // tangential gamma of the outward normal
  SpinMat gamma_n;            // gamma_M of the outward normal
  double w_bd = 1;            // boundary quadrature weight per ring node
  double warp_bd = 1;         // warp value at the ring at assembly time
};

class DiracAssembly {
 public:
  double t = 0;
  const FoliatedSpacetime* spacetime = nullptr;
  const Mesh* mesh = nullptr;
  CliffordRep rep;
  RVec warp_s;       // a(t, x_i) or f(t, r_i)
  RVec alpha_s;      // alpha(t, r_i); ones for n=1
  RVec sqrt_h_node;  // per radial node
  RVec weight;       // diagonal L2 weight over global value index
  std::vector<BoundaryRing> rings;
  ModeTransform modes;  // n=2 only

  int block_count() const {
    return mesh->spatial_dim == 2 ? mesh->angular_count : 1;
  }
  double kappa(int m) const {
    return mesh->spatial_dim == 2 ? modes.kappas[m] : 0.0;
  }

  // Radial factor diag(alpha^-1 f^-1/2) D1 diag(f^1/2); for n=1 this is
  // diag(1/a) D1 and the weight cancellation makes it exact as well.
  Eigen::MatrixXd radial_derivative() const {
    const int I = mesh->radial_count;
    Eigen::MatrixXd D1 = detail::sbp_derivative(I, mesh->ds());
    Eigen::MatrixXd M(I, I);
    if (mesh->spatial_dim == 1) {
      for (int i = 0; i < I; ++i) M.row(i) = D1.row(i) / warp_s[i];
    } else {
      for (int i = 0; i < I; ++i)
        for (int j = 0; j < I; ++j)
          M(i, j) = D1(i, j) * std::sqrt(warp_s[j]) /
                    (alpha_s[i] * std::sqrt(warp_s[i]));
    }
    return M;
  }

  // Per-mode radial operator, size 2I x 2I. For n=1 the single block is the
  // whole operator.
  Mat block(int m) const {
    const int I = mesh->radial_count;
    const Eigen::MatrixXd Mr = radial_derivative();
    const SpinMat g1 = tangential_gamma(rep, 1);
    Mat D = Mat::Zero(2 * I, 2 * I);
    for (int i = 0; i < I; ++i)
      for (int j = 0; j < I; ++j) {
        if (Mr(i, j) == 0.0) continue;
        D.block<2, 2>(2 * i, 2 * j) += g1 * Mr(i, j);
      }
    if (mesh->spatial_dim == 2) {
      const SpinMat g2 = tangential_gamma(rep, 2);
      const double kap = kappa(m);
      for (int i = 0; i < I; ++i)
        D.block<2, 2>(2 * i, 2 * i) += g2 * Complex(0.0, kap / warp_s[i]);
    }
    return D;
  }

  // Weight diagonal of one radial block (same for every mode).
  RVec block_weight() const {
    const int I = mesh->radial_count;
    RVec w(2 * I);
    const double wt = mesh->spatial_dim == 2 ? mesh->w_theta : 1.0;
    for (int i = 0; i < I; ++i) {
      const double wi = mesh->w_s[i] * wt * sqrt_h_node[i];
      w[2 * i] = w[2 * i + 1] = wi;
    }
    return w;
  }

  Mat dense() const {
    const int I = mesh->radial_count;
    if (mesh->spatial_dim == 1) return block(0);
    const int K = mesh->angular_count;
    const int N = 2 * I * K;
    Mat D = Mat::Zero(N, N);
    const Eigen::MatrixXd Mr = radial_derivative();
    const SpinMat g1 = tangential_gamma(rep, 1);
    const SpinMat g2 = tangential_gamma(rep, 2);
    const Mat S = antiperiodic_derivative(modes);
    for (int i = 0; i < I; ++i)
      for (int j = 0; j < I; ++j) {
        if (Mr(i, j) == 0.0) continue;
        for (int k = 0; k < K; ++k)
          D.block<2, 2>(2 * (i * K + k), 2 * (j * K + k)) += g1 * Mr(i, j);
      }
    for (int i = 0; i < I; ++i)
      for (int k = 0; k < K; ++k)
        for (int kp = 0; kp < K; ++kp)
          D.block<2, 2>(2 * (i * K + k), 2 * (i * K + kp)) +=
              g2 * (S(k, kp) / warp_s[i]);
    return D;
  }

  // Splits a full field into per-mode radial vectors (n=1: the field itself).
  std::vector<Vec> to_mode_fields(const Vec& full) const {
    return split_modes(*mesh, modes, full);
  }

  Vec from_mode_fields(const std::vector<Vec>& mode_fields) const {
    return merge_modes(*mesh, modes, mode_fields);
  }

  Vec apply(const Vec& psi) const {
    auto fields = to_mode_fields(psi);
    std::vector<Vec> out(fields.size());
    for (std::size_t m = 0; m < fields.size(); ++m)
      out[m] = block(static_cast<int>(m)) * fields[m];
    return from_mode_fields(out);
  }

  // Sum over boundary nodes of w_bd * psi^* sigma_n phi. The discrete Green
  // identity reads <D psi, phi>_W - <psi, D phi>_W = -boundary_pairing_sum.
  Complex boundary_pairing_sum(const Vec& psi, const Vec& phi) const {
    Complex acc = 0;
    for (const auto& ring : rings)
      for (int p : ring.node_ids)
        acc += ring.w_bd *
               psi.segment<2>(2 * p).dot(ring.sigma_n * phi.segment<2>(2 * p));
    return acc;
  }

  Complex weighted_inner(const Vec& a, const Vec& b) const {
    return a.dot(weight.asDiagonal() * b);
  }

  // Physical boundary flux integral_{dSigma} (psi, gamma(e_n) phi).
  Complex boundary_flux(const Vec& psi, const Vec& phi) const {
    return Complex(0.0, -1.0) * boundary_pairing_sum(psi, phi);
  }
};

inline DiracAssembly assemble_spatial_dirac(const FoliatedSpacetime& st,
                                            const CliffordRep& rep,
                                            const Mesh& mesh, double t) {
  detail::require_unit_lapse(st, "assemble_spatial_dirac");
  if (rep.spatial_dim != st.spatial_dim || mesh.spatial_dim != st.spatial_dim)
    throw std::invalid_argument(
        "assemble_spatial_dirac: dimension mismatch between geometry, "
        "representation and mesh");
  if (t < st.t_min - 1e-12 || t > st.t_max + 1e-12)
    throw std::invalid_argument("assemble_spatial_dirac: t outside window");
  DiracAssembly A;
  A.t = t;
  A.spacetime = &st;
  A.mesh = &mesh;
  A.rep = rep;
  const int I = mesh.radial_count;
  A.warp_s.resize(I);
  A.alpha_s = RVec::Ones(I);
  A.sqrt_h_node.resize(I);
  for (int i = 0; i < I; ++i) {
    A.warp_s[i] = st.warp.value(t, mesh.s_nodes[i]);
    if (A.warp_s[i] <= 0.0)
      throw AssumptionError("assemble_spatial_dirac: metric not positive");
    if (st.spatial_dim == 2) {
      A.alpha_s[i] = st.radial_coef.value(t, mesh.s_nodes[i]);
      if (A.alpha_s[i] <= 0.0)
        throw AssumptionError("assemble_spatial_dirac: metric not positive");
    }
    A.sqrt_h_node[i] = A.alpha_s[i] * A.warp_s[i];
  }
  const double wt = st.spatial_dim == 2 ? mesh.w_theta : 1.0;
  A.weight.resize(mesh.value_count());
  for (int i = 0; i < I; ++i) {
    const double wi = mesh.w_s[i] * wt * A.sqrt_h_node[i];
    const int K = st.spatial_dim == 2 ? mesh.angular_count : 1;
    for (int k = 0; k < K; ++k) {
      const int p = mesh.node_index(i, k);
      A.weight[2 * p] = A.weight[2 * p + 1] = wi;
    }
  }
  if (st.spatial_dim == 2) A.modes = make_mode_transform(mesh.angular_count);

  const SpinMat g1 = tangential_gamma(rep, 1);
  for (const auto& comp : st.boundary) {
    BoundaryRing ring;
    ring.component = comp;
    ring.radial_index = comp.outward_sign > 0 ? I - 1 : 0;
    ring.sigma_n = comp.outward_sign * g1;
    ring.gamma_n = comp.outward_sign * rep.gamma[1];
    ring.warp_bd = A.warp_s[ring.radial_index];
    if (st.spatial_dim == 1) {
      ring.w_bd = 1.0;
      ring.node_ids = {ring.radial_index};
    } else {
      ring.w_bd = mesh.w_theta * ring.warp_bd;
      ring.node_ids.resize(mesh.angular_count);
      for (int k = 0; k < mesh.angular_count; ++k)
        ring.node_ids[k] = mesh.node_index(ring.radial_index, k);
    }
    A.rings.push_back(std::move(ring));
  }
  return A;
}

// Fourier-mode decomposition of an n=2 assembly. Conjugating the dense
// operator by the antiperiodic transform block-diagonalizes it; reassembly
// reproduces the dense matrix to round-off.
struct FourierBlocks {
  std::vector<double> kappas;
  std::vector<Mat> blocks;
};

inline FourierBlocks fourier_block_decompose(const DiracAssembly& A) {
  if (A.mesh->spatial_dim != 2)
    throw std::invalid_argument("fourier_block_decompose: requires n = 2");
  FourierBlocks fb;
  fb.kappas = A.modes.kappas;
  fb.blocks.reserve(A.block_count());
  for (int m = 0; m < A.block_count(); ++m) fb.blocks.push_back(A.block(m));
  return fb;
}

inline Mat reassemble_from_blocks(const DiracAssembly& A,
                                  const FourierBlocks& fb) {
  const int I = A.mesh->radial_count;
  const int K = A.mesh->angular_count;
  const int N = 2 * I * K;
  Mat D = Mat::Zero(N, N);
  for (int m = 0; m < K; ++m) {
    const Mat& B = fb.blocks[m];
    for (int i = 0; i < I; ++i)
      for (int j = 0; j < I; ++j)
        for (int c = 0; c < 2; ++c)
          for (int cp = 0; cp < 2; ++cp) {
            const Complex b = B(2 * i + c, 2 * j + cp);
            if (b == Complex(0, 0)) continue;
            for (int k = 0; k < K; ++k)
              for (int kp = 0; kp < K; ++kp)
                D(2 * (i * K + k) + c, 2 * (j * K + kp) + cp) +=
                    std::conj(A.modes.F(m, k)) * b * A.modes.F(m, kp);
          }
  }
  return D;
}

}  // namespace apsdirac
