#pragma once

/// Boundary machinery: the adapted boundary operator A_t per component, its
/// spectral (APS) projector, the local MIT projector, and the compression of
/// the discrete Dirac operator onto the constrained subspace, which is where
/// self-adjointness is won or lost.
///
/// Canonical choices, fixed for reproducibility: A is the boundary Dirac
/// operator sigma_n^{-1} (tangential part of D) symmetrized; at n=1 boundary
/// points, where no tangential direction exists, A is the chirality matrix
/// sigma1 with eigenvalues +-1 in the sigma_n-flip basis.

#include "apsdirac/core.hpp"
#include "apsdirac/discrete_dirac.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace apsdirac {

// Per-mode adapted matrix on a ring: sigma_n^{-1} * gammaSigma(e_theta) *
// (i kappa / f_bd), symmetrized. Evaluates to -+ sign * sigma3 * kappa / f.
inline SpinMat mode_adapted_matrix(const CliffordRep& rep,
                                   const BoundaryRing& ring, double kappa) {
  const SpinMat g2 = tangential_gamma(rep, 2);
  const SpinMat B = ring.sigma_n.inverse() * g2 *
                    Complex(0.0, kappa / ring.warp_bd);
  return 0.5 * (B + B.adjoint());
}

// n=1 boundary points carry no tangential operator; the canonical kernel-free
// choice anticommuting with sigma_n = +-i sigma3 is sigma1.
inline SpinMat point_adapted_matrix() {
  SpinMat A;
  A << 0, 1, 1, 0;
  return A;
}

struct AdaptedBoundaryOperator {
  double t = 0;
  int ring_index = 0;
  BoundaryRing ring;
  Mat A;             // trace-space matrix, index 2*k_local + component
  RVec eigenvalues;  // ascending
  Mat eigenvectors;  // columns, phase-fixed
  double op_norm = 0;
  double min_abs_eigenvalue() const {
    double m = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < eigenvalues.size(); ++j)
      m = std::min(m, std::abs(eigenvalues[j]));
    return m;
  }
};

struct KernelReport {
  double min_abs = 0;
  double op_norm = 0;
  double threshold = 0;
  bool pass = false;
};

inline KernelReport kernel_check_values(const RVec& eigenvalues,
                                        double rel_threshold = 1e-10) {
  KernelReport r;
  r.op_norm = eigenvalues.cwiseAbs().maxCoeff();
  r.min_abs = eigenvalues.cwiseAbs().minCoeff();
  r.threshold = rel_threshold * r.op_norm;
  r.pass = r.min_abs > r.threshold;
  return r;
}

inline KernelReport kernel_check(const AdaptedBoundaryOperator& A,
                                 double rel_threshold = 1e-10) {
  return kernel_check_values(A.eigenvalues, rel_threshold);
}

inline AdaptedBoundaryOperator assemble_adapted_operator(
    const DiracAssembly& assembly, int ring_index) {
  const auto& ring = assembly.rings.at(ring_index);
  AdaptedBoundaryOperator out;
  out.t = assembly.t;
  out.ring_index = ring_index;
  out.ring = ring;
  if (assembly.mesh->spatial_dim == 1) {
    out.A = point_adapted_matrix();
  } else {
    const int K = assembly.mesh->angular_count;
    out.A = Mat::Zero(2 * K, 2 * K);
    for (int m = 0; m < K; ++m) {
      const SpinMat Am =
          mode_adapted_matrix(assembly.rep, ring, assembly.modes.kappas[m]);
      for (int k = 0; k < K; ++k)
        for (int kp = 0; kp < K; ++kp) {
          const Complex fac =
              std::conj(assembly.modes.F(m, k)) * assembly.modes.F(m, kp);
          out.A.block<2, 2>(2 * k, 2 * kp) += fac * Am;
        }
    }
  }
  out.A = 0.5 * (out.A + out.A.adjoint().eval());  // Hermitian exactly
  Eigen::SelfAdjointEigenSolver<Mat> es(out.A);
  if (es.info() != Eigen::Success)
    throw SolverError("assemble_adapted_operator: eigensolve failed");
  out.eigenvalues = es.eigenvalues();
  out.eigenvectors = es.eigenvectors();
  for (Eigen::Index j = 0; j < out.eigenvectors.cols(); ++j) {
    Vec col = out.eigenvectors.col(j);
    fix_phase(col);
    out.eigenvectors.col(j) = col;
  }
  out.op_norm = out.eigenvalues.cwiseAbs().maxCoeff();
  const auto kr = kernel_check(out);
  if (!kr.pass)
    throw KernelError(
        "assemble_adapted_operator: boundary operator has (near-)kernel, "
        "min|lambda| = " +
        std::to_string(kr.min_abs));
  return out;
}

struct BoundaryConditionSpec {
  BoundaryTag tag = BoundaryTag::APS;
  int ring_index = 0;
  BoundaryRing ring;
  Mat pi_neg;           // APS: projector onto the negative spectral subspace
  Mat pi_nonneg;        // complement
  SpinMat mit_node;     // MIT: per-node projector (Id + i gamma_n)/2
  Mat constraint_rows;  // rows r with r * trace = 0 defining the domain
};

inline BoundaryConditionSpec aps_projector(const AdaptedBoundaryOperator& A) {
  const auto kr = kernel_check(A);
  if (!kr.pass) throw KernelError("aps_projector: kernel present");
  BoundaryConditionSpec spec;
  spec.tag = BoundaryTag::APS;
  spec.ring_index = A.ring_index;
  spec.ring = A.ring;
  const Eigen::Index dim = A.A.rows();
  Eigen::Index n_neg = 0;
  while (n_neg < dim && A.eigenvalues[n_neg] < 0.0) ++n_neg;
  const Mat Vneg = A.eigenvectors.leftCols(n_neg);
  const Mat Vpos = A.eigenvectors.rightCols(dim - n_neg);
  spec.pi_neg = Vneg * Vneg.adjoint();
  spec.pi_nonneg = Mat::Identity(dim, dim) - spec.pi_neg;
  spec.constraint_rows = Vpos.adjoint();
  return spec;
}

inline BoundaryConditionSpec mit_projector([[maybe_unused]] const CliffordRep& rep,
                                           const BoundaryRing& ring,
                                           int ring_index = 0) {
  BoundaryConditionSpec spec;
  spec.tag = BoundaryTag::MIT;
  spec.ring_index = ring_index;
  spec.ring = ring;
  const SpinMat igamma = Complex(0.0, 1.0) * ring.gamma_n;
  spec.mit_node = 0.5 * (SpinMat::Identity() + igamma);
  // (Id + i gamma_n) psi = 0 is equivalent to u+^* psi = 0 with u+ the
  // +1 eigenvector of the Hermitian matrix i gamma_n.
  Eigen::SelfAdjointEigenSolver<SpinMat> es(igamma);
  SpinVec u_plus = es.eigenvectors().col(1);  // eigenvalues ascending: -1, +1
  {
    Vec tmp = u_plus;
    fix_phase(tmp);
    u_plus = tmp;
  }
  const int ring_nodes = static_cast<int>(ring.node_ids.size());
  spec.constraint_rows = Mat::Zero(ring_nodes, 2 * ring_nodes);
  spec.pi_neg = Mat::Zero(2 * ring_nodes, 2 * ring_nodes);
  for (int k = 0; k < ring_nodes; ++k) {
    spec.constraint_rows.block(k, 2 * k, 1, 2) = u_plus.adjoint();
    spec.pi_neg.block<2, 2>(2 * k, 2 * k) = spec.mit_node;
  }
  spec.pi_nonneg = Mat::Identity(2 * ring_nodes, 2 * ring_nodes) - spec.pi_neg;
  return spec;
}

inline BoundaryConditionSpec make_condition_spec(const DiracAssembly& assembly,
                                                 int ring_index) {
  const auto& ring = assembly.rings.at(ring_index);
  if (ring.component.tag == BoundaryTag::APS)
    return aps_projector(assemble_adapted_operator(assembly, ring_index));
  return mit_projector(assembly.rep, ring, ring_index);
}

struct ConstrainedDirac {
  Mat Q;   // W-orthonormal basis of the constrained subspace (columns)
  Mat Dc;  // compressed operator Q^* W D Q, Hermitian up to round-off
  RVec weight;
  double herm_residual = 0;
};

// Compresses D onto { psi : C psi = 0 }, orthonormally for the weighted
// product. Faults if the compression is not Hermitian to fault_tol, which
// signals broken Green-identity or projector plumbing rather than a
// tolerance issue.
inline ConstrainedDirac constrain_with_rows(const Mat& D, const RVec& W,
                                            const Mat& C,
                                            double fault_tol = 1e-9) {
  const Eigen::Index N = D.rows();
  const RVec w_sqrt = W.cwiseSqrt();
  const RVec w_isqrt = w_sqrt.cwiseInverse();
  ConstrainedDirac out;
  out.weight = W;
  Eigen::Index null_dim = N;
  Mat Vnull;
  if (C.rows() > 0) {
    Mat X = C * w_isqrt.asDiagonal();
    Eigen::BDCSVD<Mat> svd(X, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    Eigen::Index rank = 0;
    const double tol = std::max<double>(1.0, sv.size() ? sv[0] : 0.0) * 1e-12;
    for (Eigen::Index j = 0; j < sv.size(); ++j)
      if (sv[j] > tol) ++rank;
    null_dim = N - rank;
    Vnull = svd.matrixV().rightCols(null_dim);
  } else {
    Vnull = Mat::Identity(N, N);
  }
  out.Q = w_isqrt.asDiagonal() * Vnull;
  out.Dc = out.Q.adjoint() * W.asDiagonal() * D * out.Q;
  const double scale = std::max(out.Dc.norm(), 1e-300);
  out.herm_residual = (out.Dc - out.Dc.adjoint()).norm() / scale;
  if (out.herm_residual > fault_tol)
    throw SolverError(
        "constrain_with_rows: compressed operator lost Hermiticity, residual " +
        std::to_string(out.herm_residual));
  return out;
}

// Dense-route constraint assembly over all boundary components.
inline ConstrainedDirac constrain_operator(
    const DiracAssembly& assembly,
    const std::vector<BoundaryConditionSpec>& specs,
    double fault_tol = 1e-9) {
  const int N = assembly.mesh->value_count();
  Eigen::Index total_rows = 0;
  for (const auto& s : specs) total_rows += s.constraint_rows.rows();
  Mat C = Mat::Zero(total_rows, N);
  Eigen::Index row = 0;
  for (const auto& s : specs) {
    const auto& ids = s.ring.node_ids;
    for (Eigen::Index r = 0; r < s.constraint_rows.rows(); ++r, ++row)
      for (std::size_t k = 0; k < ids.size(); ++k)
        for (int c = 0; c < 2; ++c)
          C(row, 2 * ids[k] + c) = s.constraint_rows(r, 2 * k + c);
  }
  return constrain_with_rows(assembly.dense(), assembly.weight, C, fault_tol);
}

// Production route: per-mode constraint rows in radial-block coordinates.
// For APS the row is the nonnegative eigenrow of the per-mode 2x2 adapted
// matrix; for MIT it is the local condition row, identical across modes.
inline Mat mode_constraint_rows(const DiracAssembly& assembly, int mode) {
  const int I = assembly.mesh->radial_count;
  std::vector<std::pair<int, Eigen::RowVector2cd>> rows;
  for (const auto& ring : assembly.rings) {
    if (ring.component.tag == BoundaryTag::APS) {
      SpinMat Am = assembly.mesh->spatial_dim == 1
                       ? point_adapted_matrix()
                       : mode_adapted_matrix(assembly.rep, ring,
                                             assembly.modes.kappas[mode]);
      Eigen::SelfAdjointEigenSolver<SpinMat> es(Am);
      const double scale = es.eigenvalues().cwiseAbs().maxCoeff();
      for (int j = 0; j < 2; ++j) {
        if (std::abs(es.eigenvalues()[j]) < 1e-10 * scale)
          throw KernelError("mode_constraint_rows: adapted matrix has kernel");
        if (es.eigenvalues()[j] >= 0.0)
          rows.emplace_back(ring.radial_index,
                            es.eigenvectors().col(j).adjoint());
      }
    } else {
      const SpinMat igamma = Complex(0.0, 1.0) * ring.gamma_n;
      Eigen::SelfAdjointEigenSolver<SpinMat> es(igamma);
      rows.emplace_back(ring.radial_index, es.eigenvectors().col(1).adjoint());
    }
  }
  Mat C = Mat::Zero(static_cast<Eigen::Index>(rows.size()), 2 * I);
  for (std::size_t r = 0; r < rows.size(); ++r)
    C.block(r, 2 * rows[r].first, 1, 2) = rows[r].second;
  return C;
}

}  // namespace apsdirac
