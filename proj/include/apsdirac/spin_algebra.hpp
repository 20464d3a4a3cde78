#pragma once

/// Concrete Clifford-algebra representations for spatial dimension 1 and 2,
/// the indefinite spinor pairing and the positive pairing built from the
/// timelike frame vector. Conventions: signature (-,+,...,+) and
/// gamma(X)gamma(Y) + gamma(Y)gamma(X) = -2 (X,Y) Id, so gamma(e0)^2 = +Id
/// and gamma(ej)^2 = -Id for spatial j.

#include "apsdirac/core.hpp"

namespace apsdirac {

struct CliffordRep {
  int spatial_dim = 0;
  int spinor_rank = 2;
  // gamma[j] is the Clifford action of the frame vector e_j, j = 0..n.
  std::array<SpinMat, 3> gamma{};
  // Matrix of the indefinite pairing (phi,psi) = phi^* beta psi.
  // Shipped representations take beta = gamma(e0), so the positive pairing
  // (phi, gamma(e0) psi) is the plain Euclidean inner product.
  SpinMat beta{};
};

enum class PairingKind { Indefinite, Positive };

inline CliffordRep build_rep(int n) {
  if (n != 1 && n != 2)
    throw std::invalid_argument("build_rep: spatial dimension must be 1 or 2");
  CliffordRep rep;
  rep.spatial_dim = n;
  rep.spinor_rank = 2;
  const Complex i01(0.0, 1.0);
  if (n == 2) {
    // gamma(e0) = sigma3, gamma(e1) = i sigma1, gamma(e2) = i sigma2.
    rep.gamma[0] << 1, 0, 0, -1;
    rep.gamma[1] << 0, i01, i01, 0;
    rep.gamma[2] << 0, 1, -1, 0;
  } else {
    // Odd case: rank-1 surface spinors doubled. gamma(e0) swaps the copies,
    // the tangential action embeds block-diagonally with a sign flip.
    rep.gamma[0] << 0, 1, 1, 0;
    rep.gamma[1] << 0, -1, 1, 0;
    rep.gamma[2].setZero();
  }
  rep.beta = rep.gamma[0];
  return rep;
}

// gammaSigma(e_j) = i gamma(e0) gamma(e_j): the tangential Clifford action
// on the restricted spinor bundle, skew-Hermitian for the positive pairing.
// For n = 1 this evaluates to i sigma3 = diag(i, -i), i.e. the doubled
// tangential action with the odd-dimension sign flip between the two copies.
inline SpinMat tangential_gamma(const CliffordRep& rep, int j) {
  if (j < 1 || j > rep.spatial_dim)
    throw std::invalid_argument("tangential_gamma: axis index out of range");
  return Complex(0.0, 1.0) * rep.gamma[0] * rep.gamma[j];
}

inline Complex pairing(const CliffordRep& rep, const SpinVec& phi,
                       const SpinVec& psi, PairingKind kind) {
  if (kind == PairingKind::Indefinite) return phi.dot(rep.beta * psi);
  return phi.dot(rep.beta * rep.gamma[0] * psi);
}

}  // namespace apsdirac
