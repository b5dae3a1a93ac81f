// SPDX-License-Identifier: MIT
#pragma once

#include <Eigen/Dense>
#include <vector>

#include "lip2d/model.hpp"
#include "lip2d/signal2d.hpp"

namespace lip2d {

/// Index ranges mapping state and channel slices of the assembled system
/// back to the contributing layer (1-based layer numbering in comments).
struct LayerSlice {
  Eigen::Index x1_off = 0, x1_n = 0;
  Eigen::Index x2_off = 0, x2_n = 0;
  /// Interconnection slice: the layer's pre-activation output inside z and
  /// the matching activated signal inside w. Empty for the last layer.
  Eigen::Index z_off = 0, z_n = 0;
};

/// Feedback interconnection of an affine 2-D Roesser system with the
/// repeated scalar nonlinearity w = phi(z):
///   x1+ = f1 + mA11 x1 + mA12 x2 + mB11 w + mB12 v
///   x2+ = f2 + mA21 x1 + mA22 x2 + mB21 w + mB22 v
///   z   = g1 + mC11 x1 + mC12 x2 + mD11 w + mD12 v
///   y   = g2 + mC21 x1 + mC22 x2 + mD21 w + mD22 v
/// with v(i1,i2) = u(i1+r, i2+r). Cascade structure: mD11 is strictly
/// block-sub-diagonal, so each node resolves by forward substitution.
struct LureSystem {
  Eigen::MatrixXd mA11, mA12, mA21, mA22;
  Eigen::MatrixXd mB11, mB12, mB21, mB22;
  Eigen::MatrixXd mC11, mC12, mC21, mC22;
  Eigen::MatrixXd mD11, mD12, mD21, mD22;
  Eigen::VectorXd f1, f2, g1, g2;
  int r = 0;
  Eigen::Index nz = 0;
  std::vector<LayerSlice> layer_boundaries;

  Eigen::Index n1() const { return mA11.rows(); }
  Eigen::Index n2() const { return mA22.rows(); }
  Eigen::Index nu() const { return mB12.cols(); }
  Eigen::Index ny() const { return mC21.rows(); }
};

/// Stacks the per-layer shift-register realizations into one 2-D Lur'e
/// system: block-diagonal A blocks, sub-diagonal B/D chains feeding layer k
/// from interconnection slice k-1, z collecting the pre-activation outputs
/// of layers 1..l-1 and y the output of layer l; r is the sum of the
/// per-layer delays. A single layer degenerates to the plain realization
/// with nz = 0.
LureSystem assemble_lure(const std::vector<ConvLayerSpec>& conv_layers);

/// Throws DataError if mD11 is not strictly block-sub-diagonal with respect
/// to layer_boundaries (the structural well-posedness certificate).
void check_cascade_structure(const LureSystem& sys);

/// All internal signals of a Lur'e simulation over [0,N1) x [0,N2).
/// States are stored including the terminal layers: x1 on [0,N1] x [0,N2),
/// x2 on [0,N1) x [0,N2]; boundary states are zero.
struct LureTrajectory {
  int N1 = 0, N2 = 0;
  Signal2D y, z, w;
  std::vector<Eigen::VectorXd> x1s;  // index i2*(N1+1) + i1
  std::vector<Eigen::VectorXd> x2s;  // index i2*N1 + i1

  const Eigen::VectorXd& x1_at(int i1, int i2) const {
    return x1s[static_cast<std::size_t>(i2) * (N1 + 1) + i1];
  }
  const Eigen::VectorXd& x2_at(int i1, int i2) const {
    return x2s[static_cast<std::size_t>(i2) * N1 + i1];
  }
};

/// Solves the Lur'e recursion exactly by forward substitution through the
/// block-triangular interconnection at every node (zero boundary states,
/// input accessed at u(i1+r, i2+r)).
///
/// When `ref` is non-null the nonlinearity channel is the incremental family
/// phi_tilde(ztilde) = phi(ztilde + z_ref(i1,i2)) - phi(z_ref(i1,i2)) built
/// from the reference trajectory's z signal — the error-system nonlinearity.
LureTrajectory lure_forward(const LureSystem& sys, Activation act,
                            const Signal2D& u, int N1, int N2,
                            const Signal2D* ref_z = nullptr);

/// Same linear blocks with the affine parts zeroed; the nonlinearity channel
/// of the returned system is to be interpreted as the incremental family
/// (slope-restricted to [0,1] like the original activation).
LureSystem error_system(const LureSystem& sys);

/// Joint reachable subspace of the linear part of the interconnection, with
/// both w and u treated as free inputs (exactly the role they play in the
/// dissipativity analysis, where w ranges over a sector rather than a
/// graph). Orthonormal columns spanning a subspace of R^{n1+n2}; trajectory
/// states from the zero boundary never leave it.
Eigen::MatrixXd reachable_subspace(const LureSystem& sys,
                                   double rank_tol = 1e-10);

}  // namespace lip2d
