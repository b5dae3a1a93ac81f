// SPDX-License-Identifier: MIT
#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>

#include "lip2d/model.hpp"
#include "lip2d/signal2d.hpp"

namespace lip2d {

/// 2-D state-space system in Roesser form with an input delay shift:
///   x1(i1+1, i2) = f1 + A11 x1 + A12 x2 + B1 u(i1+r, i2+r)
///   x2(i1, i2+1) = f2 + A21 x1 + A22 x2 + B2 u(i1+r, i2+r)
///   y(i1, i2)    = g  + C1 x1 + C2 x2 + D  u(i1+r, i2+r)
/// with states evaluated at (i1, i2) and zero boundary
/// x1(0, .) = 0, x2(., 0) = 0.
struct RoesserRealization {
  Eigen::MatrixXd A11, A12, A21, A22;
  Eigen::MatrixXd B1, B2;
  Eigen::MatrixXd C1, C2, D;
  Eigen::VectorXd f1, f2, g;
  int r = 0;

  Eigen::Index n1() const { return A11.rows(); }
  Eigen::Index n2() const { return A22.rows(); }
  Eigen::Index nu() const { return D.cols(); }
  Eigen::Index ny() const { return D.rows(); }
};

/// Explicit shift-register realization of a convolutional layer.
///
/// With w = r_minus + r_plus, the kernel is applied in its shifted form
/// Ktilde(m1, m2) = K(m1 - r_minus, m2 - r_minus) on {0..w}^2 and the input
/// is accessed with delay r = r_minus. The x1 block holds the past-input
/// window slots (j1, j2), j1 in {1..w}, j2 in {0..w} (value u(i1-j1, i2-j2)
/// of the shifted input), the x2 block symmetrically holds slots j1 in
/// {0..w}, j2 in {1..w}; both have c_in * w * (w+1) states. A11/A22 are
/// column shifts, A12/A21 move the partner block's first row, B1/B2 inject
/// the current input; all their entries are 0 or 1. C1, C2, D read the
/// kernel taps; g = bias; f1 = f2 = 0.
RoesserRealization realize_conv(const ConvLayerSpec& layer);

/// Runs the Roesser recursion over [0, N1) x [0, N2) with zero boundary
/// states, reading the input at u(i1+r, i2+r). Returns y on that rectangle
/// (origin (0,0)). The sweep respects quarter-plane causality: each node
/// consumes x1 from the west and x2 from the north.
Signal2D simulate(const RoesserRealization& sys, const Signal2D& u, int N1,
                  int N2);

/// Orthonormal basis (columns) of the 2-D reachable subspace of
/// (A11..A22, B1, B2): the span of all Kalman sums
///   N(a,b) = Ahat10 N(a-1,b) + Ahat01 N(a,b-1),
///   N(1,0) = Bhat1, N(0,1) = Bhat2,
/// with the lifted matrices Ahat10 = [[A11,A12],[0,0]],
/// Ahat01 = [[0,0],[A21,A22]], Bhat1 = [B1;0], Bhat2 = [0;B2].
/// Accumulates levels a+b = 1 .. n1+n2, stopping early when a whole level
/// vanishes or the full dimension is reached. Rank decisions use
/// reorthogonalized Gram-Schmidt with tolerance `rank_tol` relative to the
/// largest column norm encountered.
Eigen::MatrixXd reachable_subspace(const Eigen::MatrixXd& A11,
                                   const Eigen::MatrixXd& A12,
                                   const Eigen::MatrixXd& A21,
                                   const Eigen::MatrixXd& A22,
                                   const Eigen::MatrixXd& B1,
                                   const Eigen::MatrixXd& B2,
                                   double rank_tol = 1e-10);
Eigen::MatrixXd reachable_subspace(const RoesserRealization& sys,
                                   double rank_tol = 1e-10);

/// Orthonormal bases (T1, T2) of the coordinate projections of span(T) onto
/// the x1 block (first n1 coordinates) and the x2 block. A projection that
/// turns out full-dimensional is canonicalized to the identity so that
/// congruence transforms of structured LMIs preserve sparsity.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> split_reachable_basis(
    const Eigen::MatrixXd& T, Eigen::Index n1, Eigen::Index n2,
    double rank_tol = 1e-10);

/// Congruence reduction of a realization onto the subspaces spanned by the
/// orthonormal columns of T1 (x1 block) and T2 (x2 block):
///   A11 -> T1^T A11 T1, A12 -> T1^T A12 T2, B1 -> T1^T B1, C1 -> C1 T1, ...
/// Input-output equivalent under zero boundary states whenever range(T1) x
/// range(T2) contains the reachable subspace (states never leave it).
RoesserRealization project_realization(const RoesserRealization& sys,
                                       const Eigen::MatrixXd& T1,
                                       const Eigen::MatrixXd& T2);

/// JSON dump of all matrix blocks (debug / cross-tool checks).
std::string realization_to_json_text(const RoesserRealization& sys);

}  // namespace lip2d
