// SPDX-License-Identifier: MIT
#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "lip2d/model.hpp"

namespace lip2d {

/// Finite-support signal on Z x Z with vector values in R^c.
///
/// The stored window is [o1, o1+n1) x [o2, o2+n2); values outside are
/// implicitly zero. Storage order: channel fastest, then i1, then i2 —
/// data[((i2-o2)*n1 + (i1-o1))*c + ch]. For a window with origin (1,1) this
/// vector is exactly the flattening enumeration u(1,1)^T, u(2,1)^T, ...,
/// u(n1,1)^T, u(1,2)^T, ...
struct Signal2D {
  int o1 = 0, o2 = 0;  // origin (lowest stored index per axis)
  int n1 = 0, n2 = 0;  // window extent per axis
  int c = 0;           // channels
  Eigen::VectorXd data;

  Signal2D() = default;
  Signal2D(int o1_, int o2_, int n1_, int n2_, int c_)
      : o1(o1_), o2(o2_), n1(n1_), n2(n2_), c(c_),
        data(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n1_) * n2_ * c_)) {}

  int hi1() const { return o1 + n1 - 1; }
  int hi2() const { return o2 + n2 - 1; }
  bool contains(int i1, int i2) const {
    return i1 >= o1 && i1 <= hi1() && i2 >= o2 && i2 <= hi2();
  }
  Eigen::Index index(int i1, int i2, int ch) const {
    return (static_cast<Eigen::Index>(i2 - o2) * n1 + (i1 - o1)) * c + ch;
  }
  double& at(int i1, int i2, int ch) { return data(index(i1, i2, ch)); }
  double get(int i1, int i2, int ch) const {
    return contains(i1, i2) ? data(index(i1, i2, ch)) : 0.0;
  }
  /// Value vector at a node; zero vector outside the window.
  Eigen::VectorXd value(int i1, int i2) const {
    if (!contains(i1, i2)) return Eigen::VectorXd::Zero(c);
    return data.segment(index(i1, i2, 0), c);
  }
  void set_value(int i1, int i2, const Eigen::VectorXd& v) {
    data.segment(index(i1, i2, 0), c) = v;
  }
};

/// Direct convolution y(i1,i2) = b + sum_{j1,j2=-r_minus..r_plus}
/// K(j1,j2) u(i1-j1, i2-j2). Output window is the full reachable support
/// [u_lo - r_minus, u_hi + r_plus] per axis.
Signal2D conv_forward(const ConvLayerSpec& layer, const Signal2D& u,
                      bool include_bias);

/// Adjoint (correlation) map of the bias-free convolution:
/// x(i1,i2) = sum_j K(j1,j2)^T y(i1+j1, i2+j2), on the window that the
/// adjoint reaches. Used by the operator-form power iteration.
Signal2D conv_adjoint(const ConvLayerSpec& layer, const Signal2D& y);

/// Embedding operator: places an S2-ordered vector x of a d x d x c image at
/// origin (1,1), implicitly zero elsewhere.
Signal2D embed_image(const Eigen::VectorXd& x, int d, int c);

/// Flattening operator: enumerates u(1,1)^T ... u(d,1)^T, u(1,2)^T ... into a
/// vector of length d*d*c (channel fastest, then i1, then i2).
Eigen::VectorXd flatten_signal(const Signal2D& u, int d, int c);

/// Like flatten_signal but reads the d x d window starting at (lo1, lo2);
/// used to crop the "valid" region of a conv stack output.
Eigen::VectorXd flatten_window(const Signal2D& u, int lo1, int lo2, int d,
                               int c);

/// Full network evaluation: embed, conv stack with the activation between
/// consecutive layers, valid-crop + flatten, dense stack with the activation
/// between consecutive layers; no activation after the final layer. Input is
/// the S2-ordered image vector of size d1*d1*c0.
Eigen::VectorXd network_forward(const NetworkSpec& spec,
                                const Eigen::VectorXd& image);

/// Matrix of the bias-free convolution as a linear map from the vectorized
/// d1 x d1 x c_in input (support {1..d1}^2, S2 ordering) to the vectorized
/// full-support output ((d1+r_minus+r_plus)^2 x c_out geometry, same
/// enumeration over the output window). Throws DataError when the element
/// count would exceed `element_budget`.
Eigen::MatrixXd toeplitz_matrix(const ConvLayerSpec& layer, int d1,
                                std::size_t element_budget = 80u * 1000u * 1000u);

/// Spectral norm of toeplitz_matrix(layer, d1): power iteration on M^T M in
/// operator form (conv_forward + conv_adjoint) with relative tolerance
/// `rel_tol`, `restarts` deterministic restarts (max taken), and a dense SVD
/// fallback for small sizes. Nondecreasing in d1; a lower bound on the
/// l2-gain of the convolution. Throws SolverError with the best bracket on
/// non-convergence.
double toeplitz_norm(const ConvLayerSpec& layer, int d1,
                     double rel_tol = 1e-10, int restarts = 3,
                     std::uint64_t seed = 0x5eed2d01u, int iter_cap = 100000);

/// Maximum over the grid_n x grid_n uniform frequency grid of the largest
/// singular value of the kernel's transfer matrix on the bi-torus. A lower
/// bound on the true l2-gain, converging from below as grid_n grows.
/// OpenMP-parallel over grid rows; hinf_grid_serial is the reference
/// implementation (identical arithmetic per grid point).
double hinf_grid(const ConvLayerSpec& layer, int grid_n = 512);
double hinf_grid_serial(const ConvLayerSpec& layer, int grid_n = 512);

}  // namespace lip2d
