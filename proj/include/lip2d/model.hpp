// SPDX-License-Identifier: MIT
#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "lip2d/errors.hpp"

namespace lip2d {

/// 2-D convolution kernel K(j1, j2) with matrix-valued taps.
///
/// The tap index ranges over j1, j2 in [-r_minus, r_plus]; storage index
/// m = j + r_minus in [0, width). Each tap is a c_out x c_in matrix.
struct Kernel2D {
  int c_out = 0;
  int c_in = 0;
  int r_minus = 0;
  int r_plus = 0;
  /// taps[m1 * width() + m2], each c_out x c_in; m = j + r_minus.
  std::vector<Eigen::MatrixXd> taps;

  int width() const { return r_minus + r_plus + 1; }

  /// Tap at storage indices (m1, m2) in [0, width)^2.
  const Eigen::MatrixXd& tap_m(int m1, int m2) const {
    return taps[static_cast<std::size_t>(m1) * width() + m2];
  }
  Eigen::MatrixXd& tap_m(int m1, int m2) {
    return taps[static_cast<std::size_t>(m1) * width() + m2];
  }
  /// Tap at signal offsets (j1, j2) in [-r_minus, r_plus]^2.
  const Eigen::MatrixXd& tap(int j1, int j2) const {
    return tap_m(j1 + r_minus, j2 + r_minus);
  }

  /// Kernel with all taps zero-initialized.
  static Kernel2D zeros(int c_out, int c_in, int r_minus, int r_plus);
};

/// Convolutional layer: kernel plus output-channel bias.
struct ConvLayerSpec {
  Kernel2D kernel;
  Eigen::VectorXd bias;  // length c_out
};

/// Fully connected layer y = bias + weight * u.
struct DenseLayerSpec {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
};

/// Scalar activations; all are slope-restricted to [0, 1].
enum class Activation { relu, tanh, sigmoid };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);
double activation_eval(Activation a, double x);

/// Network description: square input geometry, conv stack, optional dense
/// stack, one activation type between consecutive layers.
struct NetworkSpec {
  int input_height = 0;   // d1
  int input_width = 0;    // d2
  int input_channels = 0; // c0
  Activation activation = Activation::relu;
  std::vector<ConvLayerSpec> conv_layers;
  std::vector<DenseLayerSpec> dense_layers;
};

/// Throws DataError/GeometryError naming the offending layer if any
/// structural invariant fails (tap dimensions, channel chaining, bias
/// lengths, dense dimension chaining, finiteness, flatten geometry).
void validate_network(const NetworkSpec& spec);

/// Spatial size and channel count after the conv stack under "valid"
/// cropping: each layer of support width w reduces the spatial size by w-1.
/// Throws GeometryError if an intermediate size becomes nonpositive or the
/// geometry is not square when a dense stack must consume the output.
std::pair<int, int> flatten_dims(const NetworkSpec& spec);

/// Load / save a validated NetworkSpec from/to the documented JSON schema.
NetworkSpec load_network(const std::string& path);
void save_network(const NetworkSpec& spec, const std::string& path);

NetworkSpec network_from_json_text(const std::string& text);
std::string network_to_json_text(const NetworkSpec& spec);

}  // namespace lip2d
