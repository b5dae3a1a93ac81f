// SPDX-License-Identifier: MIT
//
// Signal-domain tests: convolution against an independent gather oracle,
// adjointness, flatten/embed geometry, the matrix form of the convolution,
// and the two norm estimators (matrix norm vs. frequency grid).

#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "lip2d/errors.hpp"
#include "lip2d/model.hpp"
#include "lip2d/rng.hpp"
#include "lip2d/signal2d.hpp"

#include "test_util.hpp"

using namespace lip2d;

TEST_CASE("conv_forward matches the gather oracle on random layers") {
  Rng rng(0x51600001u);
  for (int trial = 0; trial < 25; ++trial) {
    const int c_out = 1 + static_cast<int>(rng.raw() % 3);
    const int c_in = 1 + static_cast<int>(rng.raw() % 3);
    const int r_minus = static_cast<int>(rng.raw() % 3);
    const int r_plus = static_cast<int>(rng.raw() % 3);
    const ConvLayerSpec layer =
        testutil::random_conv_layer(rng, c_out, c_in, r_minus, r_plus);
    const Signal2D u = testutil::random_signal(
        rng, static_cast<int>(rng.raw() % 5) - 2,
        static_cast<int>(rng.raw() % 5) - 2, 4 + static_cast<int>(rng.raw() % 5),
        4 + static_cast<int>(rng.raw() % 5), c_in);
    for (bool bias : {false, true}) {
      const Signal2D got = conv_forward(layer, u, bias);
      const Signal2D want = testutil::naive_conv(layer, u, bias);
      CHECK(testutil::max_signal_diff(got, want) <= 1e-13);
    }
  }
}

TEST_CASE("conv_forward is linear in the input (bias off)") {
  Rng rng(0x51600002u);
  const ConvLayerSpec layer = testutil::random_conv_layer(rng, 2, 2, 1, 1);
  const Signal2D u1 = testutil::random_signal(rng, 0, 0, 6, 5, 2);
  Signal2D u2 = testutil::random_signal(rng, 0, 0, 6, 5, 2);
  Signal2D mix = u1;
  mix.data = 0.7 * u1.data - 1.9 * u2.data;
  Signal2D want = conv_forward(layer, u1, false);
  const Signal2D y2 = conv_forward(layer, u2, false);
  want.data = 0.7 * want.data - 1.9 * y2.data;
  const Signal2D got = conv_forward(layer, mix, false);
  CHECK(testutil::max_signal_diff(got, want) <= 1e-12);
}

TEST_CASE("conv_adjoint is the inner-product adjoint of conv_forward") {
  Rng rng(0x51600003u);
  for (int trial = 0; trial < 10; ++trial) {
    const ConvLayerSpec layer = testutil::random_conv_layer(
        rng, 1 + static_cast<int>(rng.raw() % 2),
        1 + static_cast<int>(rng.raw() % 2), static_cast<int>(rng.raw() % 2),
        1 + static_cast<int>(rng.raw() % 2));
    const Signal2D u =
        testutil::random_signal(rng, 0, 0, 5, 6, layer.kernel.c_in);
    const Signal2D mu = conv_forward(layer, u, false);
    Signal2D y = testutil::random_signal(rng, mu.o1, mu.o2, mu.n1, mu.n2,
                                         layer.kernel.c_out);
    const double lhs = mu.data.dot(y.data);  // <M u, y>
    const Signal2D mty = conv_adjoint(layer, y);
    // <u, M^T y>: accumulate over u's window (the adjoint covers it).
    double rhs = 0.0;
    for (int i2 = u.o2; i2 <= u.hi2(); ++i2)
      for (int i1 = u.o1; i1 <= u.hi1(); ++i1)
        rhs += u.value(i1, i2).dot(mty.value(i1, i2));
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("embed / flatten / window round-trips") {
  Rng rng(0x51600004u);
  const int d = 5, c = 3;
  Eigen::VectorXd x(d * d * c);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
  const Signal2D u = embed_image(x, d, c);
  CHECK(u.o1 == 1);
  CHECK(u.o2 == 1);
  CHECK(u.get(1, 1, 0) == x(0));
  CHECK(u.get(2, 1, 0) == x(c));          // i1 varies second
  CHECK(u.get(1, 2, 0) == x(d * c));      // i2 varies last
  CHECK((flatten_signal(u, d, c) - x).cwiseAbs().maxCoeff() == 0.0);

  // flatten_window reads a shifted d x d block.
  const Eigen::VectorXd w = flatten_window(u, 2, 2, d - 1, c);
  CHECK(w(0) == u.get(2, 2, 0));
  CHECK(w.size() == (d - 1) * (d - 1) * c);
}

TEST_CASE("network_forward equals manual layer-by-layer evaluation") {
  Rng rng(0x51600005u);
  NetworkSpec spec;
  spec.input_height = spec.input_width = 6;
  spec.input_channels = 2;
  spec.activation = Activation::tanh;
  spec.conv_layers.push_back(testutil::random_conv_layer(rng, 3, 2, 1, 1));
  spec.conv_layers.push_back(testutil::random_conv_layer(rng, 2, 3, 0, 1));
  // 6 - 2 - 1 = 3 spatial, 2 channels.
  spec.dense_layers.push_back(testutil::random_dense_layer(rng, 4, 18));
  spec.dense_layers.push_back(testutil::random_dense_layer(rng, 2, 4));
  validate_network(spec);

  Eigen::VectorXd image(6 * 6 * 2);
  for (Eigen::Index i = 0; i < image.size(); ++i) image(i) = rng.normal();

  // Manual pass with the gather oracle.
  Signal2D s = embed_image(image, 6, 2);
  for (std::size_t k = 0; k < spec.conv_layers.size(); ++k) {
    s = testutil::naive_conv(spec.conv_layers[k], s, true);
    if (k + 1 < spec.conv_layers.size())
      for (Eigen::Index i = 0; i < s.data.size(); ++i)
        s.data(i) = activation_eval(spec.activation, s.data(i));
  }
  // Valid window: indices where the stacked kernels see only true input.
  int lo = 1;
  for (const auto& layer : spec.conv_layers) lo += layer.kernel.r_plus;
  const auto [d, c] = flatten_dims(spec);
  Eigen::VectorXd v = flatten_window(s, lo, lo, d, c);
  for (std::size_t k = 0; k < spec.dense_layers.size(); ++k) {
    for (Eigen::Index i = 0; i < v.size(); ++i)
      v(i) = activation_eval(spec.activation, v(i));
    v = (spec.dense_layers[k].bias + spec.dense_layers[k].weight * v).eval();
  }

  const Eigen::VectorXd got = network_forward(spec, image);
  REQUIRE(got.size() == v.size());
  CHECK((got - v).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("toeplitz_matrix agrees with conv_forward on embedded images") {
  Rng rng(0x51600006u);
  const ConvLayerSpec layer = testutil::random_conv_layer(rng, 2, 3, 1, 2);
  const int d1 = 5;
  const Eigen::MatrixXd M = toeplitz_matrix(layer, d1);
  const int w = layer.kernel.r_minus + layer.kernel.r_plus;
  CHECK(M.cols() == d1 * d1 * 3);
  CHECK(M.rows() == (d1 + w) * (d1 + w) * 2);

  Eigen::VectorXd x(d1 * d1 * 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal();
  const Signal2D y = conv_forward(layer, embed_image(x, d1, 3), false);
  const Eigen::VectorXd yv = M * x;
  // The matrix rows enumerate the output window with the same convention.
  const Eigen::VectorXd yf =
      flatten_window(y, y.o1, y.o2, d1 + w, 2);
  CHECK((yv - yf).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("toeplitz_norm equals the dense spectral norm on small cases") {
  Rng rng(0x51600007u);
  for (int trial = 0; trial < 5; ++trial) {
    const ConvLayerSpec layer = testutil::random_conv_layer(
        rng, 1 + static_cast<int>(rng.raw() % 2),
        1 + static_cast<int>(rng.raw() % 2), 1, 1);
    for (int d1 : {2, 4, 7}) {
      const Eigen::MatrixXd M = toeplitz_matrix(layer, d1);
      const double direct = M.bdcSvd().singularValues()(0);
      const double iter = toeplitz_norm(layer, d1);
      CHECK(iter == doctest::Approx(direct).epsilon(1e-8));
    }
  }
}

TEST_CASE("toeplitz_norm is nondecreasing in d1 and below the grid gain") {
  Rng rng(0x51600008u);
  for (int trial = 0; trial < 8; ++trial) {
    const ConvLayerSpec layer = testutil::random_conv_layer(rng, 1, 1, 1, 1);
    const double hinf = hinf_grid(layer, 128);
    double prev = 0.0;
    for (int d1 : {2, 4, 8, 16, 24}) {
      const double t = toeplitz_norm(layer, d1);
      CHECK(t >= prev - 1e-9);
      CHECK(t <= hinf + 1e-6);
      prev = t;
    }
  }
}

TEST_CASE("grid gain: exact values on analytically solvable kernels") {
  // Single tap: the transfer matrix is constant, gain = |c|.
  ConvLayerSpec tap;
  tap.kernel = Kernel2D::zeros(1, 1, 0, 0);
  tap.kernel.taps[0](0, 0) = -2.5;
  tap.bias = Eigen::VectorXd::Zero(1);
  CHECK(hinf_grid(tap, 64) == doctest::Approx(2.5).epsilon(1e-12));

  // Averaging kernel: peak at zero frequency with value 1.
  ConvLayerSpec avg;
  avg.kernel = Kernel2D::zeros(1, 1, 1, 1);
  for (auto& t : avg.kernel.taps) t(0, 0) = 1.0 / 9.0;
  avg.bias = Eigen::VectorXd::Zero(1);
  CHECK(hinf_grid(avg, 64) == doctest::Approx(1.0).epsilon(1e-12));

  // Separable two-tap difference along each axis: |1 - e^{-i t1}| |1 - e^{-i t2}|
  // peaks at Nyquist with value 4 (grid with even n contains Nyquist).
  ConvLayerSpec diff;
  diff.kernel = Kernel2D::zeros(1, 1, 0, 1);
  diff.kernel.tap_m(0, 0)(0, 0) = 1.0;
  diff.kernel.tap_m(0, 1)(0, 0) = -1.0;
  diff.kernel.tap_m(1, 0)(0, 0) = -1.0;
  diff.kernel.tap_m(1, 1)(0, 0) = 1.0;
  diff.bias = Eigen::VectorXd::Zero(1);
  CHECK(hinf_grid(diff, 64) == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("grid gain invariances") {
  Rng rng(0x51600009u);
  const ConvLayerSpec layer = testutil::random_conv_layer(rng, 2, 2, 1, 1);

  // Scaling the kernel scales the gain.
  ConvLayerSpec scaled = layer;
  for (auto& t : scaled.kernel.taps) t *= -3.25;
  CHECK(hinf_grid(scaled, 96) ==
        doctest::Approx(3.25 * hinf_grid(layer, 96)).epsilon(1e-12));

  // Shifting the support (same taps, different radii split) multiplies the
  // transfer matrix by a unimodular phase: the gain is unchanged.
  ConvLayerSpec shifted;
  shifted.kernel = Kernel2D::zeros(2, 2, 0, 2);
  shifted.kernel.taps = layer.kernel.taps;
  shifted.bias = layer.bias;
  CHECK(hinf_grid(shifted, 96) ==
        doctest::Approx(hinf_grid(layer, 96)).epsilon(1e-12));

  // The grid estimate is nondecreasing under grid refinement by divisors.
  const double g64 = hinf_grid(layer, 64);
  const double g128 = hinf_grid(layer, 128);
  CHECK(g128 >= g64 - 1e-12);
}

TEST_CASE("parallel and serial grid scans agree exactly") {
  Rng rng(0x5160000au);
  for (int trial = 0; trial < 3; ++trial) {
    const ConvLayerSpec layer = testutil::random_conv_layer(
        rng, 1 + trial % 2, 1 + trial % 2, 1, trial % 3);
    CHECK(hinf_grid(layer, 101) == hinf_grid_serial(layer, 101));
  }
}

TEST_CASE("input guards") {
  Rng rng(0x5160000bu);
  const ConvLayerSpec layer = testutil::random_conv_layer(rng, 1, 1, 1, 1);
  CHECK_THROWS_AS(hinf_grid(layer, 1), DataError);
  CHECK_THROWS_AS(toeplitz_matrix(layer, 4000), DataError);  // element budget
}
