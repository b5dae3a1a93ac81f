// SPDX-License-Identifier: MIT
//
// Model container tests: structural validation, geometry arithmetic, JSON
// round-trips, activation table.

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <string>

#include "lip2d/errors.hpp"
#include "lip2d/model.hpp"
#include "lip2d/rng.hpp"

#include "test_util.hpp"

using namespace lip2d;

namespace {

NetworkSpec small_hybrid() {
  Rng rng(0xaa01u);
  NetworkSpec spec;
  spec.input_height = spec.input_width = 8;
  spec.input_channels = 2;
  spec.activation = Activation::relu;
  spec.conv_layers.push_back(testutil::random_conv_layer(rng, 3, 2, 1, 1));
  spec.conv_layers.push_back(testutil::random_conv_layer(rng, 2, 3, 1, 1));
  // 8 - 2 - 2 = 4 spatial, 2 channels -> 32 flattened inputs.
  spec.dense_layers.push_back(testutil::random_dense_layer(rng, 5, 32));
  spec.dense_layers.push_back(testutil::random_dense_layer(rng, 3, 5));
  return spec;
}

}  // namespace

TEST_CASE("valid networks pass validation") {
  NetworkSpec spec = small_hybrid();
  CHECK_NOTHROW(validate_network(spec));

  // Asymmetric support is legal.
  Rng rng(0xaa02u);
  NetworkSpec asym;
  asym.input_height = asym.input_width = 6;
  asym.input_channels = 1;
  asym.conv_layers.push_back(testutil::random_conv_layer(rng, 1, 1, 0, 2));
  CHECK_NOTHROW(validate_network(asym));
}

TEST_CASE("structural violations are rejected with DataError") {
  const NetworkSpec good = small_hybrid();

  NetworkSpec s = good;
  s.conv_layers.clear();
  CHECK_THROWS_AS(validate_network(s), DataError);

  s = good;
  s.input_height = 0;
  CHECK_THROWS_AS(validate_network(s), DataError);

  s = good;
  s.conv_layers[0].bias = Eigen::VectorXd::Zero(1);  // wrong length
  CHECK_THROWS_AS(validate_network(s), DataError);

  s = good;
  s.conv_layers[0].kernel.taps[0] = Eigen::MatrixXd::Zero(3, 3);  // wrong shape
  CHECK_THROWS_AS(validate_network(s), DataError);

  s = good;
  s.conv_layers[1].kernel.c_in = 4;  // breaks channel chaining
  for (auto& tap : s.conv_layers[1].kernel.taps)
    tap = Eigen::MatrixXd::Zero(2, 4);
  CHECK_THROWS_AS(validate_network(s), DataError);

  s = good;
  s.dense_layers[1].weight = Eigen::MatrixXd::Zero(3, 6);  // breaks chaining
  CHECK_THROWS_AS(validate_network(s), DataError);

  s = good;
  s.conv_layers[0].kernel.taps[0](0, 0) =
      std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(validate_network(s), DataError);
}

TEST_CASE("flatten geometry arithmetic and failure modes") {
  NetworkSpec spec = small_hybrid();
  const auto [d, c] = flatten_dims(spec);
  // Two radius-1 layers shrink each side by 2 under valid cropping.
  CHECK(d == 4);
  CHECK(c == 2);

  // Shrinking the input until a conv layer consumes it is a geometry error.
  spec.input_height = spec.input_width = 4;
  spec.dense_layers[0].weight = Eigen::MatrixXd::Zero(5, 0);
  CHECK_THROWS_AS(validate_network(spec), DataError);

  NetworkSpec tiny = small_hybrid();
  tiny.input_height = tiny.input_width = 3;
  CHECK_THROWS_AS(flatten_dims(tiny), GeometryError);
}

TEST_CASE("dense stack must match the flattened conv output") {
  NetworkSpec spec = small_hybrid();
  spec.dense_layers[0].weight = Eigen::MatrixXd::Zero(5, 31);
  CHECK_THROWS_AS(validate_network(spec), DataError);
}

TEST_CASE("activation table") {
  CHECK(activation_name(Activation::relu) == "relu");
  CHECK(activation_from_name("tanh") == Activation::tanh);
  CHECK_THROWS_AS(activation_from_name("gelu"), DataError);

  CHECK(activation_eval(Activation::relu, -1.5) == 0.0);
  CHECK(activation_eval(Activation::relu, 2.25) == 2.25);
  CHECK(activation_eval(Activation::tanh, 0.5) ==
        doctest::Approx(std::tanh(0.5)).epsilon(1e-15));
  CHECK(activation_eval(Activation::sigmoid, 0.0) == doctest::Approx(0.5));
}

TEST_CASE("JSON text round-trip preserves every field") {
  const NetworkSpec spec = small_hybrid();
  const std::string text = network_to_json_text(spec);
  const NetworkSpec back = network_from_json_text(text);

  CHECK(back.input_height == spec.input_height);
  CHECK(back.input_width == spec.input_width);
  CHECK(back.input_channels == spec.input_channels);
  CHECK(back.activation == spec.activation);
  REQUIRE(back.conv_layers.size() == spec.conv_layers.size());
  REQUIRE(back.dense_layers.size() == spec.dense_layers.size());
  for (std::size_t k = 0; k < spec.conv_layers.size(); ++k) {
    const auto& a = spec.conv_layers[k];
    const auto& b = back.conv_layers[k];
    CHECK(b.kernel.r_minus == a.kernel.r_minus);
    CHECK(b.kernel.r_plus == a.kernel.r_plus);
    REQUIRE(b.kernel.taps.size() == a.kernel.taps.size());
    for (std::size_t t = 0; t < a.kernel.taps.size(); ++t)
      CHECK((b.kernel.taps[t] - a.kernel.taps[t]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((b.bias - a.bias).cwiseAbs().maxCoeff() == 0.0);
  }
  for (std::size_t k = 0; k < spec.dense_layers.size(); ++k) {
    CHECK((back.dense_layers[k].weight - spec.dense_layers[k].weight)
              .cwiseAbs()
              .maxCoeff() == 0.0);
    CHECK((back.dense_layers[k].bias - spec.dense_layers[k].bias)
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
}

TEST_CASE("file round-trip and open failures") {
  const NetworkSpec spec = small_hybrid();
  const std::string path = "test_model_roundtrip.json";
  save_network(spec, path);
  const NetworkSpec back = load_network(path);
  CHECK(network_to_json_text(back) == network_to_json_text(spec));
  std::remove(path.c_str());

  CHECK_THROWS_AS(load_network("does_not_exist_401.json"), DataError);
  CHECK_THROWS_AS(network_from_json_text("{ not json"), DataError);
  CHECK_THROWS_AS(network_from_json_text("{\"schema\":\"network/1\"}"),
                  DataError);
}
