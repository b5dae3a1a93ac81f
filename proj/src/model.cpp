// SPDX-License-Identifier: MIT
#include "lip2d/model.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace lip2d {

using nlohmann::json;

Kernel2D Kernel2D::zeros(int c_out, int c_in, int r_minus, int r_plus) {
  Kernel2D k;
  k.c_out = c_out;
  k.c_in = c_in;
  k.r_minus = r_minus;
  k.r_plus = r_plus;
  const int w = k.width();
  k.taps.assign(static_cast<std::size_t>(w) * w,
                Eigen::MatrixXd::Zero(c_out, c_in));
  return k;
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
  }
  return "relu";
}

Activation activation_from_name(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "sigmoid") return Activation::sigmoid;
  throw DataError("unknown activation '" + name +
                  "' (expected relu, tanh or sigmoid)");
}

double activation_eval(Activation a, double x) {
  switch (a) {
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::tanh: return std::tanh(x);
    case Activation::sigmoid:
      // Logistic function; slope lies in (0, 1/4], within the required [0,1].
      return 1.0 / (1.0 + std::exp(-x));
  }
  return x;
}

namespace {

void check_finite(const Eigen::MatrixXd& m, const std::string& what) {
  if (!m.allFinite()) throw DataError(what + " contains NaN or Inf");
}

}  // namespace

void validate_network(const NetworkSpec& spec) {
  if (spec.input_height <= 0 || spec.input_width <= 0 ||
      spec.input_channels <= 0)
    throw DataError("input geometry must be positive");
  if (spec.conv_layers.empty())
    throw DataError("network must contain at least one conv layer");

  int channels = spec.input_channels;
  for (std::size_t k = 0; k < spec.conv_layers.size(); ++k) {
    const auto& layer = spec.conv_layers[k];
    const auto& kern = layer.kernel;
    const std::string where = "conv layer " + std::to_string(k + 1);
    if (kern.r_minus < 0 || kern.r_plus < 0)
      throw DataError(where + ": negative kernel radius");
    if (kern.c_in <= 0 || kern.c_out <= 0)
      throw DataError(where + ": nonpositive channel count");
    const int w = kern.width();
    if (static_cast<int>(kern.taps.size()) != w * w)
      throw DataError(where + ": expected " + std::to_string(w * w) +
                      " taps, got " + std::to_string(kern.taps.size()));
    for (const auto& tap : kern.taps) {
      if (tap.rows() != kern.c_out || tap.cols() != kern.c_in)
        throw DataError(where + ": tap dimensions " +
                        std::to_string(tap.rows()) + "x" +
                        std::to_string(tap.cols()) + " do not match channels " +
                        std::to_string(kern.c_out) + "x" +
                        std::to_string(kern.c_in));
      check_finite(tap, where + " kernel");
    }
    if (kern.c_in != channels)
      throw DataError(where + ": c_in=" + std::to_string(kern.c_in) +
                      " does not chain with previous channel count " +
                      std::to_string(channels));
    if (layer.bias.size() != kern.c_out)
      throw DataError(where + ": bias length " +
                      std::to_string(layer.bias.size()) +
                      " does not match c_out " + std::to_string(kern.c_out));
    check_finite(layer.bias, where + " bias");
    channels = kern.c_out;
  }

  if (!spec.dense_layers.empty()) {
    const auto [d_l, c_l] = flatten_dims(spec);
    long expected = static_cast<long>(d_l) * d_l * c_l;
    for (std::size_t k = 0; k < spec.dense_layers.size(); ++k) {
      const auto& layer = spec.dense_layers[k];
      const std::string where = "dense layer " + std::to_string(k + 1);
      if (layer.weight.rows() <= 0 || layer.weight.cols() <= 0)
        throw DataError(where + ": empty weight");
      if (layer.weight.cols() != expected)
        throw DataError(where + ": input dimension " +
                        std::to_string(layer.weight.cols()) +
                        " does not chain with " + std::to_string(expected));
      if (layer.bias.size() != layer.weight.rows())
        throw DataError(where + ": bias length does not match weight rows");
      check_finite(layer.weight, where + " weight");
      check_finite(layer.bias, where + " bias");
      expected = layer.weight.rows();
    }
  }
}

std::pair<int, int> flatten_dims(const NetworkSpec& spec) {
  int d1 = spec.input_height;
  int d2 = spec.input_width;
  int channels = spec.input_channels;
  for (std::size_t k = 0; k < spec.conv_layers.size(); ++k) {
    const auto& kern = spec.conv_layers[k].kernel;
    d1 -= kern.width() - 1;
    d2 -= kern.width() - 1;
    if (d1 <= 0 || d2 <= 0)
      throw GeometryError("conv layer " + std::to_string(k + 1) +
                          ": kernel support exceeds the image (intermediate "
                          "size becomes nonpositive)");
    channels = kern.c_out;
  }
  if (d1 != d2)
    throw GeometryError("flatten requires a square conv output, got " +
                        std::to_string(d1) + "x" + std::to_string(d2));
  return {d1, channels};
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw DataError(what + ": expected a 2-D array");
  const std::size_t rows = j.size();
  const std::size_t cols = j[0].size();
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols)
      throw DataError(what + ": ragged rows");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[i][c].is_number()) throw DataError(what + ": non-numeric entry");
      m(i, c) = j[i][c].get<double>();
    }
  }
  return m;
}

Eigen::VectorXd vector_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw DataError(what + ": expected an array");
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw DataError(what + ": non-numeric entry");
    v(i) = j[i].get<double>();
  }
  return v;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

}  // namespace

NetworkSpec network_from_json_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("malformed JSON: ") + e.what());
  }

  NetworkSpec spec;
  try {
    const auto& input = doc.at("input");
    spec.input_height = input.at("height").get<int>();
    spec.input_width = input.at("width").get<int>();
    spec.input_channels = input.at("channels").get<int>();
    spec.activation = activation_from_name(doc.at("activation").get<std::string>());

    for (std::size_t k = 0; k < doc.at("conv_layers").size(); ++k) {
      const auto& jl = doc["conv_layers"][k];
      const std::string where = "conv layer " + std::to_string(k + 1);
      ConvLayerSpec layer;
      const int r_minus = jl.at("r_minus").get<int>();
      const int r_plus = jl.at("r_plus").get<int>();
      const auto& jk = jl.at("kernel");  // [out][in][j1][j2]
      if (!jk.is_array() || jk.empty())
        throw DataError(where + ": kernel must be a 4-D array");
      const int c_out = static_cast<int>(jk.size());
      const int c_in = static_cast<int>(jk[0].size());
      layer.kernel = Kernel2D::zeros(c_out, c_in, r_minus, r_plus);
      const int w = layer.kernel.width();
      for (int o = 0; o < c_out; ++o) {
        if (static_cast<int>(jk[o].size()) != c_in)
          throw DataError(where + ": ragged kernel channel dimensions");
        for (int i = 0; i < c_in; ++i) {
          const auto& plane = jk[o][i];
          if (static_cast<int>(plane.size()) != w)
            throw DataError(where + ": kernel j1 extent " +
                            std::to_string(plane.size()) +
                            " does not match r_minus+r_plus+1=" +
                            std::to_string(w));
          for (int m1 = 0; m1 < w; ++m1) {
            if (static_cast<int>(plane[m1].size()) != w)
              throw DataError(where + ": kernel j2 extent mismatch");
            for (int m2 = 0; m2 < w; ++m2)
              layer.kernel.tap_m(m1, m2)(o, i) = plane[m1][m2].get<double>();
          }
        }
      }
      layer.bias = vector_from_json(jl.at("bias"), where + " bias");
      spec.conv_layers.push_back(std::move(layer));
    }

    if (doc.contains("dense_layers")) {
      for (std::size_t k = 0; k < doc["dense_layers"].size(); ++k) {
        const auto& jl = doc["dense_layers"][k];
        const std::string where = "dense layer " + std::to_string(k + 1);
        DenseLayerSpec layer;
        layer.weight = matrix_from_json(jl.at("weight"), where + " weight");
        layer.bias = vector_from_json(jl.at("bias"), where + " bias");
        spec.dense_layers.push_back(std::move(layer));
      }
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("schema error: ") + e.what());
  }

  validate_network(spec);
  return spec;
}

std::string network_to_json_text(const NetworkSpec& spec) {
  json doc;
  doc["input"] = {{"height", spec.input_height},
                  {"width", spec.input_width},
                  {"channels", spec.input_channels}};
  doc["activation"] = activation_name(spec.activation);
  doc["conv_layers"] = json::array();
  for (const auto& layer : spec.conv_layers) {
    const auto& kern = layer.kernel;
    const int w = kern.width();
    json jk = json::array();
    for (int o = 0; o < kern.c_out; ++o) {
      json jin = json::array();
      for (int i = 0; i < kern.c_in; ++i) {
        json j1s = json::array();
        for (int m1 = 0; m1 < w; ++m1) {
          json j2s = json::array();
          for (int m2 = 0; m2 < w; ++m2) j2s.push_back(kern.tap_m(m1, m2)(o, i));
          j1s.push_back(std::move(j2s));
        }
        jin.push_back(std::move(j1s));
      }
      jk.push_back(std::move(jin));
    }
    doc["conv_layers"].push_back({{"r_minus", kern.r_minus},
                                  {"r_plus", kern.r_plus},
                                  {"kernel", std::move(jk)},
                                  {"bias", vector_to_json(layer.bias)}});
  }
  if (!spec.dense_layers.empty()) {
    doc["dense_layers"] = json::array();
    for (const auto& layer : spec.dense_layers)
      doc["dense_layers"].push_back({{"weight", matrix_to_json(layer.weight)},
                                     {"bias", vector_to_json(layer.bias)}});
  }
  return doc.dump(2);
}

NetworkSpec load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return network_from_json_text(buf.str());
}

void save_network(const NetworkSpec& spec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write model file '" + path + "'");
  out << network_to_json_text(spec) << "\n";
}

}  // namespace lip2d
