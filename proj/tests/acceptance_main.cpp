// SPDX-License-Identifier: MIT
//
// Acceptance gate: one pass/fail line per criterion, exit code = number of
// failed criteria. Tolerances are pinned here, next to each check.

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "lip2d/errors.hpp"
#include "lip2d/lure.hpp"
#include "lip2d/model.hpp"
#include "lip2d/realization.hpp"
#include "lip2d/rng.hpp"
#include "lip2d/sdpsolve.hpp"
#include "lip2d/signal2d.hpp"

using namespace lip2d;

namespace {

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Every certified bound in this binary flows through here so the final
// criterion can assert that validation accompanied each reported gamma.
struct ValidationLog {
  int total = 0;
  int passed = 0;
  double worst_lmi_eig = 0.0;
  double worst_pointwise = 0.0;
  int min_trials = 1 << 30;
} g_vlog;

LipschitzCertificate certify(const NetworkSpec& spec,
                             EstimateOptions opts = {}) {
  ValidationReport vrep;
  const LipschitzCertificate cert =
      estimate_lipschitz_hybrid(spec, opts, &vrep);
  ++g_vlog.total;
  if (vrep.passed) ++g_vlog.passed;
  g_vlog.worst_lmi_eig = std::min(g_vlog.worst_lmi_eig, vrep.min_lmi_eig);
  g_vlog.worst_pointwise =
      std::min(g_vlog.worst_pointwise, vrep.worst_pointwise_residual);
  g_vlog.min_trials = std::min(g_vlog.min_trials, vrep.trials);
  return cert;
}

Kernel2D random_kernel(Rng& rng, int c_out, int c_in, int r_minus, int r_plus,
                       double scale = 1.0) {
  Kernel2D k = Kernel2D::zeros(c_out, c_in, r_minus, r_plus);
  for (auto& tap : k.taps)
    for (Eigen::Index i = 0; i < tap.rows(); ++i)
      for (Eigen::Index j = 0; j < tap.cols(); ++j)
        tap(i, j) = scale * rng.normal();
  return k;
}

ConvLayerSpec random_layer(Rng& rng, int c_out, int c_in, int r_minus,
                           int r_plus, double scale = 1.0) {
  ConvLayerSpec layer;
  layer.kernel = random_kernel(rng, c_out, c_in, r_minus, r_plus, scale);
  layer.bias = Eigen::VectorXd::Zero(c_out);
  for (int i = 0; i < c_out; ++i) layer.bias(i) = 0.1 * rng.normal();
  return layer;
}

Signal2D random_signal(Rng& rng, int o1, int o2, int n1, int n2, int c) {
  Signal2D u(o1, o2, n1, n2, c);
  for (Eigen::Index i = 0; i < u.data.size(); ++i) u.data(i) = rng.normal();
  return u;
}

NetworkSpec single_layer_net(const ConvLayerSpec& layer, int d) {
  NetworkSpec spec;
  spec.input_height = spec.input_width = d;
  spec.input_channels = layer.kernel.c_in;
  spec.activation = Activation::relu;
  spec.conv_layers = {layer};
  return spec;
}

// --- criterion 1: realization equals convolution --------------------------

Outcome criterion1() {
  const double t0 = now_s();
  Rng rng(0xacc10001u);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 1 + static_cast<int>(rng.raw() % 5);  // support 1x1 .. 5x5
    const int r_minus = static_cast<int>(rng.raw() % k);
    const int r_plus = k - 1 - r_minus;
    const int c_out = 1 + static_cast<int>(rng.raw() % 3);
    const int c_in = 1 + static_cast<int>(rng.raw() % 3);
    const ConvLayerSpec layer =
        random_layer(rng, c_out, c_in, r_minus, r_plus);
    const RoesserRealization sys = realize_conv(layer);
    const int N1 = 4 + static_cast<int>(rng.raw() % 13);  // up to 16
    const int N2 = 4 + static_cast<int>(rng.raw() % 13);
    const Signal2D u = random_signal(rng, sys.r, sys.r, N1, N2, c_in);
    const Signal2D y_sim = simulate(sys, u, N1, N2);
    const Signal2D y_ref = conv_forward(layer, u, true);
    for (int i2 = 0; i2 < N2; ++i2)
      for (int i1 = 0; i1 < N1; ++i1)
        for (int ch = 0; ch < c_out; ++ch)
          worst = std::max(worst, std::abs(y_sim.get(i1, i2, ch) -
                                           y_ref.get(i1, i2, ch)));
  }
  const double dt = now_s() - t0;
  std::ostringstream d;
  d << "50 layers, max |simulate - conv| = " << worst << ", " << dt << " s";
  return {worst <= 1e-10 && dt < 30.0, d.str()};
}

// --- criteria 2 and 3: random-layer benchmark against both oracles --------

struct BenchData {
  std::vector<double> gamma, hinf;
  std::vector<std::vector<double>> toeplitz;  // per instance, per d1
  std::vector<int> d1s{5, 10, 20, 50};
  bool ran = false;
  std::string error;
};
BenchData g_bench;

void run_bench_once() {
  if (g_bench.ran) return;
  g_bench.ran = true;
  const std::uint64_t base_seed = 0xacc20002u;
  for (int i = 0; i < 100; ++i) {
    Rng rng = Rng::derived(base_seed, static_cast<std::uint64_t>(i));
    ConvLayerSpec layer;
    layer.kernel = random_kernel(rng, 1, 1, 1, 1);  // 3x3 standard normal
    layer.bias = Eigen::VectorXd::Zero(1);
    const LipschitzCertificate cert = certify(single_layer_net(layer, 16));
    g_bench.gamma.push_back(cert.gamma);
    g_bench.hinf.push_back(hinf_grid(layer, 512));
    std::vector<double> tp;
    for (int d1 : g_bench.d1s) tp.push_back(toeplitz_norm(layer, d1));
    g_bench.toeplitz.push_back(tp);
  }
}

Outcome criterion2() {
  const double t0 = now_s();
  try {
    run_bench_once();
  } catch (const std::exception& e) {
    g_bench.error = e.what();
  }
  if (!g_bench.error.empty()) return {false, "benchmark failed: " + g_bench.error};
  const double dt = now_s() - t0;

  int in_band = 0, above_toeplitz = 0;
  double mean_gamma = 0.0, mean_hinf = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double g = g_bench.gamma[i], h = g_bench.hinf[i];
    // Band: h <= gamma <= 1.02 h (1e-12 relative slack on the sound side).
    if (g >= h * (1.0 - 1e-12) && g <= 1.02 * h) ++in_band;
    bool above = true;
    for (double t : g_bench.toeplitz[i])
      if (g + 1e-9 < t) above = false;  // 1e-9 absolute slack
    if (above) ++above_toeplitz;
    mean_gamma += g / 100.0;
    mean_hinf += h / 100.0;
  }
  const double mean_gap = std::abs(mean_gamma - mean_hinf) / mean_hinf;
  std::ostringstream d;
  d << "band " << in_band << "/100, above matrix-norm " << above_toeplitz
    << "/100, mean gamma " << mean_gamma << " vs mean grid " << mean_hinf
    << " (gap " << 100.0 * mean_gap << "%), " << dt << " s";
  return {in_band >= 95 && above_toeplitz == 100 && mean_gap <= 0.05 &&
              dt < 600.0,
          d.str()};
}

Outcome criterion3() {
  if (!g_bench.error.empty()) return {false, "benchmark failed: " + g_bench.error};
  int monotone = 0, below = 0;
  for (int i = 0; i < 100; ++i) {
    bool mono = true;
    for (std::size_t j = 1; j < g_bench.toeplitz[i].size(); ++j)
      if (g_bench.toeplitz[i][j] + 1e-9 < g_bench.toeplitz[i][j - 1])
        mono = false;
    if (mono) ++monotone;
    bool b = true;
    for (double t : g_bench.toeplitz[i])
      if (t > g_bench.hinf[i] + 1e-6) b = false;
    if (b) ++below;
  }
  std::ostringstream d;
  d << "monotone " << monotone << "/100, below grid gain " << below << "/100";
  return {monotone == 100 && below == 100, d.str()};
}

// --- criterion 4: incremental error system --------------------------------

Outcome criterion4() {
  Rng rng(0xacc40004u);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int c_mid = 1 + static_cast<int>(rng.raw() % 3);
    std::vector<ConvLayerSpec> stack;
    stack.push_back(random_layer(rng, c_mid, 1, static_cast<int>(rng.raw() % 2),
                                 1 + static_cast<int>(rng.raw() % 2)));
    stack.push_back(random_layer(rng, 1, c_mid, static_cast<int>(rng.raw() % 2),
                                 1 + static_cast<int>(rng.raw() % 2)));
    const LureSystem sys = assemble_lure(stack);
    const LureSystem err = error_system(sys);
    const int N = 6;
    const Signal2D u = random_signal(rng, 0, 0, N + 3, N + 3, 1);
    Signal2D du = random_signal(rng, 0, 0, N + 3, N + 3, 1);
    du.data *= 0.7;
    Signal2D u2 = u;
    u2.data += du.data;
    const LureTrajectory ta = lure_forward(sys, Activation::relu, u, N, N);
    const LureTrajectory tb = lure_forward(sys, Activation::relu, u2, N, N);
    const LureTrajectory te = lure_forward(err, Activation::relu, du, N, N,
                                           &ta.z);
    for (int i2 = 0; i2 < N; ++i2)
      for (int i1 = 0; i1 < N; ++i1) {
        for (int ch = 0; ch < static_cast<int>(sys.ny()); ++ch)
          worst = std::max(worst, std::abs(tb.y.get(i1, i2, ch) -
                                           ta.y.get(i1, i2, ch) -
                                           te.y.get(i1, i2, ch)));
        for (int ch = 0; ch < static_cast<int>(sys.nz); ++ch) {
          worst = std::max(worst, std::abs(tb.z.get(i1, i2, ch) -
                                           ta.z.get(i1, i2, ch) -
                                           te.z.get(i1, i2, ch)));
          worst = std::max(worst, std::abs(tb.w.get(i1, i2, ch) -
                                           ta.w.get(i1, i2, ch) -
                                           te.w.get(i1, i2, ch)));
        }
      }
    for (std::size_t i = 0; i < ta.x1s.size(); ++i)
      worst = std::max(
          worst, (tb.x1s[i] - ta.x1s[i] - te.x1s[i]).cwiseAbs().maxCoeff());
    for (std::size_t i = 0; i < ta.x2s.size(); ++i)
      worst = std::max(
          worst, (tb.x2s[i] - ta.x2s[i] - te.x2s[i]).cwiseAbs().maxCoeff());
  }
  std::ostringstream d;
  d << "100 stacks, max |difference - error system| = " << worst;
  return {worst <= 1e-10, d.str()};
}

// --- criterion 6: certified bounds dominate sampled gains -----------------

Outcome criterion6() {
  Rng rng(0xacc60006u);
  double worst_ratio = 0.0;
  std::string worst_net;
  for (int net_i = 0; net_i < 6; ++net_i) {
    const bool hybrid = net_i >= 3;
    const int c_mid = 1 + static_cast<int>(rng.raw() % 3);
    NetworkSpec spec;
    spec.input_height = spec.input_width =
        10 + static_cast<int>(rng.raw() % 3);  // up to 12
    spec.input_channels = 1;
    spec.activation = Activation::relu;
    spec.conv_layers.push_back(random_layer(rng, c_mid, 1, 1, 1, 0.5));
    spec.conv_layers.push_back(random_layer(rng, 2, c_mid, 1, 1, 0.5));
    if (hybrid) {
      const auto [d, c] = flatten_dims(spec);
      const int n0 = d * d * c;
      DenseLayerSpec l1, l2;
      l1.weight = Eigen::MatrixXd::Zero(10, n0);
      for (int i = 0; i < 10; ++i)
        for (int j = 0; j < n0; ++j)
          l1.weight(i, j) = rng.normal() / std::sqrt(static_cast<double>(n0));
      l1.bias = Eigen::VectorXd::Zero(10);
      l2.weight = Eigen::MatrixXd::Zero(4, 10);
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 10; ++j) l2.weight(i, j) = 0.3 * rng.normal();
      l2.bias = Eigen::VectorXd::Zero(4);
      spec.dense_layers = {l1, l2};
    }
    const LipschitzCertificate cert = certify(spec);

    const Eigen::Index n_in = static_cast<Eigen::Index>(spec.input_height) *
                              spec.input_width * spec.input_channels;
    for (int pair = 0; pair < 10000; ++pair) {
      Eigen::VectorXd a(n_in), b(n_in);
      for (Eigen::Index i = 0; i < n_in; ++i) {
        a(i) = rng.normal();
        b(i) = a(i) + 0.5 * rng.normal();
      }
      const double du = (a - b).norm();
      if (du == 0.0) continue;
      const double dy = (network_forward(spec, a) - network_forward(spec, b))
                            .norm();
      const double ratio = dy / (du * cert.gamma);
      if (ratio > worst_ratio) {
        worst_ratio = ratio;
        worst_net = (hybrid ? "hybrid " : "conv ") + std::to_string(net_i);
      }
    }
  }
  std::ostringstream d;
  d << "6 networks x 10000 pairs, worst gain / certified = " << worst_ratio
    << " (" << worst_net << ")";
  return {worst_ratio <= 1.0 + 1e-4, d.str()};
}

// --- criterion 7: analytically known gains --------------------------------

Outcome criterion7() {
  std::ostringstream d;
  bool ok = true;

  for (double c : {2.0, -0.6}) {
    ConvLayerSpec tap;
    tap.kernel = Kernel2D::zeros(1, 1, 0, 0);
    tap.kernel.taps[0](0, 0) = c;
    tap.bias = Eigen::VectorXd::Zero(1);
    const double g = certify(single_layer_net(tap, 8)).gamma;
    ok = ok && std::abs(g - std::abs(c)) <= 1e-6;
    d << "tap " << c << " -> " << g << "; ";
  }

  ConvLayerSpec avg;
  avg.kernel = Kernel2D::zeros(1, 1, 1, 1);
  for (auto& t : avg.kernel.taps) t(0, 0) = 1.0 / 9.0;
  avg.bias = Eigen::VectorXd::Zero(1);
  const double g_avg = certify(single_layer_net(avg, 12)).gamma;
  ok = ok && std::abs(g_avg - 1.0) <= 1e-3;
  d << "averaging -> " << g_avg << "; ";

  // Identity conv + identity dense: the hybrid pipeline must certify 1.
  NetworkSpec ident;
  ident.input_height = ident.input_width = 4;
  ident.input_channels = 1;
  ident.activation = Activation::relu;
  ConvLayerSpec one;
  one.kernel = Kernel2D::zeros(1, 1, 0, 0);
  one.kernel.taps[0](0, 0) = 1.0;
  one.bias = Eigen::VectorXd::Zero(1);
  ident.conv_layers = {one};
  DenseLayerSpec eye;
  eye.weight = Eigen::MatrixXd::Identity(16, 16);
  eye.bias = Eigen::VectorXd::Zero(16);
  ident.dense_layers = {eye};
  const double g_id = certify(ident).gamma;
  ok = ok && std::abs(g_id - 1.0) <= 1e-4;
  d << "identity hybrid -> " << g_id;
  return {ok, d.str()};
}

// --- criterion 8: the large hybrid pipeline -------------------------------

Outcome criterion8() {
  const double t0 = now_s();
  Rng rng(0xacc80008u);
  NetworkSpec spec;
  spec.input_height = spec.input_width = 28;
  spec.input_channels = 1;
  spec.activation = Activation::relu;
  spec.conv_layers.push_back(random_layer(rng, 5, 1, 4, 4, 1.0 / 9.0));
  spec.conv_layers.push_back(random_layer(rng, 5, 5, 2, 2, 1.0 / 11.0));
  // 28 - 8 - 4 = 16 -> 16*16*5 = 1280 flattened inputs.
  DenseLayerSpec l1, l2;
  l1.weight = Eigen::MatrixXd::Zero(50, 1280);
  for (int i = 0; i < 50; ++i)
    for (int j = 0; j < 1280; ++j) l1.weight(i, j) = rng.normal() / 36.0;
  l1.bias = Eigen::VectorXd::Zero(50);
  l2.weight = Eigen::MatrixXd::Zero(10, 50);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 50; ++j) l2.weight(i, j) = rng.normal() / 7.0;
  l2.bias = Eigen::VectorXd::Zero(10);
  spec.dense_layers = {l1, l2};
  validate_network(spec);

  const LipschitzCertificate cert = certify(spec);
  const double dt = now_s() - t0;
  std::ostringstream d;
  d << "gamma = " << cert.gamma << " (" << cert.method << "), " << dt << " s";
  const bool finite = std::isfinite(cert.gamma) && cert.gamma > 0.0;
  return {finite && dt < 1800.0, d.str()};
}

// --- criterion 9: exact scaling covariance --------------------------------

Outcome criterion9() {
  Rng rng(0xacc90009u);
  std::ostringstream d;
  bool ok = true;

  // Single layer: gamma(alpha K) = alpha gamma(K).
  const ConvLayerSpec base = random_layer(rng, 1, 1, 1, 1);
  const double g_base = certify(single_layer_net(base, 12)).gamma;
  for (double alpha : {0.5, 2.0, 10.0}) {
    ConvLayerSpec scaled = base;
    for (auto& t : scaled.kernel.taps) t *= alpha;
    const double g = certify(single_layer_net(scaled, 12)).gamma;
    const double rel = std::abs(g - alpha * g_base) / (alpha * g_base);
    ok = ok && rel <= 1e-5;
    d << "alpha " << alpha << ": rel err " << rel << "; ";
  }

  // Two-layer stack with the activation: scaling the first kernel still
  // scales the certified gain linearly (positive homogeneity).
  NetworkSpec net;
  net.input_height = net.input_width = 9;
  net.input_channels = 1;
  net.activation = Activation::relu;
  net.conv_layers.push_back(random_layer(rng, 2, 1, 1, 1, 0.7));
  net.conv_layers.push_back(random_layer(rng, 1, 2, 1, 1, 0.7));
  const double g2_base = certify(net).gamma;
  for (double alpha : {0.5, 2.0, 10.0}) {
    NetworkSpec scaled = net;
    for (auto& t : scaled.conv_layers[0].kernel.taps) t *= alpha;
    const double g = certify(scaled).gamma;
    const double rel = std::abs(g - alpha * g2_base) / (alpha * g2_base);
    ok = ok && rel <= 1e-5;
    d << "stack alpha " << alpha << ": rel err " << rel << "; ";
  }
  return {ok, d.str()};
}

// --- criterion 5: validation accompanied every certified bound ------------

Outcome criterion5() {
  std::ostringstream d;
  d << g_vlog.passed << "/" << g_vlog.total
    << " certificates validated, worst LMI eig " << g_vlog.worst_lmi_eig
    << ", worst pointwise residual " << g_vlog.worst_pointwise
    << ", min trials " << g_vlog.min_trials;
  const bool ok = g_vlog.total > 0 && g_vlog.passed == g_vlog.total &&
                  g_vlog.worst_lmi_eig >= -1e-7 &&
                  g_vlog.worst_pointwise >= -1e-6 && g_vlog.min_trials >= 100;
  return {ok, d.str()};
}

}  // namespace

int main() {
  struct Item {
    int id;
    const char* name;
    std::function<Outcome()> fn;
  };
  // Criterion 5 (mandatory validation) is evaluated last: it audits every
  // certificate produced while running the others.
  const std::vector<Item> items = {
      {1, "realization equals convolution", criterion1},
      {2, "random benchmark vs both oracles", criterion2},
      {3, "matrix-norm monotonicity and domination", criterion3},
      {4, "error system equals trajectory difference", criterion4},
      {6, "certified bound dominates sampled gains", criterion6},
      {7, "analytically known gains", criterion7},
      {8, "large hybrid pipeline", criterion8},
      {9, "scaling covariance", criterion9},
      {5, "validation shipped with every bound", criterion5},
  };
  int failures = 0;
  for (const auto& item : items) {
    Outcome oc;
    const double t0 = now_s();
    try {
      oc = item.fn();
    } catch (const std::exception& e) {
      oc = {false, std::string("exception: ") + e.what()};
    }
    if (!oc.pass) ++failures;
    std::printf("ACCEPTANCE %d [%s]: %s  (%.1f s) - %s\n", item.id, item.name,
                oc.pass ? "PASS" : "FAIL", now_s() - t0, oc.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%s: %d/9 criteria passed\n",
              failures == 0 ? "ACCEPTANCE OK" : "ACCEPTANCE FAILED",
              9 - failures);
  return failures;
}
