// SPDX-License-Identifier: MIT
//
// Command-line front end.
//
// Subcommands:
//   lipschitz    certify a network bound (SDP path) or compute baselines
//   bench-random random single-layer benchmark: SDP vs. the two baselines
//   simulate     cross-check the state-space recursion against direct conv
//   realize      dump the shift-register realization of one conv layer
//   check        re-validate a stored certificate against a model
//
// Exit codes: 0 success, 1 usage, 2 bad data/geometry, 3 solver or
// validation failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "lip2d/errors.hpp"
#include "lip2d/lmi.hpp"
#include "lip2d/lure.hpp"
#include "lip2d/model.hpp"
#include "lip2d/realization.hpp"
#include "lip2d/rng.hpp"
#include "lip2d/sdpsolve.hpp"
#include "lip2d/signal2d.hpp"

namespace {

using nlohmann::json;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitSolver = 3;

std::chrono::steady_clock::time_point tic() {
  return std::chrono::steady_clock::now();
}

double toc_ms(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

double env_double(const char* name, double fallback) {
  const char* s = std::getenv(name);
  if (s == nullptr || *s == '\0') return fallback;
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != std::string(s).size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw lip2d::DataError(std::string(name) + " must be a number, got '" +
                           s + "'");
  }
}

int env_int(const char* name, int fallback) {
  const char* s = std::getenv(name);
  if (s == nullptr || *s == '\0') return fallback;
  try {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != std::string(s).size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw lip2d::DataError(std::string(name) + " must be an integer, got '" +
                           s + "'");
  }
}

/// Applies LIP2D_FEAS_TOL / LIP2D_GAP_TOL / LIP2D_MAX_ITERS on top of
/// whatever the flags selected; the environment wins so wrapper scripts can
/// tighten a whole run without touching each invocation.
void apply_env_overrides(lip2d::SolveOptions& opts) {
  opts.feas_tol = env_double("LIP2D_FEAS_TOL", opts.feas_tol);
  opts.gap_tol = env_double("LIP2D_GAP_TOL", opts.gap_tol);
  opts.max_iters = env_int("LIP2D_MAX_ITERS", opts.max_iters);
}

json vector_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

json vector_json(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(x);
  return a;
}

/// Writes text to `path`, or to stdout when path is empty or "-".
void emit_text(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream f(path);
  if (!f) throw lip2d::DataError("cannot open output file: " + path);
  f << text;
  if (!f) throw lip2d::DataError("failed writing output file: " + path);
}

json validation_json(const lip2d::ValidationReport& v) {
  json j;
  j["passed"] = v.passed;
  j["trials"] = v.trials;
  j["min_lmi_eig"] = v.min_lmi_eig;
  j["worst_pointwise_residual"] = v.worst_pointwise_residual;
  j["worst_summed_residual"] = v.worst_summed_residual;
  j["max_gain_ratio"] = v.max_gain_ratio;
  j["max_network_gain_ratio"] = v.max_network_gain_ratio;
  if (!v.passed) j["failure_detail"] = v.failure_detail;
  return j;
}

/// Eigenvalues of the stored junction weight, ascending. Reported so a
/// hybrid run documents how much output energy the junction metric assigns
/// per channel.
json qc_spectrum_json(const Eigen::MatrixXd& qc) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(qc);
  return vector_json(Eigen::VectorXd(es.eigenvalues()));
}

// ---------------------------------------------------------------------------
// lipschitz
// ---------------------------------------------------------------------------

struct LipschitzArgs {
  std::string model_path;
  std::string method = "roesser-sdp";
  int d1 = 14;
  int grid_n = 512;
  bool project = true;
  bool qc_full = false;
  double tol = 0.0;  // 0 keeps the solver defaults
  int trials = 100;
  std::uint64_t seed = 0x11b2dca1ULL;
  std::string format = "json";
  std::string out_file = "-";
  std::string cert_out;
};

int run_lipschitz(const LipschitzArgs& a) {
  const auto t0 = tic();
  const lip2d::NetworkSpec spec = lip2d::load_network(a.model_path);
  lip2d::validate_network(spec);

  json rep;
  rep["schema"] = "report/1";
  rep["command"] = "lipschitz";
  rep["model"] = a.model_path;
  rep["method"] = a.method;

  double gamma = std::numeric_limits<double>::quiet_NaN();
  std::string verdict = "n/a";

  if (a.method == "roesser-sdp") {
    lip2d::EstimateOptions eopts;
    eopts.project = a.project;
    eopts.qc_full = a.qc_full;
    if (a.tol > 0.0) {
      eopts.solve.feas_tol = a.tol;
      eopts.solve.gap_tol = a.tol;
    }
    apply_env_overrides(eopts.solve);
    eopts.validation.trials = a.trials;
    eopts.validation.seed = a.seed;

    lip2d::ValidationReport vrep;
    const auto t_solve = tic();
    const lip2d::LipschitzCertificate cert =
        lip2d::estimate_lipschitz_hybrid(spec, eopts, &vrep);
    const double solve_ms = toc_ms(t_solve);

    gamma = cert.gamma;
    verdict = vrep.passed ? "passed" : "failed";
    rep["gamma"] = cert.gamma;
    rep["gamma_sq"] = cert.gamma_sq;
    rep["certified"] = true;
    rep["estimate_method"] = cert.method;
    rep["solver_status"] = cert.solver_status;
    rep["solver_objective"] = cert.solver_objective;
    rep["iterations"] = cert.iterations;
    rep["projected"] = cert.projected;
    if (!cert.layer_gammas.empty())
      rep["layer_gammas"] = vector_json(cert.layer_gammas);
    if (!cert.constraint_min_eigs.empty())
      rep["constraint_min_eigs"] = vector_json(cert.constraint_min_eigs);
    if (cert.Q_C.size() > 0) {
      rep["qc_spectrum"] = qc_spectrum_json(cert.Q_C);
      rep["dense_out_weight"] = cert.dense_out_weight;
    }
    rep["validation"] = validation_json(vrep);
    rep["solve_ms"] = solve_ms;

    if (!a.cert_out.empty())
      emit_text(lip2d::certificate_to_json_text(cert), a.cert_out);
  } else if (a.method == "toeplitz" || a.method == "hinf-grid") {
    // Baseline path: per-conv-layer operator norm estimates composed by
    // multiplication, with dense layers contributing their spectral norms.
    // These are lower-bound style references, not certificates.
    std::vector<double> layer_values;
    double product = 1.0;
    for (const auto& layer : spec.conv_layers) {
      const double v = (a.method == "toeplitz")
                           ? lip2d::toeplitz_norm(layer, a.d1)
                           : lip2d::hinf_grid(layer, a.grid_n);
      layer_values.push_back(v);
      product *= v;
    }
    std::vector<double> dense_values;
    for (const auto& layer : spec.dense_layers) {
      const Eigen::VectorXd sv = layer.weight.bdcSvd().singularValues();
      const double v = sv.size() > 0 ? sv(0) : 0.0;
      dense_values.push_back(v);
      product *= v;
    }
    gamma = product;
    rep["gamma"] = product;
    rep["certified"] = false;
    rep["layer_values"] = vector_json(layer_values);
    if (!dense_values.empty()) rep["dense_values"] = vector_json(dense_values);
    if (a.method == "toeplitz") rep["d1"] = a.d1;
    if (a.method == "hinf-grid") rep["grid_n"] = a.grid_n;
  } else {
    throw lip2d::DataError("unknown method: " + a.method +
                           " (expected roesser-sdp | toeplitz | hinf-grid)");
  }

  rep["total_ms"] = toc_ms(t0);

  if (a.format == "csv") {
    std::ostringstream csv;
    csv.precision(17);
    csv << "method,gamma,certified\n"
        << a.method << "," << gamma << ","
        << (rep["certified"].get<bool>() ? "true" : "false") << "\n";
    emit_text(csv.str(), a.out_file);
  } else {
    emit_text(rep.dump(2) + "\n", a.out_file);
  }

  std::ostringstream line;
  line.precision(10);
  line << "gamma = " << gamma << "  (method " << a.method << ", validation "
       << verdict << ", " << toc_ms(t0) / 1000.0 << " s)\n";
  std::cerr << line.str();
  return 0;
}

// ---------------------------------------------------------------------------
// bench-random
// ---------------------------------------------------------------------------

struct BenchArgs {
  int instances = 100;
  int kernel = 3;
  int channels = 1;
  std::uint64_t seed = 0x2d5eedULL;
  std::vector<int> d1_list = {5, 10, 20, 50};
  int grid_n = 512;
  int jobs = 1;
  double tol = 0.0;
  std::string format = "csv";
  std::string out_file = "-";
};

struct BenchRow {
  int idx = 0;
  std::uint64_t seed = 0;
  std::string status = "ok";
  std::string est_method;
  double gamma = std::numeric_limits<double>::quiet_NaN();
  double hinf = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> toeplitz;
  bool monotone = true;
  int iterations = 0;
  double sdp_ms = 0.0, hinf_ms = 0.0, toeplitz_ms = 0.0;
};

lip2d::ConvLayerSpec random_layer(lip2d::Rng& rng, int kernel, int channels) {
  const int r_minus = (kernel - 1) / 2;
  const int r_plus = kernel - 1 - r_minus;
  lip2d::ConvLayerSpec layer;
  layer.kernel = lip2d::Kernel2D::zeros(channels, channels, r_minus, r_plus);
  for (auto& tap : layer.kernel.taps)
    for (Eigen::Index i = 0; i < tap.rows(); ++i)
      for (Eigen::Index j = 0; j < tap.cols(); ++j) tap(i, j) = rng.normal();
  layer.bias = Eigen::VectorXd::Zero(channels);
  return layer;
}

BenchRow bench_instance(const BenchArgs& a, int idx) {
  BenchRow row;
  row.idx = idx;
  row.seed = lip2d::mix_seed(a.seed ^ lip2d::mix_seed(idx));
  lip2d::Rng rng = lip2d::Rng::derived(a.seed, static_cast<std::uint64_t>(idx));
  const lip2d::ConvLayerSpec layer = random_layer(rng, a.kernel, a.channels);

  lip2d::NetworkSpec spec;
  spec.input_height = spec.input_width = std::max(16, 4 * a.kernel + 4);
  spec.input_channels = a.channels;
  spec.activation = lip2d::Activation::relu;
  spec.conv_layers = {layer};

  try {
    lip2d::EstimateOptions eopts;
    if (a.tol > 0.0) {
      eopts.solve.feas_tol = a.tol;
      eopts.solve.gap_tol = a.tol;
    }
    apply_env_overrides(eopts.solve);
    const auto t_sdp = tic();
    const lip2d::LipschitzCertificate cert =
        lip2d::estimate_lipschitz_hybrid(spec, eopts);
    row.sdp_ms = toc_ms(t_sdp);
    row.gamma = cert.gamma;
    row.iterations = cert.iterations;
    row.est_method = cert.method;
  } catch (const std::exception& e) {
    row.status = std::string("error: ") + e.what();
  }

  const auto t_hinf = tic();
  row.hinf = lip2d::hinf_grid(layer, a.grid_n);
  row.hinf_ms = toc_ms(t_hinf);

  const auto t_toep = tic();
  for (int d1 : a.d1_list) row.toeplitz.push_back(lip2d::toeplitz_norm(layer, d1));
  row.toeplitz_ms = toc_ms(t_toep);
  for (std::size_t i = 1; i < row.toeplitz.size(); ++i)
    if (row.toeplitz[i] + 1e-9 < row.toeplitz[i - 1]) row.monotone = false;
  return row;
}

int run_bench(const BenchArgs& a) {
  if (a.instances <= 0) throw lip2d::DataError("--instances must be positive");
  if (a.kernel <= 0) throw lip2d::DataError("--kernel must be positive");
  if (a.channels <= 0) throw lip2d::DataError("--channels must be positive");
  if (a.jobs <= 0) throw lip2d::DataError("--jobs must be positive");
  std::vector<int> d1s = a.d1_list;
  std::sort(d1s.begin(), d1s.end());
  for (int d1 : d1s)
    if (d1 <= 0) throw lip2d::DataError("--d1-list entries must be positive");
  BenchArgs args = a;
  args.d1_list = d1s;

  const auto t0 = tic();
  std::vector<BenchRow> rows(static_cast<std::size_t>(args.instances));
  {
    std::atomic<int> next{0};
    auto worker = [&]() {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= args.instances) return;
        rows[static_cast<std::size_t>(i)] = bench_instance(args, i);
      }
    };
    const int nthreads = std::min(args.jobs, args.instances);
    std::vector<std::thread> pool;
    for (int t = 1; t < nthreads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
  }

  // Means over the instances whose SDP run succeeded.
  int ok = 0;
  double sum_gamma = 0.0, sum_hinf = 0.0, sum_sdp_ms = 0.0, sum_hinf_ms = 0.0,
         sum_toep_ms = 0.0;
  std::vector<double> sum_toep(d1s.size(), 0.0);
  bool all_monotone = true;
  for (const auto& row : rows) {
    all_monotone = all_monotone && row.monotone;
    if (row.status != "ok") continue;
    ++ok;
    sum_gamma += row.gamma;
    sum_hinf += row.hinf;
    sum_sdp_ms += row.sdp_ms;
    sum_hinf_ms += row.hinf_ms;
    sum_toep_ms += row.toeplitz_ms;
    for (std::size_t i = 0; i < d1s.size(); ++i) sum_toep[i] += row.toeplitz[i];
  }
  const double denom = ok > 0 ? static_cast<double>(ok) : 1.0;

  if (args.format == "csv") {
    std::ostringstream csv;
    csv.precision(17);
    csv << "instance,seed,status,gamma_sdp,hinf_grid";
    for (int d1 : d1s) csv << ",toeplitz_d" << d1;
    csv << ",toeplitz_monotone,iterations,sdp_ms,hinf_ms,toeplitz_ms\n";
    for (const auto& row : rows) {
      std::string status = row.status;
      std::replace(status.begin(), status.end(), ',', ';');
      std::replace(status.begin(), status.end(), '\n', ' ');
      csv << row.idx << "," << row.seed << "," << status << "," << row.gamma
          << "," << row.hinf;
      for (double v : row.toeplitz) csv << "," << v;
      csv << "," << (row.monotone ? "true" : "false") << "," << row.iterations
          << "," << row.sdp_ms << "," << row.hinf_ms << "," << row.toeplitz_ms
          << "\n";
    }
    csv << "mean," << args.seed << ",ok=" << ok << "/" << args.instances << ","
        << sum_gamma / denom << "," << sum_hinf / denom;
    for (double s : sum_toep) csv << "," << s / denom;
    csv << "," << (all_monotone ? "true" : "false") << ",,"
        << sum_sdp_ms / denom << "," << sum_hinf_ms / denom << ","
        << sum_toep_ms / denom << "\n";
    emit_text(csv.str(), args.out_file);
  } else {
    json rep;
    rep["schema"] = "report/1";
    rep["command"] = "bench-random";
    rep["instances"] = args.instances;
    rep["kernel"] = args.kernel;
    rep["channels"] = args.channels;
    rep["seed"] = args.seed;
    rep["grid_n"] = args.grid_n;
    rep["d1_list"] = d1s;
    json jrows = json::array();
    for (const auto& row : rows) {
      json jr;
      jr["instance"] = row.idx;
      jr["seed"] = row.seed;
      jr["status"] = row.status;
      if (row.status == "ok") {
        jr["gamma_sdp"] = row.gamma;
        jr["estimate_method"] = row.est_method;
        jr["iterations"] = row.iterations;
        jr["sdp_ms"] = row.sdp_ms;
      }
      jr["hinf_grid"] = row.hinf;
      jr["toeplitz"] = vector_json(row.toeplitz);
      jr["toeplitz_monotone"] = row.monotone;
      jr["hinf_ms"] = row.hinf_ms;
      jr["toeplitz_ms"] = row.toeplitz_ms;
      jrows.push_back(jr);
    }
    rep["rows"] = jrows;
    json sum;
    sum["ok"] = ok;
    sum["mean_gamma_sdp"] = sum_gamma / denom;
    sum["mean_hinf_grid"] = sum_hinf / denom;
    json mt = json::array();
    for (double s : sum_toep) mt.push_back(s / denom);
    sum["mean_toeplitz"] = mt;
    sum["all_toeplitz_monotone"] = all_monotone;
    sum["mean_sdp_ms"] = sum_sdp_ms / denom;
    sum["mean_hinf_ms"] = sum_hinf_ms / denom;
    sum["mean_toeplitz_ms"] = sum_toep_ms / denom;
    rep["summary"] = sum;
    rep["total_ms"] = toc_ms(t0);
    emit_text(rep.dump(2) + "\n", args.out_file);
  }

  std::ostringstream line;
  line.precision(10);
  line << "bench: " << ok << "/" << args.instances
       << " ok, mean gamma_sdp = " << sum_gamma / denom
       << ", mean hinf_grid = " << sum_hinf / denom << ", "
       << toc_ms(t0) / 1000.0 << " s\n";
  std::cerr << line.str();
  return ok == args.instances ? 0 : kExitSolver;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string model_path;
  int layer = 0;
  int n1 = 8, n2 = 8;
  std::uint64_t seed = 0x51a71e5ULL;
  std::string out_file = "-";
};

int run_simulate(const SimulateArgs& a) {
  const lip2d::NetworkSpec spec = lip2d::load_network(a.model_path);
  lip2d::validate_network(spec);
  if (a.layer < 0 ||
      a.layer >= static_cast<int>(spec.conv_layers.size()))
    throw lip2d::DataError("--layer out of range");
  if (a.n1 <= 0 || a.n2 <= 0) throw lip2d::DataError("--n1/--n2 must be positive");
  const lip2d::ConvLayerSpec& layer =
      spec.conv_layers[static_cast<std::size_t>(a.layer)];
  const lip2d::RoesserRealization sys = lip2d::realize_conv(layer);
  const int r = sys.r;

  // Random input supported on [r, r+n1) x [r, r+n2): the zero-boundary
  // recursion then reproduces the convolution exactly on [0,n1) x [0,n2).
  lip2d::Rng rng(a.seed);
  lip2d::Signal2D u(r, r, a.n1, a.n2, layer.kernel.c_in);
  for (Eigen::Index i = 0; i < u.data.size(); ++i) u.data(i) = rng.normal();

  const auto t0 = tic();
  const lip2d::Signal2D y_sim = lip2d::simulate(sys, u, a.n1, a.n2);
  const lip2d::Signal2D y_ref = lip2d::conv_forward(layer, u, true);
  double max_diff = 0.0;
  for (int i2 = 0; i2 < a.n2; ++i2)
    for (int i1 = 0; i1 < a.n1; ++i1)
      for (int ch = 0; ch < layer.kernel.c_out; ++ch)
        max_diff = std::max(max_diff, std::abs(y_sim.get(i1, i2, ch) -
                                               y_ref.get(i1, i2, ch)));

  json rep;
  rep["schema"] = "report/1";
  rep["command"] = "simulate";
  rep["model"] = a.model_path;
  rep["layer"] = a.layer;
  rep["n1"] = a.n1;
  rep["n2"] = a.n2;
  rep["seed"] = a.seed;
  rep["state_dims"] = {sys.A11.rows(), sys.A22.rows()};
  rep["max_abs_diff"] = max_diff;
  const bool ok = max_diff <= 1e-10;
  rep["within_tol"] = ok;
  rep["tol"] = 1e-10;
  rep["total_ms"] = toc_ms(t0);
  emit_text(rep.dump(2) + "\n", a.out_file);
  std::cerr << "max |simulate - conv| = " << max_diff
            << (ok ? "  (ok)\n" : "  (EXCEEDS 1e-10)\n");
  return ok ? 0 : kExitSolver;
}

// ---------------------------------------------------------------------------
// realize
// ---------------------------------------------------------------------------

struct RealizeArgs {
  std::string model_path;
  int layer = 0;
  std::string out_file = "-";
};

int run_realize(const RealizeArgs& a) {
  const lip2d::NetworkSpec spec = lip2d::load_network(a.model_path);
  lip2d::validate_network(spec);
  if (a.layer < 0 ||
      a.layer >= static_cast<int>(spec.conv_layers.size()))
    throw lip2d::DataError("--layer out of range");
  const lip2d::RoesserRealization sys =
      lip2d::realize_conv(spec.conv_layers[static_cast<std::size_t>(a.layer)]);
  emit_text(lip2d::realization_to_json_text(sys) + "\n", a.out_file);
  std::cerr << "n1 = " << sys.A11.rows() << ", n2 = " << sys.A22.rows()
            << ", inputs = " << sys.B1.cols() << ", outputs = " << sys.C1.rows()
            << ", r = " << sys.r << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

struct CheckArgs {
  std::string model_path;
  std::string cert_path;
  int trials = 100;
  std::uint64_t seed = 0x11b2dca1ULL;
  std::string out_file = "-";
};

int run_check(const CheckArgs& a) {
  const lip2d::NetworkSpec spec = lip2d::load_network(a.model_path);
  lip2d::validate_network(spec);
  std::ifstream f(a.cert_path);
  if (!f) throw lip2d::DataError("cannot open certificate file: " + a.cert_path);
  std::ostringstream buf;
  buf << f.rdbuf();
  const lip2d::LipschitzCertificate cert =
      lip2d::certificate_from_json_text(buf.str());

  lip2d::ValidationOptions vopts;
  vopts.trials = a.trials;
  vopts.seed = a.seed;
  const auto t0 = tic();
  const lip2d::ValidationReport vrep =
      lip2d::validate_certificate(spec, cert, vopts);

  json rep;
  rep["schema"] = "report/1";
  rep["command"] = "check";
  rep["model"] = a.model_path;
  rep["certificate"] = a.cert_path;
  rep["gamma"] = cert.gamma;
  rep["validation"] = validation_json(vrep);
  rep["total_ms"] = toc_ms(t0);
  emit_text(rep.dump(2) + "\n", a.out_file);
  std::cerr << "certificate gamma = " << cert.gamma << ": validation "
            << (vrep.passed ? "passed" : ("failed (" + vrep.failure_detail + ")"))
            << "\n";
  return vrep.passed ? 0 : kExitSolver;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lipschitz-bound certification for conv/dense networks via "
               "2-D state-space dissipativity"};
  app.require_subcommand(1);

  LipschitzArgs lip;
  CLI::App* cmd_lip = app.add_subcommand(
      "lipschitz", "Certify or estimate a network Lipschitz bound");
  cmd_lip->add_option("--model", lip.model_path, "Network JSON file")
      ->required();
  cmd_lip->add_option("--method", lip.method,
                      "roesser-sdp | toeplitz | hinf-grid")
      ->check(CLI::IsMember({"roesser-sdp", "toeplitz", "hinf-grid"}));
  cmd_lip->add_option("--d1", lip.d1, "Input side length for --method toeplitz");
  cmd_lip->add_option("--grid-n", lip.grid_n,
                      "Frequency grid size for --method hinf-grid");
  cmd_lip->add_flag("--project,!--no-project", lip.project,
                    "Restrict per-layer certificates to reachable coordinates");
  cmd_lip->add_flag("--qc-full", lip.qc_full,
                    "Optimize a full (not diagonal) junction weight; only "
                    "sound when the conv/dense junction has no activation");
  cmd_lip->add_option("--tol", lip.tol,
                      "Solver feasibility and duality-gap tolerance");
  cmd_lip->add_option("--trials", lip.trials, "Validation trajectory count");
  cmd_lip->add_option("--seed", lip.seed, "Validation RNG seed");
  cmd_lip->add_option("--out", lip.format, "Report format: json | csv")
      ->check(CLI::IsMember({"json", "csv"}));
  cmd_lip->add_option("--out-file", lip.out_file,
                      "Report destination path ('-' = stdout)");
  cmd_lip->add_option("--cert-out", lip.cert_out,
                      "Also write the certificate JSON to this path");

  BenchArgs bench;
  CLI::App* cmd_bench = app.add_subcommand(
      "bench-random", "Random single-layer benchmark: SDP vs. baselines");
  cmd_bench->add_option("--instances", bench.instances, "Number of random layers");
  cmd_bench->add_option("--kernel", bench.kernel, "Kernel side length");
  cmd_bench->add_option("--channels", bench.channels, "Channel count");
  cmd_bench->add_option("--seed", bench.seed, "Base RNG seed");
  cmd_bench->add_option("--d1-list", bench.d1_list,
                        "Input sizes for the matrix-norm baseline")
      ->delimiter(',');
  cmd_bench->add_option("--grid-n", bench.grid_n, "Frequency grid size");
  cmd_bench->add_option("--jobs", bench.jobs, "Worker threads");
  cmd_bench->add_option("--tol", bench.tol, "Solver tolerance");
  cmd_bench->add_option("--out", bench.format, "Report format: json | csv")
      ->check(CLI::IsMember({"json", "csv"}));
  cmd_bench->add_option("--out-file", bench.out_file,
                        "Report destination path ('-' = stdout)");

  SimulateArgs sim;
  CLI::App* cmd_sim = app.add_subcommand(
      "simulate", "Compare the state-space recursion against direct convolution");
  cmd_sim->add_option("--model", sim.model_path, "Network JSON file")->required();
  cmd_sim->add_option("--layer", sim.layer, "Conv layer index (0-based)");
  cmd_sim->add_option("--n1", sim.n1, "Rectangle height");
  cmd_sim->add_option("--n2", sim.n2, "Rectangle width");
  cmd_sim->add_option("--seed", sim.seed, "Input RNG seed");
  cmd_sim->add_option("--out-file", sim.out_file,
                      "Report destination path ('-' = stdout)");

  RealizeArgs real;
  CLI::App* cmd_real = app.add_subcommand(
      "realize", "Dump the shift-register realization of one conv layer");
  cmd_real->add_option("--model", real.model_path, "Network JSON file")
      ->required();
  cmd_real->add_option("--layer", real.layer, "Conv layer index (0-based)");
  cmd_real->add_option("--out-file", real.out_file,
                       "Realization destination path ('-' = stdout)");

  CheckArgs chk;
  CLI::App* cmd_chk = app.add_subcommand(
      "check", "Re-validate a stored certificate against a model");
  cmd_chk->add_option("--model", chk.model_path, "Network JSON file")->required();
  cmd_chk->add_option("--cert", chk.cert_path, "Certificate JSON file")
      ->required();
  cmd_chk->add_option("--trials", chk.trials, "Validation trajectory count");
  cmd_chk->add_option("--seed", chk.seed, "Validation RNG seed");
  cmd_chk->add_option("--out-file", chk.out_file,
                      "Report destination path ('-' = stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (cmd_lip->parsed()) return run_lipschitz(lip);
    if (cmd_bench->parsed()) return run_bench(bench);
    if (cmd_sim->parsed()) return run_simulate(sim);
    if (cmd_real->parsed()) return run_realize(real);
    if (cmd_chk->parsed()) return run_check(chk);
  } catch (const lip2d::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const lip2d::SolverError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return kExitSolver;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSolver;
  }
  return kExitUsage;
}
