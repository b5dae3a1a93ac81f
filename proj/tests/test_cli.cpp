// SPDX-License-Identifier: MIT
//
// End-to-end tests of the command-line tool: subprocess runs against small
// models, exit-code contract, report schema stability via golden files
// (numeric comparison with tolerance; timing keys excluded), and the
// certificate save/check round trip.
//
// Set LIP2D_REGEN_GOLDEN=1 to rewrite the golden reports from the current
// outputs (review the diff before committing).

#include <doctest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "lip2d/model.hpp"
#include "lip2d/rng.hpp"

#include "test_util.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const char* kCli = LIP2D_CLI_PATH;
const char* kGoldenDir = LIP2D_GOLDEN_DIR;

struct RunResult {
  int exit_code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

fs::path tmp_dir() {
  const fs::path d = fs::current_path() / "cli_test_tmp";
  fs::create_directories(d);
  return d;
}

RunResult run_cli(const std::string& args) {
  const fs::path d = tmp_dir();
  const fs::path out = d / "stdout.txt", err = d / "stderr.txt";
  const std::string cmd = std::string(kCli) + " " + args + " > " +
                          out.string() + " 2> " + err.string();
  const int rc = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

/// Deterministic fixture models written into the temp dir.
std::string write_tap_model() {
  lip2d::ConvLayerSpec tap;
  tap.kernel = lip2d::Kernel2D::zeros(1, 1, 0, 0);
  tap.kernel.taps[0](0, 0) = -1.75;
  tap.bias = Eigen::VectorXd::Zero(1);
  const fs::path p = tmp_dir() / "tap_model.json";
  lip2d::save_network(testutil::single_layer_net(tap, 8), p.string());
  return p.string();
}

std::string write_conv3_model() {
  lip2d::Rng rng(0xc11f1e01u);
  const fs::path p = tmp_dir() / "conv3_model.json";
  lip2d::save_network(
      testutil::single_layer_net(
          testutil::random_conv_layer(rng, 1, 1, 1, 1, 1.0, false), 10),
      p.string());
  return p.string();
}

std::string write_two_layer_model() {
  lip2d::Rng rng(0xc11f1e02u);
  lip2d::NetworkSpec spec;
  spec.input_height = spec.input_width = 10;
  spec.input_channels = 1;
  spec.activation = lip2d::Activation::relu;
  spec.conv_layers.push_back(
      testutil::random_conv_layer(rng, 2, 1, 1, 1, 0.6));
  spec.conv_layers.push_back(
      testutil::random_conv_layer(rng, 1, 2, 1, 1, 0.6));
  const fs::path p = tmp_dir() / "two_layer_model.json";
  lip2d::save_network(spec, p.string());
  return p.string();
}

/// Recursive comparison with relative tolerance on numbers. Keys ending in
/// "_ms" (timings) and path-valued keys are ignored.
bool json_close(const json& a, const json& b, double rel, std::string& why,
                const std::string& path = "$") {
  auto skip_key = [](const std::string& k) {
    return (k.size() > 3 && k.compare(k.size() - 3, 3, "_ms") == 0) ||
           k == "model" || k == "certificate" || k == "wall_time_s";
  };
  if (a.is_number() && b.is_number()) {
    const double x = a.get<double>(), y = b.get<double>();
    const double scale = std::max({1.0, std::abs(x), std::abs(y)});
    if (std::abs(x - y) <= rel * scale) return true;
    why = path + ": " + std::to_string(x) + " vs " + std::to_string(y);
    return false;
  }
  if (a.type() != b.type()) {
    why = path + ": type mismatch";
    return false;
  }
  if (a.is_object()) {
    for (auto it = a.begin(); it != a.end(); ++it) {
      if (skip_key(it.key())) continue;
      if (!b.contains(it.key())) {
        why = path + ": missing key " + it.key();
        return false;
      }
      if (!json_close(it.value(), b.at(it.key()), rel, why,
                      path + "." + it.key()))
        return false;
    }
    for (auto it = b.begin(); it != b.end(); ++it)
      if (!skip_key(it.key()) && !a.contains(it.key())) {
        why = path + ": extra key " + it.key();
        return false;
      }
    return true;
  }
  if (a.is_array()) {
    if (a.size() != b.size()) {
      why = path + ": array size";
      return false;
    }
    for (std::size_t i = 0; i < a.size(); ++i)
      if (!json_close(a[i], b[i], rel, why,
                      path + "[" + std::to_string(i) + "]"))
        return false;
    return true;
  }
  if (a == b) return true;
  why = path + ": value mismatch";
  return false;
}

void check_against_golden(const json& got, const std::string& name) {
  const fs::path golden = fs::path(kGoldenDir) / name;
  if (std::getenv("LIP2D_REGEN_GOLDEN") != nullptr) {
    fs::create_directories(golden.parent_path());
    std::ofstream f(golden);
    f << got.dump(2) << "\n";
  }
  REQUIRE_MESSAGE(fs::exists(golden), "missing golden file ", golden.string());
  const json want = json::parse(slurp(golden));
  std::string why;
  const bool close = json_close(got, want, 1e-6, why);
  CHECK_MESSAGE(close, "golden mismatch for ", name, ": ", why);
}

}  // namespace

TEST_CASE("cli: usage and error exit codes") {
  CHECK(run_cli("--help").exit_code == 0);
  CHECK(run_cli("lipschitz --help").exit_code == 0);
  CHECK(run_cli("").exit_code == 1);                      // missing subcommand
  CHECK(run_cli("frobnicate").exit_code == 1);            // unknown subcommand
  CHECK(run_cli("lipschitz").exit_code == 1);             // missing --model
  CHECK(run_cli("lipschitz --model x --method nope").exit_code == 1);
  CHECK(run_cli("lipschitz --model missing_file.json").exit_code == 2);
  const std::string bad = (tmp_dir() / "bad.json").string();
  std::ofstream(bad) << "{ not json";
  CHECK(run_cli("lipschitz --model " + bad).exit_code == 2);
}

TEST_CASE("cli: certified single-tap report") {
  const std::string model = write_tap_model();
  const RunResult r = run_cli("lipschitz --model " + model);
  REQUIRE(r.exit_code == 0);
  const json rep = json::parse(r.out);
  CHECK(rep.at("schema") == "report/1");
  CHECK(rep.at("method") == "roesser-sdp");
  CHECK(rep.at("certified") == true);
  CHECK(std::abs(rep.at("gamma").get<double>() - 1.75) <= 1e-6);
  CHECK(rep.at("validation").at("passed") == true);
  CHECK(r.err.find("validation passed") != std::string::npos);

  // Determinism: a second run yields the same report up to timing keys.
  const RunResult r2 = run_cli("lipschitz --model " + model);
  REQUIRE(r2.exit_code == 0);
  std::string why;
  CHECK_MESSAGE(json_close(rep, json::parse(r2.out), 0.0, why), why);

  check_against_golden(rep, "lipschitz_tap.json");
}

TEST_CASE("cli: two-layer certified report and golden") {
  const std::string model = write_two_layer_model();
  const RunResult r = run_cli("lipschitz --model " + model);
  REQUIRE_MESSAGE(r.exit_code == 0, r.err);
  const json rep = json::parse(r.out);
  CHECK(rep.at("certified") == true);
  CHECK(rep.at("validation").at("passed") == true);
  CHECK(rep.at("gamma").get<double>() > 0.0);
  check_against_golden(rep, "lipschitz_two_layer.json");
}

TEST_CASE("cli: baseline methods report products, not certificates") {
  const std::string model = write_two_layer_model();
  const RunResult rt =
      run_cli("lipschitz --model " + model + " --method toeplitz --d1 6");
  REQUIRE(rt.exit_code == 0);
  const json jt = json::parse(rt.out);
  CHECK(jt.at("certified") == false);
  CHECK(jt.at("d1") == 6);
  const auto vals = jt.at("layer_values");
  REQUIRE(vals.size() == 2);
  CHECK(std::abs(jt.at("gamma").get<double>() -
                 vals[0].get<double>() * vals[1].get<double>()) <= 1e-9);

  const RunResult rh =
      run_cli("lipschitz --model " + model + " --method hinf-grid --grid-n 64");
  REQUIRE(rh.exit_code == 0);
  const json jh = json::parse(rh.out);
  CHECK(jh.at("certified") == false);
  CHECK(jh.at("grid_n") == 64);
  // Refining to a nested grid can only raise each sampled layer gain.
  const RunResult rh2 = run_cli("lipschitz --model " + model +
                                " --method hinf-grid --grid-n 128");
  REQUIRE(rh2.exit_code == 0);
  const json jh2 = json::parse(rh2.out);
  const auto hv = jh.at("layer_values"), hv2 = jh2.at("layer_values");
  REQUIRE(hv.size() == hv2.size());
  for (std::size_t i = 0; i < hv.size(); ++i)
    CHECK(hv[i].get<double>() <= hv2[i].get<double>() * (1.0 + 1e-12));
}

TEST_CASE("cli: csv output") {
  const std::string model = write_tap_model();
  const RunResult r = run_cli("lipschitz --model " + model + " --out csv");
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.rfind("method,gamma,certified\n", 0) == 0);
  CHECK(r.out.find("roesser-sdp,") != std::string::npos);
  CHECK(r.out.find(",true") != std::string::npos);
}

TEST_CASE("cli: certificate round trip through check") {
  const std::string model = write_two_layer_model();
  const fs::path cert = tmp_dir() / "cert.json";
  const RunResult r = run_cli("lipschitz --model " + model + " --cert-out " +
                              cert.string());
  REQUIRE(r.exit_code == 0);
  REQUIRE(fs::exists(cert));

  const RunResult ok =
      run_cli("check --model " + model + " --cert " + cert.string());
  CHECK(ok.exit_code == 0);
  const json rep = json::parse(ok.out);
  CHECK(rep.at("command") == "check");
  CHECK(rep.at("validation").at("passed") == true);

  // Corrupt the stored storage matrix: validation must now fail (exit 3).
  json jc = json::parse(slurp(cert));
  auto& p1 = jc.at("P1");
  for (std::size_t i = 0; i < p1.size(); ++i)
    p1[i][i] = p1[i][i].get<double>() - 0.1;
  const fs::path bad = tmp_dir() / "cert_bad.json";
  std::ofstream(bad) << jc.dump();
  const RunResult fail =
      run_cli("check --model " + model + " --cert " + bad.string());
  CHECK(fail.exit_code == 3);
  CHECK(json::parse(fail.out).at("validation").at("passed") == false);

  // A malformed certificate is a data error (exit 2).
  const fs::path junk = tmp_dir() / "cert_junk.json";
  std::ofstream(junk) << "{\"schema\":\"other/9\"}";
  CHECK(run_cli("check --model " + model + " --cert " + junk.string())
            .exit_code == 2);
}

TEST_CASE("cli: simulate agrees with the convolution") {
  const std::string model = write_conv3_model();
  const RunResult r = run_cli("simulate --model " + model + " --n1 6 --n2 7");
  REQUIRE(r.exit_code == 0);
  const json rep = json::parse(r.out);
  CHECK(rep.at("within_tol") == true);
  CHECK(rep.at("max_abs_diff").get<double>() <= 1e-10);
  CHECK(run_cli("simulate --model " + model + " --layer 5").exit_code == 2);
}

TEST_CASE("cli: realize dumps the documented shape") {
  const std::string model = write_conv3_model();
  const RunResult r = run_cli("realize --model " + model);
  REQUIRE(r.exit_code == 0);
  const json rep = json::parse(r.out);
  CHECK(rep.at("n1") == 6);
  CHECK(rep.at("n2") == 6);
  CHECK(rep.at("r") == 1);
  CHECK(rep.at("A11").size() == 6);
  check_against_golden(rep, "realize_conv3.json");
}

TEST_CASE("cli: random benchmark smoke run") {
  const RunResult r = run_cli(
      "bench-random --instances 2 --kernel 3 --grid-n 48 --d1-list 4,8");
  REQUIRE_MESSAGE(r.exit_code == 0, r.err);
  std::istringstream is(r.out);
  std::string header;
  std::getline(is, header);
  CHECK(header ==
        "instance,seed,status,gamma_sdp,hinf_grid,toeplitz_d4,toeplitz_d8,"
        "toeplitz_monotone,iterations,sdp_ms,hinf_ms,toeplitz_ms");
  int rows = 0;
  std::string line, last;
  while (std::getline(is, line))
    if (!line.empty()) {
      CHECK(line.find(",true,") != std::string::npos);  // monotone column
      last = line;
      ++rows;
    }
  CHECK(rows == 3);  // 2 instances + mean
  CHECK(last.rfind("mean,", 0) == 0);
  CHECK(last.find("ok=2/2") != std::string::npos);

  // JSON variant carries the same data.
  const RunResult rj = run_cli(
      "bench-random --instances 2 --kernel 3 --grid-n 48 --d1-list 4,8 "
      "--out json");
  REQUIRE(rj.exit_code == 0);
  const json rep = json::parse(rj.out);
  CHECK(rep.at("rows").size() == 2);
  CHECK(rep.at("summary").at("ok") == 2);
  CHECK(rep.at("summary").at("all_toeplitz_monotone") == true);
}
