// SPDX-License-Identifier: MIT
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lip2d/lmi.hpp"
#include "lip2d/model.hpp"

namespace lip2d {

struct SolveOptions {
  double feas_tol = 1e-8;  // primal/dual residual target (relative)
  double gap_tol = 1e-8;   // relative duality gap target
  int max_iters = 100;
  bool verbose = false;
};

struct SolverReport {
  std::string status;  // "optimal" | "infeasible" | "numerical_trouble"
  double objective = 0.0;
  std::vector<double> constraint_min_eigs;  // min eigenvalue of each block at x
  int iterations = 0;
  double wall_time_s = 0.0;
  double primal_infeas = 0.0, dual_infeas = 0.0, rel_gap = 0.0;
};

/// Interior-point solve of minimize c^T x s.t. all blocks psd. Primal-dual
/// path following in the Nesterov-Todd scaling with a Mehrotra-style
/// predictor/corrector; deterministic (no randomized state). Returns the
/// variable assignment and the report; on "infeasible" or
/// "numerical_trouble" the assignment is the best iterate reached.
std::pair<Eigen::VectorXd, SolverReport> solve(const SdpProblem& problem,
                                               const SolveOptions& opts = {});

/// Dense, builder-independent materialization of the cascade dissipativity
/// LMI at concrete certificate values: the quadratic form (in the error
/// coordinates [x1; x2; w; u]) of
///   V(x) - V(x+) + s(u, y) + s_w(z, w),
/// assembled with plain matrix products from the interconnection blocks.
/// Q_C empty means -I. Used by validate_certificate and by builder
/// cross-checks in tests.
Eigen::MatrixXd materialize_cascade_lmi(const LureSystem& sys,
                                        const LipschitzCertificate& cert);

/// Dense materialization of the dense-stack chain LMI at certificate values
/// (R_L = I_repeat (x) (-Q_C)).
Eigen::MatrixXd materialize_dense_chain_lmi(
    const std::vector<DenseLayerSpec>& dense_layers, Eigen::Index repeat,
    const LipschitzCertificate& cert);

struct ValidationOptions {
  int trials = 100;
  std::uint64_t seed = 0x11b2dca1u;
  int rect_n1 = 8, rect_n2 = 8;      // simulated rectangle
  double lmi_eig_tol = -1e-7;        // min-eigenvalue slack
  double pointwise_tol = -1e-6;      // dissipation residual slack per node
  double gain_slack = 1e-4;          // empirical gain may reach gamma*(1+slack)
};

struct ValidationReport {
  bool passed = false;
  std::vector<double> lmi_min_eigs;  // cascade LMI, then chain LMI if hybrid
  double min_lmi_eig = 0.0;
  // Most negative value over all nodes/trials of
  //   V(x) + s + s_w - V1(x1+) - V2(x2+)  (pointwise dissipation slack).
  double worst_pointwise_residual = 0.0;
  // Most negative value over trials of sum(s + s_w) - boundary storage sum.
  double worst_summed_residual = 0.0;
  // max over trials of |weighted ytilde| / |utilde| against the certified
  // level (conv rectangle, output weighted by (-Q_C)^(1/2); gamma for pure
  // conv certificates).
  double max_gain_ratio = 0.0;
  // max over trials of |network(u2) - network(u1)| / (gamma * |u2 - u1|)
  // through the full forward map (1.0 = exactly at the certified bound).
  double max_network_gain_ratio = 0.0;
  int trials = 0;
  std::string failure_detail;  // first failing check with node coordinates
};

/// Independent re-verification of a certificate against a network:
/// (a) eigen-check of the materialized LMIs (cascade + chain) at the
///     certificate values, min eigenvalue >= lmi_eig_tol;
/// (b) pointwise dissipation inequality along `trials` random error
///     trajectories (pairs of inputs through the nominal cascade), every
///     node, slack >= pointwise_tol;
/// (c) the summed (telescoped) inequality over the rectangle: total supplied
///     energy covers the boundary storage terms;
/// plus empirical incremental-gain probes of the conv rectangle and of the
/// full forward map against gamma.
ValidationReport validate_certificate(const NetworkSpec& spec,
                                      const LipschitzCertificate& cert,
                                      const ValidationOptions& opts = {});

struct EstimateOptions {
  bool project = true;          // reachable-subspace reduction where applicable
  double margin_scale = 1e-6;   // relative feasibility margin for composition
  Eigen::Index max_joint_vars = 2500;   // joint SDP variable budget
  Eigen::Index max_layer_vars = 5500;   // per-layer SDP variable budget
  Eigen::Index max_chain_size = 600;    // dense-chain LMI row budget for SDP
  bool qc_full = false;         // full symmetric Q_C (sound only when the
                                // junction has no activation); default
                                // diagonal Q_C
  double dense_out_weight = 1.0;  // bottom-right weight of the chain LMI
  bool use_bisection = false;   // feasibility-bisection fallback over gamma^2
  SolveOptions solve;
  bool validate = true;
  ValidationOptions validation;
};

/// End-to-end Lipschitz upper bound for a conv(+dense) network: builds the
/// cascade dissipativity LMI (joint with the dense chain when a dense stack
/// is present), minimizes gamma^2, and falls back to per-layer certificates
/// composed through the interconnection when the joint problem exceeds the
/// variable budgets. The returned certificate has passed
/// validate_certificate unless options disable validation; infeasibility or
/// solver failure raises SolverError.
/// When validation_out is non-null it receives the report of the final
/// validation run (untouched if validation is disabled).
LipschitzCertificate estimate_lipschitz_hybrid(
    const NetworkSpec& spec, const EstimateOptions& opts = {},
    ValidationReport* validation_out = nullptr);

}  // namespace lip2d
