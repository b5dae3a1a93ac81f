// SPDX-License-Identifier: MIT
#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "lip2d/errors.hpp"
#include "lip2d/sdpsolve.hpp"

namespace lip2d {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double spectral_norm(const MatrixXd& w) {
  if (w.size() == 0) return 0.0;
  Eigen::BDCSVD<MatrixXd> svd(w);
  return svd.singularValues()(0);
}

/// Sum over all taps of the per-tap channel-matrix spectral norms: an l2-gain
/// upper bound for the layer (triangle inequality over the shifted copies).
double kernel_tail_sum(const Kernel2D& k) {
  const int w = k.r_minus + k.r_plus;
  double s = 0.0;
  for (int m1 = 0; m1 <= w; ++m1)
    for (int m2 = 0; m2 <= w; ++m2) s += spectral_norm(k.tap_m(m1, m2));
  return s;
}

struct LayerResult {
  double gamma_sq = 0.0;
  MatrixXd P1, P2;
  std::string how;  // "sdp" | "tail-sum"
  int iterations = 0;
};

/// Closed-form layer certificate at gamma = tail_sum * (1 + eps) with
/// diagonal storage. Each storage weight is gamma * psi(slot), where
/// psi(slot) = kappa(slot) + sum of psi over the slots the value moves into
/// next (kappa = spectral norm of the tap read at the slot). The downstream
/// sums telescope so that every state column of the dissipation form gets
/// coefficient (gamma - tail) * kappa >= 0 and the input column
/// (gamma - tail) * (gamma + kappa_00) >= 0, making the layer LMI psd by a
/// weighted Cauchy-Schwarz split of |y|^2.
LayerResult analytic_layer_certificate(const ConvLayerSpec& layer, double eps) {
  const Kernel2D& k = layer.kernel;
  const int w = k.r_minus + k.r_plus;
  const int c = k.c_in;
  const Index n = static_cast<Index>(c) * w * (w + 1);

  MatrixXd kappa(w + 1, w + 1);
  for (int m1 = 0; m1 <= w; ++m1)
    for (int m2 = 0; m2 <= w; ++m2)
      kappa(m1, m2) = spectral_norm(k.tap_m(m1, m2));
  const double tail = kappa.sum();
  const double gamma = tail * (1.0 + eps);

  LayerResult out;
  out.gamma_sq = gamma * gamma;
  out.how = "tail-sum";
  VectorXd p1 = VectorXd::Zero(n), p2 = VectorXd::Zero(n);
  // x1 slot (j1, j2), j1 >= 1: the value shifts along j1, so psi is the
  // suffix sum of kappa over rows >= j1 in column j2.
  for (int j1 = 1; j1 <= w; ++j1)
    for (int j2 = 0; j2 <= w; ++j2) {
      double psi = 0.0;
      for (int m1 = j1; m1 <= w; ++m1) psi += kappa(m1, j2);
      const Index slot = (static_cast<Index>(j1 - 1) * (w + 1) + j2) * c;
      p1.segment(slot, c).setConstant(gamma * psi);
    }
  // x2 slot (0, j2): the value climbs along j2 and hops into the x1 chain of
  // every remaining column, so psi sums whole columns >= j2. Slots (j1 >= 1,
  // j2) are write-only transport and carry zero weight.
  for (int j2 = 1; j2 <= w; ++j2) {
    double psi = 0.0;
    for (int m2 = j2; m2 <= w; ++m2) psi += kappa.col(m2).sum();
    const Index slot = (static_cast<Index>(j2 - 1) * (w + 1) + 0) * c;
    p2.segment(slot, c).setConstant(gamma * psi);
  }
  out.P1 = MatrixXd(p1.asDiagonal());
  out.P2 = MatrixXd(p2.asDiagonal());
  return out;
}

/// Geometric bisection over a fixed gain level: find the smallest feasible
/// gamma_sq (within relative tol 1e-6), treating any non-optimal solver
/// outcome as infeasible (safe side). Returns false if even the analytic
/// upper start (after widening) is not accepted.
bool bisect_gamma_sq(double hi_start,
                     const std::function<SdpProblem(double)>& build,
                     const SolveOptions& sopts, double* gamma_sq_out) {
  auto feasible = [&](double gsq) {
    const SdpProblem p = build(gsq);
    return solve(p, sopts).second.status == "optimal";
  };
  double hi = hi_start;
  bool ok = false;
  for (int t = 0; t < 4 && !(ok = feasible(hi)); ++t) hi *= 4.0;
  if (!ok) return false;
  double lo = hi * 1e-12;
  for (int it = 0; it < 60 && hi > lo * (1.0 + 1e-6); ++it) {
    const double mid = std::sqrt(lo * hi);
    (feasible(mid) ? hi : lo) = mid;
  }
  *gamma_sq_out = hi;
  return true;
}

/// Per-layer gain certificate: SDP when the variable count fits the budget
/// (falling back to the closed form on solver trouble), closed form
/// otherwise. With project set, the gain LMI is restricted to the layer's
/// reachable subspace (the two shift registers share input samples, so the
/// restriction is proper and removes the conservatism of the full-space
/// inequality).
LayerResult certify_layer(const ConvLayerSpec& layer, bool project,
                          double margin, const SolveOptions& sopts,
                          bool use_bisection, Index max_layer_vars,
                          double tail) {
  const RoesserRealization sys = realize_conv(layer);
  const Index nvars = sys.n1() * (sys.n1() + 1) / 2 +
                      sys.n2() * (sys.n2() + 1) / 2 + 1;
  MatrixXd T;
  bool try_sdp = nvars <= max_layer_vars;
  if (try_sdp && project) {
    T = reachable_subspace(sys);
    // The projected constraint entries are dense over the basis columns, so
    // the solver's Schur assembly cost grows like nvars * T.cols()^4; past
    // this basis size the closed-form certificate is the better trade-off
    // (solve time in minutes versus a looser but still validated bound).
    try_sdp = T.cols() <= 48;
  }
  if (try_sdp) {
    LmiBuildOptions bopts;
    bopts.margin = margin;
    bopts.T = project ? &T : nullptr;
    if (!use_bisection) {
      BuiltLmi refs;
      Index gv = -1;
      const SdpProblem p = build_layer_lmi(sys, bopts, &refs, &gv);
      const auto [x, rep] = solve(p, sopts);
      if (rep.status == "optimal") {
        LayerResult out;
        out.gamma_sq = x(gv);
        out.P1 = refs.p1_group >= 0 ? p.sym_value(refs.p1_group, x)
                                    : MatrixXd(0, 0);
        out.P2 = refs.p2_group >= 0 ? p.sym_value(refs.p2_group, x)
                                    : MatrixXd(0, 0);
        out.how = "sdp";
        out.iterations = rep.iterations;
        return out;
      }
    } else {
      BuiltLmi refs;
      auto build = [&](double gsq) {
        SdpProblem p;
        OuterSupplyRef sup;
        sup.r_fixed = gsq;
        refs = add_layer_lmi(p, sys, sup, bopts);
        return p;
      };
      double gsq = 0.0;
      if (bisect_gamma_sq(tail * tail * (1.0 + 1e-6), build, sopts, &gsq)) {
        const SdpProblem p = build(gsq);
        const auto [x, rep] = solve(p, sopts);
        if (rep.status == "optimal") {
          LayerResult out;
          out.gamma_sq = gsq;
          out.P1 = refs.p1_group >= 0 ? p.sym_value(refs.p1_group, x)
                                      : MatrixXd(0, 0);
          out.P2 = refs.p2_group >= 0 ? p.sym_value(refs.p2_group, x)
                                      : MatrixXd(0, 0);
          out.how = "sdp";
          out.iterations = rep.iterations;
          return out;
        }
      }
    }
  }
  return analytic_layer_certificate(layer, 1e-9);
}

/// Closed-form dense-stage certificate: chain multipliers mu_k proportional
/// to the downstream operator-norm product make the chain LMI feasible at
/// the boundary level q = prod ||W_j||_2^2 / out_weight (nested Schur
/// complements each stay >= mu_k I). q is inflated a hair for strictness.
void analytic_dense_stage(const std::vector<DenseLayerSpec>& dense_layers,
                          double out_weight, double* q_out,
                          std::vector<VectorXd>* lambdas_out) {
  const std::size_t nl = dense_layers.size();
  std::vector<double> sig(nl);
  for (std::size_t j = 0; j < nl; ++j)
    sig[j] = spectral_norm(dense_layers[j].weight);
  lambdas_out->clear();
  double mu = 1.0 / out_weight;  // running prod_{j>k} sigma_j^2 / out_weight
  std::vector<VectorXd> rev;
  for (std::size_t k = nl; k-- > 0;) {
    mu *= sig[k] * sig[k];
    if (k > 0)
      rev.push_back(VectorXd::Constant(dense_layers[k - 1].weight.rows(), mu));
  }
  for (std::size_t k = rev.size(); k-- > 0;) lambdas_out->push_back(rev[k]);
  *q_out = mu * (1.0 + 1e-9);
}

struct JointHandles {
  BuiltLmi built;
  Index gv = -1;        // flat gamma_sq variable index (variable mode)
  Index qc_group = -1;  // junction group (hybrid only)
  std::vector<Index> chain_groups;
};

/// One joint problem over the full cascade (plus the dense chain for
/// hybrids). fixed_gamma_sq < 0 puts gamma_sq in as the minimized variable;
/// otherwise the gain level is pinned (bisection mode).
SdpProblem build_joint(const NetworkSpec& spec, const LureSystem& cascade,
                       const MatrixXd* T, Index repeat, Index c_l,
                       double margin, double fixed_gamma_sq,
                       const EstimateOptions& opts, JointHandles* h) {
  const bool has_dense = !spec.dense_layers.empty();
  SdpProblem p;
  *h = JointHandles{};
  OuterSupplyRef sup;
  if (fixed_gamma_sq < 0.0) {
    const Index g = p.add_scalar_var("gamma_sq");
    h->gv = p.scalar_index(g);
    p.add_objective(h->gv, 1.0);
    add_group_cone_blocks(p, g, "gamma_sq");
    sup.gamma_sq_var = h->gv;
  } else {
    sup.r_fixed = fixed_gamma_sq;
  }
  if (has_dense) {
    h->qc_group = opts.qc_full ? p.add_sym_var("qc_neg", c_l)
                               : p.add_diag_var("qc_neg", c_l);
    add_group_cone_blocks(p, h->qc_group, "qc_neg");
    sup.qc_neg_group = h->qc_group;
  }
  LmiBuildOptions bopts;
  bopts.margin = margin;
  bopts.T = T;
  h->built = add_lure_lmi(p, cascade, sup, bopts);
  if (has_dense)
    add_dense_chain_lmi(p, spec.dense_layers, repeat, h->qc_group, 1.0,
                        opts.dense_out_weight, margin, "", &h->chain_groups);
  return p;
}

LipschitzCertificate extract_joint(const SdpProblem& p, const JointHandles& h,
                                   const VectorXd& x, const SolverReport& rep,
                                   double gamma_sq, bool has_dense,
                                   double out_weight) {
  LipschitzCertificate cert;
  cert.gamma_sq = gamma_sq;
  cert.gamma = std::sqrt(std::max(
      0.0, gamma_sq * (has_dense ? out_weight : 1.0)));
  cert.P1 = h.built.p1_group >= 0 ? p.sym_value(h.built.p1_group, x)
                                  : MatrixXd(0, 0);
  cert.P2 = h.built.p2_group >= 0 ? p.sym_value(h.built.p2_group, x)
                                  : MatrixXd(0, 0);
  if (h.built.lambda_group >= 0)
    cert.lambda = p.diag_value(h.built.lambda_group, x);
  if (h.qc_group >= 0) {
    const auto& grp = p.group(h.qc_group);
    cert.Q_C = grp.kind == SdpProblem::VarKind::diag
                   ? MatrixXd(MatrixXd::Zero(grp.dim, grp.dim)) -
                         MatrixXd(p.diag_value(h.qc_group, x).asDiagonal())
                   : MatrixXd(-p.sym_value(h.qc_group, x));
  }
  for (Index g : h.chain_groups)
    cert.dense_lambdas.push_back(p.diag_value(g, x));
  cert.dense_out_weight = out_weight;
  cert.method = has_dense ? "hybrid-sdp" : "lure-sdp";
  cert.solver_status = rep.status;
  cert.solver_objective = rep.objective;
  cert.iterations = rep.iterations;
  cert.wall_time_s = rep.wall_time_s;
  cert.constraint_min_eigs = rep.constraint_min_eigs;
  return cert;
}

double min_eig(const MatrixXd& g) {
  if (g.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(g,
                                             Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace

LipschitzCertificate estimate_lipschitz_hybrid(const NetworkSpec& spec,
                                               const EstimateOptions& opts,
                                               ValidationReport* validation_out) {
  validate_network(spec);
  const bool has_dense = !spec.dense_layers.empty();
  const std::size_t l = spec.conv_layers.size();
  const LureSystem cascade = assemble_lure(spec.conv_layers);

  // Solve on a tap-normalized copy of the conv stack: each kernel is divided
  // by its tail sum so every layer (and hence the joint problem) sits at unit
  // scale, where the interior-point iteration is reliable. The certificate is
  // rescaled back afterwards; the dissipation inequality is exactly covariant
  // under per-layer tap scaling (see the rescale block below), so nothing is
  // lost and the bound itself becomes exactly scale-equivariant.
  std::vector<double> scales(l), prefix(l + 1, 1.0);
  NetworkSpec nspec = spec;
  for (std::size_t k = 0; k < l; ++k) {
    const double tail = kernel_tail_sum(spec.conv_layers[k].kernel);
    scales[k] = tail > 0.0 ? tail : 1.0;
    prefix[k + 1] = prefix[k] * scales[k];
    for (auto& tap : nspec.conv_layers[k].kernel.taps) tap /= scales[k];
  }
  const double total_scale = prefix[l];
  const LureSystem ncascade = assemble_lure(nspec.conv_layers);

  std::vector<double> tails(l);
  double gamma_ub_sq = 1.0;
  for (std::size_t k = 0; k < l; ++k) {
    tails[k] = kernel_tail_sum(nspec.conv_layers[k].kernel);
    gamma_ub_sq *= tails[k] * tails[k];
  }
  Index repeat = 0, c_l = 0, chain_rows = 0;
  double q_ub = 1.0;
  if (has_dense) {
    const auto [d_l, ch] = flatten_dims(spec);
    repeat = static_cast<Index>(d_l) * d_l;
    c_l = ch;
    chain_rows = repeat * c_l;
    for (const auto& dl : spec.dense_layers) chain_rows += dl.weight.rows();
    std::vector<VectorXd> unused;
    analytic_dense_stage(spec.dense_layers, opts.dense_out_weight, &q_ub,
                         &unused);
  }

  const Index nc1 = cascade.n1(), nc2 = cascade.n2();
  Index joint_vars = nc1 * (nc1 + 1) / 2 + nc2 * (nc2 + 1) / 2 + cascade.nz + 1;
  if (has_dense) {
    joint_vars += opts.qc_full ? c_l * (c_l + 1) / 2 : c_l;
    for (std::size_t k = 0; k + 1 < spec.dense_layers.size(); ++k)
      joint_vars += spec.dense_layers[k].weight.rows();
  }
  const bool tier_joint =
      joint_vars <= opts.max_joint_vars &&
      (!has_dense || chain_rows <= opts.max_chain_size);

  SolveOptions sopts = opts.solve;
  sopts.feas_tol = std::min(sopts.feas_tol, 1e-10);
  sopts.gap_tol = std::min(sopts.gap_tol, 1e-9);
  sopts.max_iters = std::max(sopts.max_iters, 80);

  // Reachable-subspace restriction of the cascade inequality (the per-layer
  // restrictions are computed inside certify_layer on the composition path).
  // The basis depends only on the shift structure, which normalization does
  // not touch, so it serves the normalized and the original system alike.
  MatrixXd Tj;
  if (tier_joint && opts.project) Tj = reachable_subspace(ncascade);
  const MatrixXd* Tp = opts.project ? &Tj : nullptr;

  std::string last_fail = "solver failed";
  for (int attempt = 0; attempt < 3; ++attempt) {
    const double escal = std::pow(10.0, attempt);
    LipschitzCertificate cert;
    if (tier_joint) {
      const double margin =
          1e-9 * (1.0 + gamma_ub_sq * q_ub) * escal;
      JointHandles h;
      if (!opts.use_bisection) {
        const SdpProblem p = build_joint(nspec, ncascade, Tp, repeat, c_l,
                                         margin, -1.0, opts, &h);
        const auto [x, rep] = solve(p, sopts);
        if (rep.status == "infeasible")
          throw SolverError(
              "joint certificate LMI reported infeasible; a gain problem "
              "should always admit a (large) certified level");
        cert = extract_joint(p, h, x, rep, x(h.gv), has_dense,
                             opts.dense_out_weight);
      } else {
        auto build = [&](double gsq) {
          return build_joint(nspec, ncascade, Tp, repeat, c_l, margin, gsq,
                             opts, &h);
        };
        double gsq = 0.0;
        const double hi = gamma_ub_sq * q_ub * (1.0 + 1e-6);
        if (!bisect_gamma_sq(hi, build, sopts, &gsq))
          throw SolverError(
              "bisection could not certify any gain level up to the "
              "analytic upper bound");
        const SdpProblem p = build(gsq);
        const auto [x, rep] = solve(p, sopts);
        cert = extract_joint(p, h, x, rep, gsq, has_dense,
                             opts.dense_out_weight);
      }
      cert.projected = opts.project;
    } else {
      // Layer-by-layer composition: certify each conv layer alone, then
      // chain with downstream scaling s_k = prod_{j>k} gamma_j^2. The
      // junction multipliers lambda_k = s_k absorb each activation (the
      // difference between the summed per-layer supplies and the cascade
      // slope form is the psd rank-one form s_k (z - w)^T (z - w)).
      std::vector<LayerResult> lr(l);
      int iters = 0;
      for (std::size_t k = 0; k < l; ++k) {
        const double margin = 1e-9 * (1.0 + tails[k] * tails[k]) * escal;
        lr[k] = certify_layer(nspec.conv_layers[k], opts.project, margin,
                              sopts, opts.use_bisection, opts.max_layer_vars,
                              tails[k]);
        iters += lr[k].iterations;
      }
      std::vector<double> s(l, 1.0);
      for (std::size_t k = l - 1; k-- > 0;)
        s[k] = s[k + 1] * lr[k + 1].gamma_sq;

      cert.P1 = MatrixXd::Zero(nc1, nc1);
      cert.P2 = MatrixXd::Zero(nc2, nc2);
      cert.lambda = VectorXd::Zero(cascade.nz);
      for (std::size_t k = 0; k < l; ++k) {
        const auto& sl = cascade.layer_boundaries[k];
        cert.P1.block(sl.x1_off, sl.x1_off, sl.x1_n, sl.x1_n) =
            s[k] * lr[k].P1;
        cert.P2.block(sl.x2_off, sl.x2_off, sl.x2_n, sl.x2_n) =
            s[k] * lr[k].P2;
        if (sl.z_n > 0)
          cert.lambda.segment(sl.z_off, sl.z_n).setConstant(s[k]);
      }
      double gamma_sq = s[0] * lr[0].gamma_sq;
      if (has_dense) {
        double q = 0.0;
        std::vector<VectorXd> mus;
        analytic_dense_stage(spec.dense_layers, opts.dense_out_weight, &q,
                             &mus);
        cert.P1 *= q;
        cert.P2 *= q;
        cert.lambda *= q;
        gamma_sq *= q;
        cert.Q_C = MatrixXd(-q * MatrixXd::Identity(c_l, c_l));
        cert.dense_lambdas = std::move(mus);
      }
      cert.dense_out_weight = opts.dense_out_weight;
      cert.gamma_sq = gamma_sq;
      cert.gamma = std::sqrt(std::max(
          0.0, gamma_sq * (has_dense ? opts.dense_out_weight : 1.0)));
      cert.method = "layer-composition";
      // The per-layer certificates were obtained on the per-layer reachable
      // subspaces, and the joint reachable subspace of the cascade (with the
      // activation outputs free inputs) is exactly their direct sum, so the
      // composed inequality is certified on the projected form.
      cert.projected = opts.project;
      cert.solver_status = "optimal";
      bool any_sdp = false;
      for (std::size_t k = 0; k < l; ++k) {
        cert.layer_gammas.push_back(std::sqrt(std::max(0.0, lr[k].gamma_sq)));
        if (lr[k].how == "sdp") any_sdp = true;
      }
      if (!any_sdp) cert.solver_status = "analytic";
      cert.iterations = iters;
      cert.constraint_min_eigs.push_back(
          min_eig(materialize_cascade_lmi(cascade, cert)));
      if (has_dense)
        cert.constraint_min_eigs.push_back(min_eig(
            materialize_dense_chain_lmi(spec.dense_layers, repeat, cert)));
    }

    if (!opts.validate) return cert;
    const ValidationReport vrep =
        validate_certificate(spec, cert, opts.validation);
    if (validation_out) *validation_out = vrep;
    if (vrep.passed) return cert;
    last_fail = vrep.failure_detail;
  }
  throw SolverError(
      "certificate failed independent validation after margin retries: " +
      last_fail);
}

}  // namespace lip2d
