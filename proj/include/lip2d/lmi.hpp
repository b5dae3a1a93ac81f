// SPDX-License-Identifier: MIT
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lip2d/lure.hpp"
#include "lip2d/model.hpp"
#include "lip2d/realization.hpp"

namespace lip2d {

/// Numeric quadratic supply rate on an ordered signal pair:
///   s(first, second) = first^T R first + 2 first^T S second + second^T Q second,
/// i.e. the block form [first; second]^T [[R, S], [S^T, Q]] [first; second].
/// R and Q are symmetric.
struct QuadraticSupply {
  Eigen::MatrixXd R, S, Q;

  double eval(const Eigen::VectorXd& first, const Eigen::VectorXd& second) const {
    return first.dot(R * first) + 2.0 * first.dot(S * second) +
           second.dot(Q * second);
  }
};

/// Gain supply on (input, output): s(u, y) = gamma_sq*|u|^2 - |y|^2.
/// Nonnegativity of its running sum certifies an l2-gain of sqrt(gamma_sq).
QuadraticSupply lipschitz_supply(double gamma_sq, Eigen::Index nu,
                                 Eigen::Index ny);

/// Slope supply on (pre-activation z, increment w): with Lambda = diag(lambda),
///   s_w(z, w) = 2 w^T Lambda w - 2 z^T Lambda w.
/// For every scalar nonlinearity with difference quotients in [0,1] and
/// w = phi(z + z_ref) - phi(z_ref) it holds that s_w(z, w) <= 0, so adding
/// s_w to a dissipation budget only relaxes the matrix inequality.
/// Throws DataError on a negative lambda entry.
QuadraticSupply slope_supply(const Eigen::VectorXd& lambda);

/// Canonical container for a linear-objective SDP
///   minimize c^T x  subject to  F_b(x) = F0_b + sum_i x_i F_{b,i} >= 0
/// for every block b (meaning positive semidefinite).
///
/// Scalar decision variables are grouped: a symmetric n x n matrix variable
/// contributes n(n+1)/2 scalars (one per lower-triangle entry, the off-diagonal
/// scalar standing for both mirror entries), a diagonal variable n scalars,
/// and a plain scalar one. Structure constraints (P psd, lambda >= 0, ...)
/// are expressed as ordinary blocks by the builders, so the solver sees one
/// uniform problem shape.
class SdpProblem {
 public:
  enum class VarKind { sym, diag, scalar };

  struct VarGroup {
    std::string name;
    VarKind kind = VarKind::scalar;
    Eigen::Index dim = 1;     // matrix/vector dimension (1 for scalar)
    Eigen::Index offset = 0;  // first flat variable index
    Eigen::Index count = 1;   // number of flat variables
  };

  struct Entry {
    Eigen::Index p, q;  // position inside the block (full matrix, both mirrors stored)
    double v;
  };

  struct Block {
    std::string name;
    Eigen::Index n = 0;
    Eigen::MatrixXd F0;
    // var index -> accumulated coefficient entries of that variable in this
    // block; ordered map so iteration order (and hence the solver and the
    // SDPA export) is deterministic.
    std::map<Eigen::Index, std::vector<Entry>> coeffs;
  };

  // --- variables ---------------------------------------------------------
  Eigen::Index add_sym_var(const std::string& name, Eigen::Index n);
  Eigen::Index add_diag_var(const std::string& name, Eigen::Index n);
  Eigen::Index add_scalar_var(const std::string& name);
  Eigen::Index group_count() const { return static_cast<Eigen::Index>(groups_.size()); }
  const VarGroup& group(Eigen::Index g) const { return groups_.at(static_cast<std::size_t>(g)); }
  /// Group id by name, -1 if absent.
  Eigen::Index find_group(const std::string& name) const;
  Eigen::Index num_vars() const { return num_vars_; }

  /// Flat index of sym-group entry (i, j); order inside the pair is irrelevant.
  Eigen::Index sym_index(Eigen::Index g, Eigen::Index i, Eigen::Index j) const;
  Eigen::Index diag_index(Eigen::Index g, Eigen::Index i) const;
  Eigen::Index scalar_index(Eigen::Index g) const;

  // --- objective ---------------------------------------------------------
  void add_objective(Eigen::Index var, double coeff);
  const Eigen::VectorXd& objective() const { return c_; }

  // --- blocks ------------------------------------------------------------
  int add_block(const std::string& name, Eigen::Index n);
  int num_blocks() const { return static_cast<int>(blocks_.size()); }
  const Block& block(int b) const { return blocks_.at(static_cast<std::size_t>(b)); }
  /// Accumulate v into the constant part F0 at (p, q) only (caller sets both
  /// mirrors of an off-diagonal logical entry).
  void add_const(int b, Eigen::Index p, Eigen::Index q, double v);
  /// Accumulate v into variable `var`'s coefficient matrix at (p, q) only.
  void add_entry(int b, Eigen::Index var, Eigen::Index p, Eigen::Index q, double v);

  /// Materialize F0 + sum_i x_i F_i for one block.
  Eigen::MatrixXd eval_block(int b, const Eigen::VectorXd& x) const;

  // --- solution readback -------------------------------------------------
  Eigen::MatrixXd sym_value(Eigen::Index g, const Eigen::VectorXd& x) const;
  Eigen::VectorXd diag_value(Eigen::Index g, const Eigen::VectorXd& x) const;
  double scalar_value(Eigen::Index g, const Eigen::VectorXd& x) const;

 private:
  std::vector<VarGroup> groups_;
  std::vector<Block> blocks_;
  Eigen::VectorXd c_;  // kept sized to num_vars_
  Eigen::Index num_vars_ = 0;
};

/// Append the cone-structure blocks for a variable group: a psd block for a
/// sym group, one 1x1 nonnegativity block per entry of a diag group, and a
/// single 1x1 nonnegativity block for a scalar group. The builders call this
/// for the groups they create; callers creating their own groups (junction
/// matrices, gain variables) do the same.
void add_group_cone_blocks(SdpProblem& prob, Eigen::Index group,
                           const std::string& name);

/// Sparse SDPA-like text export of the problem for cross-checking with
/// external solvers. Format (documented here, stable):
///   line 1: <num vars> ; line 2: <num blocks> ; line 3: block sizes
///   (negative size = diagonal block) ; line 4: objective c ; then entries
///   "<var> <block> <i> <j> <value>" (1-based, upper triangle) where var 0
///   carries the constant term with the SDPA sign convention
///   sum_i x_i F_i - F0_sdpa >= 0, i.e. F0_sdpa = -F0.
std::string export_sdpa(const SdpProblem& problem);

/// Symbolic description of the outer supply on the (input u, output y) pair
/// used by the LMI builders. The R slot is gamma_sq * I with gamma_sq either
/// a decision variable (gamma_sq_var >= 0) or the fixed value r_fixed (used by
/// the bisection fallback). The Q slot is either the fixed matrix q_fixed
/// (empty means -I) or -Q_neg where Q_neg is the variable group qc_neg_group
/// (diag or sym kind; the group stores the negated junction matrix so plain
/// psd/nonnegativity blocks keep it negative semidefinite). S is always 0.
struct OuterSupplyRef {
  Eigen::Index gamma_sq_var = -1;
  double r_fixed = 1.0;
  Eigen::Index qc_neg_group = -1;
  Eigen::MatrixXd q_fixed;
};

struct LmiBuildOptions {
  /// Feasibility margin: the main constraint is built as G - margin*I >= 0,
  /// giving composed certificates numerical headroom.
  double margin = 0.0;
  /// Optional joint reachable-subspace basis T (orthonormal columns, rows
  /// = n1 + n2 over the stacked state). The main inequality is required only
  /// on reachable joint states: it is congruence-transformed by
  /// blkdiag(T, I) over the remaining (w, u) coordinates. Trajectories from
  /// the zero boundary never leave span(T), so the restricted inequality
  /// still certifies dissipation, while dropping the unreachable directions
  /// (where the x1 and x2 delay registers disagree about shared input
  /// samples) removes the conservatism they would otherwise inject. The
  /// storage positivity blocks P1 >= 0, P2 >= 0 stay unrestricted: the
  /// per-axis boundary sums in the dissipation argument involve x1 and x2
  /// separately, and each register alone reaches its whole space.
  const Eigen::MatrixXd* T = nullptr;
};

/// Handles into a problem returned by the builders.
struct BuiltLmi {
  int main_block = -1;
  Eigen::Index p1_group = -1;
  Eigen::Index p2_group = -1;
  Eigen::Index lambda_group = -1;  // slope multipliers (cascade builder only)
};

/// Quadratic dissipativity certificate LMI for one linear 2-D system under
/// the outer supply: the form
///   [x1; x2; u]^T ( -(Ax+Bu)^T blkdiag(P1,P2) (Ax+Bu) + x^T blkdiag(P1,P2) x
///                   + s(u, Cx+Du) ) [x1; x2; u] - margin*I >= 0
/// expanded through the stacked outer factor
///   [A11 A12 B1; A21 A22 B2; I 0 0; 0 I 0; C1 C2 D; 0 0 I],
/// affine in (P1, P2, supply variables). Adds P1 >= 0 and P2 >= 0 blocks.
BuiltLmi add_layer_lmi(SdpProblem& prob, const RoesserRealization& sys,
                       const OuterSupplyRef& supply,
                       const LmiBuildOptions& opts = {},
                       const std::string& prefix = "");

/// Robust dissipativity certificate LMI for a cascade interconnection in
/// error form (affine parts zero): the 8-row outer factor
///   [state updates; state identities; z row; w identity; y row; u identity]
/// with the slope supply paired with the (z, w) rows and the outer supply
/// with the (y, u) rows. Variables: P1, P2 (full symmetric), diagonal Lambda
/// (one multiplier per scalar nonlinearity channel), plus the supply
/// variables. Adds P1, P2 psd blocks and lambda >= 0 blocks. With nz = 0 the
/// construction collapses to add_layer_lmi.
BuiltLmi add_lure_lmi(SdpProblem& prob, const LureSystem& sys,
                      const OuterSupplyRef& supply,
                      const LmiBuildOptions& opts = {},
                      const std::string& prefix = "");

/// Incremental-gain chain LMI for a dense stack W_1..W_L with the activation
/// between consecutive layers: block tridiagonal
///   [[R_L, -W_1^T Lam_1, ...], [-Lam_1 W_1, 2 Lam_1, -W_2^T Lam_2, ...],
///    ..., [..., -W_L^T], [..., -W_L, out_weight * I]] >= 0,
/// where R_L = I_repeat (x) (-Q_C) (Kronecker; repeat copies of the negated
/// junction matrix) and Lam_k are nonnegative diagonal variables. Certifies
/// |W-chain increment|^2 <= v0^T R_L v0 for slope-[0,1] activations.
/// qc_neg_group holds -Q_C (diag or sym kind); pass qc_neg_group = -1 to use
/// the fixed scalar junction R_L = r_fixed * I_repeat instead.
/// lambda_groups_out (optional) receives the created multiplier group ids.
int add_dense_chain_lmi(SdpProblem& prob,
                        const std::vector<DenseLayerSpec>& dense_layers,
                        Eigen::Index repeat, Eigen::Index qc_neg_group,
                        double r_fixed = 1.0, double out_weight = 1.0,
                        double margin = 0.0, const std::string& prefix = "",
                        std::vector<Eigen::Index>* lambda_groups_out = nullptr);

/// Fresh minimize-gamma_sq problem for a single linear layer under the gain
/// supply (R = gamma_sq I variable, S = 0, Q = -I). Returns the problem;
/// refs/gamma_sq_var (optional) receive the handles.
SdpProblem build_layer_lmi(const RoesserRealization& sys,
                           const LmiBuildOptions& opts = {},
                           BuiltLmi* refs = nullptr,
                           Eigen::Index* gamma_sq_var = nullptr);

/// Fresh minimize-gamma_sq problem for a cascade in error form under the gain
/// supply plus slope multipliers.
SdpProblem build_lure_lmi(const LureSystem& sys,
                          const LmiBuildOptions& opts = {},
                          BuiltLmi* refs = nullptr,
                          Eigen::Index* gamma_sq_var = nullptr);

/// Fresh feasibility problem containing only the dense-chain LMI with
/// R_L = q * I (scalar junction weight q fixed): used for unit checks.
SdpProblem build_dense_chain_lmi(const std::vector<DenseLayerSpec>& dense_layers,
                                 Eigen::Index repeat, double q_fixed,
                                 double out_weight = 1.0);

/// Everything needed to state and re-verify a Lipschitz bound. The conv part
/// is certified against the cascade (error-form) interconnection of the conv
/// stack: storage blkdiag(P1, P2), multipliers lambda, outer supply
/// gamma_sq * |u|^2 + y^T Q_C y (Q_C = -I for a pure-conv bound; the
/// junction matrix for hybrid networks). dense_lambdas hold the chain
/// multipliers (one vector per activation inside the dense stack).
struct LipschitzCertificate {
  double gamma = 0.0;
  double gamma_sq = 0.0;
  Eigen::MatrixXd P1, P2;
  Eigen::VectorXd lambda;                      // conv cascade multipliers (may be empty)
  Eigen::MatrixXd Q_C;                         // empty => -I (pure conv)
  std::vector<Eigen::VectorXd> dense_lambdas;  // chain multipliers
  double dense_out_weight = 1.0;               // bottom-right weight of the chain LMI
  /// True when the cascade inequality is certified on the joint reachable
  /// subspace only (see LmiBuildOptions::T); re-verification must then apply
  /// the same congruence, which materialize_cascade_lmi does automatically.
  bool projected = false;

  std::string method;         // "lure-sdp", "layer-composition", "hybrid-sdp", ...
  std::string solver_status;  // optimal / infeasible / numerical_trouble / analytic
  double solver_objective = 0.0;
  int iterations = 0;
  double wall_time_s = 0.0;
  std::vector<double> constraint_min_eigs;  // at the solution, per block
  std::vector<double> layer_gammas;         // per-layer gains (composition path)
};

/// JSON export of a certificate (gamma, storage blocks, multipliers,
/// junction matrix, eigen-slack diagnostics).
std::string certificate_to_json_text(const LipschitzCertificate& cert);

/// Parse a certificate previously written by certificate_to_json_text.
/// Throws DataError on malformed input or wrong schema.
LipschitzCertificate certificate_from_json_text(const std::string& text);

}  // namespace lip2d
