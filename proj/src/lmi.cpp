// SPDX-License-Identifier: MIT
#include "lip2d/lmi.hpp"

#include <algorithm>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "lip2d/errors.hpp"

namespace lip2d {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Supplies

QuadraticSupply lipschitz_supply(double gamma_sq, Index nu, Index ny) {
  QuadraticSupply s;
  s.R = gamma_sq * MatrixXd::Identity(nu, nu);
  s.S = MatrixXd::Zero(nu, ny);
  s.Q = -MatrixXd::Identity(ny, ny);
  return s;
}

QuadraticSupply slope_supply(const VectorXd& lambda) {
  for (Index i = 0; i < lambda.size(); ++i)
    if (lambda(i) < 0.0)
      throw DataError("slope_supply: multiplier entries must be nonnegative");
  const Index nz = lambda.size();
  QuadraticSupply s;
  s.R = MatrixXd::Zero(nz, nz);
  s.S = MatrixXd(Eigen::VectorXd(-lambda).asDiagonal());
  s.Q = MatrixXd(Eigen::VectorXd(2.0 * lambda).asDiagonal());
  return s;
}

// ---------------------------------------------------------------------------
// SdpProblem

Index SdpProblem::add_sym_var(const std::string& name, Index n) {
  VarGroup g;
  g.name = name;
  g.kind = VarKind::sym;
  g.dim = n;
  g.offset = num_vars_;
  g.count = n * (n + 1) / 2;
  groups_.push_back(g);
  num_vars_ += g.count;
  c_.conservativeResize(num_vars_);
  c_.tail(g.count).setZero();
  return group_count() - 1;
}

Index SdpProblem::add_diag_var(const std::string& name, Index n) {
  VarGroup g;
  g.name = name;
  g.kind = VarKind::diag;
  g.dim = n;
  g.offset = num_vars_;
  g.count = n;
  groups_.push_back(g);
  num_vars_ += g.count;
  c_.conservativeResize(num_vars_);
  c_.tail(g.count).setZero();
  return group_count() - 1;
}

Index SdpProblem::add_scalar_var(const std::string& name) {
  VarGroup g;
  g.name = name;
  g.kind = VarKind::scalar;
  g.dim = 1;
  g.offset = num_vars_;
  g.count = 1;
  groups_.push_back(g);
  num_vars_ += 1;
  c_.conservativeResize(num_vars_);
  c_(num_vars_ - 1) = 0.0;
  return group_count() - 1;
}

Index SdpProblem::find_group(const std::string& name) const {
  for (Index g = 0; g < group_count(); ++g)
    if (groups_[static_cast<std::size_t>(g)].name == name) return g;
  return -1;
}

Index SdpProblem::sym_index(Index g, Index i, Index j) const {
  const auto& grp = group(g);
  if (grp.kind != VarKind::sym) throw DataError("sym_index: not a symmetric group");
  if (i < j) std::swap(i, j);
  if (i >= grp.dim || j < 0) throw DataError("sym_index: out of range");
  return grp.offset + i * (i + 1) / 2 + j;
}

Index SdpProblem::diag_index(Index g, Index i) const {
  const auto& grp = group(g);
  if (grp.kind != VarKind::diag) throw DataError("diag_index: not a diagonal group");
  if (i < 0 || i >= grp.dim) throw DataError("diag_index: out of range");
  return grp.offset + i;
}

Index SdpProblem::scalar_index(Index g) const {
  const auto& grp = group(g);
  if (grp.kind != VarKind::scalar) throw DataError("scalar_index: not a scalar group");
  return grp.offset;
}

void SdpProblem::add_objective(Index var, double coeff) { c_(var) += coeff; }

int SdpProblem::add_block(const std::string& name, Index n) {
  Block b;
  b.name = name;
  b.n = n;
  b.F0 = MatrixXd::Zero(n, n);
  blocks_.push_back(std::move(b));
  return num_blocks() - 1;
}

void SdpProblem::add_const(int b, Index p, Index q, double v) {
  blocks_.at(static_cast<std::size_t>(b)).F0(p, q) += v;
}

void SdpProblem::add_entry(int b, Index var, Index p, Index q, double v) {
  if (var < 0 || var >= num_vars_)
    throw DataError("add_entry: variable index out of range");
  blocks_.at(static_cast<std::size_t>(b)).coeffs[var].push_back({p, q, v});
}

MatrixXd SdpProblem::eval_block(int b, const VectorXd& x) const {
  const Block& blk = block(b);
  MatrixXd F = blk.F0;
  for (const auto& [var, entries] : blk.coeffs)
    for (const auto& e : entries) F(e.p, e.q) += x(var) * e.v;
  return F;
}

MatrixXd SdpProblem::sym_value(Index g, const VectorXd& x) const {
  const auto& grp = group(g);
  if (grp.kind != VarKind::sym) throw DataError("sym_value: not a symmetric group");
  MatrixXd P(grp.dim, grp.dim);
  for (Index i = 0; i < grp.dim; ++i)
    for (Index j = 0; j <= i; ++j) {
      const double v = x(grp.offset + i * (i + 1) / 2 + j);
      P(i, j) = v;
      P(j, i) = v;
    }
  return P;
}

VectorXd SdpProblem::diag_value(Index g, const VectorXd& x) const {
  const auto& grp = group(g);
  if (grp.kind != VarKind::diag) throw DataError("diag_value: not a diagonal group");
  return x.segment(grp.offset, grp.count);
}

double SdpProblem::scalar_value(Index g, const VectorXd& x) const {
  return x(scalar_index(g));
}

// ---------------------------------------------------------------------------
// SDPA export

std::string export_sdpa(const SdpProblem& problem) {
  std::ostringstream os;
  os.precision(17);
  os << "* sparse SDPA export: minimize c^T x s.t. sum_k x_k F_k - F0 >= 0 "
        "per block (F0 here is the negated constant term)\n";
  os << problem.num_vars() << " = mdim\n";
  os << problem.num_blocks() << " = nblocks\n";
  for (int b = 0; b < problem.num_blocks(); ++b)
    os << problem.block(b).n << (b + 1 < problem.num_blocks() ? " " : "");
  os << "\n";
  for (Index i = 0; i < problem.num_vars(); ++i)
    os << problem.objective()(i) << (i + 1 < problem.num_vars() ? " " : "");
  os << "\n";
  for (int b = 0; b < problem.num_blocks(); ++b) {
    const auto& blk = problem.block(b);
    for (Index p = 0; p < blk.n; ++p)
      for (Index q = p; q < blk.n; ++q)
        if (blk.F0(p, q) != 0.0)
          os << "0 " << (b + 1) << " " << (p + 1) << " " << (q + 1) << " "
             << -blk.F0(p, q) << "\n";
    for (const auto& [var, entries] : blk.coeffs) {
      std::map<std::pair<Index, Index>, double> upper;
      for (const auto& e : entries)
        if (e.p <= e.q) upper[{e.p, e.q}] += e.v;
      for (const auto& [pq, v] : upper)
        if (v != 0.0)
          os << (var + 1) << " " << (b + 1) << " " << (pq.first + 1) << " "
             << (pq.second + 1) << " " << v << "\n";
    }
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// LMI builders

namespace {

using SparseRows = std::vector<std::vector<std::pair<Index, double>>>;

SparseRows sparse_rows(const MatrixXd& L) {
  SparseRows rows(static_cast<std::size_t>(L.rows()));
  for (Index r = 0; r < L.rows(); ++r)
    for (Index k = 0; k < L.cols(); ++k)
      if (L(r, k) != 0.0) rows[static_cast<std::size_t>(r)].emplace_back(k, L(r, k));
  return rows;
}

/// Accumulate the contribution v * L_r^T L_c of the inner-matrix position
/// (r, c) into the quadratic form, attributed to `var` (or to the constant
/// part when var < 0). Callers always feed mirrored position pairs, so the
/// accumulated expression is symmetric by construction.
void add_theta_position(SdpProblem& prob, int blk, Index var,
                        const SparseRows& rows, Index r, Index c, double v) {
  for (const auto& [kp, vp] : rows[static_cast<std::size_t>(r)])
    for (const auto& [kq, vq] : rows[static_cast<std::size_t>(c)]) {
      const double val = v * vp * vq;
      if (var < 0)
        prob.add_const(blk, kp, kq, val);
      else
        prob.add_entry(blk, var, kp, kq, val);
    }
}

/// Positions of a symmetric storage variable P entering the inner matrix as
/// -P on the state-update rows (offset a_off) and +P on the state-identity
/// rows (offset id_off).
void add_storage_positions(SdpProblem& prob, int blk, const SparseRows& rows,
                           Index group, Index a_off, Index id_off) {
  const auto& grp = prob.group(group);
  for (Index i = 0; i < grp.dim; ++i)
    for (Index j = 0; j <= i; ++j) {
      const Index var = prob.sym_index(group, i, j);
      if (i == j) {
        add_theta_position(prob, blk, var, rows, a_off + i, a_off + i, -1.0);
        add_theta_position(prob, blk, var, rows, id_off + i, id_off + i, 1.0);
      } else {
        add_theta_position(prob, blk, var, rows, a_off + i, a_off + j, -1.0);
        add_theta_position(prob, blk, var, rows, a_off + j, a_off + i, -1.0);
        add_theta_position(prob, blk, var, rows, id_off + i, id_off + j, 1.0);
        add_theta_position(prob, blk, var, rows, id_off + j, id_off + i, 1.0);
      }
    }
}

/// Outer supply on the (y, u) row pair: R = gamma_sq I on the u rows,
/// Q on the y rows (fixed matrix or negated variable group), S = 0.
void add_outer_supply(SdpProblem& prob, int blk, const SparseRows& rows,
                      const OuterSupplyRef& supply, Index y_off, Index ny,
                      Index u_off, Index nu) {
  if (supply.gamma_sq_var >= 0) {
    for (Index k = 0; k < nu; ++k)
      add_theta_position(prob, blk, supply.gamma_sq_var, rows, u_off + k,
                         u_off + k, 1.0);
  } else {
    for (Index k = 0; k < nu; ++k)
      add_theta_position(prob, blk, -1, rows, u_off + k, u_off + k,
                         supply.r_fixed);
  }
  if (supply.qc_neg_group >= 0) {
    const auto& grp = prob.group(supply.qc_neg_group);
    if (grp.dim != ny)
      throw DataError("add_outer_supply: junction group dimension mismatch");
    if (grp.kind == SdpProblem::VarKind::diag) {
      for (Index i = 0; i < ny; ++i)
        add_theta_position(prob, blk, prob.diag_index(supply.qc_neg_group, i),
                           rows, y_off + i, y_off + i, -1.0);
    } else if (grp.kind == SdpProblem::VarKind::sym) {
      for (Index i = 0; i < ny; ++i)
        for (Index j = 0; j <= i; ++j) {
          const Index var = prob.sym_index(supply.qc_neg_group, i, j);
          add_theta_position(prob, blk, var, rows, y_off + i, y_off + j, -1.0);
          if (i != j)
            add_theta_position(prob, blk, var, rows, y_off + j, y_off + i,
                               -1.0);
        }
    } else {
      throw DataError("add_outer_supply: junction group must be diag or sym");
    }
  } else {
    const MatrixXd Q = supply.q_fixed.size()
                           ? supply.q_fixed
                           : MatrixXd(-MatrixXd::Identity(ny, ny));
    if (Q.rows() != ny || Q.cols() != ny)
      throw DataError("add_outer_supply: fixed Q dimension mismatch");
    for (Index i = 0; i < ny; ++i)
      for (Index j = 0; j < ny; ++j)
        if (Q(i, j) != 0.0)
          add_theta_position(prob, blk, -1, rows, y_off + i, y_off + j,
                             Q(i, j));
  }
}

}  // namespace

void add_group_cone_blocks(SdpProblem& prob, Index group,
                           const std::string& name) {
  const auto& grp = prob.group(group);
  if (grp.kind == SdpProblem::VarKind::sym) {
    if (grp.dim == 0) return;
    const int b = prob.add_block(name + "_psd", grp.dim);
    for (Index i = 0; i < grp.dim; ++i)
      for (Index j = 0; j <= i; ++j) {
        const Index var = prob.sym_index(group, i, j);
        prob.add_entry(b, var, i, j, 1.0);
        if (i != j) prob.add_entry(b, var, j, i, 1.0);
      }
  } else if (grp.kind == SdpProblem::VarKind::diag) {
    for (Index i = 0; i < grp.dim; ++i) {
      const int b = prob.add_block(name + "_nn" + std::to_string(i), 1);
      prob.add_entry(b, prob.diag_index(group, i), 0, 0, 1.0);
    }
  } else {
    const int b = prob.add_block(name + "_nn", 1);
    prob.add_entry(b, prob.scalar_index(group), 0, 0, 1.0);
  }
}

BuiltLmi add_layer_lmi(SdpProblem& prob, const RoesserRealization& sys,
                       const OuterSupplyRef& supply, const LmiBuildOptions& opts,
                       const std::string& prefix) {
  const Index n1 = sys.n1(), n2 = sys.n2(), nu = sys.nu(), ny = sys.ny();

  Index cols = n1 + n2 + nu;
  MatrixXd L = MatrixXd::Zero(2 * (n1 + n2) + ny + nu, cols);
  Index r0 = 0;
  L.block(r0, 0, n1, n1) = sys.A11;
  L.block(r0, n1, n1, n2) = sys.A12;
  L.block(r0, n1 + n2, n1, nu) = sys.B1;
  r0 += n1;
  L.block(r0, 0, n2, n1) = sys.A21;
  L.block(r0, n1, n2, n2) = sys.A22;
  L.block(r0, n1 + n2, n2, nu) = sys.B2;
  r0 += n2;
  const Index id1_off = r0;
  L.block(r0, 0, n1, n1).setIdentity();
  r0 += n1;
  const Index id2_off = r0;
  L.block(r0, n1, n2, n2).setIdentity();
  r0 += n2;
  const Index y_off = r0;
  L.block(r0, 0, ny, n1) = sys.C1;
  L.block(r0, n1, ny, n2) = sys.C2;
  L.block(r0, n1 + n2, ny, nu) = sys.D;
  r0 += ny;
  const Index u_off = r0;
  L.block(r0, n1 + n2, nu, nu).setIdentity();

  // Restricting the inequality to the reachable joint states: every column
  // combination the form is evaluated on is of the shape (T xi, u), so the
  // outer factor simply absorbs blkdiag(T, I) on the right.
  if (opts.T != nullptr) {
    if (opts.T->rows() != n1 + n2 || opts.T->cols() > n1 + n2)
      throw DataError("add_layer_lmi: projection basis has wrong dimensions");
    MatrixXd Lp(L.rows(), opts.T->cols() + nu);
    Lp.leftCols(opts.T->cols()) = L.leftCols(n1 + n2) * (*opts.T);
    Lp.rightCols(nu) = L.rightCols(nu);
    L = std::move(Lp);
    cols = L.cols();
  }

  const SparseRows rows = sparse_rows(L);
  BuiltLmi out;
  out.main_block = prob.add_block(prefix + "dissipativity", cols);
  if (n1 > 0) {
    out.p1_group = prob.add_sym_var(prefix + "P1", n1);
    add_storage_positions(prob, out.main_block, rows, out.p1_group, 0,
                          id1_off);
    add_group_cone_blocks(prob, out.p1_group, prefix + "P1");
  }
  if (n2 > 0) {
    out.p2_group = prob.add_sym_var(prefix + "P2", n2);
    add_storage_positions(prob, out.main_block, rows, out.p2_group, n1,
                          id2_off);
    add_group_cone_blocks(prob, out.p2_group, prefix + "P2");
  }
  add_outer_supply(prob, out.main_block, rows, supply, y_off, ny, u_off, nu);
  for (Index d = 0; d < cols; ++d)
    prob.add_const(out.main_block, d, d, -opts.margin);
  return out;
}

BuiltLmi add_lure_lmi(SdpProblem& prob, const LureSystem& sys,
                      const OuterSupplyRef& supply, const LmiBuildOptions& opts,
                      const std::string& prefix) {
  const Index n1 = sys.n1(), n2 = sys.n2(), nz = sys.nz;
  const Index nu = sys.nu(), ny = sys.ny();

  Index cols = n1 + n2 + nz + nu;
  MatrixXd L = MatrixXd::Zero(2 * (n1 + n2) + 2 * nz + ny + nu, cols);
  Index r0 = 0;
  L.block(r0, 0, n1, n1) = sys.mA11;
  L.block(r0, n1, n1, n2) = sys.mA12;
  L.block(r0, n1 + n2, n1, nz) = sys.mB11;
  L.block(r0, n1 + n2 + nz, n1, nu) = sys.mB12;
  r0 += n1;
  L.block(r0, 0, n2, n1) = sys.mA21;
  L.block(r0, n1, n2, n2) = sys.mA22;
  L.block(r0, n1 + n2, n2, nz) = sys.mB21;
  L.block(r0, n1 + n2 + nz, n2, nu) = sys.mB22;
  r0 += n2;
  const Index id1_off = r0;
  L.block(r0, 0, n1, n1).setIdentity();
  r0 += n1;
  const Index id2_off = r0;
  L.block(r0, n1, n2, n2).setIdentity();
  r0 += n2;
  const Index z_off = r0;
  L.block(r0, 0, nz, n1) = sys.mC11;
  L.block(r0, n1, nz, n2) = sys.mC12;
  L.block(r0, n1 + n2, nz, nz) = sys.mD11;
  L.block(r0, n1 + n2 + nz, nz, nu) = sys.mD12;
  r0 += nz;
  const Index w_off = r0;
  L.block(r0, n1 + n2, nz, nz).setIdentity();
  r0 += nz;
  const Index y_off = r0;
  L.block(r0, 0, ny, n1) = sys.mC21;
  L.block(r0, n1, ny, n2) = sys.mC22;
  L.block(r0, n1 + n2, ny, nz) = sys.mD21;
  L.block(r0, n1 + n2 + nz, ny, nu) = sys.mD22;
  r0 += ny;
  const Index u_off = r0;
  L.block(r0, n1 + n2 + nz, nu, nu).setIdentity();

  // Reachable-subspace restriction over the stacked state, keeping the
  // (w, u) coordinates free: congruence by blkdiag(T, I).
  if (opts.T != nullptr) {
    if (opts.T->rows() != n1 + n2 || opts.T->cols() > n1 + n2)
      throw DataError("add_lure_lmi: projection basis has wrong dimensions");
    MatrixXd Lp(L.rows(), opts.T->cols() + nz + nu);
    Lp.leftCols(opts.T->cols()) = L.leftCols(n1 + n2) * (*opts.T);
    Lp.rightCols(nz + nu) = L.rightCols(nz + nu);
    L = std::move(Lp);
    cols = L.cols();
  }

  const SparseRows rows = sparse_rows(L);
  BuiltLmi out;
  out.main_block = prob.add_block(prefix + "robust_dissipativity", cols);
  if (n1 > 0) {
    out.p1_group = prob.add_sym_var(prefix + "P1", n1);
    add_storage_positions(prob, out.main_block, rows, out.p1_group, 0,
                          id1_off);
    add_group_cone_blocks(prob, out.p1_group, prefix + "P1");
  }
  if (n2 > 0) {
    out.p2_group = prob.add_sym_var(prefix + "P2", n2);
    add_storage_positions(prob, out.main_block, rows, out.p2_group, n1,
                          id2_off);
    add_group_cone_blocks(prob, out.p2_group, prefix + "P2");
  }
  if (nz > 0) {
    out.lambda_group = prob.add_diag_var(prefix + "Lambda", nz);
    for (Index k = 0; k < nz; ++k) {
      const Index var = prob.diag_index(out.lambda_group, k);
      add_theta_position(prob, out.main_block, var, rows, z_off + k, w_off + k,
                         -1.0);
      add_theta_position(prob, out.main_block, var, rows, w_off + k, z_off + k,
                         -1.0);
      add_theta_position(prob, out.main_block, var, rows, w_off + k, w_off + k,
                         2.0);
    }
    add_group_cone_blocks(prob, out.lambda_group, prefix + "Lambda");
  }
  add_outer_supply(prob, out.main_block, rows, supply, y_off, ny, u_off, nu);
  for (Index d = 0; d < cols; ++d)
    prob.add_const(out.main_block, d, d, -opts.margin);
  return out;
}

int add_dense_chain_lmi(SdpProblem& prob,
                        const std::vector<DenseLayerSpec>& dense_layers,
                        Index repeat, Index qc_neg_group, double r_fixed,
                        double out_weight, double margin,
                        const std::string& prefix,
                        std::vector<Index>* lambda_groups_out) {
  if (dense_layers.empty())
    throw DataError("add_dense_chain_lmi: empty dense stack");
  const std::size_t nlayers = dense_layers.size();
  Index cq;
  if (qc_neg_group >= 0) {
    cq = prob.group(qc_neg_group).dim;
  } else {
    cq = 1;
  }
  const Index n0 = repeat * cq;
  if (dense_layers.front().weight.cols() != n0)
    throw DataError("add_dense_chain_lmi: first weight width must equal repeat * junction dimension");

  std::vector<Index> dims;
  dims.push_back(n0);
  for (std::size_t k = 0; k + 1 < nlayers; ++k)
    dims.push_back(dense_layers[k].weight.rows());
  dims.push_back(dense_layers.back().weight.rows());
  Index total = 0;
  for (Index d : dims) total += d;

  const int blk = prob.add_block(prefix + "dense_chain", total);

  // R_L = I_repeat (x) (-Q_C) = I_repeat (x) Q_neg on the input block.
  if (qc_neg_group >= 0) {
    const auto& grp = prob.group(qc_neg_group);
    for (Index rblk = 0; rblk < repeat; ++rblk) {
      if (grp.kind == SdpProblem::VarKind::diag) {
        for (Index i = 0; i < cq; ++i)
          prob.add_entry(blk, prob.diag_index(qc_neg_group, i), rblk * cq + i,
                         rblk * cq + i, 1.0);
      } else if (grp.kind == SdpProblem::VarKind::sym) {
        for (Index i = 0; i < cq; ++i)
          for (Index j = 0; j <= i; ++j) {
            const Index var = prob.sym_index(qc_neg_group, i, j);
            prob.add_entry(blk, var, rblk * cq + i, rblk * cq + j, 1.0);
            if (i != j)
              prob.add_entry(blk, var, rblk * cq + j, rblk * cq + i, 1.0);
          }
      } else {
        throw DataError("add_dense_chain_lmi: junction group must be diag or sym");
      }
    }
  } else {
    for (Index i = 0; i < n0; ++i) prob.add_const(blk, i, i, r_fixed);
  }

  Index prev_off = 0, off = dims[0];
  for (std::size_t k = 1; k <= nlayers; ++k) {
    const MatrixXd& W = dense_layers[k - 1].weight;
    const Index nk = dims[k];
    if (W.cols() != dims[k - 1])
      throw DataError("add_dense_chain_lmi: weight chain dimension mismatch at layer " +
                      std::to_string(k));
    if (k < nlayers) {
      const Index lg = prob.add_diag_var(
          prefix + "Lambda_d" + std::to_string(k), nk);
      if (lambda_groups_out) lambda_groups_out->push_back(lg);
      for (Index i = 0; i < nk; ++i) {
        const Index var = prob.diag_index(lg, i);
        prob.add_entry(blk, var, off + i, off + i, 2.0);
        for (Index j = 0; j < W.cols(); ++j)
          if (W(i, j) != 0.0) {
            prob.add_entry(blk, var, off + i, prev_off + j, -W(i, j));
            prob.add_entry(blk, var, prev_off + j, off + i, -W(i, j));
          }
      }
      add_group_cone_blocks(prob, lg, prefix + "Lambda_d" + std::to_string(k));
    } else {
      for (Index i = 0; i < nk; ++i) {
        prob.add_const(blk, off + i, off + i, out_weight);
        for (Index j = 0; j < W.cols(); ++j)
          if (W(i, j) != 0.0) {
            prob.add_const(blk, off + i, prev_off + j, -W(i, j));
            prob.add_const(blk, prev_off + j, off + i, -W(i, j));
          }
      }
    }
    prev_off = off;
    off += nk;
  }
  for (Index d = 0; d < total; ++d) prob.add_const(blk, d, d, -margin);
  return blk;
}

SdpProblem build_layer_lmi(const RoesserRealization& sys,
                           const LmiBuildOptions& opts, BuiltLmi* refs,
                           Index* gamma_sq_var) {
  SdpProblem p;
  const Index g = p.add_scalar_var("gamma_sq");
  const Index gv = p.scalar_index(g);
  p.add_objective(gv, 1.0);
  add_group_cone_blocks(p, g, "gamma_sq");
  OuterSupplyRef supply;
  supply.gamma_sq_var = gv;
  BuiltLmi built = add_layer_lmi(p, sys, supply, opts);
  if (refs) *refs = built;
  if (gamma_sq_var) *gamma_sq_var = gv;
  return p;
}

SdpProblem build_lure_lmi(const LureSystem& sys, const LmiBuildOptions& opts,
                          BuiltLmi* refs, Index* gamma_sq_var) {
  SdpProblem p;
  const Index g = p.add_scalar_var("gamma_sq");
  const Index gv = p.scalar_index(g);
  p.add_objective(gv, 1.0);
  add_group_cone_blocks(p, g, "gamma_sq");
  OuterSupplyRef supply;
  supply.gamma_sq_var = gv;
  BuiltLmi built = add_lure_lmi(p, sys, supply, opts);
  if (refs) *refs = built;
  if (gamma_sq_var) *gamma_sq_var = gv;
  return p;
}

SdpProblem build_dense_chain_lmi(const std::vector<DenseLayerSpec>& dense_layers,
                                 Index repeat, double q_fixed,
                                 double out_weight) {
  SdpProblem p;
  add_dense_chain_lmi(p, dense_layers, repeat, -1, q_fixed, out_weight);
  return p;
}

// ---------------------------------------------------------------------------
// Certificate JSON

namespace {

nlohmann::json matrix_json(const MatrixXd& M) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < M.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::json vector_json(const VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

}  // namespace

std::string certificate_to_json_text(const LipschitzCertificate& cert) {
  nlohmann::json j;
  j["schema"] = "certificate/1";
  j["gamma"] = cert.gamma;
  j["gamma_sq"] = cert.gamma_sq;
  j["method"] = cert.method;
  j["projected"] = cert.projected;
  j["solver_status"] = cert.solver_status;
  j["solver_objective"] = cert.solver_objective;
  j["iterations"] = cert.iterations;
  j["wall_time_s"] = cert.wall_time_s;
  j["constraint_min_eigs"] = cert.constraint_min_eigs;
  j["layer_gammas"] = cert.layer_gammas;
  j["P1"] = matrix_json(cert.P1);
  j["P2"] = matrix_json(cert.P2);
  j["lambda"] = vector_json(cert.lambda);
  if (cert.Q_C.size()) j["Q_C"] = matrix_json(cert.Q_C);
  nlohmann::json dl = nlohmann::json::array();
  for (const auto& lam : cert.dense_lambdas) dl.push_back(vector_json(lam));
  j["dense_lambdas"] = dl;
  j["dense_out_weight"] = cert.dense_out_weight;
  return j.dump(2);
}

namespace {

MatrixXd matrix_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array()) throw DataError(what + ": expected an array of rows");
  const Index rows = static_cast<Index>(j.size());
  if (rows == 0) return MatrixXd(0, 0);
  const Index cols = static_cast<Index>(j.at(0).size());
  MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const auto& row = j.at(static_cast<std::size_t>(i));
    if (static_cast<Index>(row.size()) != cols)
      throw DataError(what + ": ragged rows");
    for (Index k = 0; k < cols; ++k)
      m(i, k) = row.at(static_cast<std::size_t>(k)).get<double>();
  }
  return m;
}

VectorXd vector_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array()) throw DataError(what + ": expected an array");
  VectorXd v(static_cast<Index>(j.size()));
  for (Index i = 0; i < v.size(); ++i)
    v(i) = j.at(static_cast<std::size_t>(i)).get<double>();
  return v;
}

}  // namespace

LipschitzCertificate certificate_from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("certificate JSON parse error: ") + e.what());
  }
  try {
    if (j.value("schema", "") != "certificate/1")
      throw DataError("certificate JSON: unsupported schema '" +
                      j.value("schema", std::string("<missing>")) + "'");
    LipschitzCertificate cert;
    cert.gamma = j.at("gamma").get<double>();
    cert.gamma_sq = j.at("gamma_sq").get<double>();
    cert.method = j.value("method", "");
    cert.projected = j.value("projected", false);
    cert.solver_status = j.value("solver_status", "");
    cert.solver_objective = j.value("solver_objective", 0.0);
    cert.iterations = j.value("iterations", 0);
    cert.wall_time_s = j.value("wall_time_s", 0.0);
    if (j.contains("constraint_min_eigs"))
      cert.constraint_min_eigs =
          j.at("constraint_min_eigs").get<std::vector<double>>();
    if (j.contains("layer_gammas"))
      cert.layer_gammas = j.at("layer_gammas").get<std::vector<double>>();
    cert.P1 = matrix_from_json(j.at("P1"), "P1");
    cert.P2 = matrix_from_json(j.at("P2"), "P2");
    cert.lambda = vector_from_json(j.at("lambda"), "lambda");
    if (j.contains("Q_C")) cert.Q_C = matrix_from_json(j.at("Q_C"), "Q_C");
    if (j.contains("dense_lambdas"))
      for (const auto& lam : j.at("dense_lambdas"))
        cert.dense_lambdas.push_back(vector_from_json(lam, "dense_lambdas"));
    cert.dense_out_weight = j.value("dense_out_weight", 1.0);
    return cert;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("certificate JSON: ") + e.what());
  }
}

}  // namespace lip2d
