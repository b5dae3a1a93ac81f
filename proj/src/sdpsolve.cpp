// SPDX-License-Identifier: MIT
#include "lip2d/sdpsolve.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <utility>

#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <complex>
#include <lapacke.h>

#include "lip2d/errors.hpp"
#include "lip2d/rng.hpp"
#include "lip2d/signal2d.hpp"

namespace lip2d {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

double sym_min_eig(const MatrixXd& A) {
  if (A.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(A, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// Largest step alpha with X + alpha*DX psd, given the Cholesky of X;
/// +inf when DX keeps the cone for every step.
double max_step(const Eigen::LLT<MatrixXd>& lltX, const MatrixXd& DX) {
  const auto& L = lltX.matrixL();
  MatrixXd Y = L.solve(DX);
  MatrixXd C = L.solve(Y.transpose());  // L^{-1} DX L^{-T}
  const double m = sym_min_eig(0.5 * (C + C.transpose()));
  if (m >= 0.0) return std::numeric_limits<double>::infinity();
  return -1.0 / m;
}

struct CompiledBlock {
  Index n = 0;
  MatrixXd F0;    // prescaled
  double scale = 1.0;
  // (variable index, prescaled coefficient entries); ascending variable index
  std::vector<std::pair<Index, std::vector<SdpProblem::Entry>>> vars;
};

struct BlockState {
  MatrixXd S, Z, R1, Winv, Zinv, T, DS, DZ, DSa, DZa, Y;
  Eigen::LLT<MatrixXd> lltS, lltZ;
};

double tr_dot(const MatrixXd& A, const MatrixXd& B) {
  // trace(A*B) for symmetric B (so B(q,p) = B(p,q)).
  return (A.array() * B.array()).sum();
}

}  // namespace

std::pair<VectorXd, SolverReport> solve(const SdpProblem& problem,
                                        const SolveOptions& opts) {
  const auto t_start = std::chrono::steady_clock::now();
  SolverReport rep;
  const Index N = problem.num_vars();
  const int nb = problem.num_blocks();

  auto finish = [&](const VectorXd& x, std::string status) {
    rep.status = std::move(status);
    rep.objective = x.size() ? problem.objective().dot(x) : 0.0;
    rep.constraint_min_eigs.clear();
    for (int b = 0; b < nb; ++b)
      rep.constraint_min_eigs.push_back(sym_min_eig(problem.eval_block(b, x)));
    rep.wall_time_s = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - t_start)
                          .count();
    return std::make_pair(x, rep);
  };

  // Constant-block feasibility precheck (also catches the trivially
  // infeasible problem with no variables at all).
  for (int b = 0; b < nb; ++b) {
    const auto& blk = problem.block(b);
    if (!blk.coeffs.empty()) continue;
    const double scale = std::max(1.0, blk.F0.cwiseAbs().maxCoeff());
    if (sym_min_eig(blk.F0) < -1e-9 * scale)
      return finish(VectorXd::Zero(N), "infeasible");
  }
  if (N == 0) return finish(VectorXd(), "optimal");

  // Compile: prescale every block to unit max-abs entry; map variables.
  std::vector<CompiledBlock> cb(static_cast<std::size_t>(nb));
  std::vector<char> used(static_cast<std::size_t>(N), 0);
  for (int b = 0; b < nb; ++b) {
    const auto& blk = problem.block(b);
    auto& c = cb[static_cast<std::size_t>(b)];
    c.n = blk.n;
    double mx = blk.F0.size() ? blk.F0.cwiseAbs().maxCoeff() : 0.0;
    for (const auto& [var, entries] : blk.coeffs)
      for (const auto& e : entries) mx = std::max(mx, std::abs(e.v));
    c.scale = 1.0 / std::clamp(mx, 1e-8, 1e12);
    c.F0 = c.scale * blk.F0;
    c.vars.reserve(blk.coeffs.size());
    for (const auto& [var, entries] : blk.coeffs) {
      auto scaled = entries;
      for (auto& e : scaled) e.v *= c.scale;
      c.vars.emplace_back(var, std::move(scaled));
      used[static_cast<std::size_t>(var)] = 1;
    }
  }
  for (Index i = 0; i < N; ++i)
    if (!used[static_cast<std::size_t>(i)] &&
        problem.objective()(i) != 0.0)
      throw DataError("solve: objective variable appears in no constraint");

  const VectorXd& c_obj = problem.objective();
  const double c_norm = c_obj.size() ? c_obj.cwiseAbs().maxCoeff() : 0.0;

  // Interior initialization.
  VectorXd x = VectorXd::Zero(N);
  std::vector<BlockState> bs(static_cast<std::size_t>(nb));
  double sum_n = 0.0;
  for (int b = 0; b < nb; ++b) {
    auto& s = bs[static_cast<std::size_t>(b)];
    const Index n = cb[static_cast<std::size_t>(b)].n;
    const double eta = 10.0 + cb[static_cast<std::size_t>(b)].F0.norm();
    s.S = eta * MatrixXd::Identity(n, n);
    s.Z = eta * MatrixXd::Identity(n, n);
    sum_n += static_cast<double>(n);
  }

  MatrixXd M(N, N);
  VectorXd rd(N), rhs(N), dx_aff(N), dx(N);
  VectorXd best_x = x;
  double best_merit = std::numeric_limits<double>::infinity();
  double best_pinf = best_merit, best_dinf = best_merit, best_gap = best_merit;
  int small_steps = 0;

  // Endgame exit: the NT scaling can break down (or steps stall) once the
  // complementarity has all but collapsed. The best recorded iterate is then
  // primal-feasible to working precision with a marginally unconverged gap,
  // which is still a perfectly usable optimizer; accept it as optimal under
  // mildly relaxed tolerances rather than discarding the solve.
  auto finish_best = [&]() {
    rep.primal_infeas = best_pinf;
    rep.dual_infeas = best_dinf;
    rep.rel_gap = best_gap;
    // Primal feasibility guards the returned point's validity, so it only
    // gets a 10x concession; dual residual and gap merely bound how far the
    // objective sits above the true optimum (the safe side for minimization).
    const bool near = best_pinf <= 10.0 * opts.feas_tol &&
                      best_dinf <= 1e3 * opts.feas_tol &&
                      best_gap <= 1e3 * opts.gap_tol;
    return finish(best_x, near ? "optimal" : "numerical_trouble");
  };

  auto eval_scaled = [&](int b, const VectorXd& xv) {
    const auto& c = cb[static_cast<std::size_t>(b)];
    MatrixXd F = c.F0;
    for (const auto& [var, entries] : c.vars)
      for (const auto& e : entries) F(e.p, e.q) += xv(var) * e.v;
    return F;
  };

  for (int iter = 0;; ++iter) {
    rep.iterations = iter;
    // Residuals and convergence metrics.
    double pinf = 0.0, mu_sum = 0.0, dobj = 0.0;
    rd = c_obj;
    for (int b = 0; b < nb; ++b) {
      auto& s = bs[static_cast<std::size_t>(b)];
      const auto& c = cb[static_cast<std::size_t>(b)];
      s.R1 = s.S - eval_scaled(b, x);
      pinf = std::max(pinf, s.R1.norm() / (1.0 + c.F0.norm()));
      mu_sum += tr_dot(s.S, s.Z);
      dobj -= tr_dot(c.F0, s.Z);
      for (const auto& [var, entries] : c.vars) {
        double acc = 0.0;
        for (const auto& e : entries) acc += e.v * s.Z(e.q, e.p);
        rd(var) -= acc;
      }
    }
    const double mu = mu_sum / sum_n;
    const double dinf = rd.cwiseAbs().maxCoeff() / (1.0 + c_norm);
    const double pobj = c_obj.dot(x);
    const double relgap =
        std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
    if (opts.verbose)
      std::fprintf(stderr,
                   "  ip iter %3d  mu %.3e  pinf %.3e  dinf %.3e  gap %.3e  "
                   "obj %.9e\n",
                   iter, mu, pinf, dinf, relgap, pobj);

    const double merit = std::max({pinf, dinf, relgap});
    if (merit < best_merit) {
      best_merit = merit;
      best_x = x;
      best_pinf = pinf;
      best_dinf = dinf;
      best_gap = relgap;
    }
    if (pinf <= opts.feas_tol && dinf <= opts.feas_tol &&
        relgap <= opts.gap_tol) {
      rep.primal_infeas = pinf;
      rep.dual_infeas = dinf;
      rep.rel_gap = relgap;
      return finish(x, "optimal");
    }
    // Dual-ray heuristic: a (nearly) dual-feasible point with a hugely
    // positive dual objective certifies primal infeasibility.
    if (dinf <= 1e-7 && dobj > 1e8 && dobj > 1e6 * (1.0 + std::abs(pobj))) {
      rep.primal_infeas = pinf;
      rep.dual_infeas = dinf;
      rep.rel_gap = relgap;
      return finish(best_x, "infeasible");
    }
    if (iter >= opts.max_iters || small_steps >= 8) return finish_best();

    // Nesterov-Todd scaling point per block: W Z W = S,
    //   W^{-1} = L^{-T} U D^{1/2} U^T L^{-1} with S = L L^T, L^T Z L = U D U^T.
    bool scale_ok = true;
    for (int b = 0; b < nb && scale_ok; ++b) {
      auto& s = bs[static_cast<std::size_t>(b)];
      s.lltS.compute(s.S);
      s.lltZ.compute(s.Z);
      if (s.lltS.info() != Eigen::Success || s.lltZ.info() != Eigen::Success) {
        scale_ok = false;
        break;
      }
      const MatrixXd LS = s.lltS.matrixL();
      MatrixXd A = LS.transpose() * s.Z * LS;
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (A + A.transpose()));
      if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0) {
        scale_ok = false;
        break;
      }
      const MatrixXd E = es.eigenvectors() *
                         es.eigenvalues().cwiseSqrt().asDiagonal() *
                         es.eigenvectors().transpose();
      MatrixXd tmp = LS.transpose().triangularView<Eigen::Upper>().solve(E);
      MatrixXd Wi = LS.transpose()
                        .triangularView<Eigen::Upper>()
                        .solve(tmp.transpose())
                        .transpose();
      s.Winv = 0.5 * (Wi + Wi.transpose());
      s.Zinv = s.lltZ.solve(MatrixXd::Identity(s.Z.rows(), s.Z.cols()));
    }
    if (!scale_ok) return finish_best();

    // Schur complement M_ij = sum_b tr(F_i W^{-1} F_j W^{-1}).
    M.setZero();
    for (int b = 0; b < nb; ++b) {
      auto& s = bs[static_cast<std::size_t>(b)];
      const auto& c = cb[static_cast<std::size_t>(b)];
      const std::size_t nv = c.vars.size();
      s.Y.resize(c.n, c.n);
      for (std::size_t jj = 0; jj < nv; ++jj) {
        const Index vj = c.vars[jj].first;
        s.Y.setZero();
        for (const auto& e : c.vars[jj].second)
          s.Y.noalias() += e.v * (s.Winv.col(e.p) * s.Winv.row(e.q));
        for (std::size_t ii = 0; ii <= jj; ++ii) {
          double acc = 0.0;
          for (const auto& e : c.vars[ii].second) acc += e.v * s.Y(e.q, e.p);
          M(c.vars[ii].first, vj) += acc;
        }
      }
    }
    M.triangularView<Eigen::StrictlyLower>() =
        M.triangularView<Eigen::StrictlyUpper>().transpose();

    // Cholesky of M with escalating diagonal regularization. dpotrf('L')
    // clobbers only the lower triangle, so retries restore it from the
    // untouched strict upper triangle plus the saved diagonal.
    const VectorXd Mdiag = M.diagonal();
    const double mdiag = std::max(1.0, Mdiag.cwiseAbs().maxCoeff());
    double reg = 0.0;
    int info = -1;
    for (int attempt = 0; attempt < 4; ++attempt) {
      if (attempt > 0) {
        reg = (reg == 0.0) ? 1e-13 * mdiag : reg * 100.0;
        M.diagonal() = Mdiag.array() + reg;
        M.triangularView<Eigen::StrictlyLower>() =
            M.triangularView<Eigen::StrictlyUpper>().transpose();
      }
      info = LAPACKE_dpotrf(LAPACK_COL_MAJOR, 'L',
                            static_cast<lapack_int>(N), M.data(),
                            static_cast<lapack_int>(N));
      if (info == 0) break;
    }
    if (info != 0) return finish_best();

    auto assemble_rhs = [&](double sigma_mu) {
      rhs = -rd;
      for (int b = 0; b < nb; ++b) {
        auto& s = bs[static_cast<std::size_t>(b)];
        const auto& c = cb[static_cast<std::size_t>(b)];
        // T = W^{-1} (R1 + Rc) W^{-1}, Rc = sigma*mu*Z^{-1} - S.
        MatrixXd RcR1 = s.R1 - s.S;
        if (sigma_mu != 0.0) RcR1 += sigma_mu * s.Zinv;
        s.T.noalias() = s.Winv * RcR1 * s.Winv;
        for (const auto& [var, entries] : c.vars) {
          double acc = 0.0;
          for (const auto& e : entries) acc += e.v * s.T(e.q, e.p);
          rhs(var) += acc;
        }
      }
    };
    auto directions = [&](const VectorXd& dxv, bool affine) {
      for (int b = 0; b < nb; ++b) {
        auto& s = bs[static_cast<std::size_t>(b)];
        const auto& c = cb[static_cast<std::size_t>(b)];
        MatrixXd dF = MatrixXd::Zero(c.n, c.n);
        for (const auto& [var, entries] : c.vars)
          for (const auto& e : entries) dF(e.p, e.q) += dxv(var) * e.v;
        MatrixXd ds = dF - s.R1;
        // DZ = W^{-1} (Rc - DS) W^{-1} = T - W^{-1} dF W^{-1}
        MatrixXd dz = s.T - s.Winv * dF * s.Winv;
        dz = 0.5 * (dz + dz.transpose());
        ds = 0.5 * (ds + ds.transpose());
        if (affine) {
          s.DSa = std::move(ds);
          s.DZa = std::move(dz);
        } else {
          s.DS = std::move(ds);
          s.DZ = std::move(dz);
        }
      }
    };
    auto solve_newton = [&](VectorXd& out) {
      out = rhs;
      LAPACKE_dpotrs(LAPACK_COL_MAJOR, 'L', static_cast<lapack_int>(N), 1,
                     M.data(), static_cast<lapack_int>(N), out.data(),
                     static_cast<lapack_int>(N));
    };

    // Predictor (sigma = 0).
    assemble_rhs(0.0);
    solve_newton(dx_aff);
    directions(dx_aff, true);
    double apa = 1.0, ada = 1.0;
    for (int b = 0; b < nb; ++b) {
      auto& s = bs[static_cast<std::size_t>(b)];
      apa = std::min(apa, max_step(s.lltS, s.DSa));
      ada = std::min(ada, max_step(s.lltZ, s.DZa));
    }
    double mu_aff = 0.0;
    for (int b = 0; b < nb; ++b) {
      auto& s = bs[static_cast<std::size_t>(b)];
      mu_aff += tr_dot(s.S + apa * s.DSa, s.Z + ada * s.DZa);
    }
    mu_aff = std::max(mu_aff / sum_n, 0.0);
    double sigma = std::pow(mu_aff / mu, 3.0);
    sigma = std::clamp(sigma, 1e-8, 1.0);

    // Corrector with the centering target sigma*mu.
    assemble_rhs(sigma * mu);
    solve_newton(dx);
    directions(dx, false);
    const double tau = (mu < 1e-7) ? 0.99 : 0.98;
    double ap = std::numeric_limits<double>::infinity();
    double ad = std::numeric_limits<double>::infinity();
    for (int b = 0; b < nb; ++b) {
      auto& s = bs[static_cast<std::size_t>(b)];
      ap = std::min(ap, max_step(s.lltS, s.DS));
      ad = std::min(ad, max_step(s.lltZ, s.DZ));
    }
    ap = std::min(1.0, tau * ap);
    ad = std::min(1.0, tau * ad);
    x += ap * dx;
    for (int b = 0; b < nb; ++b) {
      auto& s = bs[static_cast<std::size_t>(b)];
      s.S += ap * s.DS;
      s.Z += ad * s.DZ;
    }
    small_steps = (std::max(ap, ad) < 1e-4) ? small_steps + 1 : 0;
  }
}

MatrixXd materialize_cascade_lmi(const LureSystem& sys,
                                 const LipschitzCertificate& cert) {
  const Index n1 = sys.n1(), n2 = sys.n2(), nz = sys.nz;
  const Index nu = sys.nu(), ny = sys.ny();
  if (cert.P1.rows() != n1 || cert.P2.rows() != n2)
    throw DataError("materialize_cascade_lmi: storage block dimensions do not match the system");
  if (nz > 0 && cert.lambda.size() != nz)
    throw DataError("materialize_cascade_lmi: multiplier count does not match the nonlinearity channels");
  MatrixXd QC = cert.Q_C.size()
                    ? cert.Q_C
                    : MatrixXd(-MatrixXd::Identity(ny, ny));
  if (QC.rows() != ny)
    throw DataError("materialize_cascade_lmi: junction matrix dimension mismatch");

  const Index cols = n1 + n2 + nz + nu;
  const Index rows = 2 * (n1 + n2) + 2 * nz + ny + nu;
  MatrixXd L = MatrixXd::Zero(rows, cols);
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
  L.block(r0, 0, n1, n1).setIdentity();
  r0 += n1;
  L.block(r0, n1, n2, n2).setIdentity();
  r0 += n2;
  L.block(r0, 0, nz, n1) = sys.mC11;
  L.block(r0, n1, nz, n2) = sys.mC12;
  L.block(r0, n1 + n2, nz, nz) = sys.mD11;
  L.block(r0, n1 + n2 + nz, nz, nu) = sys.mD12;
  r0 += nz;
  L.block(r0, n1 + n2, nz, nz).setIdentity();
  r0 += nz;
  L.block(r0, 0, ny, n1) = sys.mC21;
  L.block(r0, n1, ny, n2) = sys.mC22;
  L.block(r0, n1 + n2, ny, nz) = sys.mD21;
  L.block(r0, n1 + n2 + nz, ny, nu) = sys.mD22;
  r0 += ny;
  L.block(r0, n1 + n2 + nz, nu, nu).setIdentity();

  MatrixXd Theta = MatrixXd::Zero(rows, rows);
  Index t0 = 0;
  Theta.block(t0, t0, n1, n1) = -cert.P1;
  t0 += n1;
  Theta.block(t0, t0, n2, n2) = -cert.P2;
  t0 += n2;
  Theta.block(t0, t0, n1, n1) = cert.P1;
  t0 += n1;
  Theta.block(t0, t0, n2, n2) = cert.P2;
  t0 += n2;
  if (nz > 0) {
    // slope supply on (z, w): [[0, -Lam], [-Lam, 2 Lam]]
    const MatrixXd Lam = cert.lambda.asDiagonal();
    Theta.block(t0, t0 + nz, nz, nz) = -Lam;
    Theta.block(t0 + nz, t0, nz, nz) = -Lam;
    Theta.block(t0 + nz, t0 + nz, nz, nz) = 2.0 * Lam;
  }
  t0 += 2 * nz;
  // outer supply on (y, u): [[Q_C, 0], [0, gamma^2 I]]
  Theta.block(t0, t0, ny, ny) = QC;
  t0 += ny;
  Theta.block(t0, t0, nu, nu) =
      cert.gamma_sq * MatrixXd::Identity(nu, nu);

  // A projected certificate only claims the inequality on reachable joint
  // states; re-verify it under the same (deterministically recomputed)
  // congruence blkdiag(T, I over the w and u coordinates).
  if (cert.projected) {
    const MatrixXd T = reachable_subspace(sys);
    MatrixXd Lp(L.rows(), T.cols() + nz + nu);
    Lp.leftCols(T.cols()) = L.leftCols(n1 + n2) * T;
    Lp.rightCols(nz + nu) = L.rightCols(nz + nu);
    L = std::move(Lp);
  }

  MatrixXd G = L.transpose() * Theta * L;
  return 0.5 * (G + G.transpose());
}

MatrixXd materialize_dense_chain_lmi(
    const std::vector<DenseLayerSpec>& dense_layers, Index repeat,
    const LipschitzCertificate& cert) {
  if (dense_layers.empty())
    throw DataError("materialize_dense_chain_lmi: empty dense stack");
  const std::size_t L = dense_layers.size();
  if (cert.dense_lambdas.size() + 1 != L)
    throw DataError("materialize_dense_chain_lmi: need one multiplier vector per internal activation");
  const Index cq = cert.Q_C.size() ? cert.Q_C.rows() : 1;
  const MatrixXd QC =
      cert.Q_C.size() ? cert.Q_C : MatrixXd(-MatrixXd::Identity(1, 1));
  if (dense_layers.front().weight.cols() != repeat * cq)
    throw DataError("materialize_dense_chain_lmi: first weight width must equal repeat * junction dimension");

  std::vector<Index> dims;
  dims.push_back(repeat * cq);
  for (std::size_t k = 0; k + 1 < L; ++k)
    dims.push_back(dense_layers[k].weight.rows());
  dims.push_back(dense_layers.back().weight.rows());
  Index total = 0;
  for (Index d : dims) total += d;

  MatrixXd Mm = MatrixXd::Zero(total, total);
  // R_L = I_repeat (x) (-Q_C)
  for (Index rblk = 0; rblk < repeat; ++rblk)
    Mm.block(rblk * cq, rblk * cq, cq, cq) = -QC;
  Index off = dims[0];
  Index prev_off = 0;
  for (std::size_t k = 1; k <= L; ++k) {
    const MatrixXd& W = dense_layers[k - 1].weight;
    const Index nk = dims[k];
    if (k < L) {
      const VectorXd& lam = cert.dense_lambdas[k - 1];
      if (lam.size() != nk)
        throw DataError("materialize_dense_chain_lmi: multiplier length mismatch");
      const MatrixXd coupling = lam.asDiagonal() * W;
      Mm.block(off, prev_off, nk, dims[k - 1]) = -coupling;
      Mm.block(prev_off, off, dims[k - 1], nk) = -coupling.transpose();
      Mm.block(off, off, nk, nk) = MatrixXd((2.0 * lam).asDiagonal());
    } else {
      Mm.block(off, prev_off, nk, dims[k - 1]) = -W;
      Mm.block(prev_off, off, dims[k - 1], nk) = -W.transpose();
      Mm.block(off, off, nk, nk) =
          cert.dense_out_weight * MatrixXd::Identity(nk, nk);
    }
    prev_off = off;
    off += nk;
  }
  return Mm;
}

ValidationReport validate_certificate(const NetworkSpec& spec,
                                      const LipschitzCertificate& cert,
                                      const ValidationOptions& opts) {
  ValidationReport out;
  out.trials = opts.trials;
  if (!(cert.gamma >= 0.0) || !std::isfinite(cert.gamma)) {
    out.failure_detail = "gamma is not a finite nonnegative number";
    return out;
  }

  LureSystem sys = assemble_lure(spec.conv_layers);
  const Index ny = sys.ny();
  MatrixXd QCneg = cert.Q_C.size()
                       ? MatrixXd(-cert.Q_C)
                       : MatrixXd(MatrixXd::Identity(ny, ny));

  // (a) LMI eigen-checks on independently materialized matrices.
  out.lmi_min_eigs.push_back(sym_min_eig(materialize_cascade_lmi(sys, cert)));
  if (!spec.dense_layers.empty()) {
    const auto [d_l, c_l] = flatten_dims(spec);
    out.lmi_min_eigs.push_back(sym_min_eig(materialize_dense_chain_lmi(
        spec.dense_layers, static_cast<Index>(d_l) * d_l, cert)));
  }
  out.min_lmi_eig =
      *std::min_element(out.lmi_min_eigs.begin(), out.lmi_min_eigs.end());
  bool ok = true;
  if (out.min_lmi_eig < opts.lmi_eig_tol) {
    ok = false;
    out.failure_detail = "LMI eigen-check failed: min eigenvalue " +
                         std::to_string(out.min_lmi_eig);
  }

  // Eigenvalue-based weighted-output factor for the gain probe.
  Eigen::SelfAdjointEigenSolver<MatrixXd> esq(QCneg);
  const MatrixXd Wy = esq.eigenvectors() *
                      esq.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                      esq.eigenvectors().transpose();

  const int N1 = opts.rect_n1, N2 = opts.rect_n2;
  const Index nu = sys.nu(), nz = sys.nz;
  const MatrixXd Lam =
      nz > 0 ? MatrixXd(cert.lambda.asDiagonal()) : MatrixXd();

  double worst_point = std::numeric_limits<double>::infinity();
  double worst_sum = std::numeric_limits<double>::infinity();
  double max_ratio = 0.0;
  int worst_trial = -1, worst_i1 = -1, worst_i2 = -1;

  for (int t = 0; t < opts.trials; ++t) {
    Rng rng = Rng::derived(opts.seed, static_cast<std::uint64_t>(t));
    Signal2D u1(sys.r, sys.r, N1, N2, static_cast<int>(nu));
    Signal2D u2 = u1;
    const double pert = (t % 3 == 0) ? 1.0 : ((t % 3 == 1) ? 1e-2 : 10.0);
    for (Index i = 0; i < u1.data.size(); ++i) {
      u1.data(i) = rng.normal();
      u2.data(i) = u1.data(i) + pert * rng.normal();
    }
    LureTrajectory t1 = lure_forward(sys, spec.activation, u1, N1, N2);
    LureTrajectory t2 = lure_forward(sys, spec.activation, u2, N1, N2);

    double supply_sum = 0.0, u_en = 0.0, y_en = 0.0;
    for (int i2 = 0; i2 < N2; ++i2)
      for (int i1 = 0; i1 < N1; ++i1) {
        const VectorXd ut = u2.value(i1 + sys.r, i2 + sys.r) -
                            u1.value(i1 + sys.r, i2 + sys.r);
        const VectorXd yt = t2.y.value(i1, i2) - t1.y.value(i1, i2);
        const VectorXd x1t = t2.x1_at(i1, i2) - t1.x1_at(i1, i2);
        const VectorXd x2t = t2.x2_at(i1, i2) - t1.x2_at(i1, i2);
        const VectorXd x1n = t2.x1_at(i1 + 1, i2) - t1.x1_at(i1 + 1, i2);
        const VectorXd x2n = t2.x2_at(i1, i2 + 1) - t1.x2_at(i1, i2 + 1);
        double s = cert.gamma_sq * ut.squaredNorm() - yt.dot(QCneg * yt);
        if (nz > 0) {
          const VectorXd zt = t2.z.value(i1, i2) - t1.z.value(i1, i2);
          const VectorXd wt = t2.w.value(i1, i2) - t1.w.value(i1, i2);
          s += 2.0 * wt.dot(Lam * wt) - 2.0 * zt.dot(Lam * wt);
        }
        supply_sum += s;
        u_en += ut.squaredNorm();
        y_en += yt.dot(QCneg * yt);
        const double resid = x1t.dot(cert.P1 * x1t) + x2t.dot(cert.P2 * x2t) +
                             s - x1n.dot(cert.P1 * x1n) -
                             x2n.dot(cert.P2 * x2n);
        if (resid < worst_point) {
          worst_point = resid;
          worst_trial = t;
          worst_i1 = i1;
          worst_i2 = i2;
        }
      }
    double bound = 0.0;
    for (int i2 = 0; i2 < N2; ++i2) {
      const VectorXd x1n = t2.x1_at(N1, i2) - t1.x1_at(N1, i2);
      bound += x1n.dot(cert.P1 * x1n);
    }
    for (int i1 = 0; i1 < N1; ++i1) {
      const VectorXd x2n = t2.x2_at(i1, N2) - t1.x2_at(i1, N2);
      bound += x2n.dot(cert.P2 * x2n);
    }
    worst_sum = std::min(worst_sum, supply_sum - bound);
    // The cascade supply certifies the (-Q_C)-weighted output energy against
    // gamma_sq (the network-level gamma additionally carries the chain
    // out-weight), so the rectangle probe compares against sqrt(gamma_sq).
    if (u_en > 0.0 && cert.gamma_sq > 0.0)
      max_ratio = std::max(
          max_ratio, std::sqrt(std::max(y_en, 0.0)) /
                         std::sqrt(cert.gamma_sq * u_en));
  }
  out.worst_pointwise_residual = worst_point;
  out.worst_summed_residual = worst_sum;
  out.max_gain_ratio = max_ratio;
  if (ok && worst_point < opts.pointwise_tol) {
    ok = false;
    out.failure_detail =
        "pointwise dissipation violated: residual " +
        std::to_string(worst_point) + " at trial " + std::to_string(worst_trial) +
        " node (" + std::to_string(worst_i1) + "," + std::to_string(worst_i2) +
        ")";
  }
  if (ok && worst_sum < opts.pointwise_tol * N1 * N2) {
    ok = false;
    out.failure_detail = "summed dissipation inequality violated: slack " +
                         std::to_string(worst_sum);
  }
  if (ok && max_ratio > 1.0 + opts.gain_slack) {
    ok = false;
    out.failure_detail =
        "conv-rectangle gain probe exceeded the certified level: ratio " +
        std::to_string(max_ratio);
  }

  // Full forward-map incremental gain probe (skipped when the geometry does
  // not admit the stated input size).
  double net_ratio = 0.0;
  try {
    const int d1 = spec.input_height;
    const Index in_dim = static_cast<Index>(d1) * spec.input_width *
                         spec.input_channels;
    for (int t = 0; t < opts.trials; ++t) {
      Rng rng = Rng::derived(opts.seed ^ 0x9e3779b97f4a7c15ull,
                             static_cast<std::uint64_t>(t));
      VectorXd v1(in_dim), v2(in_dim);
      for (Index i = 0; i < in_dim; ++i) {
        v1(i) = rng.normal();
        v2(i) = v1(i) + rng.normal();
      }
      const VectorXd y1 = network_forward(spec, v1);
      const VectorXd y2 = network_forward(spec, v2);
      const double den = cert.gamma * (v2 - v1).norm();
      if (den > 0.0)
        net_ratio = std::max(net_ratio, (y2 - y1).norm() / den);
    }
  } catch (const GeometryError&) {
    net_ratio = 0.0;
  }
  out.max_network_gain_ratio = net_ratio;
  if (ok && net_ratio > 1.0 + opts.gain_slack) {
    ok = false;
    out.failure_detail =
        "network incremental-gain probe exceeded the certified level: ratio " +
        std::to_string(net_ratio);
  }

  out.passed = ok;
  return out;
}

}  // namespace lip2d
