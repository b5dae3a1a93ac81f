// SPDX-License-Identifier: MIT
#include "lip2d/lure.hpp"

#include "lip2d/realization.hpp"

namespace lip2d {

LureSystem assemble_lure(const std::vector<ConvLayerSpec>& conv_layers) {
  if (conv_layers.empty())
    throw DataError("assemble_lure: need at least one layer");
  const std::size_t l = conv_layers.size();

  std::vector<RoesserRealization> subs;
  subs.reserve(l);
  int channels = conv_layers.front().kernel.c_in;
  for (std::size_t k = 0; k < l; ++k) {
    if (conv_layers[k].kernel.c_in != channels)
      throw DataError("assemble_lure: channel chaining violated at layer " +
                      std::to_string(k + 1));
    channels = conv_layers[k].kernel.c_out;
    subs.push_back(realize_conv(conv_layers[k]));
  }

  LureSystem sys;
  Eigen::Index n1 = 0, n2 = 0, nz = 0;
  sys.layer_boundaries.resize(l);
  for (std::size_t k = 0; k < l; ++k) {
    auto& slice = sys.layer_boundaries[k];
    slice.x1_off = n1; slice.x1_n = subs[k].n1();
    slice.x2_off = n2; slice.x2_n = subs[k].n2();
    n1 += subs[k].n1();
    n2 += subs[k].n2();
    if (k + 1 < l) {  // interconnection slice k: layer k's activated output
      slice.z_off = nz;
      slice.z_n = subs[k].ny();
      nz += subs[k].ny();
    }
  }
  const Eigen::Index nu = subs.front().nu();
  const Eigen::Index ny = subs.back().ny();
  sys.nz = nz;

  sys.mA11 = Eigen::MatrixXd::Zero(n1, n1);
  sys.mA12 = Eigen::MatrixXd::Zero(n1, n2);
  sys.mA21 = Eigen::MatrixXd::Zero(n2, n1);
  sys.mA22 = Eigen::MatrixXd::Zero(n2, n2);
  sys.mB11 = Eigen::MatrixXd::Zero(n1, nz);
  sys.mB12 = Eigen::MatrixXd::Zero(n1, nu);
  sys.mB21 = Eigen::MatrixXd::Zero(n2, nz);
  sys.mB22 = Eigen::MatrixXd::Zero(n2, nu);
  sys.mC11 = Eigen::MatrixXd::Zero(nz, n1);
  sys.mC12 = Eigen::MatrixXd::Zero(nz, n2);
  sys.mC21 = Eigen::MatrixXd::Zero(ny, n1);
  sys.mC22 = Eigen::MatrixXd::Zero(ny, n2);
  sys.mD11 = Eigen::MatrixXd::Zero(nz, nz);
  sys.mD12 = Eigen::MatrixXd::Zero(nz, nu);
  sys.mD21 = Eigen::MatrixXd::Zero(ny, nz);
  sys.mD22 = Eigen::MatrixXd::Zero(ny, nu);
  sys.f1 = Eigen::VectorXd::Zero(n1);
  sys.f2 = Eigen::VectorXd::Zero(n2);
  sys.g1 = Eigen::VectorXd::Zero(nz);
  sys.g2 = conv_layers.back().bias;
  sys.r = 0;

  for (std::size_t k = 0; k < l; ++k) {
    const auto& sub = subs[k];
    const auto& sl = sys.layer_boundaries[k];
    sys.r += sub.r;
    sys.mA11.block(sl.x1_off, sl.x1_off, sub.n1(), sub.n1()) = sub.A11;
    sys.mA12.block(sl.x1_off, sl.x2_off, sub.n1(), sub.n2()) = sub.A12;
    sys.mA21.block(sl.x2_off, sl.x1_off, sub.n2(), sub.n1()) = sub.A21;
    sys.mA22.block(sl.x2_off, sl.x2_off, sub.n2(), sub.n2()) = sub.A22;

    if (k == 0) {  // layer 1 is driven by the external input
      sys.mB12.block(sl.x1_off, 0, sub.n1(), nu) = sub.B1;
      sys.mB22.block(sl.x2_off, 0, sub.n2(), nu) = sub.B2;
    } else {  // layer k is driven by interconnection slice k-1
      const auto& prev = sys.layer_boundaries[k - 1];
      sys.mB11.block(sl.x1_off, prev.z_off, sub.n1(), prev.z_n) = sub.B1;
      sys.mB21.block(sl.x2_off, prev.z_off, sub.n2(), prev.z_n) = sub.B2;
    }

    if (k + 1 < l) {  // pre-activation output of layer k goes into z
      sys.mC11.block(sl.z_off, sl.x1_off, sl.z_n, sub.n1()) = sub.C1;
      sys.mC12.block(sl.z_off, sl.x2_off, sl.z_n, sub.n2()) = sub.C2;
      sys.g1.segment(sl.z_off, sl.z_n) = conv_layers[k].bias;
      if (k == 0) {
        sys.mD12.block(sl.z_off, 0, sl.z_n, nu) = sub.D;
      } else {
        const auto& prev = sys.layer_boundaries[k - 1];
        sys.mD11.block(sl.z_off, prev.z_off, sl.z_n, prev.z_n) = sub.D;
      }
    } else {  // layer l's output is the system output y
      sys.mC21.block(0, sl.x1_off, ny, sub.n1()) = sub.C1;
      sys.mC22.block(0, sl.x2_off, ny, sub.n2()) = sub.C2;
      if (k == 0) {
        sys.mD22 = sub.D;
      } else {
        const auto& prev = sys.layer_boundaries[k - 1];
        sys.mD21.block(0, prev.z_off, ny, prev.z_n) = sub.D;
      }
    }
  }
  return sys;
}

void check_cascade_structure(const LureSystem& sys) {
  // Every z row may depend only on strictly earlier interconnection slices.
  const std::size_t l = sys.layer_boundaries.size();
  for (std::size_t k = 0; k + 1 < l; ++k) {
    const auto& row = sys.layer_boundaries[k];
    for (std::size_t j = k; j + 1 < l; ++j) {
      const auto& col = sys.layer_boundaries[j];
      if (!sys.mD11.block(row.z_off, col.z_off, row.z_n, col.z_n).isZero(0.0))
        throw DataError(
            "lure system is not a cascade: z slice " + std::to_string(k + 1) +
            " depends on interconnection slice " + std::to_string(j + 1));
    }
  }
}

LureTrajectory lure_forward(const LureSystem& sys, Activation act,
                            const Signal2D& u, int N1, int N2,
                            const Signal2D* ref_z) {
  if (N1 <= 0 || N2 <= 0)
    throw DataError("lure_forward: region must be positive");
  if (u.c != sys.nu()) throw DataError("lure_forward: input channel mismatch");
  if (ref_z && ref_z->c != sys.nz)
    throw DataError("lure_forward: reference z channel mismatch");
  check_cascade_structure(sys);

  const Eigen::Index n1 = sys.n1(), n2 = sys.n2(), nz = sys.nz;
  LureTrajectory traj;
  traj.N1 = N1;
  traj.N2 = N2;
  traj.y = Signal2D(0, 0, N1, N2, static_cast<int>(sys.ny()));
  traj.z = Signal2D(0, 0, N1, N2, static_cast<int>(nz));
  traj.w = Signal2D(0, 0, N1, N2, static_cast<int>(nz));
  traj.x1s.assign(static_cast<std::size_t>(N1 + 1) * N2,
                  Eigen::VectorXd::Zero(n1));
  traj.x2s.assign(static_cast<std::size_t>(N1) * (N2 + 1),
                  Eigen::VectorXd::Zero(n2));

  auto x1_ref = [&](int i1, int i2) -> Eigen::VectorXd& {
    return traj.x1s[static_cast<std::size_t>(i2) * (N1 + 1) + i1];
  };
  auto x2_ref = [&](int i1, int i2) -> Eigen::VectorXd& {
    return traj.x2s[static_cast<std::size_t>(i2) * N1 + i1];
  };

  for (int i2 = 0; i2 < N2; ++i2) {
    for (int i1 = 0; i1 < N1; ++i1) {
      const Eigen::VectorXd v = u.value(i1 + sys.r, i2 + sys.r);
      const Eigen::VectorXd& x1 = x1_ref(i1, i2);
      const Eigen::VectorXd& x2 = x2_ref(i1, i2);

      // Forward substitution through the strictly lower-triangular
      // interconnection: slice k's z needs only w of earlier slices.
      Eigen::VectorXd z = Eigen::VectorXd::Zero(nz);
      Eigen::VectorXd w = Eigen::VectorXd::Zero(nz);
      if (nz > 0) {
        const Eigen::VectorXd z_base =
            sys.g1 + sys.mC11 * x1 + sys.mC12 * x2 + sys.mD12 * v;
        for (const auto& sl : sys.layer_boundaries) {
          if (sl.z_n == 0) continue;
          z.segment(sl.z_off, sl.z_n) =
              z_base.segment(sl.z_off, sl.z_n) +
              sys.mD11.middleRows(sl.z_off, sl.z_n) * w;
          for (Eigen::Index i = 0; i < sl.z_n; ++i) {
            const Eigen::Index idx = sl.z_off + i;
            const double zi = z(idx);
            if (ref_z) {
              const double zr = ref_z->get(i1, i2, static_cast<int>(idx));
              w(idx) = activation_eval(act, zi + zr) - activation_eval(act, zr);
            } else {
              w(idx) = activation_eval(act, zi);
            }
          }
        }
      }

      traj.z.set_value(i1, i2, z);
      traj.w.set_value(i1, i2, w);
      traj.y.set_value(i1, i2, sys.g2 + sys.mC21 * x1 + sys.mC22 * x2 +
                                   sys.mD21 * w + sys.mD22 * v);
      x1_ref(i1 + 1, i2) =
          sys.f1 + sys.mA11 * x1 + sys.mA12 * x2 + sys.mB11 * w + sys.mB12 * v;
      x2_ref(i1, i2 + 1) =
          sys.f2 + sys.mA21 * x1 + sys.mA22 * x2 + sys.mB21 * w + sys.mB22 * v;
    }
  }
  return traj;
}

LureSystem error_system(const LureSystem& sys) {
  LureSystem err = sys;
  err.f1.setZero();
  err.f2.setZero();
  err.g1.setZero();
  err.g2.setZero();
  return err;
}

Eigen::MatrixXd reachable_subspace(const LureSystem& sys, double rank_tol) {
  const Eigen::Index n1 = sys.n1(), n2 = sys.n2();
  Eigen::MatrixXd B1(n1, sys.nz + sys.nu());
  B1 << sys.mB11, sys.mB12;
  Eigen::MatrixXd B2(n2, sys.nz + sys.nu());
  B2 << sys.mB21, sys.mB22;
  return reachable_subspace(sys.mA11, sys.mA12, sys.mA21, sys.mA22, B1, B2,
                            rank_tol);
}

}  // namespace lip2d
