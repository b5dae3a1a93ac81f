// SPDX-License-Identifier: MIT
#include "lip2d/realization.hpp"

#include <Eigen/Sparse>
#include <json.hpp>
#include <map>
#include <vector>

namespace lip2d {

namespace {

/// Slot index helpers for the shift-register layout. Slots are blocks of
/// c_in consecutive states. x1 slots (j1, j2), j1 in {1..w}, j2 in {0..w},
/// ordered lexicographically by (j1, j2); x2 symmetric with (j2, j1) roles
/// swapped.
struct SlotLayout {
  int w, c;
  Eigen::Index x1_slot(int j1, int j2) const {  // j1 >= 1
    return (static_cast<Eigen::Index>(j1 - 1) * (w + 1) + j2) * c;
  }
  Eigen::Index x2_slot(int j1, int j2) const {  // j2 >= 1
    return (static_cast<Eigen::Index>(j2 - 1) * (w + 1) + j1) * c;
  }
};

}  // namespace

RoesserRealization realize_conv(const ConvLayerSpec& layer) {
  const Kernel2D& k = layer.kernel;
  const int w = k.r_minus + k.r_plus;
  const int c = k.c_in;
  const Eigen::Index n = static_cast<Eigen::Index>(c) * w * (w + 1);
  const SlotLayout slot{w, c};

  RoesserRealization sys;
  sys.A11 = Eigen::MatrixXd::Zero(n, n);
  sys.A12 = Eigen::MatrixXd::Zero(n, n);
  sys.A21 = Eigen::MatrixXd::Zero(n, n);
  sys.A22 = Eigen::MatrixXd::Zero(n, n);
  sys.B1 = Eigen::MatrixXd::Zero(n, c);
  sys.B2 = Eigen::MatrixXd::Zero(n, c);
  sys.C1 = Eigen::MatrixXd::Zero(k.c_out, n);
  sys.C2 = Eigen::MatrixXd::Zero(k.c_out, n);
  sys.D = k.tap_m(0, 0);
  sys.f1 = Eigen::VectorXd::Zero(n);
  sys.f2 = Eigen::VectorXd::Zero(n);
  sys.g = layer.bias;
  sys.r = k.r_minus;

  auto set_identity = [c](Eigen::MatrixXd& m, Eigen::Index row,
                          Eigen::Index col) {
    m.block(row, col, c, c).setIdentity();
  };

  // The shifted kernel Ktilde(m) = K(m - r_minus) lives on {0..w}^2; slot
  // (j1, j2) holds the input value delayed by (j1, j2).
  for (int j1 = 1; j1 <= w; ++j1) {
    for (int j2 = 0; j2 <= w; ++j2) {
      // x1+ (j1, j2) <- x1 (j1-1, j2) for j1 >= 2 (horizontal shift).
      if (j1 >= 2) set_identity(sys.A11, slot.x1_slot(j1, j2), slot.x1_slot(j1 - 1, j2));
      // x1+ (1, j2) <- x2 (0, j2) for j2 >= 1 (partner block first row).
      else if (j2 >= 1) set_identity(sys.A12, slot.x1_slot(1, j2), slot.x2_slot(0, j2));
      // x1+ (1, 0) <- current input.
      else sys.B1.block(slot.x1_slot(1, 0), 0, c, c).setIdentity();
      // C1 reads every x1 slot's tap Ktilde(j1, j2), j1 >= 1.
      sys.C1.block(0, slot.x1_slot(j1, j2), k.c_out, c) = k.tap_m(j1, j2);
    }
  }
  for (int j2 = 1; j2 <= w; ++j2) {
    for (int j1 = 0; j1 <= w; ++j1) {
      // x2+ (j1, j2) <- x2 (j1, j2-1) for j2 >= 2 (vertical shift).
      if (j2 >= 2) set_identity(sys.A22, slot.x2_slot(j1, j2), slot.x2_slot(j1, j2 - 1));
      // x2+ (j1, 1) <- x1 (j1, 0) for j1 >= 1 (partner block first row).
      else if (j1 >= 1) set_identity(sys.A21, slot.x2_slot(j1, 1), slot.x1_slot(j1, 0));
      // x2+ (0, 1) <- current input.
      else sys.B2.block(slot.x2_slot(0, 1), 0, c, c).setIdentity();
    }
    // C2 reads the x2 first-row slots' taps Ktilde(0, j2), j2 >= 1.
    sys.C2.block(0, slot.x2_slot(0, j2), k.c_out, c) = k.tap_m(0, j2);
  }
  return sys;
}

Signal2D simulate(const RoesserRealization& sys, const Signal2D& u, int N1,
                  int N2) {
  if (N1 <= 0 || N2 <= 0) throw DataError("simulate: region must be positive");
  if (u.c != sys.nu())
    throw DataError("simulate: input channel mismatch");
  const Eigen::Index n1 = sys.n1(), n2 = sys.n2();

  Signal2D y(0, 0, N1, N2, static_cast<int>(sys.ny()));
  // x2row[i1] holds x2(i1, i2) for the current i2; x1 is carried along the
  // inner i1 sweep. Zero boundary: x1(0, .) = 0 and x2(., 0) = 0.
  std::vector<Eigen::VectorXd> x2row(N1, Eigen::VectorXd::Zero(n2));
  for (int i2 = 0; i2 < N2; ++i2) {
    Eigen::VectorXd x1 = Eigen::VectorXd::Zero(n1);
    for (int i1 = 0; i1 < N1; ++i1) {
      const Eigen::VectorXd v = u.value(i1 + sys.r, i2 + sys.r);
      const Eigen::VectorXd& x2 = x2row[i1];
      y.set_value(i1, i2,
                  sys.g + sys.C1 * x1 + sys.C2 * x2 + sys.D * v);
      const Eigen::VectorXd x1_next =
          sys.f1 + sys.A11 * x1 + sys.A12 * x2 + sys.B1 * v;
      x2row[i1] = sys.f2 + sys.A21 * x1 + sys.A22 * x2 + sys.B2 * v;
      x1 = x1_next;
    }
  }
  return y;
}

namespace {

/// Incremental orthonormal accumulator with twice-is-enough
/// reorthogonalization.
class SpanAccumulator {
 public:
  SpanAccumulator(Eigen::Index dim, double rel_tol)
      : dim_(dim), rel_tol_(rel_tol) {}

  void add_columns(const Eigen::MatrixXd& cols) {
    for (Eigen::Index c = 0; c < cols.cols(); ++c) add(cols.col(c));
  }

  void add(const Eigen::VectorXd& col) {
    const double orig = col.norm();
    scale_ = std::max(scale_, orig);
    if (orig <= rel_tol_ * std::max(scale_, 1e-300)) return;
    Eigen::VectorXd v = col;
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& q : basis_) v -= q.dot(v) * q;
    const double resid = v.norm();
    if (resid > rel_tol_ * std::max(scale_, 1e-300)) {
      v /= resid;
      basis_.push_back(std::move(v));
    }
  }

  Eigen::Index dim() const { return static_cast<Eigen::Index>(basis_.size()); }
  bool full() const { return dim() == dim_; }

  Eigen::MatrixXd matrix() const {
    Eigen::MatrixXd t(dim_, dim());
    for (Eigen::Index c = 0; c < dim(); ++c) t.col(c) = basis_[c];
    return t;
  }

 private:
  Eigen::Index dim_;
  double rel_tol_;
  double scale_ = 0.0;
  std::vector<Eigen::VectorXd> basis_;
};

}  // namespace

Eigen::MatrixXd reachable_subspace(const Eigen::MatrixXd& A11,
                                   const Eigen::MatrixXd& A12,
                                   const Eigen::MatrixXd& A21,
                                   const Eigen::MatrixXd& A22,
                                   const Eigen::MatrixXd& B1,
                                   const Eigen::MatrixXd& B2,
                                   double rank_tol) {
  const Eigen::Index n1 = A11.rows(), n2 = A22.rows();
  const Eigen::Index n = n1 + n2;
  const Eigen::Index m = B1.cols();
  if (n == 0) return Eigen::MatrixXd::Zero(0, 0);

  // Lifted transition maps as sparse matrices; realization A-blocks are 0/1
  // selections, so the level recursion stays cheap.
  Eigen::SparseMatrix<double> a10(n, n), a01(n, n);
  {
    std::vector<Eigen::Triplet<double>> t10, t01;
    for (Eigen::Index i = 0; i < n1; ++i) {
      for (Eigen::Index j = 0; j < n1; ++j)
        if (A11(i, j) != 0.0) t10.emplace_back(i, j, A11(i, j));
      for (Eigen::Index j = 0; j < n2; ++j)
        if (A12(i, j) != 0.0) t10.emplace_back(i, n1 + j, A12(i, j));
    }
    for (Eigen::Index i = 0; i < n2; ++i) {
      for (Eigen::Index j = 0; j < n1; ++j)
        if (A21(i, j) != 0.0) t01.emplace_back(n1 + i, j, A21(i, j));
      for (Eigen::Index j = 0; j < n2; ++j)
        if (A22(i, j) != 0.0) t01.emplace_back(n1 + i, n1 + j, A22(i, j));
    }
    a10.setFromTriplets(t10.begin(), t10.end());
    a01.setFromTriplets(t01.begin(), t01.end());
  }

  SpanAccumulator span(n, rank_tol);
  // Level a+b = 1.
  std::map<int, Eigen::MatrixXd> level;  // key a, matrix N(a, L-a)
  {
    Eigen::MatrixXd nb1 = Eigen::MatrixXd::Zero(n, m);
    nb1.topRows(n1) = B1;
    Eigen::MatrixXd nb2 = Eigen::MatrixXd::Zero(n, m);
    nb2.bottomRows(n2) = B2;
    span.add_columns(nb1);
    span.add_columns(nb2);
    level[1] = std::move(nb1);
    level[0] = std::move(nb2);
  }

  for (Eigen::Index depth = 2; depth <= n && !span.full(); ++depth) {
    std::map<int, Eigen::MatrixXd> next;
    bool any_nonzero = false;
    for (int a = 0; a <= static_cast<int>(depth); ++a) {
      Eigen::MatrixXd nab = Eigen::MatrixXd::Zero(n, m);
      const auto west = level.find(a - 1);  // N(a-1, b) at previous level
      if (west != level.end()) nab += a10 * west->second;
      const auto north = level.find(a);    // N(a, b-1) at previous level
      if (north != level.end()) nab += a01 * north->second;
      if (!nab.isZero(0.0)) {
        any_nonzero = true;
        span.add_columns(nab);
        next[a] = std::move(nab);
      }
    }
    if (!any_nonzero) break;  // all later levels are zero as well
    level = std::move(next);
  }
  return span.matrix();
}

Eigen::MatrixXd reachable_subspace(const RoesserRealization& sys,
                                   double rank_tol) {
  return reachable_subspace(sys.A11, sys.A12, sys.A21, sys.A22, sys.B1,
                            sys.B2, rank_tol);
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> split_reachable_basis(
    const Eigen::MatrixXd& T, Eigen::Index n1, Eigen::Index n2,
    double rank_tol) {
  auto block_basis = [rank_tol](const Eigen::MatrixXd& rows,
                                Eigen::Index dim) -> Eigen::MatrixXd {
    SpanAccumulator span(dim, rank_tol);
    span.add_columns(rows);
    if (span.full())  // canonicalize: any orthonormal basis of the full
      return Eigen::MatrixXd::Identity(dim, dim);  // space is congruent
    return span.matrix();
  };
  return {block_basis(T.topRows(n1), n1), block_basis(T.bottomRows(n2), n2)};
}

RoesserRealization project_realization(const RoesserRealization& sys,
                                       const Eigen::MatrixXd& T1,
                                       const Eigen::MatrixXd& T2) {
  if (T1.rows() != sys.n1() || T2.rows() != sys.n2())
    throw DataError("project_realization: basis row dimensions must match the state blocks");
  RoesserRealization red;
  red.A11 = T1.transpose() * sys.A11 * T1;
  red.A12 = T1.transpose() * sys.A12 * T2;
  red.A21 = T2.transpose() * sys.A21 * T1;
  red.A22 = T2.transpose() * sys.A22 * T2;
  red.B1 = T1.transpose() * sys.B1;
  red.B2 = T2.transpose() * sys.B2;
  red.C1 = sys.C1 * T1;
  red.C2 = sys.C2 * T2;
  red.D = sys.D;
  red.f1 = T1.transpose() * sys.f1;
  red.f2 = T2.transpose() * sys.f2;
  red.g = sys.g;
  red.r = sys.r;
  return red;
}

std::string realization_to_json_text(const RoesserRealization& sys) {
  nlohmann::json doc;
  auto put = [&doc](const char* name, const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
      rows.push_back(std::move(row));
    }
    doc[name] = std::move(rows);
  };
  put("A11", sys.A11); put("A12", sys.A12);
  put("A21", sys.A21); put("A22", sys.A22);
  put("B1", sys.B1); put("B2", sys.B2);
  put("C1", sys.C1); put("C2", sys.C2); put("D", sys.D);
  nlohmann::json f1 = nlohmann::json::array(), f2 = nlohmann::json::array(),
                 g = nlohmann::json::array();
  for (Eigen::Index i = 0; i < sys.f1.size(); ++i) f1.push_back(sys.f1(i));
  for (Eigen::Index i = 0; i < sys.f2.size(); ++i) f2.push_back(sys.f2(i));
  for (Eigen::Index i = 0; i < sys.g.size(); ++i) g.push_back(sys.g(i));
  doc["f1"] = std::move(f1);
  doc["f2"] = std::move(f2);
  doc["g"] = std::move(g);
  doc["r"] = sys.r;
  doc["n1"] = sys.n1();
  doc["n2"] = sys.n2();
  return doc.dump(2);
}

}  // namespace lip2d
