// SPDX-License-Identifier: MIT
#include "lip2d/signal2d.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <complex>
#include <sstream>
#include <vector>

#include "lip2d/rng.hpp"

namespace lip2d {

Signal2D conv_forward(const ConvLayerSpec& layer, const Signal2D& u,
                      bool include_bias) {
  const Kernel2D& k = layer.kernel;
  if (u.c != k.c_in)
    throw DataError("conv_forward: input has " + std::to_string(u.c) +
                    " channels, kernel expects " + std::to_string(k.c_in));
  // Output support [u_lo - r_minus, u_hi + r_plus]: y(i) = sum_j K(j) u(i-j)
  // with j in [-r_minus, r_plus], so i = p + j over input support p.
  Signal2D y(u.o1 - k.r_minus, u.o2 - k.r_minus,
             u.n1 + k.width() - 1, u.n2 + k.width() - 1, k.c_out);
  const int w = k.width();
  // Scatter form: input node p contributes K(j) u(p) to y(p + j).
  for (int m1 = 0; m1 < w; ++m1) {
    const int j1 = m1 - k.r_minus;
    for (int m2 = 0; m2 < w; ++m2) {
      const int j2 = m2 - k.r_minus;
      const Eigen::MatrixXd& tap = k.tap_m(m1, m2);
      if (tap.isZero(0.0)) continue;
      for (int p2 = u.o2; p2 <= u.hi2(); ++p2) {
        for (int p1 = u.o1; p1 <= u.hi1(); ++p1) {
          y.data.segment(y.index(p1 + j1, p2 + j2, 0), k.c_out).noalias() +=
              tap * u.data.segment(u.index(p1, p2, 0), k.c_in);
        }
      }
    }
  }
  if (include_bias)
    for (int q2 = y.o2; q2 <= y.hi2(); ++q2)
      for (int q1 = y.o1; q1 <= y.hi1(); ++q1)
        y.data.segment(y.index(q1, q2, 0), k.c_out) += layer.bias;
  return y;
}

Signal2D conv_adjoint(const ConvLayerSpec& layer, const Signal2D& y) {
  const Kernel2D& k = layer.kernel;
  if (y.c != k.c_out)
    throw DataError("conv_adjoint: signal has " + std::to_string(y.c) +
                    " channels, kernel produces " + std::to_string(k.c_out));
  // x(i) = sum_j K(j)^T y(i + j); reachable window [y_lo - r_plus,
  // y_hi + r_minus].
  Signal2D x(y.o1 - k.r_plus, y.o2 - k.r_plus,
             y.n1 + k.width() - 1, y.n2 + k.width() - 1, k.c_in);
  const int w = k.width();
  for (int m1 = 0; m1 < w; ++m1) {
    const int j1 = m1 - k.r_minus;
    for (int m2 = 0; m2 < w; ++m2) {
      const int j2 = m2 - k.r_minus;
      const Eigen::MatrixXd& tap = k.tap_m(m1, m2);
      if (tap.isZero(0.0)) continue;
      const Eigen::MatrixXd tapT = tap.transpose();
      for (int p2 = y.o2; p2 <= y.hi2(); ++p2) {
        for (int p1 = y.o1; p1 <= y.hi1(); ++p1) {
          x.data.segment(x.index(p1 - j1, p2 - j2, 0), k.c_in).noalias() +=
              tapT * y.data.segment(y.index(p1, p2, 0), k.c_out);
        }
      }
    }
  }
  return x;
}

Signal2D embed_image(const Eigen::VectorXd& x, int d, int c) {
  if (x.size() != static_cast<Eigen::Index>(d) * d * c)
    throw DataError("embed_image: vector length " + std::to_string(x.size()) +
                    " does not match " + std::to_string(d) + "x" +
                    std::to_string(d) + "x" + std::to_string(c));
  Signal2D s(1, 1, d, d, c);
  s.data = x;
  return s;
}

Eigen::VectorXd flatten_window(const Signal2D& u, int lo1, int lo2, int d,
                               int c) {
  if (u.c != c) throw DataError("flatten: channel mismatch");
  Eigen::VectorXd out(static_cast<Eigen::Index>(d) * d * c);
  Eigen::Index idx = 0;
  for (int i2 = lo2; i2 < lo2 + d; ++i2)
    for (int i1 = lo1; i1 < lo1 + d; ++i1)
      for (int ch = 0; ch < c; ++ch) out(idx++) = u.get(i1, i2, ch);
  return out;
}

Eigen::VectorXd flatten_signal(const Signal2D& u, int d, int c) {
  return flatten_window(u, 1, 1, d, c);
}

namespace {

/// Crop to the sub-window [lo1, lo1+e1) x [lo2, lo2+e2).
Signal2D crop(const Signal2D& u, int lo1, int lo2, int e1, int e2) {
  Signal2D out(lo1, lo2, e1, e2, u.c);
  for (int i2 = lo2; i2 < lo2 + e2; ++i2)
    for (int i1 = lo1; i1 < lo1 + e1; ++i1)
      for (int ch = 0; ch < u.c; ++ch) out.at(i1, i2, ch) = u.get(i1, i2, ch);
  return out;
}

void apply_activation(Activation a, Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = activation_eval(a, v(i));
}

}  // namespace

Eigen::VectorXd network_forward(const NetworkSpec& spec,
                                const Eigen::VectorXd& image) {
  const Eigen::Index expected = static_cast<Eigen::Index>(spec.input_height) *
                                spec.input_width * spec.input_channels;
  if (image.size() != expected)
    throw DataError("network_forward: image vector length " +
                    std::to_string(image.size()) + " does not match input " +
                    "geometry (" + std::to_string(expected) + " entries)");

  // Embed at origin (1,1); the stored vector layout matches the flattening
  // enumeration directly.
  Signal2D cur(1, 1, spec.input_height, spec.input_width, spec.input_channels);
  cur.data = image;

  for (std::size_t k = 0; k < spec.conv_layers.size(); ++k) {
    const auto& layer = spec.conv_layers[k];
    const Kernel2D& kern = layer.kernel;
    const int in_lo1 = cur.o1, in_hi1 = cur.hi1();
    const int in_lo2 = cur.o2, in_hi2 = cur.hi2();
    cur = conv_forward(layer, cur, true);
    // "Valid" cropping: keep output nodes whose kernel window lies fully
    // inside the previous support: i in [lo + r_plus, hi - r_minus].
    const int lo1 = in_lo1 + kern.r_plus, hi1 = in_hi1 - kern.r_minus;
    const int lo2 = in_lo2 + kern.r_plus, hi2 = in_hi2 - kern.r_minus;
    if (hi1 < lo1 || hi2 < lo2)
      throw GeometryError("conv layer " + std::to_string(k + 1) +
                          ": kernel support exceeds the image");
    cur = crop(cur, lo1, lo2, hi1 - lo1 + 1, hi2 - lo2 + 1);
    const bool last_overall =
        (k + 1 == spec.conv_layers.size()) && spec.dense_layers.empty();
    if (!last_overall) apply_activation(spec.activation, cur.data);
  }

  Eigen::VectorXd v = cur.data;  // S2 enumeration of the valid window
  for (std::size_t k = 0; k < spec.dense_layers.size(); ++k) {
    const auto& layer = spec.dense_layers[k];
    if (layer.weight.cols() != v.size())
      throw DataError("dense layer " + std::to_string(k + 1) +
                      ": input dimension mismatch");
    v = (layer.weight * v + layer.bias).eval();
    if (k + 1 < spec.dense_layers.size()) apply_activation(spec.activation, v);
  }
  return v;
}

Eigen::MatrixXd toeplitz_matrix(const ConvLayerSpec& layer, int d1,
                                std::size_t element_budget) {
  const Kernel2D& k = layer.kernel;
  if (d1 < 1) throw DataError("toeplitz_matrix: d1 must be >= 1");
  const int w = k.width();
  const int out_extent = d1 + w - 1;
  const std::size_t rows =
      static_cast<std::size_t>(out_extent) * out_extent * k.c_out;
  const std::size_t cols = static_cast<std::size_t>(d1) * d1 * k.c_in;
  if (rows * cols > element_budget)
    throw DataError("toeplitz_matrix: " + std::to_string(rows) + "x" +
                    std::to_string(cols) +
                    " exceeds the element budget of " +
                    std::to_string(element_budget));
  // Input support {1..d1}^2; output window [1-r_minus, d1+r_plus] per axis.
  // Rows/columns both use the channel-fastest, i1-next enumeration.
  const int out_lo = 1 - k.r_minus;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(rows, cols);
  for (int p2 = 1; p2 <= d1; ++p2) {
    for (int p1 = 1; p1 <= d1; ++p1) {
      const std::size_t col_base =
          (static_cast<std::size_t>(p2 - 1) * d1 + (p1 - 1)) * k.c_in;
      for (int m1 = 0; m1 < w; ++m1) {
        const int q1 = p1 + m1 - k.r_minus;
        for (int m2 = 0; m2 < w; ++m2) {
          const int q2 = p2 + m2 - k.r_minus;
          const std::size_t row_base =
              (static_cast<std::size_t>(q2 - out_lo) * out_extent +
               (q1 - out_lo)) *
              k.c_out;
          const Eigen::MatrixXd& tap = k.tap_m(m1, m2);
          for (int co = 0; co < k.c_out; ++co)
            for (int ci = 0; ci < k.c_in; ++ci)
              m(row_base + co, col_base + ci) += tap(co, ci);
        }
      }
    }
  }
  return m;
}

double toeplitz_norm(const ConvLayerSpec& layer, int d1, double rel_tol,
                     int restarts, std::uint64_t seed, int iter_cap) {
  const Kernel2D& k = layer.kernel;
  if (d1 < 1) throw DataError("toeplitz_norm: d1 must be >= 1");
  const int w = k.width();
  const std::size_t rows = static_cast<std::size_t>(d1 + w - 1) *
                           (d1 + w - 1) * k.c_out;
  const std::size_t cols = static_cast<std::size_t>(d1) * d1 * k.c_in;

  // Dense SVD fallback for small sizes: exact and cheap.
  if (rows * cols <= 300000) {
    const Eigen::MatrixXd m = toeplitz_matrix(layer, d1);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(m);
    return svd.singularValues()(0);
  }

  // Operator-form power iteration on M^T M: apply the convolution, then its
  // adjoint, and restrict to the input support {1..d1}^2. This is the same
  // iteration as on the materialized matrix without forming it.
  double best = 0.0;
  bool converged_any = false;
  double last_sigma = 0.0, last_resid = 0.0;
  for (int restart = 0; restart < restarts; ++restart) {
    Rng rng = Rng::derived(seed, static_cast<std::uint64_t>(restart));
    Signal2D v(1, 1, d1, d1, k.c_in);
    for (Eigen::Index i = 0; i < v.data.size(); ++i) v.data(i) = rng.normal();
    v.data.normalize();
    double rho_prev = -1.0;
    bool converged = false;
    for (int it = 0; it < iter_cap; ++it) {
      const Signal2D y = conv_forward(layer, v, /*include_bias=*/false);
      const double rho = y.data.squaredNorm();  // = ||M v||^2, v normalized
      const Signal2D x = conv_adjoint(layer, y);
      Signal2D next(1, 1, d1, d1, k.c_in);
      for (int i2 = 1; i2 <= d1; ++i2)
        for (int i1 = 1; i1 <= d1; ++i1)
          for (int ch = 0; ch < k.c_in; ++ch)
            next.at(i1, i2, ch) = x.get(i1, i2, ch);
      const double nn = next.data.norm();
      if (nn == 0.0) { converged = true; break; }  // kernel annihilates v
      next.data /= nn;
      v = next;
      const double resid = std::abs(rho - rho_prev);
      last_resid = resid;
      if (rho_prev >= 0.0 && resid <= rel_tol * std::max(rho, 1e-300)) {
        converged = true;
        rho_prev = rho;
        break;
      }
      rho_prev = rho;
    }
    const double sigma = std::sqrt(std::max(rho_prev, 0.0));
    last_sigma = sigma;
    if (converged) {
      converged_any = true;
      best = std::max(best, sigma);
    }
  }
  if (!converged_any) {
    std::ostringstream msg;
    msg << "toeplitz_norm: power iteration did not converge within " << iter_cap
        << " iterations; best bracket [" << last_sigma << ", "
        << last_sigma * (1.0 + last_resid) << "]";
    throw SolverError(msg.str());
  }
  return best;
}

namespace {

double hinf_grid_point(const Kernel2D& k, int a, int b, int grid_n) {
  const double theta1 = 2.0 * M_PI * static_cast<double>(a) / grid_n;
  const double theta2 = 2.0 * M_PI * static_cast<double>(b) / grid_n;
  const int w = k.width();
  if (k.c_in == 1 && k.c_out == 1) {
    std::complex<double> sum(0.0, 0.0);
    for (int m1 = 0; m1 < w; ++m1) {
      const int j1 = m1 - k.r_minus;
      for (int m2 = 0; m2 < w; ++m2) {
        const int j2 = m2 - k.r_minus;
        // The transfer matrix carries a factor z1^{-r-j1} z2^{-r-j2}; the
        // unimodular z^{-r} shift does not change singular values on the
        // torus, so only the phase -(j1 theta1 + j2 theta2) matters.
        const double phase = -(j1 * theta1 + j2 * theta2);
        sum += k.tap_m(m1, m2)(0, 0) *
               std::complex<double>(std::cos(phase), std::sin(phase));
      }
    }
    return std::abs(sum);
  }
  Eigen::MatrixXcd g = Eigen::MatrixXcd::Zero(k.c_out, k.c_in);
  for (int m1 = 0; m1 < w; ++m1) {
    const int j1 = m1 - k.r_minus;
    for (int m2 = 0; m2 < w; ++m2) {
      const int j2 = m2 - k.r_minus;
      const double phase = -(j1 * theta1 + j2 * theta2);
      g += k.tap_m(m1, m2) *
           std::complex<double>(std::cos(phase), std::sin(phase));
    }
  }
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(g);
  return svd.singularValues()(0);
}

}  // namespace

double hinf_grid_serial(const ConvLayerSpec& layer, int grid_n) {
  if (grid_n < 2) throw DataError("hinf_grid: grid_n must be >= 2");
  const Kernel2D& k = layer.kernel;
  double best = 0.0;
  for (int a = 0; a < grid_n; ++a)
    for (int b = 0; b < grid_n; ++b)
      best = std::max(best, hinf_grid_point(k, a, b, grid_n));
  return best;
}

double hinf_grid(const ConvLayerSpec& layer, int grid_n) {
  if (grid_n < 2) throw DataError("hinf_grid: grid_n must be >= 2");
  const Kernel2D& k = layer.kernel;
  double best = 0.0;
#pragma omp parallel for schedule(static) reduction(max : best)
  for (int a = 0; a < grid_n; ++a) {
    for (int b = 0; b < grid_n; ++b)
      best = std::max(best, hinf_grid_point(k, a, b, grid_n));
  }
  return best;
}

}  // namespace lip2d
