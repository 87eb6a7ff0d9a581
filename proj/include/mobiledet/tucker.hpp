#pragma once
/*
 * Mode-2 Tucker decomposition of a KxK convolution kernel along its input and
 * output channel modes:
 *
 *   W[y, x, c1, c2] ~= sum_{a,b} G[y, x, a, b] U[c1, a] V[c2, b]
 *
 * Applying the factors as 1x1 (U^T) -> KxK (G) -> 1x1 (V) is exactly applying
 * the reconstructed kernel, so the Tucker layer structure is a decomposed
 * regular convolution. Factors come from a truncated higher-order SVD.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "mobiledet/analysis.hpp"
#include "mobiledet/errors.hpp"

namespace mobiledet {

/// Dense (K, K, C1, C2) kernel, row-major.
struct ConvKernel {
  int k = 1;
  int c1 = 1;
  int c2 = 1;
  std::vector<double> data;

  ConvKernel() = default;
  ConvKernel(int kernel, int in_channels, int out_channels)
      : k(kernel), c1(in_channels), c2(out_channels),
        data(static_cast<std::size_t>(kernel) * kernel * in_channels * out_channels, 0.0) {}

  std::size_t index(int y, int x, int i, int o) const {
    return ((static_cast<std::size_t>(y) * k + x) * c1 + i) * c2 + o;
  }
  double& operator()(int y, int x, int i, int o) { return data[index(y, x, i, o)]; }
  double operator()(int y, int x, int i, int o) const { return data[index(y, x, i, o)]; }

  double frobenius_norm() const {
    double s = 0.0;
    for (double v : data) s += v * v;
    return std::sqrt(s);
  }
};

inline void check_kernel(const ConvKernel& w) {
  if (w.k < 1 || w.k % 2 == 0) throw ValidationError("kernel size must be odd");
  if (w.c1 < 1 || w.c2 < 1) throw ValidationError("kernel channel dims must be >= 1");
  if (w.data.size() != static_cast<std::size_t>(w.k) * w.k * w.c1 * w.c2) throw ShapeError("kernel data size mismatch");
  for (double v : w.data)
    if (!std::isfinite(v)) throw ValidationError("kernel has non-finite entries");
}

struct Tucker2Factors {
  Eigen::MatrixXd u;  // C1 x r1, orthonormal columns
  ConvKernel core;    // (K, K, r1, r2)
  Eigen::MatrixXd v;  // C2 x r2, orthonormal columns
};

struct SvdLeft {
  Eigen::MatrixXd vectors;  // m x m, columns sorted by descending singular value
  Eigen::VectorXd values;
};

inline constexpr double kJacobiTolerance = 1e-12;

/// Left singular vectors of A (m x n) by one-sided Jacobi rotations applied to
/// the columns of A^T. Every column of the result is orthonormal, including
/// those of zero singular values. Each column's largest-magnitude entry is
/// made positive.
inline SvdLeft left_singular_vectors(const Eigen::MatrixXd& a, double tol = kJacobiTolerance, int max_sweeps = 100) {
  Eigen::MatrixXd b = a.transpose();  // n x m
  const Eigen::Index m = b.cols();
  Eigen::MatrixXd rot = Eigen::MatrixXd::Identity(m, m);

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (Eigen::Index i = 0; i + 1 < m; ++i) {
      for (Eigen::Index j = i + 1; j < m; ++j) {
        const double alpha = b.col(i).squaredNorm();
        const double beta = b.col(j).squaredNorm();
        const double gamma = b.col(i).dot(b.col(j));
        if (alpha == 0.0 || beta == 0.0) continue;
        const double rel = std::abs(gamma) / std::sqrt(alpha * beta);
        off = std::max(off, rel);
        if (rel <= tol) continue;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (auto* mat : {&b, &rot}) {
          const Eigen::VectorXd ci = mat->col(i);
          const Eigen::VectorXd cj = mat->col(j);
          mat->col(i) = c * ci - s * cj;
          mat->col(j) = s * ci + c * cj;
        }
      }
    }
    if (off <= tol) break;
  }

  Eigen::VectorXd sv(m);
  for (Eigen::Index i = 0; i < m; ++i) sv(i) = b.col(i).norm();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return sv(x) > sv(y); });

  SvdLeft out;
  out.vectors.resize(m, m);
  out.values.resize(m);
  for (Eigen::Index c = 0; c < m; ++c) {
    const auto src = order[static_cast<std::size_t>(c)];
    Eigen::VectorXd col = rot.col(src);
    Eigen::Index arg = 0;
    for (Eigen::Index r = 1; r < m; ++r)
      if (std::abs(col(r)) > std::abs(col(arg))) arg = r;
    if (col(arg) < 0.0) col = -col;
    out.vectors.col(c) = col;
    out.values(c) = sv(src);
  }
  return out;
}

/// Mode-3 (input channel) unfolding: C1 x (K*K*C2).
inline Eigen::MatrixXd unfold_input(const ConvKernel& w) {
  Eigen::MatrixXd m(w.c1, static_cast<Eigen::Index>(w.k) * w.k * w.c2);
  for (int y = 0; y < w.k; ++y)
    for (int x = 0; x < w.k; ++x)
      for (int i = 0; i < w.c1; ++i)
        for (int o = 0; o < w.c2; ++o) m(i, (y * w.k + x) * w.c2 + o) = w(y, x, i, o);
  return m;
}

/// Mode-4 (output channel) unfolding: C2 x (K*K*C1).
inline Eigen::MatrixXd unfold_output(const ConvKernel& w) {
  Eigen::MatrixXd m(w.c2, static_cast<Eigen::Index>(w.k) * w.k * w.c1);
  for (int y = 0; y < w.k; ++y)
    for (int x = 0; x < w.k; ++x)
      for (int i = 0; i < w.c1; ++i)
        for (int o = 0; o < w.c2; ++o) m(o, (y * w.k + x) * w.c1 + i) = w(y, x, i, o);
  return m;
}

/// Contracts the channel modes: out[y,x,a,b] = sum_{i,o} w[y,x,i,o] L[i,a] R[o,b].
inline ConvKernel contract_channels(const ConvKernel& w, const Eigen::MatrixXd& left, const Eigen::MatrixXd& right) {
  const int r1 = static_cast<int>(left.cols());
  const int r2 = static_cast<int>(right.cols());
  ConvKernel out(w.k, r1, r2);
  Eigen::MatrixXd slice(w.c1, w.c2);
  for (int y = 0; y < w.k; ++y) {
    for (int x = 0; x < w.k; ++x) {
      for (int i = 0; i < w.c1; ++i)
        for (int o = 0; o < w.c2; ++o) slice(i, o) = w(y, x, i, o);
      const Eigen::MatrixXd core = left.transpose() * slice * right;
      for (int a = 0; a < r1; ++a)
        for (int b = 0; b < r2; ++b) out(y, x, a, b) = core(a, b);
    }
  }
  return out;
}

inline Tucker2Factors tucker2(const ConvKernel& w, int r1, int r2) {
  check_kernel(w);
  if (r1 < 1 || r1 > w.c1) throw RangeError("r1 must lie in [1, C1]");
  if (r2 < 1 || r2 > w.c2) throw RangeError("r2 must lie in [1, C2]");
  Tucker2Factors f;
  f.u = left_singular_vectors(unfold_input(w)).vectors.leftCols(r1);
  f.v = left_singular_vectors(unfold_output(w)).vectors.leftCols(r2);
  f.core = contract_channels(w, f.u, f.v);
  return f;
}

inline ConvKernel reconstruct(const Tucker2Factors& f) {
  if (f.u.cols() != f.core.c1 || f.v.cols() != f.core.c2)
    throw ShapeError("factor ranks do not match the core tensor");
  ConvKernel w(f.core.k, static_cast<int>(f.u.rows()), static_cast<int>(f.v.rows()));
  Eigen::MatrixXd core(f.core.c1, f.core.c2);
  for (int y = 0; y < f.core.k; ++y) {
    for (int x = 0; x < f.core.k; ++x) {
      for (int a = 0; a < f.core.c1; ++a)
        for (int b = 0; b < f.core.c2; ++b) core(a, b) = f.core(y, x, a, b);
      const Eigen::MatrixXd slice = f.u * core * f.v.transpose();
      for (int i = 0; i < w.c1; ++i)
        for (int o = 0; o < w.c2; ++o) w(y, x, i, o) = slice(i, o);
    }
  }
  return w;
}

/// ||W - reconstruct(f)||_F / ||W||_F; 0 for the zero kernel.
inline double rel_error(const ConvKernel& w, const Tucker2Factors& f) {
  const auto r = reconstruct(f);
  if (r.k != w.k || r.c1 != w.c1 || r.c2 != w.c2) throw ShapeError("factors do not match kernel dims");
  const double norm = w.frobenius_norm();
  double diff = 0.0;
  for (std::size_t i = 0; i < w.data.size(); ++i) diff += (w.data[i] - r.data[i]) * (w.data[i] - r.data[i]);
  if (norm == 0.0) return 0.0;
  return std::sqrt(diff) / norm;
}

// ---------------------------------------------------------------------------
// Reference convolution semantics: stride 1, zero "same" padding.

struct FeatureMap {
  int h = 0;
  int w = 0;
  int c = 0;
  std::vector<double> data;  // (h, w, c) row-major

  FeatureMap() = default;
  FeatureMap(int height, int width, int channels)
      : h(height), w(width), c(channels), data(static_cast<std::size_t>(height) * width * channels, 0.0) {}

  double& operator()(int y, int x, int ch) { return data[(static_cast<std::size_t>(y) * w + x) * c + ch]; }
  double operator()(int y, int x, int ch) const { return data[(static_cast<std::size_t>(y) * w + x) * c + ch]; }
};

inline FeatureMap apply_conv(const ConvKernel& w, const FeatureMap& in) {
  if (in.c != w.c1) throw ShapeError("input has " + std::to_string(in.c) + " channels, kernel expects " +
                                     std::to_string(w.c1));
  FeatureMap out(in.h, in.w, w.c2);
  const int pad = w.k / 2;
  for (int y = 0; y < in.h; ++y)
    for (int x = 0; x < in.w; ++x)
      for (int ky = 0; ky < w.k; ++ky) {
        const int sy = y + ky - pad;
        if (sy < 0 || sy >= in.h) continue;
        for (int kx = 0; kx < w.k; ++kx) {
          const int sx = x + kx - pad;
          if (sx < 0 || sx >= in.w) continue;
          for (int i = 0; i < w.c1; ++i) {
            const double v = in(sy, sx, i);
            for (int o = 0; o < w.c2; ++o) out(y, x, o) += v * w(ky, kx, i, o);
          }
        }
      }
  return out;
}

/// 1x1 conv whose weight matrix is `m` (in_channels x out_channels).
inline FeatureMap apply_pointwise(const Eigen::MatrixXd& m, const FeatureMap& in) {
  if (in.c != m.rows()) throw ShapeError("pointwise conv channel mismatch");
  FeatureMap out(in.h, in.w, static_cast<int>(m.cols()));
  for (int y = 0; y < in.h; ++y)
    for (int x = 0; x < in.w; ++x)
      for (int i = 0; i < in.c; ++i) {
        const double v = in(y, x, i);
        for (int o = 0; o < out.c; ++o) out(y, x, o) += v * m(i, o);
      }
  return out;
}

/// 1x1 conv by U (C1 -> r1), KxK conv by the core (r1 -> r2), 1x1 conv by V^T (r2 -> C2).
inline FeatureMap apply_sequence(const Tucker2Factors& f, const FeatureMap& in) {
  if (in.c != f.u.rows()) throw ShapeError("input channels do not match the input factor");
  const auto compressed = apply_pointwise(f.u, in);
  const auto mixed = apply_conv(f.core, compressed);
  return apply_pointwise(f.v.transpose(), mixed);
}

/// MAdds of the Tucker sequence over those of the full conv, stride 1.
inline double madds_savings(int c1, int c2, int k, int r1, int r2, int h, int w) {
  if (c1 < 1 || c2 < 1 || k < 1 || r1 < 1 || r2 < 1 || h < 1 || w < 1)
    throw ValidationError("madds_savings: dimensions must be positive");
  const Count seq = tucker_madds(c1, c2, k, r1, r2, h, w, h, w);
  const Count full = Count{h} * w * k * k * c1 * c2;
  return static_cast<double>(seq) / static_cast<double>(full);
}

}  // namespace mobiledet
