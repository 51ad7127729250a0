#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "sennet/errors.hpp"

namespace sennet {

using Vec = std::vector<double>;

// Dense row-major matrix, sized once at construction.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const Vec& v) { return std::sqrt(dot(v, v)); }

inline double squared_distance(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline void axpy(double alpha, const Vec& x, Vec& y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

// y = W x + b
inline Vec affine(const Matrix& w, const Vec& b, const Vec& x) {
  Vec y(w.rows);
  for (std::size_t r = 0; r < w.rows; ++r) {
    const double* row = &w.data[r * w.cols];
    double s = b[r];
    for (std::size_t c = 0; c < w.cols; ++c) s += row[c] * x[c];
    y[r] = s;
  }
  return y;
}

// y = W^T g
inline Vec matvec_transposed(const Matrix& w, const Vec& g) {
  Vec y(w.cols, 0.0);
  for (std::size_t r = 0; r < w.rows; ++r) {
    const double* row = &w.data[r * w.cols];
    const double gr = g[r];
    for (std::size_t c = 0; c < w.cols; ++c) y[c] += row[c] * gr;
  }
  return y;
}

// W += alpha * g x^T
inline void add_outer(Matrix& w, double alpha, const Vec& g, const Vec& x) {
  for (std::size_t r = 0; r < w.rows; ++r) {
    double* row = &w.data[r * w.cols];
    const double a = alpha * g[r];
    for (std::size_t c = 0; c < w.cols; ++c) row[c] += a * x[c];
  }
}

inline bool all_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

constexpr double kZeroVectorNorm = 1e-15;

// v / ||v||_2. Signals corrupt input rather than returning NaNs.
inline Vec l2_normalize(const Vec& v) {
  const double n = norm2(v);
  if (!(n >= kZeroVectorNorm)) {
    throw ZeroVectorError("l2_normalize: vector norm " + std::to_string(n) + " below " +
                          std::to_string(kZeroVectorNorm));
  }
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
  return out;
}

}  // namespace sennet
