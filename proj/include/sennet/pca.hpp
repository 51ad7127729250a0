#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "sennet/embeddings.hpp"
#include "sennet/linalg.hpp"

namespace sennet {

struct Projected2D {
  std::string record_id;
  double u = 0.0;
  double v = 0.0;
};

namespace detail {

// Cyclic Jacobi for symmetric matrices. Deterministic, accurate to ~1e-14,
// fine for the small covariance/Gram matrices seen here.
inline void jacobi_eigen_symmetric(Matrix a, std::vector<double>& eigenvalues, Matrix& eigenvectors) {
  const std::size_t n = a.rows;
  eigenvectors = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) eigenvectors(i, i) = 1.0;

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-28) break;

    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = eigenvectors(k, p), vkq = eigenvectors(k, q);
          eigenvectors(k, p) = c * vkp - s * vkq;
          eigenvectors(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  eigenvalues.resize(n);
  for (std::size_t i = 0; i < n; ++i) eigenvalues[i] = a(i, i);
}

// Top-k eigenpairs by eigenvalue, sign fixed so the largest-magnitude
// eigenvector component is positive.
inline std::vector<Vec> top_eigenvectors(const Matrix& sym, std::size_t k) {
  std::vector<double> evals;
  Matrix evecs;
  jacobi_eigen_symmetric(sym, evals, evecs);
  const std::size_t n = sym.rows;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return evals[a] > evals[b]; });
  std::vector<Vec> out;
  for (std::size_t j = 0; j < k && j < n; ++j) {
    Vec v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = evecs(i, order[j]);
    std::size_t imax = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (std::abs(v[i]) > std::abs(v[imax])) imax = i;
    if (v[imax] < 0)
      for (auto& x : v) x = -x;
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace detail

// Projects representation vectors onto their two leading principal
// components (exact PCA of the mean-centered matrix). Output order matches
// input order. Uses the Gram matrix when there are fewer rows than columns.
inline std::vector<Projected2D> project_2d(const Corpus& corpus, const std::vector<Vec>& reps) {
  if (corpus.empty()) throw BadSpecError("project_2d: empty corpus");
  const std::size_t n = reps.size();
  const std::size_t d = reps[0].size();

  Vec mean(d, 0.0);
  for (const auto& r : reps) axpy(1.0, r, mean);
  for (auto& x : mean) x /= static_cast<double>(n);

  std::vector<Vec> centered(n, Vec(d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) centered[i][j] = reps[i][j] - mean[j];

  std::vector<Vec> components;
  if (d <= n) {
    Matrix cov(d, d);
    for (const auto& row : centered)
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b <= a; ++b) cov(a, b) += row[a] * row[b];
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b <= a; ++b) {
        cov(a, b) /= static_cast<double>(n);
        cov(b, a) = cov(a, b);
      }
    components = detail::top_eigenvectors(cov, 2);
  } else {
    Matrix gram(n, n);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b <= a; ++b) {
        gram(a, b) = dot(centered[a], centered[b]) / static_cast<double>(n);
        gram(b, a) = gram(a, b);
      }
    for (const Vec& w : detail::top_eigenvectors(gram, 2)) {
      Vec v(d, 0.0);
      for (std::size_t i = 0; i < n; ++i) axpy(w[i], centered[i], v);
      const double len = norm2(v);
      if (len > 1e-12)
        for (auto& x : v) x /= len;
      components.push_back(std::move(v));
    }
  }

  std::vector<Projected2D> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].record_id = corpus.record(i).record_id;
    out[i].u = components.size() > 0 ? dot(centered[i], components[0]) : 0.0;
    out[i].v = components.size() > 1 ? dot(centered[i], components[1]) : 0.0;
  }
  return out;
}

inline std::vector<Projected2D> project_2d(const Corpus& corpus) { return project_2d(corpus, corpus.vectors()); }

// CSV export: record_id,u,v,identity,<attrs...>, consumable by any plotter.
inline void save_projection_csv(const Corpus& corpus, const std::vector<Projected2D>& points,
                                const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "record_id,u,v,identity";
  for (const auto& a : corpus.schema().attributes) out << "," << a.name;
  out << "\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& rec = corpus.record(i);
    out << points[i].record_id << "," << detail::format_double(points[i].u) << ","
        << detail::format_double(points[i].v) << "," << rec.identity;
    for (const auto& a : corpus.schema().attributes) out << "," << rec.attributes.at(a.name);
    out << "\n";
  }
}

// Minimal SVG scatter, colored by one attribute.
inline void save_projection_svg(const Corpus& corpus, const std::vector<Projected2D>& points,
                                const std::string& color_attribute, const std::string& path) {
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};
  double umin = 0, umax = 0, vmin = 0, vmax = 0;
  for (const auto& p : points) {
    umin = std::min(umin, p.u);
    umax = std::max(umax, p.u);
    vmin = std::min(vmin, p.v);
    vmax = std::max(vmax, p.v);
  }
  const double w = 640, h = 640, pad = 20;
  const double uspan = std::max(umax - umin, 1e-12), vspan = std::max(vmax - vmin, 1e-12);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    const int cls = corpus.record(i).attribute(color_attribute);
    const double x = pad + (points[i].u - umin) / uspan * (w - 2 * pad);
    const double y = pad + (points[i].v - vmin) / vspan * (h - 2 * pad);
    out << "  <circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"2.5\" fill=\"" << palette[cls % 6]
        << "\" fill-opacity=\"0.6\"/>\n";
  }
  out << "</svg>\n";
}

}  // namespace sennet
