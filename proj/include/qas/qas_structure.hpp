#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "qas/error.hpp"
#include "qas/measure.hpp"
#include "qas/metric.hpp"
#include "qas/numerics.hpp"
#include "qas/partition_geometry.hpp"
#include "qas/spd.hpp"

namespace qas {

/// Mixing function with its approximate-simplicial constants, a quantization
/// family q -> (D_q, Q_q) and an optional barycenter map.
template <class Point>
struct QasStructure {
  std::string name;
  std::function<double(const Point&, const Point&)> distance;
  std::function<Point(const Vector&, const std::vector<Point>&)> mixing;
  double c_eta = 1.0;
  int p = 1;
  std::function<std::size_t(std::size_t)> quantization_dim;
  std::function<Point(std::size_t, const Vector&)> quantize;
  std::function<Point(const PointMeasure<Point>&)> barycenter;  // empty when not barycentric

  bool barycentric() const { return static_cast<bool>(barycenter); }
};

struct MixingCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  bool ok = false;
};

/// lhs = d(eta(w, y), y_i), rhs = C_eta (sum_j d(y_i, y_j)^p w_j)^{1/p}.
template <class Point>
MixingCheck check_mixing_inequality(const QasStructure<Point>& q, const Vector& w, const std::vector<Point>& points,
                                    std::size_t i, double slack = 1e-9) {
  if (static_cast<std::size_t>(w.size()) != points.size()) throw ShapeError("check_mixing_inequality: weight/point count mismatch");
  if (i >= points.size()) throw RangeError("check_mixing_inequality: index out of range");
  const Point mixed = q.mixing(w, points);
  MixingCheck c;
  c.lhs = q.distance(mixed, points[i]);
  double s = 0.0;
  for (std::size_t j = 0; j < points.size(); ++j)
    s += std::pow(q.distance(points[i], points[j]), q.p) * w[static_cast<Eigen::Index>(j)];
  c.rhs = q.c_eta * std::pow(s, 1.0 / q.p);
  c.ok = c.lhs <= c.rhs + slack;
  return c;
}

// ---------------------------------------------------------------------------
// Euclidean / l1

enum class VectorNorm { l2, l1, linf };

inline double vector_distance(const Vector& a, const Vector& b, VectorNorm norm) {
  if (a.size() != b.size()) throw ShapeError("vector_distance: dimension mismatch");
  switch (norm) {
    case VectorNorm::l1: return (a - b).lpNorm<1>();
    case VectorNorm::linf: return a.size() == 0 ? 0.0 : (a - b).lpNorm<Eigen::Infinity>();
    default: return (a - b).norm();
  }
}

inline Vector convex_combination(const Vector& w, const std::vector<Vector>& points) {
  if (static_cast<std::size_t>(w.size()) != points.size() || points.empty())
    throw ShapeError("convex_combination: weight/point count mismatch");
  Vector out = Vector::Zero(points.front().size());
  for (std::size_t n = 0; n < points.size(); ++n) {
    if (points[n].size() != out.size()) throw ShapeError("convex_combination: points of different dimension");
    out += w[static_cast<Eigen::Index>(n)] * points[n];
  }
  return out;
}

/// Bochner mean sum_k w_k x_k.
inline Vector barycenter_euclidean(const PointMeasure<Vector>& mu) {
  if (mu.atoms.empty()) throw ShapeError("barycenter_euclidean: empty measure");
  return convex_combination(Eigen::Map<const Vector>(mu.weights.data(), static_cast<Eigen::Index>(mu.weights.size())),
                            mu.atoms);
}

inline QasStructure<Vector> euclidean_structure(Eigen::Index dim, VectorNorm norm = VectorNorm::l2) {
  QasStructure<Vector> q;
  q.name = norm == VectorNorm::l1 ? "l1" : (norm == VectorNorm::linf ? "linf" : "euclidean");
  q.distance = [norm](const Vector& a, const Vector& b) { return vector_distance(a, b, norm); };
  q.mixing = convex_combination;
  q.quantization_dim = [dim](std::size_t) { return static_cast<std::size_t>(dim); };
  q.quantize = [dim](std::size_t, const Vector& z) {
    if (z.size() != dim) throw ShapeError("euclidean quantization: parameter dimension mismatch");
    return z;
  };
  q.barycenter = barycenter_euclidean;
  return q;
}

// ---------------------------------------------------------------------------
// Wasserstein space over a finite metric space

inline QasStructure<DiscreteMeasure> wasserstein_structure(FiniteMetricSpace ground) {
  QasStructure<DiscreteMeasure> q;
  q.name = "wasserstein";
  const std::size_t n = ground.size();
  q.distance = [ground](const DiscreteMeasure& a, const DiscreteMeasure& b) { return w1_discrete(ground, a, b); };
  q.mixing = [](const Vector& w, const std::vector<DiscreteMeasure>& ms) { return mix_wasserstein(w, ms); };
  // Q_q(u, z) with u, z in R^q over the dense sequence 0, 1, ..., n-1.
  q.quantization_dim = [](std::size_t qq) { return 2 * qq; };
  q.quantize = [n](std::size_t qq, const Vector& params) {
    if (static_cast<std::size_t>(params.size()) != 2 * qq) throw ShapeError("wasserstein quantization: expected 2q parameters");
    std::vector<std::size_t> seq(n);
    for (std::size_t i = 0; i < n; ++i) seq[i] = i;
    const auto qi = static_cast<Eigen::Index>(qq);
    return quantize_measure(params.head(qi), params.tail(qi), seq, n);
  };
  // Mean measure: P1(P1(Y)) -> P1(Y).
  q.barycenter = [](const PointMeasure<DiscreteMeasure>& mu) {
    const Vector w = Eigen::Map<const Vector>(mu.weights.data(), static_cast<Eigen::Index>(mu.weights.size()));
    return mix_wasserstein(w, mu.atoms);
  };
  return q;
}

// ---------------------------------------------------------------------------
// SPD matrices with the affine-invariant metric

/// Mixing eta(w, A) = Karcher minimizer of sum_n w_n d(S, A_n)^2.
inline SpdMatrix spd_mixing(const Vector& w, const std::vector<SpdMatrix>& atoms, double tol = 1e-11) {
  if (static_cast<std::size_t>(w.size()) != atoms.size()) throw ShapeError("spd_mixing: weight/point count mismatch");
  // Vertices of the simplex map exactly to the corresponding point.
  for (Eigen::Index i = 0; i < w.size(); ++i)
    if (w[i] == 1.0) return atoms[static_cast<std::size_t>(i)];
  return karcher_barycenter(atoms, w, tol, 500).mean;
}

inline QasStructure<SpdMatrix> spd_structure(Eigen::Index dim) {
  QasStructure<SpdMatrix> q;
  q.name = "spd";
  q.distance = spd_distance;
  q.mixing = [](const Vector& w, const std::vector<SpdMatrix>& a) { return spd_mixing(w, a); };
  // Q: R^{d(d+1)/2} -> SPD, upper-triangle coordinates of a symmetric S, then exp(S).
  const auto sym_dim = static_cast<std::size_t>(dim * (dim + 1) / 2);
  q.quantization_dim = [sym_dim](std::size_t) { return sym_dim; };
  q.quantize = [dim, sym_dim](std::size_t, const Vector& z) {
    if (static_cast<std::size_t>(z.size()) != sym_dim) throw ShapeError("spd quantization: parameter dimension mismatch");
    Matrix s(dim, dim);
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < dim; ++i)
      for (Eigen::Index j = i; j < dim; ++j) s(i, j) = s(j, i) = z[k++];
    return SpdMatrix(sym_exp(s));
  };
  q.barycenter = [](const PointMeasure<SpdMatrix>& mu) {
    const Vector w = Eigen::Map<const Vector>(mu.weights.data(), static_cast<Eigen::Index>(mu.weights.size()));
    return spd_mixing(w, mu.atoms);
  };
  return q;
}

// ---------------------------------------------------------------------------
// A single circle arc with its pullback mixing

inline QasStructure<double> circle_arc_structure(const CircleArc& arc) {
  if (!(arc.length > 0.0 && arc.length <= std::numbers::pi))
    throw DomainError("circle_arc_structure: arc length must lie in (0, pi]");
  QasStructure<double> q;
  q.name = "circle_arc";
  q.distance = circle_distance;
  q.mixing = [arc](const Vector& w, const std::vector<double>& u) { return arc.mix(w, u); };
  q.quantization_dim = [](std::size_t) { return std::size_t{2}; };
  q.quantize = [arc](std::size_t, const Vector& z) { return arc.quantize(z); };
  q.barycenter = [arc](const PointMeasure<double>& mu) {
    return arc.mix(Eigen::Map<const Vector>(mu.weights.data(), static_cast<Eigen::Index>(mu.weights.size())), mu.atoms);
  };
  return q;
}

}  // namespace qas
