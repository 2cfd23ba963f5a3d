#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "qas/error.hpp"

namespace qas {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

namespace detail {

inline void require_finite(const Vector& v, const char* op) {
  if (!v.allFinite()) throw DomainError(std::string(op) + ": non-finite entry");
}

}  // namespace detail

/// Euclidean projection onto the probability simplex {w >= 0, sum w = 1}.
///
/// Sort-then-threshold: with v sorted non-increasingly, the threshold is
/// theta = (sum_{i<=k} v_i - 1) / k for the largest k with v_k > theta.
inline Vector project_simplex(const Vector& v) {
  if (v.size() == 0) throw ShapeError("project_simplex: empty vector");
  detail::require_finite(v, "project_simplex");

  std::vector<double> sorted(v.data(), v.data() + v.size());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());

  double running = -1.0;
  double theta = 0.0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    running += sorted[k];
    const double candidate = running / static_cast<double>(k + 1);
    if (sorted[k] - candidate > 0.0) theta = candidate;
  }

  Vector w = (v.array() - theta).cwiseMax(0.0);
  // Renormalize away the last ulp of drift so the sum invariant holds tightly.
  const double s = w.sum();
  if (s > 0.0) w /= s;
  return w;
}

/// Softmax with max-shift.
inline Vector softmax(const Vector& v) {
  if (v.size() == 0) throw ShapeError("softmax: empty vector");
  detail::require_finite(v, "softmax");
  const double shift = v.maxCoeff();
  Vector e = (v.array() - shift).exp();
  return e / e.sum();
}

/// Attention readout: sum_n softmax(u)_n * row_n(values).
inline Vector attention_layer(const Vector& u, const Matrix& values) {
  if (u.size() != values.rows())
    throw ShapeError("attention_layer: " + std::to_string(u.size()) + " scores for " +
                     std::to_string(values.rows()) + " value rows");
  return values.transpose() * softmax(u);
}

struct CeilIndex {
  std::size_t index;  // 1-based, in [1, Q]
  bool clamped;
};

/// ceil(z) clamped into [1, Q]; the clamp is reported rather than raised.
inline CeilIndex ceil_index(double z, std::size_t q) {
  if (q == 0) throw DomainError("ceil_index: Q must be positive");
  if (std::isnan(z)) throw DomainError("ceil_index: NaN parameter");
  const double c = std::ceil(z);
  if (c < 1.0) return {1, true};
  if (c > static_cast<double>(q)) return {q, true};
  return {static_cast<std::size_t>(c), false};
}

/// True when w lies on the simplex within tol.
inline bool on_simplex(const Vector& w, double tol = 1e-12) {
  return w.size() > 0 && w.minCoeff() >= -tol && std::abs(w.sum() - 1.0) <= tol;
}

}  // namespace qas
