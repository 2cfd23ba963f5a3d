#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "qas/error.hpp"
#include "qas/numerics.hpp"

namespace qas {

/// Element of the step-2 free nilpotent group over R^d in log coordinates:
/// level one a, antisymmetric level two A.
struct Step2 {
  Vector a;
  Matrix A;

  static Step2 identity(Eigen::Index d) { return {Vector::Zero(d), Matrix::Zero(d, d)}; }
  Eigen::Index dim() const { return a.size(); }

  friend bool operator==(const Step2&, const Step2&) = default;
};

inline void validate(const Step2& g) {
  if (g.A.rows() != g.a.size() || g.A.cols() != g.a.size()) throw ShapeError("step2: level shapes disagree");
  if (g.a.size() > 0 && (g.A + g.A.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw DomainError("step2: level-two part is not antisymmetric");
}

/// (a, A) (b, B) = (a + b, A + B + (a b^T - b a^T) / 2).
inline Step2 group_multiply(const Step2& g, const Step2& h) {
  if (g.dim() != h.dim()) throw ShapeError("group_multiply: dimension mismatch");
  return {g.a + h.a, g.A + h.A + 0.5 * (g.a * h.a.transpose() - h.a * g.a.transpose())};
}

inline Step2 group_inverse(const Step2& g) { return {-g.a, -g.A}; }

/// Carnot dilation (lambda a, lambda^2 A).
inline Step2 dilate(const Step2& g, double lambda) { return {lambda * g.a, lambda * lambda * g.A}; }

/// ||log g - log h|| with the full matrix A in the concatenation.
inline double tangent_distance(const Step2& g, const Step2& h) {
  if (g.dim() != h.dim()) throw ShapeError("tangent_distance: dimension mismatch");
  return std::sqrt((g.a - h.a).squaredNorm() + (g.A - h.A).squaredNorm());
}

/// Homogeneous norm ||a|| + ||A||_F^{1/2}, equivalent to the
/// Carnot-Caratheodory norm.
inline double cc_homogeneous_norm(const Step2& g) { return g.a.norm() + std::sqrt(g.A.norm()); }

/// Flat coordinates (a, A_ij for i < j).
inline Vector flatten(const Step2& g) {
  const Eigen::Index d = g.dim();
  Vector v(d + d * (d - 1) / 2);
  v.head(d) = g.a;
  Eigen::Index k = d;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = i + 1; j < d; ++j) v[k++] = g.A(i, j);
  return v;
}

inline Step2 unflatten(const Vector& v, Eigen::Index d) {
  if (v.size() != d + d * (d - 1) / 2) throw ShapeError("unflatten: wrong coordinate count");
  Step2 g = Step2::identity(d);
  g.a = v.head(d);
  Eigen::Index k = d;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = i + 1; j < d; ++j) {
      g.A(i, j) = v[k++];
      g.A(j, i) = -g.A(i, j);
    }
  return g;
}

// ---------------------------------------------------------------------------
// Paths and signatures

struct PiecewiseLinearPath {
  std::vector<Vector> vertices;
  std::vector<double> times;

  PiecewiseLinearPath() = default;
  PiecewiseLinearPath(std::vector<Vector> v, std::vector<double> t) : vertices(std::move(v)), times(std::move(t)) {
    if (vertices.size() < 2 || vertices.size() != times.size()) throw ShapeError("path: need >= 2 vertices with times");
    for (std::size_t k = 1; k < times.size(); ++k) {
      if (!(times[k] > times[k - 1])) throw DomainError("path: times must be strictly increasing");
      if (vertices[k].size() != vertices[0].size()) throw ShapeError("path: vertices of different dimension");
    }
  }

  Eigen::Index dim() const { return vertices.front().size(); }
  double start() const { return times.front(); }
  double end() const { return times.back(); }

  Vector at(double t) const {
    if (t < start() || t > end()) throw RangeError("path: time outside the domain");
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    const std::size_t k = it == times.end() ? times.size() - 1 : static_cast<std::size_t>(it - times.begin());
    const double s = (t - times[k - 1]) / (times[k] - times[k - 1]);
    return vertices[k - 1] + s * (vertices[k] - vertices[k - 1]);
  }
};

/// Signature of a straight segment: (increment, 0).
inline Step2 segment_signature(const Vector& from, const Vector& to) {
  return {to - from, Matrix::Zero(from.size(), from.size())};
}

/// Level-2 signature over [s, t] by Chen products of segment signatures.
inline Step2 signature_level2(const PiecewiseLinearPath& p, double s, double t) {
  if (!(s < t)) throw DomainError("signature_level2: need s < t");
  if (s < p.start() || t > p.end()) throw RangeError("signature_level2: times outside the path domain");
  Step2 g = Step2::identity(p.dim());
  Vector prev = p.at(s);
  for (std::size_t k = 1; k < p.times.size(); ++k) {
    if (p.times[k] <= s) continue;
    if (p.times[k] >= t) break;
    g = group_multiply(g, segment_signature(prev, p.vertices[k]));
    prev = p.vertices[k];
  }
  return group_multiply(g, segment_signature(prev, p.at(t)));
}

inline Step2 signature_level2(const PiecewiseLinearPath& p) { return signature_level2(p, p.start(), p.end()); }

// ---------------------------------------------------------------------------
// Controlled ODE flow

/// V(y) is an e x d matrix; dy = V(y) dx.
using VectorField = std::function<Matrix(const Vector&)>;

struct FlowResult {
  Vector y;
  double error_estimate = 0.0;  // Richardson estimate |y_{h/2} - y_h| / 15
  double step = 0.0;            // final step size
  std::vector<Vector> trajectory;  // solution at the driver's vertex times
};

namespace detail {

inline Vector rk4_along(const VectorField& v, const PiecewiseLinearPath& x, const Vector& y0, double h, double cap,
                        std::vector<Vector>* traj) {
  Vector y = y0;
  if (traj) traj->assign(1, y0);
  for (std::size_t k = 1; k < x.times.size(); ++k) {
    const double dt = x.times[k] - x.times[k - 1];
    const Vector vel = (x.vertices[k] - x.vertices[k - 1]) / dt;
    const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(dt / h - 1e-12)));
    const double step = dt / static_cast<double>(n);
    auto rhs = [&](const Vector& z) -> Vector { return v(z) * vel; };
    for (std::size_t i = 0; i < n; ++i) {
      const Vector k1 = rhs(y);
      const Vector k2 = rhs(y + 0.5 * step * k1);
      const Vector k3 = rhs(y + 0.5 * step * k2);
      const Vector k4 = rhs(y + step * k3);
      y += step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (!y.allFinite() || y.norm() > cap) throw DivergenceError("rde_flow: solution left the ball of radius " + std::to_string(cap));
    }
    if (traj) traj->push_back(y);
  }
  return y;
}

}  // namespace detail

/// Solves dy = V(y) dx along a piecewise-linear driver by RK4, halving the
/// step until two successive runs agree to `tol`.
inline FlowResult rde_flow_oracle(const VectorField& v, const PiecewiseLinearPath& x, const Vector& y0, double step,
                                  double tol = 1e-8, double cap = 1e6, int max_halvings = 20) {
  if (!(step > 0.0)) throw DomainError("rde_flow: step must be positive");
  double h = step;
  Vector coarse = detail::rk4_along(v, x, y0, h, cap, nullptr);
  for (int i = 0; i <= max_halvings; ++i) {
    FlowResult r;
    r.y = detail::rk4_along(v, x, y0, 0.5 * h, cap, &r.trajectory);
    const double gap = (r.y - coarse).norm();
    r.error_estimate = gap / 15.0;
    r.step = 0.5 * h;
    if (gap <= tol) return r;
    coarse = r.y;
    h *= 0.5;
  }
  throw ConvergenceError("rde_flow: step halving did not converge", (coarse).norm());
}

}  // namespace qas
