#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "qas/error.hpp"
#include "qas/numerics.hpp"

namespace qas {

/// Quantized geodesic partition of a target space: closed parts Y_m, each
/// with a reference point, a finite vertex set and its own mixing function,
/// plus a decreasing separation function S with S(1) = 0.
template <class Point>
struct GeodesicPartition {
  std::size_t n_parts = 0;
  std::function<double(const Point&, const Point&)> distance;
  std::function<Point(std::size_t)> reference;
  std::function<bool(std::size_t, const Point&)> contains;
  std::function<double(std::size_t, const Point&)> distance_to_part;
  std::function<std::vector<Point>(std::size_t)> vertices;
  std::function<Point(std::size_t, const Vector&, const std::vector<Point>&)> mix;
  std::function<double(double)> separation;
  // Nearest point of Y_m, and simplex weights w with mix(m, w, vertices(m)) = y for y in Y_m.
  std::function<Point(std::size_t, const Point&)> project;
  std::function<Vector(std::size_t, const Point&)> vertex_weights;
};

/// Image of a point of Y_m in the contracted part Y_m^delta: the point is
/// pulled towards the reference point, eta_m((1 - delta, delta), (ref, y)).
template <class Point>
Point contract_part(const GeodesicPartition<Point>& p, std::size_t m, double delta, const Point& y) {
  if (m >= p.n_parts) throw RangeError("contract_part: part index out of range");
  if (!(delta >= 0.0 && delta <= 1.0)) throw DomainError("contract_part: delta must lie in [0, 1]");
  if (!p.contains(m, y)) throw PartError("contract_part: point outside part " + std::to_string(m));
  Vector w(2);
  w << 1.0 - delta, delta;
  return p.mix(m, w, {p.reference(m), y});
}

template <class Point>
double separation_lower_bound(const GeodesicPartition<Point>& p, double delta) {
  if (!(delta >= 0.0 && delta <= 1.0)) throw DomainError("separation_lower_bound: delta must lie in [0, 1]");
  return p.separation(delta);
}

/// S^dagger(t) = inf{delta in [0, 1] : S(delta) <= t}, by bisection on the
/// decreasing S.
template <class Point>
double separation_inverse(const GeodesicPartition<Point>& p, double t, int iterations = 100) {
  if (p.separation(0.0) <= t) return 0.0;
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < iterations; ++i) {
    const double mid = 0.5 * (lo + hi);
    (p.separation(mid) <= t ? hi : lo) = mid;
  }
  return hi;
}

// ---------------------------------------------------------------------------
// Circle geometry. Points are angles in [0, 2 pi).

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline double wrap_angle(double t) {
  double r = std::fmod(t, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  return r >= kTwoPi ? 0.0 : r;
}

/// Geodesic (arc-length) distance on the unit circle.
inline double circle_distance(double a, double b) {
  const double d = std::abs(wrap_angle(a) - wrap_angle(b));
  return std::min(d, kTwoPi - d);
}

/// Closed arc [start, start + length] traversed counterclockwise, with the
/// arc-length chart h(theta) = offset from start.
struct CircleArc {
  double start = 0.0;
  double length = 0.0;

  static constexpr double kTol = 1e-12;

  double midpoint() const { return wrap_angle(start + 0.5 * length); }
  double end() const { return wrap_angle(start + length); }

  /// Chart coordinate in [0, length]; NaN when theta is off the arc.
  double chart(double theta) const {
    const double off = wrap_angle(theta - start);
    if (off <= length + kTol) return std::min(off, length);
    if (kTwoPi - off <= kTol) return 0.0;
    return std::numeric_limits<double>::quiet_NaN();
  }
  double chart_inverse(double s) const { return wrap_angle(start + s); }
  bool contains(double theta) const { return !std::isnan(chart(theta)); }

  double distance_to(double theta) const {
    if (contains(theta)) return 0.0;
    return std::min(circle_distance(theta, start), circle_distance(theta, end()));
  }

  /// Pullback mixing h^{-1}(sum_n w_n h(u_n)).
  double mix(const Vector& w, const std::vector<double>& u) const {
    if (static_cast<std::size_t>(w.size()) != u.size()) throw ShapeError("arc mixing: weight/point count mismatch");
    double s = 0.0;
    for (std::size_t n = 0; n < u.size(); ++n) {
      const double c = chart(u[n]);
      if (std::isnan(c)) throw PartError("arc mixing: point outside arc");
      s += w[static_cast<Eigen::Index>(n)] * c;
    }
    return chart_inverse(std::clamp(s, 0.0, length));
  }

  /// Q_1: R^2 -> arc, h^{-1}([P(z)]_1 h(start) + [P(z)]_2 h(end)).
  double quantize(const Vector& z) const {
    if (z.size() != 2) throw ShapeError("arc quantization: parameter must have length 2");
    const Vector p = project_simplex(z);
    return chart_inverse(p[1] * length);
  }
};

/// M >= 3 equal closed arcs [2 pi m / M, 2 pi (m + 1) / M] with midpoint
/// references; S(delta) = (1 - delta) 2 pi / M is the gap between adjacent
/// contracted arcs.
inline std::vector<CircleArc> circle_arcs(std::size_t m_parts) {
  if (m_parts < 3) throw DomainError("circle_partition: need at least 3 arcs");
  const double len = kTwoPi / static_cast<double>(m_parts);
  std::vector<CircleArc> arcs;
  for (std::size_t m = 0; m < m_parts; ++m) arcs.push_back({len * static_cast<double>(m), len});
  return arcs;
}

inline GeodesicPartition<double> arc_partition(std::vector<CircleArc> arcs, std::function<double(double)> separation) {
  GeodesicPartition<double> p;
  p.n_parts = arcs.size();
  p.distance = circle_distance;
  p.reference = [arcs](std::size_t m) { return arcs.at(m).midpoint(); };
  p.contains = [arcs](std::size_t m, double y) { return arcs.at(m).contains(y); };
  p.distance_to_part = [arcs](std::size_t m, double y) { return arcs.at(m).distance_to(y); };
  p.vertices = [arcs](std::size_t m) { return std::vector<double>{arcs.at(m).start, arcs.at(m).end()}; };
  p.mix = [arcs](std::size_t m, const Vector& w, const std::vector<double>& u) { return arcs.at(m).mix(w, u); };
  p.separation = std::move(separation);
  p.project = [arcs](std::size_t m, double y) {
    const auto& a = arcs.at(m);
    if (a.contains(y)) return y;
    return circle_distance(y, a.start) <= circle_distance(y, a.end()) ? a.start : a.end();
  };
  p.vertex_weights = [arcs](std::size_t m, double y) {
    const auto& a = arcs.at(m);
    const double c = a.chart(y);
    if (std::isnan(c)) throw PartError("arc vertex weights: point outside arc");
    Vector w(2);
    w << 1.0 - c / a.length, c / a.length;
    return w;
  };
  return p;
}

inline GeodesicPartition<double> circle_partition(std::size_t m_parts) {
  const auto arcs = circle_arcs(m_parts);
  const double len = arcs.front().length;
  return arc_partition(arcs, [len](double delta) { return (1.0 - delta) * len; });
}

/// Single closed interval [a, b] of the real line, as a one-part partition.
inline GeodesicPartition<double> interval_partition(double a, double b) {
  if (!(b > a)) throw DomainError("interval_partition: need a < b");
  GeodesicPartition<double> p;
  p.n_parts = 1;
  p.distance = [](double x, double y) { return std::abs(x - y); };
  p.reference = [a, b](std::size_t) { return 0.5 * (a + b); };
  p.contains = [a, b](std::size_t, double y) { return y >= a - 1e-12 && y <= b + 1e-12; };
  p.distance_to_part = [a, b](std::size_t, double y) { return y < a ? a - y : (y > b ? y - b : 0.0); };
  p.vertices = [a, b](std::size_t) { return std::vector<double>{a, b}; };
  p.mix = [](std::size_t, const Vector& w, const std::vector<double>& u) {
    double s = 0.0;
    for (std::size_t n = 0; n < u.size(); ++n) s += w[static_cast<Eigen::Index>(n)] * u[n];
    return s;
  };
  p.separation = [a, b](double delta) { return (1.0 - delta) * (b - a); };
  p.project = [a, b](std::size_t, double y) { return std::clamp(y, a, b); };
  p.vertex_weights = [a, b](std::size_t, double y) {
    if (y < a - 1e-12 || y > b + 1e-12) throw PartError("interval vertex weights: point outside interval");
    const double t = std::clamp((y - a) / (b - a), 0.0, 1.0);
    Vector w(2);
    w << 1.0 - t, t;
    return w;
  };
  return p;
}

}  // namespace qas
