#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "qas/error.hpp"
#include "qas/metric.hpp"
#include "qas/numerics.hpp"

namespace qas {

enum class FeatureKind { kuratowski, landmark, schauder, chart };
enum class FeatureNorm { linf, l2 };

inline double feature_norm(const Vector& v, FeatureNorm n) {
  if (v.size() == 0) return 0.0;
  return n == FeatureNorm::linf ? v.lpNorm<Eigen::Infinity>() : v.norm();
}

inline std::string to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::kuratowski: return "kuratowski";
    case FeatureKind::landmark: return "landmark";
    case FeatureKind::schauder: return "schauder";
    default: return "chart";
  }
}

/// Feature map phi: X -> (R^D, norm). `lower`/`upper` are the measured
/// bi-Lipschitz constants over the domain it was built on (NaN if not measured).
template <class Input>
struct FeatureMap {
  FeatureKind kind = FeatureKind::kuratowski;
  std::size_t target_dim = 0;
  FeatureNorm norm = FeatureNorm::linf;
  std::function<Vector(const Input&)> map;
  IndexSet anchors;
  double lower = std::numeric_limits<double>::quiet_NaN();
  double upper = std::numeric_limits<double>::quiet_NaN();

  Vector operator()(const Input& x) const { return map(x); }
  double distance(const Input& a, const Input& b) const { return feature_norm(map(a) - map(b), norm); }
  bool injective() const { return lower > 0.0; }
};

namespace detail {

/// Exhaustive scan of ||phi(x) - phi(y)|| / d(x, y) over all pairs.
inline void measure_bilipschitz(FeatureMap<std::size_t>& phi, const FiniteMetricSpace& s) {
  std::vector<Vector> img(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) img[i] = phi(i);
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = i + 1; j < s.size(); ++j) {
      const double r = feature_norm(img[i] - img[j], phi.norm) / s(i, j);
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
  if (s.size() < 2) lo = hi = 1.0;
  phi.lower = lo;
  phi.upper = hi;
}

}  // namespace detail

/// phi(x) = (d(x, a))_{a in anchors} into l_inf.
inline FeatureMap<std::size_t> kuratowski_embed(const FiniteMetricSpace& s, IndexSet anchors) {
  if (anchors.empty()) throw DomainError("kuratowski_embed: anchors must be nonempty");
  for (auto a : anchors)
    if (a >= s.size()) throw RangeError("kuratowski_embed: anchor out of range");
  FeatureMap<std::size_t> phi;
  phi.kind = FeatureKind::kuratowski;
  phi.target_dim = anchors.size();
  phi.norm = FeatureNorm::linf;
  phi.anchors = anchors;
  phi.map = [s, anchors](const std::size_t& x) {
    if (x >= s.size()) throw RangeError("kuratowski feature: point out of range");
    Vector v(static_cast<Eigen::Index>(anchors.size()));
    for (std::size_t k = 0; k < anchors.size(); ++k) v[static_cast<Eigen::Index>(k)] = s(x, anchors[k]);
    return v;
  };
  detail::measure_bilipschitz(phi, s);
  return phi;
}

inline FeatureMap<std::size_t> kuratowski_embed(const FiniteMetricSpace& s) {
  IndexSet all(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) all[i] = i;
  return kuratowski_embed(s, std::move(all));
}

/// Same construction over arbitrary points with an explicit metric; the
/// Lipschitz constants are left unmeasured.
template <class Point, class Dist>
FeatureMap<Point> kuratowski_embed_points(std::vector<Point> anchors, Dist dist) {
  if (anchors.empty()) throw DomainError("kuratowski_embed: anchors must be nonempty");
  FeatureMap<Point> phi;
  phi.kind = FeatureKind::kuratowski;
  phi.target_dim = anchors.size();
  phi.norm = FeatureNorm::linf;
  for (std::size_t i = 0; i < anchors.size(); ++i) phi.anchors.push_back(i);
  phi.map = [anchors = std::move(anchors), dist](const Point& x) {
    Vector v(static_cast<Eigen::Index>(anchors.size()));
    for (std::size_t k = 0; k < anchors.size(); ++k) v[static_cast<Eigen::Index>(k)] = dist(x, anchors[k]);
    return v;
  };
  return phi;
}

/// Distances to a maximal delta-separated net (greedy in index order).
inline FeatureMap<std::size_t> landmark_embed(const FiniteMetricSpace& s, double delta) {
  auto phi = kuratowski_embed(s, separated_net(s, delta));
  phi.kind = FeatureKind::landmark;
  return phi;
}

// ---------------------------------------------------------------------------
// Fourier coefficients on the circle

/// Real Fourier coefficients of grid samples u(2 pi j / G), in the order
/// (a0, a1, b1, a2, b2, ...) for u = a0 + sum_k a_k cos(k t) + b_k sin(k t).
/// Returns the first n of them.
inline Vector schauder_truncate(const Vector& u, std::size_t n) {
  const auto g = static_cast<std::size_t>(u.size());
  if (g == 0 || !std::has_single_bit(g)) throw DomainError("schauder_truncate: grid size must be a power of two");
  if (n > g / 2) throw RangeError("schauder_truncate: order " + std::to_string(n) + " exceeds G/2");
  detail::require_finite(u, "schauder_truncate");
  Eigen::FFT<double> fft;
  std::vector<double> in(u.data(), u.data() + u.size());
  std::vector<std::complex<double>> out;
  fft.fwd(out, in);
  const double gd = static_cast<double>(g);
  Vector c(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = (i + 1) / 2;
    if (i == 0)
      c[0] = out[0].real() / gd;
    else if (i % 2 == 1)
      c[static_cast<Eigen::Index>(i)] = 2.0 * out[k].real() / gd;
    else
      c[static_cast<Eigen::Index>(i)] = -2.0 * out[k].imag() / gd;
  }
  return c;
}

/// Inverse of schauder_truncate on a grid of size g.
inline Vector schauder_synthesize(const Vector& coeffs, std::size_t g) {
  Vector u = Vector::Zero(static_cast<Eigen::Index>(g));
  for (std::size_t j = 0; j < g; ++j) {
    const double t = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(g);
    double s = coeffs.size() > 0 ? coeffs[0] : 0.0;
    for (Eigen::Index i = 1; i < coeffs.size(); ++i) {
      const double k = static_cast<double>((i + 1) / 2);
      s += coeffs[i] * (i % 2 == 1 ? std::cos(k * t) : std::sin(k * t));
    }
    u[static_cast<Eigen::Index>(j)] = s;
  }
  return u;
}

/// phi(u) = first n Fourier coefficients, l2 feature norm.
inline FeatureMap<Vector> schauder_feature(std::size_t n) {
  FeatureMap<Vector> phi;
  phi.kind = FeatureKind::schauder;
  phi.target_dim = n;
  phi.norm = FeatureNorm::l2;
  phi.map = [n](const Vector& u) { return schauder_truncate(u, n); };
  return phi;
}

// ---------------------------------------------------------------------------
// Bounded approximation property by coordinate truncation

/// T_n zeroes every coordinate past the n-th. Only linear truncations are
/// provided.
struct BapFamily {
  std::size_t max_rank = 0;
  FeatureNorm norm = FeatureNorm::linf;
  double norm_bound = 1.0;

  Vector apply(std::size_t n, const Vector& x) const {
    if (static_cast<std::size_t>(x.size()) != max_rank) throw ShapeError("bap: vector dimension mismatch");
    Vector y = x;
    const auto k = static_cast<Eigen::Index>(std::min(n, max_rank));
    y.tail(y.size() - k).setZero();
    return y;
  }
};

inline BapFamily coordinate_truncations(std::size_t dim, FeatureNorm norm) { return {dim, norm, 1.0}; }

/// min{n >= 1 : max_{x in K} ||T_n x - x|| <= eps}.
inline std::size_t bap_rate(const BapFamily& b, const std::vector<Vector>& k, double eps) {
  if (!(eps > 0.0)) throw DomainError("bap_rate: eps must be positive");
  // ||T_n x - x|| is the norm of the tail, which only shrinks with n.
  for (std::size_t n = 1; n <= b.max_rank; ++n) {
    double worst = 0.0;
    for (const auto& x : k) worst = std::max(worst, feature_norm(b.apply(n, x) - x, b.norm));
    if (worst <= eps) return n;
  }
  throw SaturationError("bap_rate: no truncation up to rank " + std::to_string(b.max_rank) + " reaches eps");
}

/// phi_hat(x) = first d coordinates of phi(x), with the restricted norm.
template <class Input>
FeatureMap<Input> compressed_feature(const FeatureMap<Input>& phi, const BapFamily& b, std::size_t d) {
  if (d == 0 || d > phi.target_dim || d > b.max_rank)
    throw RangeError("compressed_feature: d = " + std::to_string(d) + " out of range");
  if (b.max_rank != phi.target_dim) throw ShapeError("compressed_feature: truncation family has the wrong rank");
  FeatureMap<Input> out = phi;
  out.target_dim = d;
  out.norm = b.norm;
  out.map = [inner = phi.map, d](const Input& x) -> Vector { return inner(x).head(static_cast<Eigen::Index>(d)); };
  out.lower = std::numeric_limits<double>::quiet_NaN();
  if (d < phi.anchors.size()) out.anchors.resize(d);
  return out;
}

}  // namespace qas
