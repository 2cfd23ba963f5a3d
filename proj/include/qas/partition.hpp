#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "qas/error.hpp"
#include "qas/metric.hpp"
#include "qas/numerics.hpp"
#include "qas/partition_geometry.hpp"

namespace qas {

/// Closed cover X_1, X_2, ... of a source space, given through the functions
/// x -> d(x, X_n^c) (infinite when X_n is everything).
template <class X>
struct PartitionOfUnity {
  std::vector<std::function<double(const X&)>> dist_to_complement;

  std::size_t size() const { return dist_to_complement.size(); }
  bool contains(std::size_t n, const X& x) const { return dist_to_complement.at(n)(x) > 0.0; }
};

struct PartitionWeights {
  Vector psi;        // NaN entries when the denominator vanishes
  bool good = false; // x in X^{(n, R)}
};

/// psi_k(x) = d(x, X_k^c) / sum_{i < n} d(x, X_i^c) over the first n parts,
/// and whether some X_i (i < n) contains x at depth >= R.
template <class X>
PartitionWeights partition_weights(const PartitionOfUnity<X>& p, const X& x, std::size_t n_active, double r) {
  if (!(r > 0.0)) throw DomainError("partition_weights: R must be positive");
  if (n_active == 0 || n_active > p.size())
    throw RangeError("partition_weights: n = " + std::to_string(n_active) + " outside 1.." + std::to_string(p.size()));
  Vector d(static_cast<Eigen::Index>(n_active));
  std::size_t unbounded = 0;
  for (std::size_t i = 0; i < n_active; ++i) {
    d[static_cast<Eigen::Index>(i)] = p.dist_to_complement[i](x);
    if (std::isinf(d[static_cast<Eigen::Index>(i)])) ++unbounded;
  }
  PartitionWeights out;
  out.good = (d.array() >= r).any();
  if (unbounded > 0) {
    out.psi = (d.array().isInf()).cast<double>().matrix() / static_cast<double>(unbounded);
    return out;
  }
  const double denom = d.sum();
  if (!(denom > 0.0)) {
    out.psi = Vector::Constant(d.size(), std::numeric_limits<double>::quiet_NaN());
    out.good = false;
    return out;
  }
  out.psi = d / denom;
  return out;
}

/// Cover of a finite metric space by index sets.
inline PartitionOfUnity<std::size_t> finite_partition(const FiniteMetricSpace& s, const std::vector<IndexSet>& parts) {
  PartitionOfUnity<std::size_t> p;
  for (const auto& part : parts) {
    std::vector<bool> in(s.size(), false);
    for (auto v : part) {
      if (v >= s.size()) throw RangeError("finite_partition: vertex out of range");
      in[v] = true;
    }
    p.dist_to_complement.push_back([s, in](const std::size_t& x) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < s.size(); ++j)
        if (!in[j]) best = std::min(best, s(x, j));
      return best;
    });
  }
  return p;
}

/// Cover of [lo, hi] by closed intervals.
inline PartitionOfUnity<double> interval_cover(const std::vector<std::pair<double, double>>& parts, double lo, double hi) {
  PartitionOfUnity<double> p;
  for (auto [a, b] : parts) {
    if (!(b > a)) throw DomainError("interval_cover: empty interval");
    const bool left_open = a > lo, right_open = b < hi;
    p.dist_to_complement.push_back([a, b, left_open, right_open](const double& x) {
      if (x < a || x > b) return 0.0;
      double d = std::numeric_limits<double>::infinity();
      if (left_open) d = std::min(d, x - a);
      if (right_open) d = std::min(d, b - x);
      return d;
    });
  }
  return p;
}

/// Cover of the circle by closed arcs.
inline PartitionOfUnity<double> arc_cover(const std::vector<CircleArc>& arcs) {
  PartitionOfUnity<double> p;
  for (const auto& arc : arcs) {
    p.dist_to_complement.push_back([arc](const double& theta) {
      if (arc.length >= kTwoPi) return std::numeric_limits<double>::infinity();
      const double c = arc.chart(theta);
      if (std::isnan(c)) return 0.0;
      return std::min(c, arc.length - c);
    });
  }
  return p;
}

/// N_star = min{N : mass(X^{(N, 1/N)}) >= 1 - delta} over an empirical
/// sample (equal weights). Parts past the last one add nothing, so only R
/// shrinks once N exceeds the cover size. Returns 0 when n_max is reached.
template <class X>
std::size_t good_set_index(const PartitionOfUnity<X>& p, const std::vector<X>& sample, double delta,
                           std::size_t n_max = 10000) {
  if (sample.empty()) throw ShapeError("good_set_index: empty sample");
  for (std::size_t n = 1; n <= n_max; ++n) {
    const double r = 1.0 / static_cast<double>(n);
    std::size_t hits = 0;
    for (const auto& x : sample)
      if (partition_weights(p, x, std::min(n, p.size()), r).good) ++hits;
    if (static_cast<double>(hits) >= (1.0 - delta) * static_cast<double>(sample.size())) return n;
  }
  return 0;
}

}  // namespace qas
