#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "qas/error.hpp"
#include "qas/numerics.hpp"
#include "qas/rng.hpp"
#include "qas/transport.hpp"

namespace qas {

/// Anything indexable as a finite distance table: FiniteMetricSpace, or a
/// dense sequence of points with a metric.
template <class G>
concept GroundMetric = requires(const G& g, std::size_t i) {
  { g.size() } -> std::convertible_to<std::size_t>;
  { g(i, i) } -> std::convertible_to<double>;
};

inline constexpr double kSimplexTolerance = 1e-12;

/// Finitely supported probability measure over the points 0..carrier_size-1
/// of some ground space. Atoms may repeat.
class DiscreteMeasure {
 public:
  DiscreteMeasure() = default;

  DiscreteMeasure(std::vector<std::size_t> atoms, Vector weights, std::size_t carrier_size)
      : atoms_(std::move(atoms)), weights_(std::move(weights)), carrier_size_(carrier_size) {
    if (atoms_.size() != static_cast<std::size_t>(weights_.size()))
      throw ShapeError("measure: atoms and weights differ in length");
    if (atoms_.empty()) throw ShapeError("measure: empty support");
    for (auto a : atoms_)
      if (a >= carrier_size_) throw RangeError("measure: atom " + std::to_string(a) + " outside carrier");
    if (!weights_.allFinite() || weights_.minCoeff() < -kSimplexTolerance ||
        std::abs(weights_.sum() - 1.0) > kSimplexTolerance)
      throw DomainError("measure: weights must lie on the simplex");
    weights_ = weights_.cwiseMax(0.0);
  }

  static DiscreteMeasure dirac(std::size_t y, std::size_t carrier_size) {
    return DiscreteMeasure({y}, Vector::Ones(1), carrier_size);
  }

  const std::vector<std::size_t>& atoms() const noexcept { return atoms_; }
  const Vector& weights() const noexcept { return weights_; }
  std::size_t carrier_size() const noexcept { return carrier_size_; }
  std::size_t support_size() const noexcept { return atoms_.size(); }

  /// Coincident atoms merged (weights summed) and zero-weight atoms dropped,
  /// atoms in increasing index order.
  DiscreteMeasure merged() const {
    std::map<std::size_t, double> acc;
    for (std::size_t k = 0; k < atoms_.size(); ++k)
      if (weights_[static_cast<Eigen::Index>(k)] > 0.0) acc[atoms_[k]] += weights_[static_cast<Eigen::Index>(k)];
    std::vector<std::size_t> a;
    Vector w(static_cast<Eigen::Index>(acc.size()));
    for (const auto& [atom, weight] : acc) {
      w[static_cast<Eigen::Index>(a.size())] = weight;
      a.push_back(atom);
    }
    return DiscreteMeasure(std::move(a), w / w.sum(), carrier_size_);
  }

  /// Total mass on a given point.
  double mass_at(std::size_t y) const {
    double m = 0.0;
    for (std::size_t k = 0; k < atoms_.size(); ++k)
      if (atoms_[k] == y) m += weights_[static_cast<Eigen::Index>(k)];
    return m;
  }

  friend bool operator==(const DiscreteMeasure&, const DiscreteMeasure&) = default;

 private:
  std::vector<std::size_t> atoms_;
  Vector weights_;
  std::size_t carrier_size_ = 0;
};

enum class Compose { merged, raw };

namespace detail {

template <GroundMetric G>
void require_carrier(const G& ground, const DiscreteMeasure& mu, const char* op) {
  if (mu.carrier_size() != ground.size())
    throw ShapeError(std::string(op) + ": measure carrier does not match the ground space");
}

}  // namespace detail

/// W1(mu, delta_y) = sum_k w_k d(atom_k, y).
template <GroundMetric G>
double w1_to_dirac(const G& ground, const DiscreteMeasure& mu, std::size_t y) {
  detail::require_carrier(ground, mu, "w1_to_dirac");
  if (y >= ground.size()) throw RangeError("w1_to_dirac: target index out of range");
  double total = 0.0;
  for (std::size_t k = 0; k < mu.support_size(); ++k)
    total += mu.weights()[static_cast<Eigen::Index>(k)] * ground(mu.atoms()[k], y);
  return total;
}

/// Exact W1 between two measures on the same ground space via min-cost flow.
template <GroundMetric G>
double w1_discrete(const G& ground, const DiscreteMeasure& mu, const DiscreteMeasure& nu, std::size_t cap = 256) {
  detail::require_carrier(ground, mu, "w1_discrete");
  detail::require_carrier(ground, nu, "w1_discrete");
  DiscreteMeasure a = mu.merged(), b = nu.merged();
  // Fixed argument order so that w1(mu, nu) and w1(nu, mu) run the same
  // floating-point computation.
  if (std::lexicographical_compare(b.atoms().begin(), b.atoms().end(), a.atoms().begin(), a.atoms().end()) ||
      (b.atoms() == a.atoms() && std::lexicographical_compare(b.weights().begin(), b.weights().end(),
                                                              a.weights().begin(), a.weights().end())))
    std::swap(a, b);
  if (a.support_size() + b.support_size() > cap)
    throw SizeError("w1_discrete: combined support " + std::to_string(a.support_size() + b.support_size()) +
                    " exceeds cap " + std::to_string(cap));
  Matrix cost(static_cast<Eigen::Index>(a.support_size()), static_cast<Eigen::Index>(b.support_size()));
  for (std::size_t i = 0; i < a.support_size(); ++i)
    for (std::size_t j = 0; j < b.support_size(); ++j)
      cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = ground(a.atoms()[i], b.atoms()[j]);
  return solve_transport(a.weights(), b.weights(), cost).cost;
}

/// Convex combination sum_n w_n mu_n.
inline DiscreteMeasure mix_wasserstein(const Vector& w, const std::vector<DiscreteMeasure>& measures,
                                       Compose mode = Compose::merged) {
  if (static_cast<std::size_t>(w.size()) != measures.size())
    throw ShapeError("mix_wasserstein: " + std::to_string(w.size()) + " weights for " +
                     std::to_string(measures.size()) + " measures");
  if (!on_simplex(w, kSimplexTolerance)) throw DomainError("mix_wasserstein: weights must lie on the simplex");
  const std::size_t carrier = measures.front().carrier_size();
  std::vector<std::size_t> atoms;
  std::vector<double> weights;
  for (std::size_t n = 0; n < measures.size(); ++n) {
    if (measures[n].carrier_size() != carrier) throw ShapeError("mix_wasserstein: measures on different carriers");
    for (std::size_t k = 0; k < measures[n].support_size(); ++k) {
      atoms.push_back(measures[n].atoms()[k]);
      weights.push_back(w[static_cast<Eigen::Index>(n)] * measures[n].weights()[static_cast<Eigen::Index>(k)]);
    }
  }
  Vector wv = Eigen::Map<Vector>(weights.data(), static_cast<Eigen::Index>(weights.size()));
  DiscreteMeasure out(std::move(atoms), wv / wv.sum(), carrier);
  return mode == Compose::merged ? out.merged() : out;
}

/// sum_i [P_simplex(u)]_i delta_{seq[ceil(z_i)]}; `clamped` counts indices
/// that had to be clamped into range.
inline DiscreteMeasure quantize_measure(const Vector& u, const Vector& z, const std::vector<std::size_t>& dense_seq,
                                        std::size_t carrier_size, Compose mode = Compose::merged,
                                        std::size_t* clamped = nullptr) {
  if (dense_seq.empty()) throw DomainError("quantize_measure: empty dense sequence");
  if (u.size() != z.size() || u.size() == 0) throw ShapeError("quantize_measure: u and z must share a positive length");
  const Vector w = project_simplex(u);
  std::vector<std::size_t> atoms(static_cast<std::size_t>(z.size()));
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const auto ci = ceil_index(z[i], dense_seq.size());
    if (clamped && ci.clamped) ++*clamped;
    atoms[static_cast<std::size_t>(i)] = dense_seq[ci.index - 1];
  }
  DiscreteMeasure out(std::move(atoms), w, carrier_size);
  return mode == Compose::merged ? out.merged() : out;
}

/// One (u, z) block of the quantized head.
struct QuantizedBlock {
  Vector u, z;
};

/// sum_i w_i quantize_measure(u_i, z_i).
inline DiscreteMeasure quantized_mixing_wasserstein(const Vector& w, const std::vector<QuantizedBlock>& blocks,
                                                    const std::vector<std::size_t>& dense_seq,
                                                    std::size_t carrier_size, Compose mode = Compose::merged) {
  if (static_cast<std::size_t>(w.size()) != blocks.size())
    throw ShapeError("quantized_mixing_wasserstein: weight/block count mismatch");
  std::vector<DiscreteMeasure> parts;
  parts.reserve(blocks.size());
  for (const auto& b : blocks) parts.push_back(quantize_measure(b.u, b.z, dense_seq, carrier_size, Compose::raw));
  return mix_wasserstein(w, parts, mode);
}

/// Draws an atom with probability equal to its weight.
inline std::size_t sample(const DiscreteMeasure& mu, CounterRng& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t k = 0; k < mu.support_size(); ++k) {
    const double w = mu.weights()[static_cast<Eigen::Index>(k)];
    if (w <= 0.0) continue;
    last_positive = k;
    cum += w;
    if (u < cum) return mu.atoms()[k];
  }
  return mu.atoms()[last_positive];
}

inline std::size_t sample(const DiscreteMeasure& mu, std::uint64_t seed) {
  CounterRng rng(seed);
  return sample(mu, rng);
}

/// Lower bound (1 - eps/N)^N on P(max_n d(Y_n, f(x_n)) <= N sqrt(eps)) when
/// the uniform W1 error on an N-point source is below eps.
inline double finite_set_success_bound(double eps, std::size_t n_points) {
  if (n_points == 0) throw DomainError("finite_set_success_bound: N must be positive");
  if (!(eps > 0.0)) throw DomainError("finite_set_success_bound: eps must be positive");
  const double ratio = eps / static_cast<double>(n_points);
  if (ratio > 1.0) throw DomainError("finite_set_success_bound: eps/N exceeds 1");
  return std::pow(1.0 - ratio, static_cast<double>(n_points));
}

/// Measure over arbitrary points (used where atoms are computed, not indexed).
template <class Point>
struct PointMeasure {
  std::vector<Point> atoms;
  std::vector<double> weights;

  double total_mass() const {
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
  }
};

/// W1(mu, delta_y) for a point measure under an explicit metric.
template <class Point, class Dist>
double w1_to_point(const PointMeasure<Point>& mu, const Point& y, Dist&& dist) {
  double total = 0.0;
  for (std::size_t k = 0; k < mu.atoms.size(); ++k) total += mu.weights[k] * dist(mu.atoms[k], y);
  return total;
}

}  // namespace qas
