#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "qas/error.hpp"
#include "qas/feature.hpp"
#include "qas/measure.hpp"
#include "qas/numerics.hpp"
#include "qas/relu.hpp"
#include "qas/rng.hpp"

namespace qas {

/// How training targets for the core are derived from f(x).
///  nearest:      2 e_n for the nearest atom (margin 2 makes the simplex
///                projection exact once the fit error is below 1/2)
///  interpolate2: inverse-distance weights on the two nearest atoms
///  custom:       caller-supplied weights over all atoms
enum class HeadMode { nearest, interpolate2, custom };

template <class Y>
struct HeadSpec {
  HeadMode mode = HeadMode::nearest;
  IndexSet atoms;  // explicit atom indices into the dense sequence
  std::function<Vector(const Y&)> target_weights;
};

struct Budget {
  std::size_t c = 64;  // hidden width
  std::size_t n = 0;   // number of atoms; 0 means one per distinct point of the range
  std::size_t q = 1;   // atoms per block
  FitOptions fit;
};

/// x -> sum_n [P(f_hat(phi_hat(x)))]_n sum_q [P(u^n)]_q delta_{y_{ceil z^n_q}}.
template <class X, class Y>
struct UnstructuredModel {
  FeatureMap<X> feature;
  ReluNet core;
  std::vector<QuantizedBlock> head;
  IndexSet atoms;  // dense index carried by each block
  std::vector<Y> dense;
  std::function<double(const Y&, const Y&)> distance;
  double eps = 0.0;
  double achieved_error = 0.0;  // sup training W1 error
  double fit_error = 0.0;       // core regression residual
  bool fallback = false;
  std::uint64_t seed = 0;

  bool within_eps() const { return achieved_error <= eps; }
  std::size_t n_atoms() const { return head.size(); }
};

/// Weighted k-medoids over candidate points (Voronoi iteration, farthest-first
/// start from a seeded first medoid). Returns positions into `cand`.
inline std::vector<std::size_t> k_medoids(const Matrix& dist, const std::vector<double>& weight, std::size_t k,
                                          std::uint64_t seed, int max_iter = 100) {
  const auto n = static_cast<std::size_t>(dist.rows());
  if (k == 0 || n == 0) throw DomainError("k_medoids: need k >= 1 and candidates");
  if (k >= n) {
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    return all;
  }
  CounterRng rng(seed);
  std::vector<std::size_t> med{static_cast<std::size_t>(rng.below(n))};
  while (med.size() < k) {
    std::size_t far = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      double d = std::numeric_limits<double>::infinity();
      for (auto m : med) d = std::min(d, dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m)));
      if (d > best) best = d, far = i;
    }
    med.push_back(far);
  }
  std::vector<std::size_t> assign(n);
  for (int it = 0; it < max_iter; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t arg = 0;
      for (std::size_t j = 1; j < k; ++j)
        if (dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(med[j])) <
            dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(med[arg])))
          arg = j;
      assign[i] = arg;
    }
    bool changed = false;
    for (std::size_t j = 0; j < k; ++j) {
      std::size_t best_i = med[j];
      double best_cost = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) {
        if (assign[i] != j) continue;
        double cost = 0.0;
        for (std::size_t l = 0; l < n; ++l)
          if (assign[l] == j) cost += weight[l] * dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l));
        if (cost < best_cost) best_cost = cost, best_i = i;
      }
      if (best_i != med[j]) changed = true;
      med[j] = best_i;
    }
    if (!changed) break;
  }
  std::sort(med.begin(), med.end());
  return med;
}

namespace detail {

template <class Y>
std::size_t nearest_index(const std::vector<Y>& pts, const IndexSet& among, const Y& y,
                          const std::function<double(const Y&, const Y&)>& dist) {
  std::size_t best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < among.size(); ++k) {
    const double d = dist(pts[among[k]], y);
    if (d < bd) bd = d, best = k;
  }
  return best;
}

}  // namespace detail

/// Output measure over dense-sequence indices.
template <class X, class Y>
DiscreteMeasure evaluate(const UnstructuredModel<X, Y>& model, const X& x) {
  std::vector<std::size_t> seq(model.dense.size());
  for (std::size_t i = 0; i < seq.size(); ++i) seq[i] = i;
  const Vector w = project_simplex(relu_forward(model.core, model.feature(x)));
  return quantized_mixing_wasserstein(w, model.head, seq, model.dense.size());
}

/// W1(T(x), delta_y) in closed form.
template <class X, class Y>
double w1_error(const UnstructuredModel<X, Y>& model, const DiscreteMeasure& mu, const Y& y) {
  double total = 0.0;
  for (std::size_t k = 0; k < mu.support_size(); ++k)
    total += mu.weights()[static_cast<Eigen::Index>(k)] * model.distance(model.dense[mu.atoms()[k]], y);
  return total;
}

template <class X, class Y>
PointMeasure<Y> to_points(const UnstructuredModel<X, Y>& model, const DiscreteMeasure& mu) {
  PointMeasure<Y> out;
  for (std::size_t k = 0; k < mu.support_size(); ++k) {
    out.atoms.push_back(model.dense[mu.atoms()[k]]);
    out.weights.push_back(mu.weights()[static_cast<Eigen::Index>(k)]);
  }
  return out;
}

/// t(x) = beta(T(x)).
template <class X, class Y>
Y derandomize(const UnstructuredModel<X, Y>& model, const X& x,
              const std::function<Y(const PointMeasure<Y>&)>& barycenter) {
  if (!barycenter) throw DomainError("derandomize: target has no barycenter map");
  return barycenter(to_points(model, evaluate(model, x)));
}

/// Value matrix of the attention form: row n is sum_q [P(u^n)]_q y_{ceil z^n_q}.
template <class X>
Matrix attention_values(const UnstructuredModel<X, Vector>& model) {
  const Eigen::Index dim = model.dense.front().size();
  Matrix v = Matrix::Zero(static_cast<Eigen::Index>(model.head.size()), dim);
  for (std::size_t n = 0; n < model.head.size(); ++n) {
    const Vector p = project_simplex(model.head[n].u);
    for (Eigen::Index q = 0; q < p.size(); ++q)
      v.row(static_cast<Eigen::Index>(n)) +=
          p[q] * model.dense[ceil_index(model.head[n].z[q], model.dense.size()).index - 1].transpose();
  }
  return v;
}

/// sum_n [P(f_hat(phi_hat(x)))]_n V_n.
template <class X>
Vector attention_form(const UnstructuredModel<X, Vector>& model, const X& x) {
  const Vector w = project_simplex(relu_forward(model.core, model.feature(x)));
  return attention_values(model).transpose() * w;
}

/// Fits the unstructured model on training pairs (x_k, f(x_k)). Atoms are
/// placed on dense points nearest to the sampled range of f, reduced by
/// k-medoids when the budget asks for fewer.
template <class X, class Y>
UnstructuredModel<X, Y> build_unstructured(const std::vector<X>& xs, const std::vector<Y>& ys, FeatureMap<X> feature,
                                           std::vector<Y> dense, std::function<double(const Y&, const Y&)> distance,
                                           const Budget& budget, double eps, std::uint64_t seed,
                                           const HeadSpec<Y>& spec = {}) {
  if (xs.empty() || xs.size() != ys.size()) throw ShapeError("build_unstructured: need matching, nonempty samples");
  if (dense.empty()) throw DomainError("build_unstructured: empty dense sequence");
  if (budget.q == 0) throw DomainError("build_unstructured: Q must be positive");
  UnstructuredModel<X, Y> model;
  model.feature = std::move(feature);
  model.dense = std::move(dense);
  model.distance = std::move(distance);
  model.eps = eps;
  model.seed = seed;

  IndexSet all(model.dense.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

  // Atoms.
  IndexSet atoms = spec.atoms;
  if (atoms.empty() && spec.mode == HeadMode::custom) atoms = all;
  if (atoms.empty()) {
    std::map<std::size_t, double> count;
    for (const auto& y : ys) count[detail::nearest_index(model.dense, all, y, model.distance)] += 1.0;
    IndexSet cand;
    std::vector<double> weight;
    for (const auto& [i, c] : count) cand.push_back(i), weight.push_back(c);
    if (budget.n > 0 && budget.n < cand.size()) {
      Matrix d(static_cast<Eigen::Index>(cand.size()), static_cast<Eigen::Index>(cand.size()));
      for (std::size_t i = 0; i < cand.size(); ++i)
        for (std::size_t j = 0; j < cand.size(); ++j)
          d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = model.distance(model.dense[cand[i]], model.dense[cand[j]]);
      for (auto pos : k_medoids(d, weight, budget.n, seed)) atoms.push_back(cand[pos]);
    } else {
      atoms = cand;
    }
  }
  for (auto a : atoms)
    if (a >= model.dense.size()) throw RangeError("build_unstructured: atom outside the dense sequence");
  model.atoms = atoms;
  for (auto a : atoms) {
    QuantizedBlock b;
    b.u = Vector::Zero(static_cast<Eigen::Index>(budget.q));
    b.u[0] = 1.0;
    b.z = Vector::Constant(static_cast<Eigen::Index>(budget.q), static_cast<double>(a + 1));
    model.head.push_back(std::move(b));
  }
  const auto n_atoms = static_cast<Eigen::Index>(atoms.size());

  // Core targets.
  std::vector<Vector> feats, targets;
  feats.reserve(xs.size());
  for (const auto& x : xs) feats.push_back(model.feature(x));
  for (const auto& y : ys) {
    Vector t = Vector::Zero(n_atoms);
    if (spec.mode == HeadMode::custom) {
      if (!spec.target_weights) throw DomainError("build_unstructured: custom head without target weights");
      t = spec.target_weights(y);
      if (t.size() != n_atoms) throw ShapeError("build_unstructured: target weights have the wrong length");
    } else if (spec.mode == HeadMode::nearest || n_atoms == 1) {
      t[static_cast<Eigen::Index>(detail::nearest_index(model.dense, atoms, y, model.distance))] = 2.0;
    } else {
      std::size_t i1 = 0, i2 = 1;
      std::vector<double> d(atoms.size());
      for (std::size_t k = 0; k < atoms.size(); ++k) d[k] = model.distance(model.dense[atoms[k]], y);
      if (d[i2] < d[i1]) std::swap(i1, i2);
      for (std::size_t k = 2; k < atoms.size(); ++k) {
        if (d[k] < d[i1]) i2 = i1, i1 = k;
        else if (d[k] < d[i2]) i2 = k;
      }
      if (d[i1] == 0.0) {
        t[static_cast<Eigen::Index>(i1)] = 2.0;
      } else {
        t[static_cast<Eigen::Index>(i1)] = d[i2] / (d[i1] + d[i2]);
        t[static_cast<Eigen::Index>(i2)] = d[i1] / (d[i1] + d[i2]);
      }
    }
    targets.push_back(std::move(t));
  }

  bool constant = true;
  for (const auto& t : targets) constant = constant && t == targets.front();
  if (constant) {
    // One target for every input: a net with no hidden layer reproduces it.
    model.core = constant_net(feats.front().size(), targets.front());
  } else {
    auto fit = fit_universal(feats, targets, budget.c, seed, budget.fit);
    model.core = std::move(fit.net);
    model.fit_error = fit.max_train_error;
    model.fallback = fit.fallback;
  }

  double worst = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) worst = std::max(worst, w1_error(model, evaluate(model, xs[k]), ys[k]));
  model.achieved_error = worst;
  return model;
}

// ---------------------------------------------------------------------------
// Euclidean heads

/// Cross-polytope c +- R e_i together with c itself. Any y with
/// ||y - c||_1 <= R is the convex combination with weights
/// (1 - ||t||_1, t_1^+, t_1^-, ...), t = (y - c) / R.
struct CrossPolytope {
  Vector center;
  double radius = 1.0;

  std::vector<Vector> vertices() const {
    std::vector<Vector> v{center};
    for (Eigen::Index i = 0; i < center.size(); ++i) {
      v.push_back(center + radius * Vector::Unit(center.size(), i));
      v.push_back(center - radius * Vector::Unit(center.size(), i));
    }
    return v;
  }

  Vector weights(const Vector& y) const {
    Vector t = (y - center) / radius;
    const double l1 = t.lpNorm<1>();
    if (l1 > 1.0) t /= l1;
    Vector w(2 * center.size() + 1);
    w[0] = std::max(0.0, 1.0 - t.lpNorm<1>());
    for (Eigen::Index i = 0; i < center.size(); ++i) {
      w[2 * i + 1] = std::max(t[i], 0.0);
      w[2 * i + 2] = std::max(-t[i], 0.0);
    }
    return w / w.sum();
  }
};

/// Smallest cross-polytope around the coordinate midrange containing every y.
inline CrossPolytope enclosing_cross_polytope(const std::vector<Vector>& ys, double pad = 1e-9) {
  if (ys.empty()) throw ShapeError("enclosing_cross_polytope: no points");
  Vector lo = ys.front(), hi = ys.front();
  for (const auto& y : ys) lo = lo.cwiseMin(y), hi = hi.cwiseMax(y);
  CrossPolytope p;
  p.center = 0.5 * (lo + hi);
  double r = 0.0;
  for (const auto& y : ys) r = std::max(r, (y - p.center).lpNorm<1>());
  p.radius = std::max(r * (1.0 + pad), 1e-12);
  return p;
}

/// Corner simplex v_0 = lo - m, v_i = v_0 + S e_i around a box [lo, hi].
/// Barycentric weights ((1 - sum t), t), t = (y - v_0) / S, are affine in y.
struct CornerSimplex {
  Vector origin;
  double side = 1.0;

  std::vector<Vector> vertices() const {
    std::vector<Vector> v{origin};
    for (Eigen::Index i = 0; i < origin.size(); ++i) v.push_back(origin + side * Vector::Unit(origin.size(), i));
    return v;
  }

  Vector weights(const Vector& y) const {
    Vector w(origin.size() + 1);
    w.tail(origin.size()) = ((y - origin) / side).cwiseMax(0.0);
    w[0] = 1.0 - w.tail(origin.size()).sum();
    if (w[0] < 0.0) {
      w[0] = 0.0;
      w /= w.sum();
    }
    return w;
  }
};

/// Corner simplex containing every y with margin `pad` times the box size.
inline CornerSimplex enclosing_corner_simplex(const std::vector<Vector>& ys, double pad = 0.05) {
  if (ys.empty()) throw ShapeError("enclosing_corner_simplex: no points");
  Vector lo = ys.front(), hi = ys.front();
  for (const auto& y : ys) lo = lo.cwiseMin(y), hi = hi.cwiseMax(y);
  const double total = (hi - lo).sum();
  const double margin = std::max(pad * total, 1e-12) / static_cast<double>(lo.size() + 1);
  return {lo.array() - margin, total + static_cast<double>(lo.size() + 1) * margin};
}

}  // namespace qas
