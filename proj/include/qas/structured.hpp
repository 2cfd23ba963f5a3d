#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "qas/approximator.hpp"
#include "qas/error.hpp"
#include "qas/partition.hpp"
#include "qas/partition_geometry.hpp"

namespace qas {

/// Error budget of the structured pipeline.
struct EpsilonSplit {
  double a = 0.0, q = 0.0, e = 0.0;
  double total() const { return a + q + e; }
  static EpsilonSplit even(double eps) { return {eps / 3.0, eps / 3.0, eps / 3.0}; }
};

/// Seed of sub-model `which` (0: f^{(n,m)}, 1: classifier) for the pair (n, m).
inline std::uint64_t structured_seed(std::uint64_t seed, std::size_t n, std::size_t m, std::size_t which) {
  CounterRng r(seed, (static_cast<std::uint64_t>(n) << 32) | (static_cast<std::uint64_t>(m) << 1) | which);
  return r();
}

template <class X, class Y>
struct StructuredModel {
  PartitionOfUnity<X> source;
  std::vector<FeatureMap<X>> features;  // chart of each source part
  GeodesicPartition<Y> target;
  EpsilonSplit eps;
  double delta = 0.0;
  std::size_t n_star = 0;    // 0 when the mass target was not met
  std::size_t n_active = 0;  // min(N_star, number of parts)
  double radius = 0.0;       // R = 1 / N_star
  double threshold = 0.0;    // eps_A / 4
  double delta_star = 0.0;   // S^dagger(3 eps_A)
  // Indexed [n][m].
  std::vector<std::vector<std::optional<UnstructuredModel<X, Y>>>> sub;
  std::vector<std::vector<ReluNet>> classifier;
  // Levels (0, z_max[m]) of the classifier head of part m. Distances are
  // capped at eps_A: only the region around the threshold eps_A / 4 matters.
  std::vector<double> z_max;
  Y fallback;                 // output outside the good set

  std::size_t n_source() const { return source.size(); }
  std::size_t n_target() const { return target.n_parts; }
};

struct ClassifierOutput {
  Vector c_hat;      // C_hat_m(x)
  Vector weights;    // C^Y(x), one-hot or zero
  std::size_t fired = 0;
  std::size_t part = std::numeric_limits<std::size_t>::max();
  bool abstain() const { return fired == 0; }
  bool tie() const { return fired > 1; }
};

template <class Y>
struct StructuredOutput {
  PointMeasure<Y> measure;
  Vector psi;
  bool good = false;
  bool certified = false;  // good set and exactly one part certified
  ClassifierOutput cls;
};

namespace detail {

template <class X, class Y>
double classifier_level(const StructuredModel<X, Y>& model, std::size_t n, std::size_t m, const X& x) {
  const Vector p = project_simplex(relu_forward(model.classifier[n][m], model.features[n](x)));
  return model.z_max[m] * p[1];
}

}  // namespace detail

/// C_hat_m(x) = sum_n psi_n(x) sum_i [P(g_{n,m}(phi_n(x)))]_i |z_i| and the
/// indicators I(C_hat_m <= eps_A / 4); the lowest firing index wins.
template <class X, class Y>
ClassifierOutput part_classifier(const StructuredModel<X, Y>& model, const X& x, const Vector& psi) {
  const std::size_t mm = model.n_target();
  ClassifierOutput out;
  out.c_hat = Vector::Zero(static_cast<Eigen::Index>(mm));
  out.weights = Vector::Zero(static_cast<Eigen::Index>(mm));
  if (!psi.allFinite()) {
    out.c_hat.setConstant(std::numeric_limits<double>::infinity());
    return out;
  }
  for (std::size_t m = 0; m < mm; ++m)
    for (Eigen::Index n = 0; n < psi.size(); ++n)
      if (psi[n] > 0.0) out.c_hat[static_cast<Eigen::Index>(m)] += psi[n] * detail::classifier_level(model, static_cast<std::size_t>(n), m, x);
  for (std::size_t m = 0; m < mm; ++m)
    if (out.c_hat[static_cast<Eigen::Index>(m)] <= model.threshold) {
      if (out.fired == 0) out.part = m;
      ++out.fired;
    }
  if (out.fired > 0) out.weights[static_cast<Eigen::Index>(out.part)] = 1.0;
  return out;
}

template <class X, class Y>
ClassifierOutput part_classifier(const StructuredModel<X, Y>& model, const X& x) {
  return part_classifier(model, x, partition_weights(model.source, x, model.n_active, model.radius).psi);
}

/// T(x) = sum_n sum_m [C^X(x)]_n [C^Y(x)]_m delta_{f^{(n,m)}(x)}; delta at the
/// fallback point off the good set or when no part is certified.
template <class X, class Y>
StructuredOutput<Y> evaluate_structured(const StructuredModel<X, Y>& model, const X& x) {
  StructuredOutput<Y> out;
  const auto pw = partition_weights(model.source, x, model.n_active, model.radius);
  out.psi = pw.psi;
  out.good = pw.good;
  out.cls = part_classifier(model, x, pw.psi);
  bool usable = out.good && !out.cls.abstain();
  if (usable) {
    const std::size_t m = out.cls.part;
    for (Eigen::Index n = 0; n < pw.psi.size(); ++n) {
      if (!(pw.psi[n] > 0.0)) continue;
      const auto& sub = model.sub[static_cast<std::size_t>(n)][m];
      if (!sub) {
        usable = false;
        break;
      }
      const Vector w = project_simplex(relu_forward(sub->core, sub->feature(x)));
      out.measure.atoms.push_back(model.target.mix(m, w, model.target.vertices(m)));
      out.measure.weights.push_back(pw.psi[n]);
    }
  }
  if (!usable) {
    out.measure = PointMeasure<Y>{{model.fallback}, {1.0}};
    return out;
  }
  out.certified = out.cls.fired == 1;
  return out;
}

/// beta_{Y_m}(T(x)) for the certified part m. Fails with PartError when an
/// atom lies outside Y_m.
template <class X, class Y>
Y derandomize_structured(const StructuredModel<X, Y>& model, const StructuredOutput<Y>& out) {
  if (out.cls.abstain() || !out.good) return model.fallback;
  const std::size_t m = out.cls.part;
  for (const auto& a : out.measure.atoms)
    if (!model.target.contains(m, a)) throw PartError("derandomize: output atom outside part " + std::to_string(m));
  Vector w = Eigen::Map<const Vector>(out.measure.weights.data(), static_cast<Eigen::Index>(out.measure.weights.size()));
  return model.target.mix(m, w / w.sum(), out.measure.atoms);
}

/// Fits every f^{(n,m)} and classifier head. Source part n is trained on the
/// sample points it contains; f^{(n,m)} only on those whose image lies
/// within eps_A of Y_m, against the vertex weights of the projection onto Y_m.
template <class X, class Y>
StructuredModel<X, Y> build_structured(const std::vector<X>& xs, const std::vector<Y>& ys, PartitionOfUnity<X> source,
                                       std::vector<FeatureMap<X>> features, GeodesicPartition<Y> target,
                                       const Budget& budget, EpsilonSplit eps, double delta, std::uint64_t seed) {
  if (xs.empty() || xs.size() != ys.size()) throw ShapeError("build_structured: need matching, nonempty samples");
  if (features.size() != source.size()) throw ShapeError("build_structured: one feature map per source part");
  if (!(eps.a > 0.0 && eps.q > 0.0 && eps.e > 0.0)) throw DomainError("build_structured: epsilons must be positive");
  if (!(delta >= 0.0 && delta < 1.0)) throw DomainError("build_structured: delta must lie in [0, 1)");
  if (!target.project || !target.vertex_weights) throw DomainError("build_structured: target partition lacks projections");

  StructuredModel<X, Y> model;
  model.source = std::move(source);
  model.features = std::move(features);
  model.target = std::move(target);
  model.eps = eps;
  model.delta = delta;
  model.threshold = 0.25 * eps.a;
  model.delta_star = separation_inverse(model.target, 3.0 * eps.a);
  model.fallback = model.target.reference(0);

  const std::size_t nn = model.n_source(), mm = model.n_target();
  model.n_star = good_set_index(model.source, xs, delta);
  const std::size_t n_eff = model.n_star == 0 ? nn : model.n_star;
  model.n_active = std::min(n_eff, nn);
  model.radius = 1.0 / static_cast<double>(n_eff);

  // d(f(x), Y_m) for every sample.
  std::vector<std::vector<double>> gap(mm, std::vector<double>(xs.size()));
  model.z_max.assign(mm, 1.0);
  for (std::size_t m = 0; m < mm; ++m) {
    double top = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) top = std::max(top, gap[m][k] = model.target.distance_to_part(m, ys[k]));
    model.z_max[m] = top > 0.0 ? std::min(top, eps.a) : eps.a;
  }

  model.sub.assign(nn, std::vector<std::optional<UnstructuredModel<X, Y>>>(mm));
  model.classifier.assign(nn, std::vector<ReluNet>(mm));
  for (std::size_t n = 0; n < nn; ++n) {
    std::vector<std::size_t> inside;
    for (std::size_t k = 0; k < xs.size(); ++k)
      if (model.source.contains(n, xs[k])) inside.push_back(k);
    std::vector<Vector> feats;
    for (auto k : inside) feats.push_back(model.features[n](xs[k]));

    for (std::size_t m = 0; m < mm; ++m) {
      // Classifier head: weights (1 - t / z_max, t / z_max) on the levels (0, z_max).
      if (inside.empty()) {
        model.classifier[n][m] = constant_net(static_cast<Eigen::Index>(model.features[n].target_dim), (Vector(2) << 0.0, 1.0).finished());
      } else {
        std::vector<Vector> tg;
        for (auto k : inside) {
          const double t = std::min(gap[m][k], model.z_max[m]) / model.z_max[m];
          tg.push_back((Vector(2) << 1.0 - t, t).finished());
        }
        bool constant = true;
        for (const auto& t : tg) constant = constant && t == tg.front();
        model.classifier[n][m] = constant ? constant_net(feats.front().size(), tg.front())
                                          : fit_universal(feats, tg, budget.c, structured_seed(seed, n, m, 1), budget.fit).net;
      }

      std::vector<X> sx;
      std::vector<Y> sy;
      for (auto k : inside)
        if (gap[m][k] <= eps.a) {
          sx.push_back(xs[k]);
          sy.push_back(model.target.project(m, ys[k]));
        }
      if (sx.empty()) continue;
      HeadSpec<Y> spec;
      spec.mode = HeadMode::custom;
      const auto& tp = model.target;
      spec.target_weights = [&tp, m](const Y& y) { return tp.vertex_weights(m, y); };
      std::function<double(const Y&, const Y&)> dist = model.target.distance;
      model.sub[n][m] = build_unstructured(sx, sy, model.features[n], model.target.vertices(m), dist, budget, eps.e,
                                           structured_seed(seed, n, m, 0), spec);
    }
  }
  return model;
}

}  // namespace qas
