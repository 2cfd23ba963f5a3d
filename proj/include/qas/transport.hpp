#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "qas/error.hpp"

namespace qas {

struct TransportPlan {
  double cost = 0.0;
  Eigen::MatrixXd flow;  // supplies x demands
  std::size_t augmentations = 0;
};

/// Exact balanced transportation problem by successive shortest paths.
///
/// Nodes are a super source, the supply atoms, the demand atoms and a super
/// sink. Dijkstra runs on reduced costs (Johnson potentials); each
/// augmentation saturates a supply, a demand or a reverse arc.
inline TransportPlan solve_transport(const Eigen::VectorXd& supply, const Eigen::VectorXd& demand,
                                     const Eigen::MatrixXd& cost) {
  const auto m = static_cast<std::size_t>(supply.size());
  const auto n = static_cast<std::size_t>(demand.size());
  if (cost.rows() != supply.size() || cost.cols() != demand.size())
    throw ShapeError("solve_transport: cost matrix shape mismatch");
  if (m == 0 || n == 0) throw ShapeError("solve_transport: empty marginal");
  if (supply.minCoeff() < 0.0 || demand.minCoeff() < 0.0) throw DomainError("solve_transport: negative mass");
  if (cost.minCoeff() < 0.0) throw DomainError("solve_transport: negative cost");
  const double total = supply.sum();
  if (std::abs(total - demand.sum()) > 1e-9 * std::max(1.0, total))
    throw DomainError("solve_transport: unbalanced marginals");

  constexpr double kMassEps = 1e-15;
  const double inf = std::numeric_limits<double>::infinity();

  TransportPlan plan;
  plan.flow = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  std::vector<double> rem_a(supply.data(), supply.data() + m);
  std::vector<double> rem_b(demand.data(), demand.data() + n);

  // Node layout: 0 = source, 1..m supplies, m+1..m+n demands, m+n+1 = sink.
  const std::size_t V = m + n + 2, S = 0, T = m + n + 1;
  std::vector<double> pot(V, 0.0), dist(V);
  std::vector<std::size_t> prev(V);
  std::vector<bool> done(V);

  auto arc_cost = [&](std::size_t u, std::size_t v) -> double {
    // Returns +inf when the residual arc u->v does not exist.
    if (u == S && v >= 1 && v <= m) return rem_a[v - 1] > kMassEps ? 0.0 : inf;
    if (u >= 1 && u <= m && v > m && v < T) return cost(static_cast<Eigen::Index>(u - 1), static_cast<Eigen::Index>(v - m - 1));
    if (u > m && u < T && v >= 1 && v <= m)
      return plan.flow(static_cast<Eigen::Index>(v - 1), static_cast<Eigen::Index>(u - m - 1)) > kMassEps
                 ? -cost(static_cast<Eigen::Index>(v - 1), static_cast<Eigen::Index>(u - m - 1))
                 : inf;
    if (u > m && u < T && v == T) return rem_b[u - m - 1] > kMassEps ? 0.0 : inf;
    return inf;
  };

  double remaining = total;
  const std::size_t max_iter = 8 * (m + n) * (m + n) + 64;
  while (remaining > 1e-14 * std::max(1.0, total)) {
    if (++plan.augmentations > max_iter) throw ConvergenceError("solve_transport: augmentation limit", remaining);
    std::fill(dist.begin(), dist.end(), inf);
    std::fill(done.begin(), done.end(), false);
    dist[S] = 0.0;
    for (std::size_t iter = 0; iter < V; ++iter) {
      std::size_t u = V;
      for (std::size_t x = 0; x < V; ++x)
        if (!done[x] && dist[x] < inf && (u == V || dist[x] < dist[u])) u = x;
      if (u == V) break;
      done[u] = true;
      if (u == T) break;
      for (std::size_t v = 0; v < V; ++v) {
        if (done[v]) continue;
        const double c = arc_cost(u, v);
        if (c == inf) continue;
        const double reduced = std::max(0.0, c + pot[u] - pot[v]);
        if (dist[u] + reduced < dist[v]) {
          dist[v] = dist[u] + reduced;
          prev[v] = u;
        }
      }
    }
    if (dist[T] == inf) throw ConvergenceError("solve_transport: sink unreachable", remaining);
    // Unreached and unsettled nodes shift by dist[T] so reduced costs stay
    // nonnegative on every residual arc.
    for (std::size_t v = 0; v < V; ++v) pot[v] += std::min(dist[v], dist[T]);

    double push = inf;
    for (std::size_t v = T; v != S; v = prev[v]) {
      const std::size_t u = prev[v];
      if (u == S) push = std::min(push, rem_a[v - 1]);
      else if (v == T) push = std::min(push, rem_b[u - m - 1]);
      else if (u > m) push = std::min(push, plan.flow(static_cast<Eigen::Index>(v - 1), static_cast<Eigen::Index>(u - m - 1)));
    }
    for (std::size_t v = T; v != S; v = prev[v]) {
      const std::size_t u = prev[v];
      if (u == S) rem_a[v - 1] -= push;
      else if (v == T) rem_b[u - m - 1] -= push;
      else if (u <= m) plan.flow(static_cast<Eigen::Index>(u - 1), static_cast<Eigen::Index>(v - m - 1)) += push;
      else plan.flow(static_cast<Eigen::Index>(v - 1), static_cast<Eigen::Index>(u - m - 1)) -= push;
    }
    remaining -= push;
  }
  plan.cost = (plan.flow.array() * cost.array()).sum();
  return plan;
}

}  // namespace qas
