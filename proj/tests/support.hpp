// Shared random instance generators for the test suites.
#pragma once

#include <tuple>
#include <vector>

#include "qas/metric.hpp"
#include "qas/rng.hpp"

namespace testing_support {

/// Connected weighted graph: random spanning tree plus extra random edges.
inline std::vector<qas::WeightedEdge> random_connected_graph(qas::CounterRng& rng, std::size_t n,
                                                             double extra_edge_prob = 0.3) {
  std::vector<qas::WeightedEdge> edges;
  for (std::size_t v = 1; v < n; ++v) edges.push_back({v, rng.below(v), 0.5 + rng.uniform() * 2.0});
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v)
      if (rng.uniform() < extra_edge_prob) edges.push_back({u, v, 0.5 + rng.uniform() * 2.0});
  return edges;
}

inline std::vector<std::tuple<int, int, double>> as_tuples(const std::vector<qas::WeightedEdge>& edges) {
  std::vector<std::tuple<int, int, double>> out;
  for (const auto& e : edges) out.emplace_back(static_cast<int>(e.u), static_cast<int>(e.v), e.w);
  return out;
}

inline qas::FiniteMetricSpace random_graph_metric(qas::CounterRng& rng, std::size_t n) {
  return qas::shortest_path_metric(testing_support::random_connected_graph(rng, n), n);
}

}  // namespace testing_support
