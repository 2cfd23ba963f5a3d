// Fits a measure-valued model for a map between two small graphs, then
// prints each input's output measure, its W1 error and a few samples.
#include <cstdio>

#include "qas/experiments.hpp"

using namespace qas;

int main(int argc, char** argv) {
  const std::uint64_t seed = argc > 1 ? std::stoull(argv[1]) : 1;
  CounterRng rng(seed);
  const std::size_t ns = 7, nt = 5;
  const auto src = shortest_path_metric(random_connected_graph(rng, ns), ns);
  const auto tgt = shortest_path_metric(random_connected_graph(rng, nt), nt);

  std::vector<std::size_t> xs(ns), f(ns), dense(nt);
  for (std::size_t i = 0; i < ns; ++i) xs[i] = i, f[i] = rng.below(nt);
  for (std::size_t i = 0; i < nt; ++i) dense[i] = i;
  const std::function<double(const std::size_t&, const std::size_t&)> dist = [tgt](const std::size_t& a, const std::size_t& b) { return tgt(a, b); };

  // Two atoms only, so most inputs get a genuinely mixed output.
  Budget budget;
  budget.n = 2;
  HeadSpec<std::size_t> spec;
  spec.mode = HeadMode::interpolate2;
  const auto model = build_unstructured(xs, f, kuratowski_embed(src), dense, dist, budget, 1e-3, seed, spec);

  std::printf("diam(Y) = %.3f, atoms = %zu\n", tgt.diameter(), model.n_atoms());
  CounterRng draw = rng.derive(9);
  for (auto x : xs) {
    const auto mu = evaluate(model, x);
    std::printf("x=%zu  f(x)=%zu  W1=%.4f  T(x)=", x, f[x], w1_to_dirac(tgt, mu, f[x]));
    for (std::size_t k = 0; k < mu.support_size(); ++k) std::printf("%s%.3f*y%zu", k ? " + " : "", mu.weights()[static_cast<Eigen::Index>(k)], mu.atoms()[k]);
    std::printf("  samples:");
    for (int s = 0; s < 5; ++s) std::printf(" %zu", sample(mu, draw));
    std::printf("\n");
  }
  return 0;
}
