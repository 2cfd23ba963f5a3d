#include <catch_amalgamated.hpp>

#include <cmath>

#include "oracles/oracles.hpp"
#include "qas/measure.hpp"
#include "support.hpp"

using namespace qas;
using Catch::Approx;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

FiniteMetricSpace segment(double len) {
  Eigen::MatrixXd d(2, 2);
  d << 0, len, len, 0;
  return FiniteMetricSpace(d);
}

DiscreteMeasure random_measure(CounterRng& rng, std::size_t carrier, std::size_t max_support) {
  const std::size_t k = 1 + rng.below(max_support);
  std::vector<std::size_t> atoms(k);
  Vector w(static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < k; ++i) {
    atoms[i] = rng.below(carrier);
    w[static_cast<Eigen::Index>(i)] = rng.uniform() + 1e-3;
  }
  return DiscreteMeasure(atoms, w / w.sum(), carrier);
}

// W1 via the dense coupling LP over the full carrier.
double w1_lp(const FiniteMetricSpace& s, const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  const auto n = static_cast<Eigen::Index>(s.size());
  Vector a = Vector::Zero(n), b = Vector::Zero(n);
  for (std::size_t k = 0; k < mu.support_size(); ++k) a[static_cast<Eigen::Index>(mu.atoms()[k])] += mu.weights()[static_cast<Eigen::Index>(k)];
  for (std::size_t k = 0; k < nu.support_size(); ++k) b[static_cast<Eigen::Index>(nu.atoms()[k])] += nu.weights()[static_cast<Eigen::Index>(k)];
  return oracle::transport_lp(a, b, s.matrix());
}

}  // namespace

TEST_CASE("measure invariants are enforced", "[measure]") {
  CHECK_THROWS_AS(DiscreteMeasure({0, 1}, vec({0.5, 0.6}), 2), DomainError);
  CHECK_THROWS_AS(DiscreteMeasure({0, 1}, vec({1.5, -0.5}), 2), DomainError);
  CHECK_THROWS_AS(DiscreteMeasure({0, 2}, vec({0.5, 0.5}), 2), RangeError);
  CHECK_THROWS_AS(DiscreteMeasure({0}, vec({0.5, 0.5}), 2), ShapeError);
}

TEST_CASE("w1_to_dirac examples", "[measure][w1]") {
  const auto s = segment(1.0);
  CHECK(w1_to_dirac(s, DiscreteMeasure::dirac(1, 2), 1) == 0.0);
  CHECK(w1_to_dirac(s, DiscreteMeasure({0, 1}, vec({0.5, 0.5}), 2), 0) == 0.5);
  CHECK(w1_to_dirac(segment(2.5), DiscreteMeasure::dirac(0, 2), 1) == 2.5);
  CHECK_THROWS_AS(w1_to_dirac(s, DiscreteMeasure::dirac(0, 2), 2), RangeError);
}

TEST_CASE("w1_discrete examples", "[measure][w1]") {
  const auto s = segment(2.0);
  const DiscreteMeasure mu({0, 1}, vec({0.5, 0.5}), 2), nu({0, 1}, vec({0.75, 0.25}), 2);
  CHECK(w1_discrete(s, mu, mu) == 0.0);
  CHECK(w1_discrete(s, DiscreteMeasure::dirac(0, 2), DiscreteMeasure::dirac(1, 2)) == 2.0);
  CHECK(w1_discrete(s, mu, nu) == Approx(0.5).epsilon(1e-14));
  CHECK(oracle::transport_lp(vec({0.5, 0.5}), vec({0.75, 0.25}), s.matrix()) == Approx(0.5).epsilon(1e-12));
}

TEST_CASE("w1_discrete errors", "[measure][w1]") {
  const auto s = segment(1.0);
  CHECK_THROWS_AS(w1_discrete(s, DiscreteMeasure::dirac(0, 2), DiscreteMeasure::dirac(0, 3)), ShapeError);
  CHECK_THROWS_AS(w1_discrete(s, DiscreteMeasure({0, 1}, vec({0.5, 0.5}), 2), DiscreteMeasure::dirac(0, 2), 2),
                  SizeError);
}

TEST_CASE("closed-form dirac distance matches the transport LP", "[measure][w1][property]") {
  CounterRng rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    const auto s = testing_support::random_graph_metric(rng, 2 + rng.below(10));
    const auto mu = random_measure(rng, s.size(), 8);
    const std::size_t y = rng.below(s.size());
    const double closed = w1_to_dirac(s, mu, y);
    REQUIRE(std::abs(closed - w1_discrete(s, mu, DiscreteMeasure::dirac(y, s.size()))) <= 1e-9);
    REQUIRE(std::abs(closed - w1_lp(s, mu, DiscreteMeasure::dirac(y, s.size()))) <= 1e-9);
  }
}

TEST_CASE("w1_discrete matches the coupling LP", "[measure][w1][property]") {
  CounterRng rng(32);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = testing_support::random_graph_metric(rng, 2 + rng.below(7));
    const auto mu = random_measure(rng, s.size(), 6), nu = random_measure(rng, s.size(), 6);
    REQUIRE(std::abs(w1_discrete(s, mu, nu) - w1_lp(s, mu, nu)) <= 1e-9);
  }
}

TEST_CASE("w1_discrete is a metric on measures", "[measure][w1][property]") {
  CounterRng rng(33);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = testing_support::random_graph_metric(rng, 2 + rng.below(12));
    const auto a = random_measure(rng, s.size(), 8), b = random_measure(rng, s.size(), 8),
               c = random_measure(rng, s.size(), 8);
    const double ab = w1_discrete(s, a, b);
    REQUIRE(ab == w1_discrete(s, b, a));
    REQUIRE(ab <= w1_discrete(s, a, c) + w1_discrete(s, c, b) + 1e-9);
    REQUIRE(w1_discrete(s, a, a) <= 1e-12);
  }
}

TEST_CASE("mix_wasserstein examples", "[measure][mix]") {
  const DiscreteMeasure a = DiscreteMeasure::dirac(0, 3), b = DiscreteMeasure::dirac(1, 3);
  const DiscreteMeasure mu({0, 2}, vec({0.25, 0.75}), 3);
  CHECK(mix_wasserstein(vec({0, 1}), {a, mu}) == mu);
  CHECK(mix_wasserstein(vec({1, 0}), {a, mu}) == a);
  CHECK(mix_wasserstein(vec({0.5, 0.5}), {a, b}) == DiscreteMeasure({0, 1}, vec({0.5, 0.5}), 3));
  const auto raw = mix_wasserstein(vec({0.5, 0.5}), {a, a}, Compose::raw);
  CHECK(raw.support_size() == 2);
  CHECK(raw.merged() == a);
  CHECK_THROWS_AS(mix_wasserstein(vec({1.0}), {a, b}), ShapeError);
}

TEST_CASE("mix_wasserstein is approximately simplicial with constant 1", "[measure][mix][property]") {
  CounterRng rng(34);
  for (int trial = 0; trial < 500; ++trial) {
    const auto s = testing_support::random_graph_metric(rng, 2 + rng.below(8));
    std::vector<DiscreteMeasure> ms;
    for (int k = 0; k < 3; ++k) ms.push_back(random_measure(rng, s.size(), 4));
    Vector w(3);
    for (int k = 0; k < 3; ++k) w[k] = rng.uniform() + 1e-6;
    w /= w.sum();
    const auto mix = mix_wasserstein(w, ms);
    for (int i = 0; i < 3; ++i) {
      double rhs = 0.0;
      for (int j = 0; j < 3; ++j) rhs += w[j] * w1_discrete(s, ms[static_cast<std::size_t>(i)], ms[static_cast<std::size_t>(j)]);
      REQUIRE(w1_discrete(s, mix, ms[static_cast<std::size_t>(i)]) <= rhs + 1e-9);
    }
  }
}

TEST_CASE("quantize_measure examples", "[measure][quantize]") {
  const std::vector<std::size_t> seq{4, 7};
  CHECK(quantize_measure(vec({-3.0}), vec({2.0}), seq, 8) == DiscreteMeasure::dirac(7, 8));
  CHECK(quantize_measure(vec({1, 1}), vec({1, 2}), seq, 8) == DiscreteMeasure({4, 7}, vec({0.5, 0.5}), 8));
  CHECK(quantize_measure(vec({5, 0}), vec({1, 1}), seq, 8) == DiscreteMeasure::dirac(4, 8));
  std::size_t clamped = 0;
  quantize_measure(vec({1, 1}), vec({-2, 40}), seq, 8, Compose::merged, &clamped);
  CHECK(clamped == 2);
  CHECK_THROWS_AS(quantize_measure(vec({1}), vec({1}), {}, 8), DomainError);
}

TEST_CASE("quantized_mixing_wasserstein examples", "[measure][quantize]") {
  const std::vector<std::size_t> seq{0, 1, 2, 3};
  const QuantizedBlock b1{vec({1, 0}), vec({1, 2})}, b2{vec({0.2, 0.4}), vec({3, 4})};
  CHECK(quantized_mixing_wasserstein(vec({1.0}), {b1}, seq, 4) == quantize_measure(b1.u, b1.z, seq, 4));
  CHECK(quantized_mixing_wasserstein(vec({0, 1}), {b1, b2}, seq, 4) == quantize_measure(b2.u, b2.z, seq, 4));
  CHECK_THROWS_AS(quantized_mixing_wasserstein(vec({1.0}), {b1, b2}, seq, 4), ShapeError);
}

TEST_CASE("quantized mixing matches a naive double sum", "[measure][quantize][property]") {
  CounterRng rng(35);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t carrier = 3 + rng.below(10);
    std::vector<std::size_t> seq(carrier);
    for (std::size_t i = 0; i < carrier; ++i) seq[i] = (i * 7 + 3) % carrier;
    const int I = 1 + static_cast<int>(rng.below(4)), Q = 1 + static_cast<int>(rng.below(4));
    std::vector<QuantizedBlock> blocks;
    Vector w(I);
    for (int i = 0; i < I; ++i) {
      QuantizedBlock b{Vector(Q), Vector(Q)};
      for (int q = 0; q < Q; ++q) b.u[q] = rng.normal(), b.z[q] = -1.0 + (carrier + 2.0) * rng.uniform();
      blocks.push_back(b);
      w[i] = rng.uniform() + 1e-6;
    }
    w /= w.sum();

    Vector naive = Vector::Zero(static_cast<Eigen::Index>(carrier));
    for (int i = 0; i < I; ++i) {
      const Vector p = oracle::simplex_projection_active_set(blocks[static_cast<std::size_t>(i)].u);
      for (int q = 0; q < Q; ++q) {
        double z = blocks[static_cast<std::size_t>(i)].z[q];
        long idx = static_cast<long>(std::ceil(z));
        idx = std::clamp(idx, 1L, static_cast<long>(carrier));
        naive[static_cast<Eigen::Index>(seq[static_cast<std::size_t>(idx - 1)])] += w[i] * p[q];
      }
    }
    const auto mu = quantized_mixing_wasserstein(w, blocks, seq, carrier);
    for (std::size_t y = 0; y < carrier; ++y) REQUIRE(std::abs(mu.mass_at(y) - naive[static_cast<Eigen::Index>(y)]) <= 1e-10);
  }
}

TEST_CASE("sample examples", "[measure][sample]") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) CHECK(sample(DiscreteMeasure::dirac(3, 5), seed) == 3);
  const DiscreteMeasure with_zero({0, 1, 2}, vec({0.5, 0.0, 0.5}), 3);
  CounterRng rng(36);
  for (int i = 0; i < 10000; ++i) REQUIRE(sample(with_zero, rng) != 1);
  CHECK(sample(with_zero, 99) == sample(with_zero, 99));
}

TEST_CASE("sample frequencies match weights", "[measure][sample]") {
  const DiscreteMeasure half({0, 1}, vec({0.5, 0.5}), 2);
  CounterRng rng(37);
  int hits = 0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) hits += sample(half, rng) == 0;
  CHECK(static_cast<double>(hits) / draws == Approx(0.5).margin(0.01));
}

TEST_CASE("finite_set_success_bound examples", "[measure]") {
  CHECK(finite_set_success_bound(1e-12, 3) == Approx(1.0).epsilon(1e-11));
  CHECK(finite_set_success_bound(0.5, 1) == 0.5);
  CHECK(finite_set_success_bound(0.2, 2) == Approx(0.81).epsilon(1e-15));
  CHECK(finite_set_success_bound(3.0, 3) == 0.0);
  CHECK_THROWS_AS(finite_set_success_bound(3.5, 3), DomainError);
  CHECK_THROWS_AS(finite_set_success_bound(0.0, 3), DomainError);
}

TEST_CASE("solve_transport matches the coupling LP on rectangular problems", "[measure][transport][property]") {
  CounterRng rng(38);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto m = static_cast<Eigen::Index>(1 + rng.below(6)), n = static_cast<Eigen::Index>(1 + rng.below(6));
    Vector a(m), b(n);
    for (Eigen::Index i = 0; i < m; ++i) a[i] = rng.uniform() + 1e-3;
    for (Eigen::Index j = 0; j < n; ++j) b[j] = rng.uniform() + 1e-3;
    a /= a.sum();
    b /= b.sum();
    Matrix C(m, n);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < n; ++j) C(i, j) = 3.0 * rng.uniform();
    const auto plan = solve_transport(a, b, C);
    REQUIRE(std::abs(plan.cost - oracle::transport_lp(a, b, C)) <= 1e-9);
    REQUIRE((plan.flow.rowwise().sum() - a).cwiseAbs().maxCoeff() <= 1e-12);
    REQUIRE((plan.flow.colwise().sum().transpose() - b).cwiseAbs().maxCoeff() <= 1e-12);
    REQUIRE(plan.flow.minCoeff() >= -1e-15);
  }
}
