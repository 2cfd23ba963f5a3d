#include <catch_amalgamated.hpp>

#include <cmath>

#include "oracles/oracles.hpp"
#include "qas/numerics.hpp"
#include "qas/rng.hpp"

using namespace qas;
using Catch::Approx;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

Vector random_vector(CounterRng& rng, Eigen::Index n, double scale) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * rng.normal();
  return v;
}

}  // namespace

TEST_CASE("project_simplex examples", "[numerics]") {
  const Vector inside = vec({0.2, 0.3, 0.5});
  CHECK((project_simplex(inside) - inside).norm() < 1e-15);
  CHECK((project_simplex(vec({1, 1})) - vec({0.5, 0.5})).norm() == 0.0);
  CHECK((project_simplex(vec({2, 0})) - vec({1, 0})).norm() == 0.0);
  CHECK((oracle::simplex_projection_active_set(vec({2, 0})) - vec({1, 0})).norm() < 1e-15);
}

TEST_CASE("project_simplex rejects non-finite input", "[numerics]") {
  CHECK_THROWS_AS(project_simplex(vec({1.0, NAN})), DomainError);
  CHECK_THROWS_AS(project_simplex(vec({INFINITY, 0.0})), DomainError);
  CHECK_THROWS_AS(project_simplex(Vector()), ShapeError);
}

TEST_CASE("project_simplex agrees with the active-set oracle", "[numerics][property]") {
  CounterRng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = static_cast<Eigen::Index>(1 + rng.below(8));
    const Vector v = random_vector(rng, n, 1.0 + 3.0 * rng.uniform());
    const Vector w = project_simplex(v);
    REQUIRE(on_simplex(w, 1e-12));
    REQUIRE((w - oracle::simplex_projection_active_set(v)).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("project_simplex is idempotent and nonexpansive", "[numerics][property]") {
  CounterRng rng(12);
  for (int trial = 0; trial < 500; ++trial) {
    const auto n = static_cast<Eigen::Index>(1 + rng.below(12));
    const Vector a = random_vector(rng, n, 2.0), b = random_vector(rng, n, 2.0);
    const Vector pa = project_simplex(a), pb = project_simplex(b);
    REQUIRE((project_simplex(pa) - pa).norm() <= 1e-14);
    REQUIRE((pa - pb).norm() <= (a - b).norm() + 1e-12);
  }
}

TEST_CASE("softmax examples and shift invariance", "[numerics]") {
  CHECK((softmax(vec({0, 0})) - vec({0.5, 0.5})).norm() == 0.0);
  for (double c : {-700.0, -3.0, 0.0, 5.5, 700.0})
    CHECK((softmax(vec({c, c, c})) - Vector::Constant(3, 1.0 / 3.0)).norm() < 1e-15);
  CHECK((softmax(vec({std::log(1.0), std::log(3.0)})) - vec({0.25, 0.75})).norm() < 1e-15);

  CounterRng rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    // Dyadic entries keep v + c exact in floating point.
    const Vector v = (random_vector(rng, 6, 3.0) * 64.0).array().round() / 64.0;
    const Vector s = softmax(v);
    CHECK(std::abs(s.sum() - 1.0) <= 1e-12);
    const double c = std::ldexp(static_cast<double>(rng.below(64)) - 32.0, 3);
    CHECK(softmax((v.array() + c).matrix()) == softmax(v));
  }
  CHECK_THROWS_AS(softmax(vec({NAN, 1.0})), DomainError);
}

TEST_CASE("attention_layer examples", "[numerics]") {
  Matrix V(3, 2);
  V << 1.0, 2.0, -3.0, 0.5, 7.0, 7.0;
  const Vector sat = attention_layer(vec({50, 0, 0}), V);
  CHECK((sat - V.row(0).transpose()).cwiseAbs().maxCoeff() / V.row(0).norm() < 1e-15);

  Matrix same(4, 3);
  for (int i = 0; i < 4; ++i) same.row(i) << 0.1, -2.0, 3.5;
  CHECK((attention_layer(Vector::Zero(4), same) - same.row(0).transpose()).norm() < 1e-15);

  Matrix swap(2, 2);
  swap << 0, 1, 1, 0;
  CHECK((attention_layer(vec({0, 0}), swap) - vec({0.5, 0.5})).norm() == 0.0);

  CHECK_THROWS_AS(attention_layer(vec({0, 0, 0}), swap), ShapeError);
}

TEST_CASE("attention_layer stays inside the convex hull of the values", "[numerics][property]") {
  CounterRng rng(14);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = static_cast<Eigen::Index>(1 + rng.below(6));
    Matrix V(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) V.row(i) << rng.normal(), rng.normal();
    const Vector y = attention_layer(random_vector(rng, n, 2.0), V);
    REQUIRE(oracle::in_convex_hull(V, y));
  }
  // Sanity of the oracle itself: a point far outside is rejected.
  Matrix V(3, 2);
  V << 0, 0, 1, 0, 0, 1;
  CHECK_FALSE(oracle::in_convex_hull(V, vec({1, 1})));
}

TEST_CASE("ceil_index examples", "[numerics]") {
  CHECK(ceil_index(2.0, 5).index == 2);
  CHECK_FALSE(ceil_index(2.0, 5).clamped);
  CHECK(ceil_index(2.3, 5).index == 3);
  const auto low = ceil_index(-1.0, 5);
  CHECK(low.index == 1);
  CHECK(low.clamped);
  const auto high = ceil_index(9.1, 5);
  CHECK(high.index == 5);
  CHECK(high.clamped);
  CHECK_THROWS_AS(ceil_index(1.0, 0), DomainError);
}

TEST_CASE("counter rng is reproducible and stream-separated", "[rng]") {
  CounterRng a(42), b(42), c(42, 1);
  for (int i = 0; i < 100; ++i) {
    const auto x = a();
    CHECK(x == b());
    CHECK(x != c());
  }
  CounterRng u(7);
  double mean = 0.0;
  for (int i = 0; i < 100000; ++i) mean += u.uniform();
  CHECK(mean / 100000 == Approx(0.5).margin(0.01));
}
