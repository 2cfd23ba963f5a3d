#include <catch_amalgamated.hpp>

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <numbers>

#include "qas/qas_structure.hpp"
#include "support.hpp"

using namespace qas;
using Catch::Approx;

namespace {

constexpr double kPi = std::numbers::pi;

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

Vector random_simplex(CounterRng& rng, Eigen::Index n) {
  Vector w(n);
  for (Eigen::Index i = 0; i < n; ++i) w[i] = -std::log(rng.uniform() + 1e-300);
  return w / w.sum();
}

SpdMatrix random_spd(CounterRng& rng, Eigen::Index d, double spread = 1.0) {
  Matrix g(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) g(i, j) = spread * rng.normal();
  return SpdMatrix(g * g.transpose() + 0.5 * Matrix::Identity(d, d));
}

// Independent matrix-function route (Schur-Parlett) for the SPD oracles.
Matrix oracle_log(const Matrix& m) { return m.log(); }
Matrix oracle_sqrt(const Matrix& m) { return m.sqrt(); }

double oracle_spd_distance(const Matrix& a, const Matrix& b) {
  const Matrix r = oracle_sqrt(a).inverse();
  return oracle_log(r * b * r).norm();
}

double oracle_karcher_residual(const Matrix& s, const std::vector<SpdMatrix>& atoms, const Vector& w) {
  const Matrix r = oracle_sqrt(s).inverse();
  Matrix g = Matrix::Zero(s.rows(), s.cols());
  for (std::size_t k = 0; k < atoms.size(); ++k) g += w[static_cast<Eigen::Index>(k)] * oracle_log(r * atoms[k].matrix() * r);
  return g.norm();
}

}  // namespace

// --- mixing inequality ------------------------------------------------------

TEST_CASE("check_mixing_inequality examples", "[geometry][mixing]") {
  const auto q = euclidean_structure(2);
  const std::vector<Vector> pts{vec({0, 0}), vec({3, 4}), vec({-1, 2})};
  const auto vertex = check_mixing_inequality(q, vec({0, 1, 0}), pts, 1);
  CHECK(vertex.lhs == 0.0);
  CHECK(vertex.ok);
  const std::vector<Vector> same(3, vec({1, 1}));
  const auto flat = check_mixing_inequality(q, vec({0.2, 0.3, 0.5}), same, 0);
  CHECK(flat.lhs == 0.0);
  CHECK(flat.rhs == 0.0);
  CHECK_THROWS_AS(check_mixing_inequality(q, vec({1, 0}), pts, 0), ShapeError);
}

TEST_CASE("euclidean and l1 mixings satisfy the inequality", "[geometry][mixing][property]") {
  CounterRng rng(41);
  for (auto norm : {VectorNorm::l2, VectorNorm::l1}) {
    const auto q = euclidean_structure(3, norm);
    for (int trial = 0; trial < 1000; ++trial) {
      const auto n = static_cast<Eigen::Index>(1 + rng.below(6));
      std::vector<Vector> pts;
      for (Eigen::Index k = 0; k < n; ++k) pts.push_back(vec({rng.normal(), rng.normal(), rng.normal()}));
      const Vector w = random_simplex(rng, n);
      REQUIRE(check_mixing_inequality(q, w, pts, rng.below(static_cast<std::size_t>(n))).ok);
    }
  }
}

TEST_CASE("wasserstein mixing satisfies the inequality", "[geometry][mixing][property]") {
  CounterRng rng(42);
  for (int trial = 0; trial < 300; ++trial) {
    const auto ground = testing_support::random_graph_metric(rng, 2 + rng.below(8));
    const auto q = wasserstein_structure(ground);
    const auto n = static_cast<Eigen::Index>(1 + rng.below(4));
    std::vector<DiscreteMeasure> ms;
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto qq = 1 + rng.below(3);
      Vector params(static_cast<Eigen::Index>(2 * qq));
      for (Eigen::Index i = 0; i < params.size(); ++i) params[i] = rng.normal() * 3.0 + 2.0;
      ms.push_back(q.quantize(qq, params));
    }
    REQUIRE(check_mixing_inequality(q, random_simplex(rng, n), ms, rng.below(static_cast<std::size_t>(n))).ok);
  }
}

TEST_CASE("circle arc mixing satisfies the inequality", "[geometry][mixing][property]") {
  CounterRng rng(43);
  for (int trial = 0; trial < 1000; ++trial) {
    const CircleArc arc{kTwoPi * rng.uniform(), kPi * (0.05 + 0.95 * rng.uniform())};
    const auto q = circle_arc_structure(arc);
    const auto n = static_cast<Eigen::Index>(1 + rng.below(5));
    std::vector<double> pts;
    for (Eigen::Index k = 0; k < n; ++k) pts.push_back(arc.chart_inverse(arc.length * rng.uniform()));
    const Vector w = random_simplex(rng, n);
    const std::size_t i = rng.below(static_cast<std::size_t>(n));
    REQUIRE(check_mixing_inequality(q, w, pts, i).ok);
    CHECK(q.mixing(Vector::Unit(n, static_cast<Eigen::Index>(i)), pts) == Approx(pts[i]).margin(1e-12));
  }
}

TEST_CASE("spd mixing satisfies the inequality with constant 1", "[geometry][mixing][spd][property]") {
  CounterRng rng(44);
  const auto q = spd_structure(3);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = static_cast<Eigen::Index>(2 + rng.below(3));
    std::vector<SpdMatrix> pts;
    for (Eigen::Index k = 0; k < n; ++k) pts.push_back(random_spd(rng, 3));
    const auto c = check_mixing_inequality(q, random_simplex(rng, n), pts, rng.below(static_cast<std::size_t>(n)));
    REQUIRE(c.ok);
    if (c.rhs > 0) worst = std::max(worst, c.lhs / c.rhs);
  }
  // Two-point mixings sit on the geodesic, where the bound is attained.
  INFO("max observed lhs/rhs = " << worst);
  CHECK(worst <= 1.0 + 1e-9);
  CHECK(worst > 0.999);
}

// --- Euclidean barycenter ---------------------------------------------------

TEST_CASE("barycenter_euclidean examples", "[geometry][barycenter]") {
  CHECK(barycenter_euclidean({{vec({1.5, -2})}, {1.0}}) == vec({1.5, -2}));
  CHECK(barycenter_euclidean({{vec({0}), vec({2})}, {0.5, 0.5}}) == vec({1}));
  CHECK_THROWS_AS(barycenter_euclidean({}), ShapeError);
}

TEST_CASE("barycenter_euclidean is 1-Lipschitz for W1", "[geometry][barycenter][property]") {
  CounterRng rng(45);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + rng.below(6);
    std::vector<Vector> pts;
    for (std::size_t k = 0; k < n; ++k) pts.push_back(vec({rng.normal(), rng.normal()}));
    Matrix d(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b) d(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = (pts[a] - pts[b]).norm();
    const FiniteMetricSpace ground(d, Validation::basic);
    auto draw = [&] {
      const Vector w = random_simplex(rng, static_cast<Eigen::Index>(n));
      std::vector<std::size_t> atoms(n);
      for (std::size_t k = 0; k < n; ++k) atoms[k] = k;
      return DiscreteMeasure(atoms, w, n);
    };
    const auto mu = draw(), nu = draw();
    auto as_points = [&](const DiscreteMeasure& m) {
      PointMeasure<Vector> pm;
      for (std::size_t k = 0; k < m.support_size(); ++k) {
        pm.atoms.push_back(pts[m.atoms()[k]]);
        pm.weights.push_back(m.weights()[static_cast<Eigen::Index>(k)]);
      }
      return pm;
    };
    REQUIRE((barycenter_euclidean(as_points(mu)) - barycenter_euclidean(as_points(nu))).norm() <=
            w1_discrete(ground, mu, nu) + 1e-12);
  }
}

// --- SPD --------------------------------------------------------------------

TEST_CASE("SpdMatrix validation", "[geometry][spd]") {
  Matrix asym(2, 2);
  asym << 1, 0.5, 0, 1;
  CHECK_THROWS_AS(SpdMatrix(asym), SpectralError);
  Matrix indefinite(2, 2);
  indefinite << 1, 2, 2, 1;
  try {
    SpdMatrix{indefinite};
    FAIL("expected spectral error");
  } catch (const SpectralError& e) {
    CHECK(e.eigenvalue() == Approx(-1.0));
  }
}

TEST_CASE("spd_distance examples", "[geometry][spd]") {
  CounterRng rng(46);
  const auto a = random_spd(rng, 3);
  CHECK(spd_distance(a, a) < 1e-12);
  for (Eigen::Index d : {1, 2, 4})
    CHECK(spd_distance(SpdMatrix::identity(d), SpdMatrix(std::numbers::e * Matrix::Identity(d, d))) ==
          Approx(std::sqrt(static_cast<double>(d))).epsilon(1e-12));
  CHECK_THROWS_AS(spd_distance(SpdMatrix::identity(2), SpdMatrix::identity(3)), ShapeError);
}

TEST_CASE("spd_distance matches matrix-function oracle and is affine invariant", "[geometry][spd][property]") {
  CounterRng rng(47);
  for (int trial = 0; trial < 200; ++trial) {
    const auto d = static_cast<Eigen::Index>(1 + rng.below(5));
    const auto a = random_spd(rng, d), b = random_spd(rng, d);
    const double ab = spd_distance(a, b);
    REQUIRE(ab == Approx(oracle_spd_distance(a.matrix(), b.matrix())).margin(1e-8));
    REQUIRE(ab == Approx(spd_distance(b, a)).margin(1e-9));
    Matrix m(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j) m(i, j) = rng.normal();
    m += 2.0 * Matrix::Identity(d, d);
    if (std::abs(m.determinant()) < 1e-2) continue;
    const SpdMatrix ma(m * a.matrix() * m.transpose()), mb(m * b.matrix() * m.transpose());
    REQUIRE(spd_distance(ma, mb) == Approx(ab).margin(1e-8));
  }
}

TEST_CASE("spd_geodesic examples", "[geometry][spd]") {
  CounterRng rng(48);
  const auto a = random_spd(rng, 3), b = random_spd(rng, 3);
  CHECK(spd_geodesic(vec({1, 0}), a, b) == b);
  CHECK(spd_geodesic(vec({0, 1}), a, b) == a);
  CHECK((spd_geodesic(vec({0.3, 0.7}), a, a).matrix() - a.matrix()).norm() < 1e-12);
  const auto mid = spd_geodesic(vec({0.5, 0.5}), SpdMatrix::identity(3), SpdMatrix(4.0 * Matrix::Identity(3, 3)));
  CHECK((mid.matrix() - 2.0 * Matrix::Identity(3, 3)).norm() < 1e-12);
}

TEST_CASE("spd_geodesic is a constant-speed geodesic in the first weight", "[geometry][spd][property]") {
  CounterRng rng(49);
  for (int trial = 0; trial < 200; ++trial) {
    const auto d = static_cast<Eigen::Index>(1 + rng.below(4));
    const auto a = random_spd(rng, d), b = random_spd(rng, d);
    const double t = rng.uniform();
    const auto s = spd_geodesic(vec({t, 1 - t}), a, b);
    const double ab = spd_distance(a, b);
    REQUIRE(spd_distance(a, s) == Approx(t * ab).margin(1e-8));
    REQUIRE(spd_distance(s, b) == Approx((1 - t) * ab).margin(1e-8));
  }
}

TEST_CASE("spd_geodesic satisfies the conical inequality", "[geometry][spd][property]") {
  CounterRng rng(50);
  for (int trial = 0; trial < 200; ++trial) {
    const auto d = static_cast<Eigen::Index>(1 + rng.below(4));
    const auto x1 = random_spd(rng, d), y1 = random_spd(rng, d), x2 = random_spd(rng, d), y2 = random_spd(rng, d);
    const double t = rng.uniform();
    const Vector w = vec({t, 1 - t});
    REQUIRE(spd_distance(spd_geodesic(w, x1, y1), spd_geodesic(w, x2, y2)) <=
            (1 - t) * spd_distance(x1, x2) + t * spd_distance(y1, y2) + 1e-8);
  }
}

TEST_CASE("karcher_barycenter examples", "[geometry][spd][karcher]") {
  CounterRng rng(51);
  const auto a = random_spd(rng, 3);
  CHECK(karcher_barycenter({a}, vec({1})).mean == a);
  CHECK(karcher_barycenter({a, a}, vec({0.5, 0.5})).mean == a);
  const auto r = karcher_barycenter({SpdMatrix::identity(2), SpdMatrix(std::exp(2.0) * Matrix::Identity(2, 2))},
                                    vec({0.5, 0.5}));
  CHECK((r.mean.matrix() - std::numbers::e * Matrix::Identity(2, 2)).norm() < 1e-8);
  CHECK_THROWS_AS(karcher_barycenter({a, random_spd(rng, 3)}, vec({0.5, 0.5}), 1e-14, 0), ConvergenceError);
}

TEST_CASE("karcher_barycenter residual and commuting closed form", "[geometry][spd][karcher][property]") {
  CounterRng rng(52);
  for (int trial = 0; trial < 100; ++trial) {
    const auto d = static_cast<Eigen::Index>(1 + rng.below(5));
    std::vector<SpdMatrix> atoms{random_spd(rng, d), random_spd(rng, d), random_spd(rng, d)};
    const Vector w = random_simplex(rng, 3);
    const auto r = karcher_barycenter(atoms, w);
    REQUIRE(r.residual <= 1e-8);
    REQUIRE(oracle_karcher_residual(r.mean.matrix(), atoms, w) <= 1e-7);

    // Commuting family: shared eigenbasis, mean is exp(sum w log A).
    Eigen::HouseholderQR<Matrix> qr(Matrix::Random(d, d) + 3.0 * Matrix::Identity(d, d));
    const Matrix q = qr.householderQ();
    std::vector<SpdMatrix> comm;
    Vector log_mean = Vector::Zero(d);
    for (int k = 0; k < 3; ++k) {
      Vector lam(d);
      for (Eigen::Index i = 0; i < d; ++i) lam[i] = 2.0 * rng.normal();
      log_mean += w[k] * lam;
      comm.emplace_back(q * lam.array().exp().matrix().asDiagonal() * q.transpose());
    }
    const Matrix expected = q * log_mean.array().exp().matrix().asDiagonal() * q.transpose();
    REQUIRE((karcher_barycenter(comm, w).mean.matrix() - expected).norm() <= 1e-8 * std::max(1.0, expected.norm()));
  }
}

TEST_CASE("karcher_barycenter is permutation and congruence invariant", "[geometry][spd][karcher][property]") {
  CounterRng rng(53);
  for (int trial = 0; trial < 50; ++trial) {
    const auto d = static_cast<Eigen::Index>(2 + rng.below(3));
    std::vector<SpdMatrix> atoms{random_spd(rng, d), random_spd(rng, d), random_spd(rng, d), random_spd(rng, d)};
    const Vector w = random_simplex(rng, 4);
    const Matrix s = karcher_barycenter(atoms, w).mean.matrix();

    const std::vector<SpdMatrix> perm{atoms[2], atoms[0], atoms[3], atoms[1]};
    const Vector wp = vec({w[2], w[0], w[3], w[1]});
    REQUIRE((karcher_barycenter(perm, wp).mean.matrix() - s).norm() <= 1e-6 * s.norm());

    Matrix m = Matrix::Random(d, d) + 2.0 * Matrix::Identity(d, d);
    std::vector<SpdMatrix> moved;
    for (const auto& a : atoms) moved.emplace_back(m * a.matrix() * m.transpose());
    const Matrix back = m.inverse() * karcher_barycenter(moved, w).mean.matrix() * m.inverse().transpose();
    REQUIRE((back - s).norm() <= 1e-6 * s.norm());
  }
}

TEST_CASE("barycenters fix Dirac masses", "[geometry][barycenter]") {
  CounterRng rng(54);
  const auto a = random_spd(rng, 3);
  CHECK(spd_structure(3).barycenter({{a}, {1.0}}) == a);
  const Vector x = vec({0.25, -7});
  CHECK(euclidean_structure(2).barycenter({{x}, {1.0}}) == x);
  const auto arc = circle_arcs(3)[1];
  CHECK(circle_arc_structure(arc).barycenter({{2.5}, {1.0}}) == Approx(2.5).epsilon(1e-15));
  const auto ground = testing_support::random_graph_metric(rng, 5);
  const DiscreteMeasure mu({1, 3}, vec({0.4, 0.6}), 5);
  CHECK(wasserstein_structure(ground).barycenter({{mu}, {1.0}}) == mu);
}

// --- partitions -------------------------------------------------------------

TEST_CASE("circle_partition construction", "[geometry][partition]") {
  const auto arcs = circle_arcs(3);
  REQUIRE(arcs.size() == 3);
  for (std::size_t m = 0; m < 3; ++m) {
    CHECK(arcs[m].length == Approx(kTwoPi / 3));
    CHECK(circle_distance(arcs[m].end(), arcs[(m + 1) % 3].start) < 1e-12);
  }
  // Adjacent arcs share only their endpoint.
  CounterRng rng(55);
  for (int i = 0; i < 2000; ++i) {
    const double t = kTwoPi * rng.uniform();
    int hits = 0;
    for (const auto& a : arcs) hits += a.contains(t);
    REQUIRE(hits >= 1);
    if (hits > 1) REQUIRE(std::min({circle_distance(t, 0.0), circle_distance(t, kTwoPi / 3), circle_distance(t, 2 * kTwoPi / 3)}) < 1e-11);
  }
  CHECK_THROWS_AS(circle_partition(2), DomainError);
  const auto p = circle_partition(3);
  CHECK(p.mix(0, vec({1, 0}), {0.3, 1.2}) == Approx(0.3).epsilon(1e-15));
}

TEST_CASE("contract_part examples", "[geometry][partition]") {
  const auto p = arc_partition({CircleArc{0.0, kPi / 2}}, [](double d) { return 1.0 - d; });
  CHECK(contract_part(p, 0, 1.0, 0.3) == Approx(0.3).epsilon(1e-15));
  CHECK(contract_part(p, 0, 0.0, 0.3) == Approx(kPi / 4).epsilon(1e-15));
  CHECK(contract_part(p, 0, 0.5, 0.0) == Approx(kPi / 8).epsilon(1e-15));
  CHECK_THROWS_AS(contract_part(p, 0, 0.5, 3.0), PartError);
}

TEST_CASE("separation function examples", "[geometry][partition]") {
  const auto p = circle_partition(3);
  CHECK(separation_lower_bound(p, 1.0) == 0.0);
  const double mid_gap = circle_distance(p.reference(0), p.reference(1));
  CHECK(separation_lower_bound(p, 0.0) == Approx(mid_gap));
  for (int i = 0; i <= 20; ++i) {
    const double delta = i / 20.0;
    CHECK(separation_inverse(p, separation_lower_bound(p, delta)) <= delta + 1e-12);
  }
}

TEST_CASE("separation bounds the sampled gap between contracted arcs", "[geometry][partition][property]") {
  for (std::size_t m_parts : {3, 4, 6}) {
    const auto p = circle_partition(m_parts);
    const auto arcs = circle_arcs(m_parts);
    for (double delta : {0.0, 0.25, 0.5, 0.75, 0.95}) {
      // Sample the contracted arcs densely; set gap over all distinct pairs.
      std::vector<std::vector<double>> contracted(m_parts);
      for (std::size_t m = 0; m < m_parts; ++m)
        for (int k = 0; k <= 200; ++k)
          contracted[m].push_back(contract_part(p, m, delta, arcs[m].chart_inverse(arcs[m].length * k / 200.0)));
      double gap = 1e300;
      for (std::size_t a = 0; a < m_parts; ++a)
        for (std::size_t b = a + 1; b < m_parts; ++b)
          for (double x : contracted[a])
            for (double y : contracted[b]) gap = std::min(gap, circle_distance(x, y));
      CHECK(separation_lower_bound(p, delta) <= gap + 1e-12);
      CHECK(gap > 0.0);
      // Arc-gap formula: adjacent contracted arcs are (1 - delta) L apart.
      CHECK(gap == Approx((1 - delta) * kTwoPi / static_cast<double>(m_parts)).epsilon(1e-9));
    }
    for (int i = 1; i <= 20; ++i) CHECK(p.separation(i / 20.0) <= p.separation((i - 1) / 20.0));
  }
}

TEST_CASE("interval partition is a one-part partition", "[geometry][partition]") {
  const auto p = interval_partition(-1.0, 3.0);
  CHECK(p.n_parts == 1);
  CHECK(p.distance_to_part(0, 5.0) == 2.0);
  CHECK(contract_part(p, 0, 0.5, 3.0) == 2.0);
  CHECK(separation_lower_bound(p, 1.0) == 0.0);
}
