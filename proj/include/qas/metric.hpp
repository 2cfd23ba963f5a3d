#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <optional>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "qas/error.hpp"

namespace qas {

using IndexSet = std::vector<std::size_t>;

inline constexpr double kTriangleTolerance = 1e-12;

// ---------------------------------------------------------------------------
// Hölder-like moduli
// ---------------------------------------------------------------------------

/// Strictly increasing, subadditive modulus of continuity w with a companion
/// h such that w(st) <= h(s) w(t).
class Modulus {
 public:
  struct Holder {
    double L, alpha, beta;
  };
  struct Log {
    double beta;
  };
  struct Custom {
    std::vector<double> t, w;
  };
  using Kind = std::variant<Holder, Log, Custom>;

  /// w(t) = L t^alpha log(1+t)^beta with 0 < alpha <= 1, 0 <= beta <= 1 - alpha.
  static Modulus holder(double L, double alpha, double beta = 0.0) {
    if (!(L >= 0.0) || !(alpha > 0.0 && alpha <= 1.0) || !(beta >= 0.0 && beta <= 1.0 - alpha + 1e-15))
      throw DomainError("holder modulus: need L >= 0, 0 < alpha <= 1, 0 <= beta <= 1 - alpha");
    return Modulus(Holder{L, alpha, beta});
  }

  static Modulus identity() { return holder(1.0, 1.0, 0.0); }

  /// Sub-Hölder modulus 1/|log t|^beta near zero, continued linearly past e^{-(beta+1)}.
  static Modulus log_modulus(double beta) {
    if (!(beta > 0.0)) throw DomainError("log modulus: beta must be positive");
    return Modulus(Log{beta});
  }

  /// Piecewise-linear modulus through (t, w) samples; the first sample must be (0, 0).
  static Modulus custom(std::vector<std::pair<double, double>> samples) {
    if (samples.size() < 2) throw ConstructionError("custom modulus: need at least two samples");
    std::sort(samples.begin(), samples.end());
    Custom c;
    for (const auto& [t, w] : samples) {
      c.t.push_back(t);
      c.w.push_back(w);
    }
    if (c.t.front() != 0.0 || c.w.front() != 0.0)
      throw ConstructionError("custom modulus: first sample must be (0, 0)");
    for (std::size_t i = 1; i < c.t.size(); ++i)
      if (!(c.t[i] > c.t[i - 1]) || !(c.w[i] > c.w[i - 1]))
        throw ConstructionError("custom modulus: samples must be strictly increasing");
    return Modulus(std::move(c));
  }

  const Kind& kind() const noexcept { return kind_; }

  double operator()(double t) const {
    if (std::isnan(t) || t < 0.0) throw DomainError("modulus: argument must be nonnegative");
    return std::visit([t](const auto& k) { return eval(k, t); }, kind_);
  }

  /// Upper end of the domain (infinite except for custom tables).
  double domain_max() const noexcept {
    if (const auto* c = std::get_if<Custom>(&kind_)) return c->t.back();
    return std::numeric_limits<double>::infinity();
  }

  /// Companion h with w(st) <= h(s) w(t). Exact for Hölder and log moduli,
  /// grid-maximized for custom tables (see h_is_approximate()).
  /// For the log modulus, w(us)/w(u) -> 1 as u -> 0 for every fixed s in
  /// (0, 1], so the tightest valid companion is 1 there, not s^beta.
  double h(double s) const {
    if (s < 0.0) throw DomainError("modulus companion: argument must be nonnegative");
    if (const auto* k = std::get_if<Holder>(&kind_)) return std::pow(s, k->alpha) * std::pow(std::max(1.0, s), k->beta);
    if (std::holds_alternative<Log>(kind_)) return s > 1.0 ? s : (s > 0.0 ? 1.0 : 0.0);
    const auto& c = std::get<Custom>(kind_);
    double best = 0.0;
    constexpr int kGrid = 256;
    for (int i = 1; i <= kGrid; ++i) {
      const double u = c.t.back() * i / kGrid;
      if (u * s > c.t.back()) break;
      best = std::max(best, eval(c, u * s) / eval(c, u));
    }
    return best;
  }

  bool h_is_approximate() const noexcept { return std::holds_alternative<Custom>(kind_); }

  /// Generalized inverse h^dagger(t) = inf{s >= 0 : h(s) >= t}; +inf when h
  /// never reaches t on the probed range.
  double h_dagger(double t, double probe_max = 1e6) const {
    if (t <= 0.0) return 0.0;
    if (std::holds_alternative<Log>(kind_)) return t <= 1.0 ? 0.0 : t;
    double hi = 1.0;
    while (h(hi) < t) {
      hi *= 2.0;
      if (hi > probe_max) return std::numeric_limits<double>::infinity();
    }
    double lo = 0.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (h(mid) >= t ? hi : lo) = mid;
    }
    return hi;
  }

  /// Exponent k with C' <= C^k for the doubling constant after snowflaking;
  /// nullopt when h^dagger(1/4) is infinite or zero.
  std::optional<int> doubling_exponent() const {
    const double hd = h_dagger(0.25);
    if (!std::isfinite(hd) || hd <= 0.0) return std::nullopt;
    return static_cast<int>(std::ceil(-std::log2(hd) / 4.0 - 1e-12));
  }

  /// Subadditivity w(s+t) <= w(s) + w(t) on a uniform grid over [0, t_max].
  bool subadditive_on_grid(double t_max, int grid = 64, double tol = 1e-12) const {
    for (int i = 0; i <= grid; ++i)
      for (int j = 0; j <= grid; ++j) {
        const double s = t_max * i / grid, t = t_max * j / grid;
        if (s + t > domain_max()) continue;
        if ((*this)(s + t) > (*this)(s) + (*this)(t) + tol) return false;
      }
    return true;
  }

 private:
  explicit Modulus(Kind k) : kind_(std::move(k)) {}

  static double eval(const Holder& k, double t) {
    if (t == 0.0) return 0.0;
    double v = k.L * std::pow(t, k.alpha);
    if (k.beta > 0.0) v *= std::pow(std::log1p(t), k.beta);
    return v;
  }

  static double eval(const Log& k, double t) {
    if (t == 0.0) return 0.0;
    const double knee = std::exp(-(k.beta + 1.0));
    if (t <= knee) return 1.0 / std::pow(std::abs(std::log(t)), k.beta);
    return 1.0 / std::pow(k.beta + 1.0, k.beta) +
           k.beta * std::exp(k.beta + 1.0) / std::pow(k.beta + 1.0, k.beta + 1.0) * (t - knee);
  }

  static double eval(const Custom& c, double t) {
    if (t > c.t.back()) throw RangeError("custom modulus: argument beyond last sample");
    const auto it = std::upper_bound(c.t.begin(), c.t.end(), t);
    if (it == c.t.end()) return c.w.back();
    const auto i = static_cast<std::size_t>(it - c.t.begin());
    const double f = (t - c.t[i - 1]) / (c.t[i] - c.t[i - 1]);
    return c.w[i - 1] + f * (c.w[i] - c.w[i - 1]);
  }

  Kind kind_;
};

// ---------------------------------------------------------------------------
// Finite metric spaces
// ---------------------------------------------------------------------------

enum class Validation { full, basic };

/// Explicit symmetric distance matrix over points 0..n-1.
class FiniteMetricSpace {
 public:
  FiniteMetricSpace() = default;

  explicit FiniteMetricSpace(Eigen::MatrixXd dist, Validation v = Validation::full,
                             std::vector<std::string> labels = {})
      : dist_(std::move(dist)), labels_(std::move(labels)) {
    validate(v);
  }

  std::size_t size() const noexcept { return static_cast<std::size_t>(dist_.rows()); }
  double operator()(std::size_t i, std::size_t j) const { return dist_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)); }
  const Eigen::MatrixXd& matrix() const noexcept { return dist_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  double diameter() const { return size() == 0 ? 0.0 : dist_.maxCoeff(); }

  /// Smallest positive distance (infinity for a single point).
  double separation() const {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < size(); ++i)
      for (std::size_t j = i + 1; j < size(); ++j) best = std::min(best, (*this)(i, j));
    return best;
  }

  FiniteMetricSpace restrict(const IndexSet& idx) const {
    Eigen::MatrixXd sub(idx.size(), idx.size());
    for (std::size_t a = 0; a < idx.size(); ++a)
      for (std::size_t b = 0; b < idx.size(); ++b) sub(a, b) = (*this)(check(idx[a]), check(idx[b]));
    return FiniteMetricSpace(std::move(sub), Validation::basic);
  }

  /// Largest violation d(i,k) - d(i,j) - d(j,k) over all triples (<= 0 for a metric).
  double max_triangle_violation() const {
    const auto n = dist_.rows();
    double worst = -std::numeric_limits<double>::infinity();
    if (n < 3) return 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index k = 0; k < n; ++k) worst = std::max(worst, dist_(i, k) - dist_(i, j) - dist_(j, k));
    return worst;
  }

  std::size_t check(std::size_t i) const {
    if (i >= size()) throw RangeError("point index " + std::to_string(i) + " out of range");
    return i;
  }

 private:
  void validate(Validation v) const {
    const auto n = dist_.rows();
    if (dist_.cols() != n) throw ShapeError("distance matrix must be square");
    if (!dist_.allFinite()) throw ConstructionError("distance matrix has non-finite entries");
    for (Eigen::Index i = 0; i < n; ++i) {
      if (dist_(i, i) != 0.0) throw ConstructionError("distance matrix diagonal must be zero");
      for (Eigen::Index j = i + 1; j < n; ++j) {
        if (dist_(i, j) != dist_(j, i)) throw ConstructionError("distance matrix must be symmetric");
        if (!(dist_(i, j) > 0.0))
          throw ConstructionError("distinct points " + std::to_string(i) + "," + std::to_string(j) +
                                  " at zero distance");
      }
    }
    if (v == Validation::full) {
      const double tol = kTriangleTolerance * std::max(1.0, diameter());
      if (max_triangle_violation() > tol) throw ConstructionError("triangle inequality violated");
    }
  }

  Eigen::MatrixXd dist_;
  std::vector<std::string> labels_;
};

/// Metric w o d. Rejects moduli that break the triangle inequality on the
/// induced distances.
inline FiniteMetricSpace snowflake_distance(const Modulus& m, const FiniteMetricSpace& s) {
  Eigen::MatrixXd d = s.matrix();
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    for (Eigen::Index j = 0; j < d.cols(); ++j) d(i, j) = m(d(i, j));

  std::vector<double> values(d.data(), d.data() + d.size());
  std::vector<double> raw(s.matrix().data(), s.matrix().data() + s.matrix().size());
  std::sort(raw.begin(), raw.end());
  raw.erase(std::unique(raw.begin(), raw.end()), raw.end());
  for (double a : raw)
    for (double b : raw) {
      if (a + b > m.domain_max()) continue;
      if (m(a + b) > m(a) + m(b) + kTriangleTolerance * std::max(1.0, m(a + b)))
        throw ConstructionError("modulus is not subadditive on the induced distance set");
    }
  try {
    return FiniteMetricSpace(std::move(d), Validation::full, s.labels());
  } catch (const ConstructionError& e) {
    throw ConstructionError(std::string("snowflake: ") + e.what());
  }
}

struct WeightedEdge {
  std::size_t u, v;
  double w;
};

/// All-pairs shortest-path metric of a connected graph with positive weights (Dijkstra).
inline FiniteMetricSpace shortest_path_metric(const std::vector<WeightedEdge>& edges, std::size_t n_vertices) {
  if (n_vertices == 0) throw DomainError("shortest_path_metric: empty graph");
  std::vector<std::vector<std::pair<std::size_t, double>>> adj(n_vertices);
  for (const auto& e : edges) {
    if (e.u >= n_vertices || e.v >= n_vertices) throw RangeError("edge endpoint out of range");
    if (!(e.w > 0.0) || !std::isfinite(e.w)) throw DomainError("edge weights must be positive and finite");
    if (e.u == e.v) continue;
    adj[e.u].emplace_back(e.v, e.w);
    adj[e.v].emplace_back(e.u, e.w);
  }

  const double inf = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd d = Eigen::MatrixXd::Constant(n_vertices, n_vertices, inf);
  using Item = std::pair<double, std::size_t>;
  for (std::size_t src = 0; src < n_vertices; ++src) {
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    d(src, src) = 0.0;
    pq.emplace(0.0, src);
    while (!pq.empty()) {
      const auto [du, u] = pq.top();
      pq.pop();
      if (du > d(src, u)) continue;
      for (const auto& [v, w] : adj[u])
        if (du + w < d(src, v)) {
          d(src, v) = du + w;
          pq.emplace(d(src, v), v);
        }
    }
  }
  for (std::size_t i = 0; i < n_vertices; ++i)
    for (std::size_t j = 0; j < n_vertices; ++j) {
      if (!std::isfinite(d(i, j)))
        throw ConstructionError("graph is disconnected: no path between " + std::to_string(i) + " and " +
                                std::to_string(j));
      if (j > i) d(i, j) = d(j, i) = std::min(d(i, j), d(j, i));
    }
  return FiniteMetricSpace(std::move(d), Validation::full);
}

struct EdgeList {
  std::vector<WeightedEdge> edges;
  std::size_t n_vertices = 0;
};

/// Reads `i j w` triples, one per line, 0-based; blank lines and `#` comments are skipped.
inline EdgeList parse_edge_list(std::istream& in) {
  EdgeList out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    long long i = -1, j = -1;
    double w = 0.0;
    std::string extra;
    if (!(ls >> i >> j >> w) || (ls >> extra)) throw ParseError("expected `i j w`", lineno);
    if (i < 0 || j < 0) throw ParseError("negative vertex index", lineno);
    if (!(w > 0.0) || !std::isfinite(w)) throw ParseError("weight must be positive", lineno);
    out.edges.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j), w});
    out.n_vertices = std::max(out.n_vertices, static_cast<std::size_t>(std::max(i, j)) + 1);
  }
  return out;
}

/// Hausdorff distance between two nonempty index subsets.
inline double hausdorff_distance(const FiniteMetricSpace& s, const IndexSet& a, const IndexSet& b) {
  if (a.empty() || b.empty()) throw DomainError("hausdorff_distance: empty subset");
  auto directed = [&](const IndexSet& from, const IndexSet& to) {
    double sup = 0.0;
    for (std::size_t x : from) {
      double inf = std::numeric_limits<double>::infinity();
      for (std::size_t y : to) inf = std::min(inf, s(s.check(x), s.check(y)));
      sup = std::max(sup, inf);
    }
    return sup;
  };
  return std::max(directed(a, b), directed(b, a));
}

struct DoublingEstimate {
  std::size_t constant = 1;
  std::vector<double> radius_grid;
  bool exact = true;  // exhaustive cover search (n <= 12) vs greedy upper bound
};

namespace detail {

inline std::size_t min_cover_exhaustive(std::uint32_t target, const std::vector<std::uint32_t>& sets) {
  std::size_t best = sets.size() + 1;
  const std::uint32_t count = static_cast<std::uint32_t>(sets.size());
  for (std::uint32_t pick = 1; pick < (1u << count); ++pick) {
    const auto k = static_cast<std::size_t>(std::popcount(pick));
    if (k >= best) continue;
    std::uint32_t covered = 0;
    for (std::uint32_t i = 0; i < count; ++i)
      if (pick & (1u << i)) covered |= sets[i];
    if ((covered & target) == target) best = k;
  }
  return best;
}

inline std::size_t min_cover_greedy(std::vector<bool> remaining, const std::vector<std::vector<bool>>& sets) {
  std::size_t used = 0;
  auto left = static_cast<std::size_t>(std::count(remaining.begin(), remaining.end(), true));
  while (left > 0) {
    std::size_t best_i = 0, best_gain = 0;
    for (std::size_t i = 0; i < sets.size(); ++i) {
      std::size_t gain = 0;
      for (std::size_t p = 0; p < remaining.size(); ++p) gain += remaining[p] && sets[i][p];
      if (gain > best_gain) best_gain = gain, best_i = i;
    }
    for (std::size_t p = 0; p < remaining.size(); ++p)
      if (sets[best_i][p]) remaining[p] = false;
    left -= best_gain;
    ++used;
  }
  return used;
}

}  // namespace detail

/// Smallest C such that every closed ball B(x, 2r) is covered by C closed
/// r-balls, over all centers and every critical radius (pairwise distances
/// and their halves, where ball membership changes).
inline DoublingEstimate doubling_constant_bruteforce(const FiniteMetricSpace& s, std::size_t cap = 64) {
  const std::size_t n = s.size();
  if (n > cap) throw SizeError("doubling_constant_bruteforce: " + std::to_string(n) + " points exceeds cap " + std::to_string(cap));
  DoublingEstimate est;
  est.exact = n <= 12;
  std::set<double> radii;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      radii.insert(s(i, j));
      radii.insert(0.5 * s(i, j));
    }
  est.radius_grid.assign(radii.begin(), radii.end());

  for (double r : est.radius_grid) {
    std::vector<std::vector<bool>> balls(n, std::vector<bool>(n));
    for (std::size_t c = 0; c < n; ++c)
      for (std::size_t p = 0; p < n; ++p) balls[c][p] = s(c, p) <= r;
    for (std::size_t x = 0; x < n; ++x) {
      std::vector<bool> target(n);
      for (std::size_t p = 0; p < n; ++p) target[p] = s(x, p) <= 2.0 * r;
      std::size_t need;
      if (est.exact) {
        std::uint32_t tmask = 0;
        std::vector<std::uint32_t> masks;
        for (std::size_t p = 0; p < n; ++p)
          if (target[p]) tmask |= 1u << p;
        for (std::size_t c = 0; c < n; ++c) {
          std::uint32_t m = 0;
          for (std::size_t p = 0; p < n; ++p)
            if (balls[c][p] && target[p]) m |= 1u << p;
          if (m != 0) masks.push_back(m);
        }
        std::sort(masks.begin(), masks.end());
        masks.erase(std::unique(masks.begin(), masks.end()), masks.end());
        need = detail::min_cover_exhaustive(tmask, masks);
      } else {
        need = detail::min_cover_greedy(target, balls);
      }
      est.constant = std::max(est.constant, need);
    }
  }
  return est;
}

/// Maximal delta-separated subset, greedy in index order.
inline IndexSet separated_net(const FiniteMetricSpace& s, double delta) {
  if (!(delta > 0.0)) throw DomainError("separated_net: delta must be positive");
  IndexSet net;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool far = std::all_of(net.begin(), net.end(), [&](std::size_t j) { return s(i, j) >= delta; });
    if (far) net.push_back(i);
  }
  return net;
}

}  // namespace qas
