#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "qas/approximator.hpp"
#include "qas/carnot.hpp"
#include "qas/feature.hpp"
#include "qas/io.hpp"
#include "qas/measure.hpp"
#include "qas/metric.hpp"
#include "qas/partition.hpp"
#include "qas/partition_geometry.hpp"
#include "qas/qas_structure.hpp"
#include "qas/spd.hpp"
#include "qas/structured.hpp"

namespace qas {

// ---------------------------------------------------------------------------
// Configuration

struct ExperimentConfig {
  std::string kind;
  std::uint64_t seed = 0;
  std::filesystem::path base_dir = ".";  // relative input paths resolve here
  std::filesystem::path output_dir;

  // Budgets.
  std::size_t c = 64, n_atoms = 0, q = 1, d = 8;
  double ridge = 1e-10;  // relative ridge of the readout fit
  // Epsilons; the split defaults to eps / 3 each.
  double eps = 0.1, eps_a = 0.0, eps_q = 0.0, eps_e = 0.0, delta = 0.1;
  std::size_t n_train = 0, n_test = 0;

  // graph_map
  std::string source_graph, target_graph, map = "random";
  std::size_t n_source = 10, n_target = 8;
  std::vector<std::size_t> c_sweep;
  double sweep_fraction = 0.05;
  std::size_t sampling_trials = 0, sampling_atoms = 0;
  // graph_coloring
  std::string graph, cover, coloring;
  std::size_t colors = 3;
  // classification
  double lo = -0.5, hi = 1.5;
  // operator
  std::size_t grid = 64, band = 2, truncation = 5;
  double amplitude = 0.5;
  // circle_target
  std::size_t arcs = 3;
  // spd_map
  std::string spd_endpoints;
  std::size_t spd_dim = 3;
  // rde_flow
  std::string driver;
  double snowflake_beta = 0.9;
  std::size_t n_anchors = 40;
  // invariant_suite
  std::size_t trials = 1000;

  Budget budget() const { return budget(n_atoms); }
  Budget budget(std::size_t atoms) const {
    Budget b{c, atoms, q, {}};
    b.fit.ridge = ridge;
    return b;
  }
  EpsilonSplit split() const {
    if (eps_a > 0.0 || eps_q > 0.0 || eps_e > 0.0) return {eps_a, eps_q, eps_e};
    return EpsilonSplit::even(eps);
  }
  std::filesystem::path resolve(const std::string& p) const {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  }
};

inline const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> k{"graph_map", "graph_coloring", "classification", "operator",
                                          "circle_target", "spd_map", "rde_flow", "invariant_suite"};
  return k;
}

/// Parses the flat JSON config. Unknown keys are rejected.
inline ExperimentConfig parse_config(const Json& j, const std::filesystem::path& base_dir = ".") {
  if (!j.is_object()) throw DomainError("config: expected a JSON object");
  ExperimentConfig c;
  c.base_dir = base_dir;
  static const std::set<std::string> known{
      "kind", "seed", "output_dir", "c", "n_atoms", "q", "d", "eps", "eps_a", "eps_q", "eps_e", "delta",
      "n_train", "n_test", "source_graph", "target_graph", "map", "n_source", "n_target", "c_sweep",
      "sweep_fraction", "sampling_trials", "sampling_atoms", "graph", "cover", "coloring", "colors", "lo", "hi",
      "grid", "band", "truncation", "amplitude", "arcs", "spd_endpoints", "spd_dim", "driver", "snowflake_beta",
      "n_anchors", "trials", "ridge", "comment"};
  for (const auto& [k, _] : j.items())
    if (!known.count(k)) throw DomainError("config: unknown field '" + k + "'");
  if (!j.contains("kind")) throw DomainError("config: missing 'kind'");
  if (!j.contains("seed")) throw DomainError("config: missing 'seed'");
  c.kind = j.at("kind").get<std::string>();
  const auto& kinds = experiment_kinds();
  if (std::find(kinds.begin(), kinds.end(), c.kind) == kinds.end()) throw DomainError("config: unknown kind '" + c.kind + "'");
  c.seed = j.at("seed").get<std::uint64_t>();
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  std::string out;
  get("output_dir", out);
  c.output_dir = out.empty() ? std::filesystem::path("out") / c.kind : c.resolve(out);
  get("c", c.c), get("n_atoms", c.n_atoms), get("q", c.q), get("d", c.d);
  get("eps", c.eps), get("eps_a", c.eps_a), get("eps_q", c.eps_q), get("eps_e", c.eps_e), get("delta", c.delta);
  get("n_train", c.n_train), get("n_test", c.n_test);
  get("source_graph", c.source_graph), get("target_graph", c.target_graph), get("map", c.map);
  get("n_source", c.n_source), get("n_target", c.n_target), get("c_sweep", c.c_sweep);
  get("sweep_fraction", c.sweep_fraction), get("sampling_trials", c.sampling_trials), get("sampling_atoms", c.sampling_atoms);
  get("graph", c.graph), get("cover", c.cover), get("coloring", c.coloring), get("colors", c.colors);
  get("lo", c.lo), get("hi", c.hi);
  get("grid", c.grid), get("band", c.band), get("truncation", c.truncation), get("amplitude", c.amplitude);
  get("arcs", c.arcs), get("spd_endpoints", c.spd_endpoints), get("spd_dim", c.spd_dim);
  get("driver", c.driver), get("snowflake_beta", c.snowflake_beta), get("n_anchors", c.n_anchors);
  get("trials", c.trials), get("ridge", c.ridge);

  if (!(c.eps > 0.0)) throw DomainError("config: eps must be positive");
  for (double e : {c.eps_a, c.eps_q, c.eps_e})
    if (e < 0.0) throw DomainError("config: epsilons must be positive");
  if ((c.eps_a > 0.0 || c.eps_q > 0.0 || c.eps_e > 0.0) && !(c.eps_a > 0.0 && c.eps_q > 0.0 && c.eps_e > 0.0))
    throw DomainError("config: give all of eps_a, eps_q, eps_e or none");
  if (!(c.delta >= 0.0 && c.delta < 1.0)) throw DomainError("config: delta must lie in [0, 1)");
  if (!(c.ridge > 0.0)) throw DomainError("config: ridge must be positive");
  if (c.q == 0) throw DomainError("config: q must be positive");
  if (!(c.sweep_fraction > 0.0)) throw DomainError("config: sweep_fraction must be positive");
  if (!(c.snowflake_beta > 0.0 && c.snowflake_beta <= 1.0)) throw DomainError("config: snowflake_beta must lie in (0, 1]");
  if (!(c.hi > c.lo)) throw DomainError("config: need lo < hi");
  return c;
}

inline ExperimentConfig read_config(const std::filesystem::path& path) {
  return parse_config(read_json(path), path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
}

/// Report plus extra files (name -> contents) written next to it.
struct RunOutput {
  ExperimentReport report;
  std::map<std::string, std::string> artifacts;
};

inline ReportFiles write_run(const RunOutput& run, const std::filesystem::path& dir) {
  auto files = emit_report(run.report, dir);
  for (const auto& [name, text] : run.artifacts) write_text(dir / name, text);
  return files;
}

// ---------------------------------------------------------------------------
// Shared helpers

/// Connected graph: random spanning tree plus extra edges, weights in [0.5, 2.5).
inline std::vector<WeightedEdge> random_connected_graph(CounterRng& rng, std::size_t n, double extra_edge_prob = 0.3) {
  std::vector<WeightedEdge> edges;
  for (std::size_t v = 1; v < n; ++v) edges.push_back({v, rng.below(v), 0.5 + rng.uniform() * 2.0});
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v)
      if (rng.uniform() < extra_edge_prob) edges.push_back({u, v, 0.5 + rng.uniform() * 2.0});
  return edges;
}

inline Vector random_simplex_point(CounterRng& rng, Eigen::Index n) {
  Vector w(n);
  for (Eigen::Index i = 0; i < n; ++i) w[i] = -std::log(rng.uniform() + 1e-300);
  return w / w.sum();
}

inline SpdMatrix random_spd(CounterRng& rng, Eigen::Index d, double spread = 1.0) {
  Matrix g(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) g(i, j) = spread * rng.normal();
  return SpdMatrix(g * g.transpose() + 0.5 * Matrix::Identity(d, d));
}

/// Sub-graph cover: one piece per line, vertex indices separated by spaces
/// or commas; `#` starts a comment.
inline std::vector<IndexSet> parse_cover(std::istream& in) {
  std::vector<IndexSet> pieces;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::replace(line.begin(), line.end(), ',', ' ');
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    IndexSet piece;
    std::string tok;
    while (ls >> tok) {
      std::size_t v = 0;
      const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (r.ec != std::errc() || r.ptr != tok.data() + tok.size()) throw ParseError("bad vertex index '" + tok + "'", lineno);
      piece.push_back(v);
    }
    std::sort(piece.begin(), piece.end());
    piece.erase(std::unique(piece.begin(), piece.end()), piece.end());
    pieces.push_back(std::move(piece));
  }
  return pieces;
}

inline std::vector<IndexSet> read_cover(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  try {
    return parse_cover(in);
  } catch (const ParseError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

/// Checks that the pieces cover every vertex and that each induced sub-graph
/// is connected with d_{G_i} = d_G on its vertices. Throws CoverError.
inline void verify_cover(const EdgeList& g, const std::vector<IndexSet>& pieces) {
  if (pieces.empty()) throw CoverError("cover: no pieces");
  const auto full = shortest_path_metric(g.edges, g.n_vertices);
  std::vector<bool> seen(g.n_vertices, false);
  for (std::size_t p = 0; p < pieces.size(); ++p) {
    const auto& piece = pieces[p];
    if (piece.empty()) throw CoverError("cover: piece " + std::to_string(p) + " is empty");
    std::map<std::size_t, std::size_t> local;
    for (auto v : piece) {
      if (v >= g.n_vertices) throw CoverError("cover: piece " + std::to_string(p) + " names vertex " + std::to_string(v) + " outside the graph");
      local[v] = local.size();
      seen[v] = true;
    }
    std::vector<WeightedEdge> sub;
    for (const auto& e : g.edges)
      if (local.count(e.u) && local.count(e.v)) sub.push_back({local[e.u], local[e.v], e.w});
    FiniteMetricSpace induced;
    try {
      induced = shortest_path_metric(sub, piece.size());
    } catch (const ConstructionError& e) {
      throw CoverError("cover: piece " + std::to_string(p) + " is not connected (" + e.what() + ")");
    }
    const double tol = 1e-12 * std::max(1.0, full.diameter());
    for (std::size_t a = 0; a < piece.size(); ++a)
      for (std::size_t b = a + 1; b < piece.size(); ++b)
        if (std::abs(induced(a, b) - full(piece[a], piece[b])) > tol)
          throw CoverError("cover: piece " + std::to_string(p) + " is not isometric: d_G(" + std::to_string(piece[a]) + "," +
                           std::to_string(piece[b]) + ") = " + format_double(full(piece[a], piece[b])) +
                           " but the piece gives " + format_double(induced(a, b)));
  }
  for (std::size_t v = 0; v < g.n_vertices; ++v)
    if (!seen[v]) throw CoverError("cover: vertex " + std::to_string(v) + " is in no piece");
}

namespace detail {

inline std::uint64_t param_count(const ReluNet& net) { return net.parameter_count(); }

template <class X, class Y>
std::uint64_t head_param_count(const UnstructuredModel<X, Y>& m) {
  std::uint64_t n = 0;
  for (const auto& b : m.head) n += static_cast<std::uint64_t>(b.u.size() + b.z.size());
  return n;
}

inline FeatureMap<double> scalar_chart(std::function<double(double)> chart) {
  FeatureMap<double> phi;
  phi.kind = FeatureKind::chart;
  phi.target_dim = 1;
  phi.norm = FeatureNorm::l2;
  phi.map = [chart = std::move(chart)](const double& x) { return Vector::Constant(1, chart(x)); };
  return phi;
}

inline FiniteMetricSpace load_or_random_graph(const ExperimentConfig& cfg, const std::string& file, std::size_t n,
                                              std::uint64_t stream, EdgeList* edges = nullptr) {
  EdgeList g;
  if (!file.empty()) {
    g = read_edge_list(cfg.resolve(file));
  } else {
    if (n == 0) throw DomainError("graph: need a positive vertex count");
    CounterRng rng = CounterRng(cfg.seed).derive(stream);
    g.edges = random_connected_graph(rng, n);
    g.n_vertices = n;
  }
  if (edges) *edges = g;
  return shortest_path_metric(g.edges, g.n_vertices);
}

/// Records sup/mean of the per-point errors and the contraction check.
inline void summarize_rows(ExperimentReport& r, const std::vector<double>& contraction_gap) {
  double sup = 0.0, mean = 0.0;
  std::size_t certified = 0;
  for (const auto& row : r.rows) {
    if (!row.certified) continue;
    ++certified;
    sup = std::max(sup, row.w1_error);
    mean += row.w1_error;
  }
  r.metrics["sup_w1_error"] = sup;
  r.metrics["mean_w1_error"] = certified ? mean / static_cast<double>(certified) : 0.0;
  r.params["n_eval"] = r.rows.size();
  if (!contraction_gap.empty()) {
    double worst = -std::numeric_limits<double>::infinity();
    for (double g : contraction_gap) worst = std::max(worst, g);
    // d(beta(T(x)), f(x)) - W1(T(x), delta_f(x)) over every evaluated point.
    r.metrics["contraction_max_gap"] = worst;
    r.thresholds["contraction_tolerance"] = 1e-12;
    r.check("contraction", worst <= 1e-12);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// graph_map: maps between finite weighted graphs

inline RunOutput run_graph_map(const ExperimentConfig& cfg) {
  RunOutput out;
  auto& r = out.report;
  const auto src = detail::load_or_random_graph(cfg, cfg.source_graph, cfg.n_source, 1);
  const auto tgt = detail::load_or_random_graph(cfg, cfg.target_graph, cfg.n_target, 2);
  std::vector<std::size_t> f(src.size());
  if (cfg.map == "random") {
    CounterRng rng = CounterRng(cfg.seed).derive(3);
    for (auto& y : f) y = rng.below(tgt.size());
  } else if (cfg.map == "constant") {
    std::fill(f.begin(), f.end(), 0);
  } else if (cfg.map == "identity") {
    if (tgt.size() < src.size()) throw DomainError("graph_map: identity map needs |Y| >= |X|");
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = i;
  } else {
    f = vertex_map(read_csv(cfg.resolve(cfg.map)), src.size(), tgt.size());
  }

  std::vector<std::size_t> xs(src.size()), dense(tgt.size());
  for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = i;
  for (std::size_t i = 0; i < dense.size(); ++i) dense[i] = i;
  const auto feature = kuratowski_embed(src);
  const std::function<double(const std::size_t&, const std::size_t&)> dist = [tgt](const std::size_t& a, const std::size_t& b) { return tgt(a, b); };

  const Budget budget = cfg.budget();
  const auto model = build_unstructured(xs, f, feature, dense, dist, budget, cfg.eps, cfg.seed);
  for (auto x : xs) {
    const auto mu = evaluate(model, x);
    r.rows.push_back({x, w1_to_dirac(tgt, mu, f[x]), true, 0});
  }
  detail::summarize_rows(r, {});
  const double diam = tgt.diameter();
  r.metrics["diam_y"] = diam;
  r.metrics["fit_error"] = model.fit_error;
  r.metrics["feature_lower_lipschitz"] = feature.lower;
  r.metrics["feature_upper_lipschitz"] = feature.upper;
  r.thresholds["sup_w1_error"] = cfg.eps;
  r.check("sup_w1_error", r.metrics["sup_w1_error"] <= cfg.eps);
  r.params["c"] = cfg.c;
  r.params["d"] = feature.target_dim;
  r.params["N"] = model.n_atoms();
  r.params["D"] = detail::param_count(model.core) + detail::head_param_count(model);
  r.params["n_source"] = src.size();
  r.params["n_target"] = tgt.size();
  r.params["range_size"] = std::set<std::size_t>(f.begin(), f.end()).size();
  r.params["fallback"] = model.fallback ? 1 : 0;

  if (!cfg.c_sweep.empty()) {
    const double target = cfg.sweep_fraction * diam;
    r.thresholds["sweep_w1_error"] = target;
    std::uint64_t reached = 0;
    for (auto c : cfg.c_sweep) {
      Budget b = cfg.budget();
      b.c = c;
      const auto m = build_unstructured(xs, f, feature, dense, dist, b, target, cfg.seed);
      r.metrics["sweep_error_c" + std::to_string(c)] = m.achieved_error;
      if (m.achieved_error <= target) {
        reached = c;
        break;
      }
    }
    r.params["sweep_c_reached"] = reached;
    r.check("sweep_w1_error", reached > 0);
  }

  if (cfg.sampling_trials > 0) {
    // Random outputs from a model with fewer atoms than range points.
    HeadSpec<std::size_t> spec;
    spec.mode = HeadMode::interpolate2;
    const Budget b = cfg.budget(cfg.sampling_atoms);
    const auto sm = build_unstructured(xs, f, feature, dense, dist, b, cfg.eps, cfg.seed ^ 0x5a5aULL, spec);
    const std::size_t n = src.size();
    const double eps = std::max(sm.achieved_error, 1e-300) * (1.0 + 1e-9);
    std::vector<DiscreteMeasure> outs;
    for (auto x : xs) outs.push_back(evaluate(sm, x));
    CounterRng rng = CounterRng(cfg.seed).derive(4);
    const double radius = static_cast<double>(n) * std::sqrt(eps);
    std::size_t hits = 0;
    for (std::size_t t = 0; t < cfg.sampling_trials; ++t) {
      bool ok = true;
      for (std::size_t k = 0; k < n; ++k) ok = (tgt(sample(outs[k], rng), f[k]) <= radius) && ok;
      hits += ok;
    }
    const double freq = static_cast<double>(hits) / static_cast<double>(cfg.sampling_trials);
    const double se = std::sqrt(freq * (1.0 - freq) / static_cast<double>(cfg.sampling_trials));
    const double bound = eps / static_cast<double>(n) <= 1.0 ? finite_set_success_bound(eps, n) : 0.0;
    r.metrics["sampling_eps"] = eps;
    r.metrics["sampling_radius"] = radius;
    r.metrics["sampling_radius_over_diam"] = radius / diam;
    r.metrics["sampling_frequency"] = freq;
    r.metrics["sampling_standard_error"] = se;
    r.metrics["sampling_bound"] = bound;
    r.params["sampling_trials"] = cfg.sampling_trials;
    r.params["sampling_atoms"] = sm.n_atoms();
    r.thresholds["sampling_bound_minus_3se"] = bound - 3.0 * se;
    r.check("sampling_bound", freq >= bound - 3.0 * se);
  }

  out.artifacts["model.json"] = to_json(model_record(model, [](std::size_t y) { return Json(y); })).dump(2) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// graph_coloring: per-piece models over a verified isometric cover

inline RunOutput run_graph_coloring(const ExperimentConfig& cfg) {
  RunOutput out;
  auto& r = out.report;
  if (cfg.graph.empty() || cfg.cover.empty()) throw DomainError("graph_coloring: 'graph' and 'cover' are required");
  EdgeList g;
  const auto space = detail::load_or_random_graph(cfg, cfg.graph, 0, 1, &g);
  const auto pieces = read_cover(cfg.resolve(cfg.cover));
  verify_cover(g, pieces);

  std::vector<std::size_t> color;
  std::size_t k = cfg.colors;
  if (!cfg.coloring.empty()) {
    color = vertex_map(read_csv(cfg.resolve(cfg.coloring)), space.size(), k);
  } else {
    // Greedy colouring in index order.
    color.assign(space.size(), 0);
    for (std::size_t v = 0; v < space.size(); ++v) {
      std::set<std::size_t> used;
      for (const auto& e : g.edges) {
        if (e.u == v && e.v < v) used.insert(color[e.v]);
        if (e.v == v && e.u < v) used.insert(color[e.u]);
      }
      while (used.count(color[v])) ++color[v];
      k = std::max(k, color[v] + 1);
    }
  }
  std::size_t input_violations = 0;
  for (const auto& e : g.edges) input_violations += (e.u != e.v && color[e.u] == color[e.v]);
  r.params["input_coloring_violations"] = input_violations;
  r.check("input_is_coloring", input_violations == 0);

  // Colour space: k points at mutual distance 1.
  std::vector<std::size_t> dense(k);
  for (std::size_t i = 0; i < k; ++i) dense[i] = i;
  const std::function<double(const std::size_t&, const std::size_t&)> dist = [](const std::size_t& a, const std::size_t& b) { return a == b ? 0.0 : 1.0; };

  std::vector<UnstructuredModel<std::size_t, std::size_t>> models;
  std::vector<std::map<std::size_t, std::size_t>> local(pieces.size());
  std::uint64_t params = 0;
  for (std::size_t p = 0; p < pieces.size(); ++p) {
    const auto sub = space.restrict(pieces[p]);
    std::vector<std::size_t> xs(pieces[p].size()), ys(pieces[p].size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      xs[i] = i;
      ys[i] = color[pieces[p][i]];
      local[p][pieces[p][i]] = i;
    }
    const Budget b = cfg.budget();
    models.push_back(build_unstructured(xs, ys, kuratowski_embed(sub), dense, dist, b, cfg.eps,
                                        structured_seed(cfg.seed, p, 0, 0)));
    params += detail::param_count(models.back().core) + detail::head_param_count(models.back());
  }

  const auto pou = finite_partition(space, pieces);
  const double radius = space.size() > 1 ? space.separation() : 1.0;
  std::vector<std::size_t> predicted(space.size());
  for (std::size_t v = 0; v < space.size(); ++v) {
    const auto pw = partition_weights(pou, v, pieces.size(), radius);
    std::vector<DiscreteMeasure> parts;
    std::vector<double> w;
    for (std::size_t p = 0; p < pieces.size(); ++p)
      if (pw.psi[static_cast<Eigen::Index>(p)] > 0.0) {
        parts.push_back(evaluate(models[p], local[p].at(v)));
        w.push_back(pw.psi[static_cast<Eigen::Index>(p)]);
      }
    const auto mu = mix_wasserstein(Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(w.size())), parts);
    const double err = 1.0 - mu.mass_at(color[v]);
    std::size_t arg = 0;
    for (std::size_t c = 1; c < k; ++c)
      if (mu.mass_at(c) > mu.mass_at(arg)) arg = c;
    predicted[v] = arg;
    r.rows.push_back({v, err, pw.good, static_cast<long>(arg)});
  }
  std::size_t violations = 0, wrong = 0;
  for (const auto& e : g.edges) violations += (e.u != e.v && predicted[e.u] == predicted[e.v]);
  for (std::size_t v = 0; v < space.size(); ++v) wrong += predicted[v] != color[v];
  detail::summarize_rows(r, {});
  bool all_good = true;
  for (const auto& row : r.rows) all_good = all_good && row.certified;
  r.params["pieces"] = pieces.size();
  r.params["colors"] = k;
  r.params["n_vertices"] = space.size();
  r.params["D"] = params;
  r.params["c"] = cfg.c;
  r.params["coloring_violations"] = violations;
  r.params["misclassified_vertices"] = wrong;
  r.thresholds["sup_w1_error"] = std::min(cfg.eps, 0.5);
  r.check("good_set_everywhere", all_good);
  r.check("sup_w1_error", r.metrics["sup_w1_error"] < std::min(cfg.eps, 0.5));
  r.check("no_violations_below_half", r.metrics["sup_w1_error"] >= 0.5 || violations == 0);
  return out;
}

// ---------------------------------------------------------------------------
// classification: kernel x -> (p(x), 1 - p(x)) with a clamped scalar head

inline double hard_sigmoid(double u) { return std::min(std::max(u, 0.0), 1.0); }

inline RunOutput run_classification(const ExperimentConfig& cfg) {
  RunOutput out;
  auto& r = out.report;
  const std::size_t n_train = cfg.n_train ? cfg.n_train : 201, n_test = cfg.n_test ? cfg.n_test : 1000;
  if (n_train < 2) throw DomainError("classification: need at least two training points");
  auto p = [](double x) { return hard_sigmoid(x); };
  std::vector<Vector> xs, ys;
  for (std::size_t k = 0; k < n_train; ++k) {
    const double x = cfg.lo + (cfg.hi - cfg.lo) * static_cast<double>(k) / static_cast<double>(n_train - 1);
    xs.push_back(Vector::Constant(1, x));
    ys.push_back(Vector::Constant(1, p(x)));
  }
  const auto fit = fit_universal(xs, ys, cfg.c, cfg.seed, cfg.budget().fit);
  bool head_ok = true;
  for (std::size_t k = 0; k < n_test; ++k) {
    // Test points interleave the training grid.
    const double x = cfg.lo + (cfg.hi - cfg.lo) * (static_cast<double>(k) + 0.5) / static_cast<double>(n_test);
    const double s = hard_sigmoid(relu_forward(fit.net, Vector::Constant(1, x))[0]);
    const Vector w = (Vector(2) << s, 1.0 - s).finished();
    head_ok = head_ok && s >= 0.0 && s <= 1.0 && w.sum() == 1.0;
    // W1 between measures on two points at distance 1 is the mass moved.
    r.rows.push_back({k, std::abs(s - p(x)), true, 0});
  }
  detail::summarize_rows(r, {});
  r.metrics["fit_error"] = fit.max_train_error;
  r.thresholds["sup_w1_error"] = cfg.eps;
  r.check("sup_w1_error", r.metrics["sup_w1_error"] < cfg.eps);
  r.check("head_on_simplex", head_ok);
  r.params["c"] = cfg.c;
  r.params["D"] = detail::param_count(fit.net);
  r.params["n_train"] = n_train;
  r.params["fallback"] = fit.fallback ? 1 : 0;
  return out;
}

// ---------------------------------------------------------------------------
// operator: Fourier features, pointwise square, spectral truncation

/// Samples u = a0 + sum_{k <= band} a_k cos(k t) + b_k sin(k t) on g points.
inline Vector random_band_limited(CounterRng& rng, std::size_t band, double amplitude, std::size_t g) {
  Vector c(static_cast<Eigen::Index>(2 * band + 1));
  for (auto& v : c) v = rng.uniform(-amplitude, amplitude);
  return schauder_synthesize(c, g);
}

/// Ground truth: first 2 * truncation + 1 Fourier coefficients of u^2.
inline Vector square_then_truncate(const Vector& u, std::size_t truncation) {
  return schauder_truncate(u.array().square().matrix(), 2 * truncation + 1);
}

inline RunOutput run_operator(const ExperimentConfig& cfg) {
  RunOutput out;
  auto& r = out.report;
  const std::size_t n_train = cfg.n_train ? cfg.n_train : 400, n_test = cfg.n_test ? cfg.n_test : 20;
  if (2 * cfg.truncation + 1 > cfg.grid / 2) throw DomainError("operator: truncation too fine for the grid");
  const auto full = schauder_feature(cfg.grid / 2);
  const auto feature = compressed_feature(full, coordinate_truncations(cfg.grid / 2, FeatureNorm::l2), cfg.d);

  CounterRng rng = CounterRng(cfg.seed).derive(1);
  std::vector<Vector> xs, ys, tx, ty;
  for (std::size_t k = 0; k < n_train; ++k) {
    xs.push_back(random_band_limited(rng, cfg.band, cfg.amplitude, cfg.grid));
    ys.push_back(square_then_truncate(xs.back(), cfg.truncation));
  }
  CounterRng test_rng = CounterRng(cfg.seed).derive(2);
  for (std::size_t k = 0; k < n_test; ++k) {
    tx.push_back(random_band_limited(test_rng, cfg.band, cfg.amplitude, cfg.grid));
    ty.push_back(square_then_truncate(tx.back(), cfg.truncation));
  }
  const auto poly = enclosing_corner_simplex(ys);
  HeadSpec<Vector> spec;
  spec.mode = HeadMode::custom;
  spec.target_weights = [poly](const Vector& y) { return poly.weights(y); };
  const std::function<double(const Vector&, const Vector&)> dist = [](const Vector& a, const Vector& b) { return (a - b).norm(); };
  const auto model = build_unstructured(xs, ys, feature, poly.vertices(), dist, cfg.budget(0), cfg.eps, cfg.seed, spec);

  std::vector<double> gaps;
  double sup_l2 = 0.0;
  for (std::size_t k = 0; k < n_test; ++k) {
    const auto pm = to_points(model, evaluate(model, tx[k]));
    const double w1 = w1_to_point(pm, ty[k], dist);
    const double e = dist(barycenter_euclidean(pm), ty[k]);
    sup_l2 = std::max(sup_l2, e);
    gaps.push_back(e - w1);
    r.rows.push_back({k, w1, true, 0});
  }
  detail::summarize_rows(r, gaps);
  r.metrics["sup_l2_error"] = sup_l2;
  r.metrics["train_w1_error"] = model.achieved_error;
  r.metrics["head_side"] = poly.side;
  r.thresholds["sup_l2_error"] = cfg.eps;
  r.check("sup_l2_error", sup_l2 < cfg.eps);
  r.params["c"] = cfg.c;
  r.params["d"] = cfg.d;
  r.params["N"] = model.n_atoms();
  r.params["D"] = detail::param_count(model.core) + detail::head_param_count(model);
  r.params["grid"] = cfg.grid;
  r.params["n_train"] = n_train;
  r.params["n_test"] = n_test;
  return out;
}

// ---------------------------------------------------------------------------
// circle_target: structured model for a degree-one circle map

inline double circle_map(double theta) { return wrap_angle(theta + 0.25 * std::sin(theta)); }

inline RunOutput run_circle_target(const ExperimentConfig& cfg) {
  RunOutput out;
  auto& r = out.report;
  const std::size_t n_train = cfg.n_train ? cfg.n_train : 2000, n_test = cfg.n_test ? cfg.n_test : 4000;
  constexpr double pi = std::numbers::pi;
  // Two overlapping source arcs, each with its angular chart.
  const std::vector<CircleArc> src{{7 * pi / 4, 1.5 * pi}, {3 * pi / 4, 1.5 * pi}};
  std::vector<FeatureMap<double>> charts;
  for (const auto& arc : src) charts.push_back(detail::scalar_chart([arc](double th) { return arc.chart(th); }));
  std::vector<double> xs, ys;
  for (std::size_t k = 0; k < n_train; ++k) {
    xs.push_back(kTwoPi * static_cast<double>(k) / static_cast<double>(n_train));
    ys.push_back(circle_map(xs.back()));
  }
  const auto target = circle_partition(cfg.arcs);
  const auto eps = cfg.split();
  const auto model = build_structured<double, double>(xs, ys, arc_cover(src), charts, target, cfg.budget(),
                                                      eps, cfg.delta, cfg.seed);

  CounterRng rng = CounterRng(cfg.seed).derive(1);
  std::size_t certified = 0, agree = 0, ties = 0, abstain = 0;
  std::vector<double> gaps;
  for (std::size_t k = 0; k < n_test; ++k) {
    const double th = rng.uniform(0.0, kTwoPi);
    const auto o = evaluate_structured(model, th);
    const double err = w1_to_point(o.measure, circle_map(th), circle_distance);
    ties += o.cls.tie();
    abstain += o.cls.abstain();
    if (o.certified) {
      ++certified;
      agree += target.contains(o.cls.part, circle_map(th));
      gaps.push_back(circle_distance(derandomize_structured(model, o), circle_map(th)) - err);
    }
    r.rows.push_back({k, err, o.certified, o.certified ? static_cast<long>(o.cls.part) : -1});
  }
  detail::summarize_rows(r, gaps);
  const double mass = static_cast<double>(certified) / static_cast<double>(n_test);
  r.metrics["certified_mass"] = mass;
  r.metrics["part_agreement"] = certified ? static_cast<double>(agree) / static_cast<double>(certified) : 0.0;
  r.metrics["radius"] = model.radius;
  r.metrics["delta_star"] = model.delta_star;
  r.thresholds["certified_mass"] = 1.0 - cfg.delta;
  r.thresholds["sup_w1_error"] = eps.total();
  r.check("certified_mass", mass >= 1.0 - cfg.delta);
  r.check("sup_w1_error", r.metrics["sup_w1_error"] < eps.total());
  r.check("part_agreement", agree == certified);
  std::uint64_t params = 0;
  for (std::size_t n = 0; n < model.n_source(); ++n)
    for (std::size_t m = 0; m < model.n_target(); ++m) {
      params += detail::param_count(model.classifier[n][m]);
      if (model.sub[n][m]) params += detail::param_count(model.sub[n][m]->core) + detail::head_param_count(*model.sub[n][m]);
    }
  r.params["D"] = params;
  r.params["c"] = cfg.c;
  r.params["M"] = model.n_target();
  r.params["N_source_parts"] = model.n_source();
  r.params["n_star"] = model.n_star;
  r.params["ties"] = ties;
  r.params["abstentions"] = abstain;
  return out;
}

// ---------------------------------------------------------------------------
// spd_map: interval -> SPD geodesic with Karcher de-randomization

inline RunOutput run_spd_map(const ExperimentConfig& cfg) {
  RunOutput out;
  auto& r = out.report;
  std::vector<SpdMatrix> ends;
  if (!cfg.spd_endpoints.empty()) {
    ends = spd_from_json(read_json(cfg.resolve(cfg.spd_endpoints)));
    if (ends.size() != 2) throw DomainError("spd_map: need exactly two endpoint matrices");
  } else {
    CounterRng rng = CounterRng(cfg.seed).derive(1);
    ends = {random_spd(rng, static_cast<Eigen::Index>(cfg.spd_dim)), random_spd(rng, static_cast<Eigen::Index>(cfg.spd_dim))};
  }
  // f(x) = gamma(sin^2(pi x / 2)) along the geodesic from A to B.
  auto along = [&](double s) { return spd_geodesic((Vector(2) << 1.0 - s, s).finished(), ends[0], ends[1]); };
  auto f = [&](double x) {
    const double s = std::sin(std::numbers::pi * x / 2.0);
    return along(s * s);
  };
  const std::size_t n_train = cfg.n_train ? cfg.n_train : 200, n_test = cfg.n_test ? cfg.n_test : 200;
  const std::size_t k_atoms = cfg.n_atoms ? cfg.n_atoms : 9;
  if (k_atoms < 2) throw DomainError("spd_map: need at least two atoms");
  std::vector<SpdMatrix> dense;
  for (std::size_t k = 0; k < k_atoms; ++k) dense.push_back(along(static_cast<double>(k) / static_cast<double>(k_atoms - 1)));
  std::vector<double> xs;
  std::vector<SpdMatrix> ys;
  for (std::size_t k = 0; k < n_train; ++k) {
    xs.push_back(static_cast<double>(k) / static_cast<double>(n_train - 1));
    ys.push_back(f(xs.back()));
  }
  HeadSpec<SpdMatrix> spec;
  spec.mode = HeadMode::interpolate2;
  for (std::size_t k = 0; k < k_atoms; ++k) spec.atoms.push_back(k);
  const std::function<double(const SpdMatrix&, const SpdMatrix&)> dist = spd_distance;
  const auto model = build_unstructured(xs, ys, detail::scalar_chart([](double x) { return x; }), dense, dist,
                                        cfg.budget(0), cfg.eps, cfg.seed, spec);
  const std::function<SpdMatrix(const PointMeasure<SpdMatrix>&)> bary = [](const PointMeasure<SpdMatrix>& mu) {
    return spd_mixing(Eigen::Map<const Vector>(mu.weights.data(), static_cast<Eigen::Index>(mu.weights.size())), mu.atoms);
  };
  std::vector<double> gaps;
  double sup_bary = 0.0;
  for (std::size_t k = 0; k < n_test; ++k) {
    const double x = (static_cast<double>(k) + 0.5) / static_cast<double>(n_test);
    const auto pm = to_points(model, evaluate(model, x));
    const auto y = f(x);
    const double w1 = w1_to_point(pm, y, dist);
    const double e = spd_distance(bary(pm), y);
    sup_bary = std::max(sup_bary, e);
    gaps.push_back(e - w1);
    r.rows.push_back({k, w1, true, 0});
  }
  detail::summarize_rows(r, gaps);
  r.metrics["sup_barycenter_error"] = sup_bary;
  r.metrics["geodesic_length"] = spd_distance(ends[0], ends[1]);
  r.thresholds["sup_barycenter_error"] = cfg.eps;
  r.check("sup_barycenter_error", sup_bary < cfg.eps);
  r.params["c"] = cfg.c;
  r.params["N"] = model.n_atoms();
  r.params["D"] = detail::param_count(model.core) + detail::head_param_count(model);
  r.params["spd_dim"] = static_cast<std::uint64_t>(ends[0].dim());
  return out;
}

// ---------------------------------------------------------------------------
// rde_flow: flow of a controlled ODE on G^2(R^2)

/// Log coordinates (a, sqrt(2) A_ij, i < j): Euclidean distance here equals
/// tangent_distance.
inline Vector tangent_coordinates(const Step2& g) {
  Vector v = flatten(g);
  v.tail(v.size() - g.dim()) *= std::numbers::sqrt2;
  return v;
}

inline Step2 from_tangent_coordinates(const Vector& v, Eigen::Index d) {
  Vector u = v;
  u.tail(u.size() - d) /= std::numbers::sqrt2;
  return unflatten(u, d);
}

/// Default driver: a closed-ish loop in R^2 on [0, 1].
inline PiecewiseLinearPath default_driver() {
  auto p = [](double a, double b) { return (Vector(2) << a, b).finished(); };
  return PiecewiseLinearPath({p(0, 0), p(0.6, 0.2), p(0.8, 0.9), p(0.1, 0.7), p(-0.2, 0.3)}, {0.0, 0.25, 0.5, 0.75, 1.0});
}

/// V(y) for the flow experiment, 2 x 2.
inline Matrix flow_field(const Vector& y) {
  Matrix v(2, 2);
  v << 1.0 + 0.3 * std::sin(y[1]), 0.2 * y[0], 0.3 * std::cos(y[0]), 1.0 - 0.1 * y[1];
  return v;
}

/// Full solution y0 (x) S_2(y) on [0, T] with y started at pi_1(y0). The
/// Levy area of y is integrated alongside y.
inline Step2 rde_full_flow(const Step2& g, const PiecewiseLinearPath& driver) {
  const Vector a = g.a;
  const VectorField aug = [a](const Vector& z) {
    const Vector y = z.head(2);
    const Matrix v = flow_field(y);
    Matrix out(3, v.cols());
    out.topRows(2) = v;
    out.row(2) = 0.5 * ((y[0] - a[0]) * v.row(1) - (y[1] - a[1]) * v.row(0));
    return out;
  };
  Vector z0(3);
  z0 << a[0], a[1], 0.0;
  const auto res = rde_flow_oracle(aug, driver, z0, 0.05);
  Step2 s = Step2::identity(2);
  s.a = res.y.head(2) - a;
  s.A(0, 1) = res.y[2];
  s.A(1, 0) = -res.y[2];
  return group_multiply(g, s);
}

inline RunOutput run_rde_flow(const ExperimentConfig& cfg) {
  RunOutput out;
  auto& r = out.report;
  const auto driver = cfg.driver.empty() ? default_driver() : path_from_csv(read_csv(cfg.resolve(cfg.driver)));
  if (driver.dim() != 2) throw DomainError("rde_flow: driver must be two-dimensional");
  const std::size_t n_train = cfg.n_train ? cfg.n_train : 300, n_test = cfg.n_test ? cfg.n_test : 50;
  auto draw = [](CounterRng& rng) {
    Step2 g = Step2::identity(2);
    g.a << rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0);
    g.A(0, 1) = rng.uniform(-0.5, 0.5);
    g.A(1, 0) = -g.A(0, 1);
    return g;
  };
  CounterRng rng = CounterRng(cfg.seed).derive(1), test_rng = CounterRng(cfg.seed).derive(2);
  std::vector<Step2> xs, tx;
  std::vector<Vector> ys, ty;
  for (std::size_t k = 0; k < n_train; ++k) {
    xs.push_back(draw(rng));
    ys.push_back(tangent_coordinates(rde_full_flow(xs.back(), driver)));
  }
  for (std::size_t k = 0; k < n_test; ++k) {
    tx.push_back(draw(test_rng));
    ty.push_back(tangent_coordinates(rde_full_flow(tx.back(), driver)));
  }
  // Snowflaked homogeneous norm of g^{-1} h.
  const double beta = cfg.snowflake_beta;
  auto dx = [beta](const Step2& g, const Step2& h) {
    return std::pow(cc_homogeneous_norm(group_multiply(group_inverse(g), h)), beta);
  };
  const std::size_t n_anchor = std::min(cfg.n_anchors, xs.size());
  const auto feature = kuratowski_embed_points(std::vector<Step2>(xs.begin(), xs.begin() + static_cast<long>(n_anchor)), dx);

  const auto poly = enclosing_corner_simplex(ys);
  HeadSpec<Vector> spec;
  spec.mode = HeadMode::custom;
  spec.target_weights = [poly](const Vector& y) { return poly.weights(y); };
  const std::function<double(const Vector&, const Vector&)> dist = [](const Vector& a, const Vector& b) { return (a - b).norm(); };
  const auto model = build_unstructured(xs, ys, feature, poly.vertices(), dist, cfg.budget(0), cfg.eps, cfg.seed, spec);

  std::vector<double> gaps;
  double sup_err = 0.0, lip = 0.0;
  for (std::size_t k = 0; k < n_test; ++k) {
    const auto pm = to_points(model, evaluate(model, tx[k]));
    const double w1 = w1_to_point(pm, ty[k], dist);
    const Step2 t_hat = from_tangent_coordinates(barycenter_euclidean(pm), 2);
    const double e = tangent_distance(t_hat, from_tangent_coordinates(ty[k], 2));
    sup_err = std::max(sup_err, e);
    gaps.push_back(e - w1);
    r.rows.push_back({k, w1, true, 0});
    for (std::size_t l = 0; l < k; ++l)
      lip = std::max(lip, (ty[k] - ty[l]).norm() / cc_homogeneous_norm(group_multiply(group_inverse(tx[k]), tx[l])));
  }
  detail::summarize_rows(r, gaps);
  r.metrics["sup_tangent_error"] = sup_err;
  r.metrics["flow_lipschitz_ratio_max"] = lip;
  r.thresholds["sup_tangent_error"] = cfg.eps;
  r.check("sup_tangent_error", sup_err < cfg.eps);
  r.params["c"] = cfg.c;
  r.params["d"] = feature.target_dim;
  r.params["N"] = model.n_atoms();
  r.params["D"] = detail::param_count(model.core) + detail::head_param_count(model);
  r.params["n_train"] = n_train;
  return out;
}

// ---------------------------------------------------------------------------
// invariant_suite: randomized property checks over every module

inline RunOutput run_invariant_suite(const ExperimentConfig& cfg) {
  RunOutput out;
  auto& r = out.report;
  const std::size_t trials = cfg.trials;
  const CounterRng root(cfg.seed);

  {  // w1_to_dirac against the transport LP.
    CounterRng rng = root.derive(1);
    double worst = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
      const std::size_t n = 2 + rng.below(7);
      const auto ground = shortest_path_metric(random_connected_graph(rng, n), n);
      const std::size_t support = 1 + rng.below(std::min<std::size_t>(n, 8));
      std::vector<std::size_t> atoms;
      for (std::size_t k = 0; k < support; ++k) atoms.push_back(rng.below(n));
      const DiscreteMeasure mu(atoms, random_simplex_point(rng, static_cast<Eigen::Index>(support)), n);
      const std::size_t y = rng.below(n);
      worst = std::max(worst, std::abs(w1_to_dirac(ground, mu, y) - w1_discrete(ground, mu, DiscreteMeasure::dirac(y, n))));
    }
    r.metrics["w1_closed_form_vs_lp"] = worst;
    r.check("w1_closed_form_vs_lp", worst <= 1e-9);
  }
  {  // Simplex projection: optimality conditions.
    CounterRng rng = root.derive(2);
    double worst = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
      const auto n = static_cast<Eigen::Index>(1 + rng.below(8));
      Vector v(n);
      for (auto& x : v) x = 2.0 * rng.normal();
      const Vector p = project_simplex(v);
      // p solves the projection iff v - p = tau on supp(p) and <= tau off it.
      double tau = -std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < n; ++i)
        if (p[i] > 0.0) tau = std::max(tau, v[i] - p[i]);
      double viol = std::abs(p.sum() - 1.0) + std::max(0.0, -p.minCoeff());
      for (Eigen::Index i = 0; i < n; ++i)
        viol = std::max(viol, p[i] > 0.0 ? std::abs(v[i] - p[i] - tau) : std::max(0.0, v[i] - tau));
      worst = std::max(worst, viol);
    }
    r.metrics["simplex_projection_kkt"] = worst;
    r.check("simplex_projection_kkt", worst <= 1e-10);
  }
  {  // Mixing inequality, C_eta = 1, p = 1.
    CounterRng rng = root.derive(3);
    std::size_t failures = 0;
    const auto e = euclidean_structure(3);
    for (std::size_t t = 0; t < trials; ++t) {
      const auto n = static_cast<Eigen::Index>(1 + rng.below(5));
      std::vector<Vector> pts;
      for (Eigen::Index k = 0; k < n; ++k) pts.push_back(Vector::NullaryExpr(3, [&] { return rng.normal(); }));
      failures += !check_mixing_inequality(e, random_simplex_point(rng, n), pts, rng.below(static_cast<std::size_t>(n))).ok;

      const std::size_t g = 2 + rng.below(7);
      const auto w = wasserstein_structure(shortest_path_metric(random_connected_graph(rng, g), g));
      std::vector<DiscreteMeasure> ms;
      for (Eigen::Index k = 0; k < n; ++k) {
        const auto qq = 1 + rng.below(3);
        Vector params(static_cast<Eigen::Index>(2 * qq));
        for (auto& x : params) x = rng.normal() * 3.0 + 2.0;
        ms.push_back(w.quantize(qq, params));
      }
      failures += !check_mixing_inequality(w, random_simplex_point(rng, n), ms, rng.below(static_cast<std::size_t>(n))).ok;

      const CircleArc arc{kTwoPi * rng.uniform(), std::numbers::pi * (0.05 + 0.95 * rng.uniform())};
      const auto c = circle_arc_structure(arc);
      std::vector<double> th;
      for (Eigen::Index k = 0; k < n; ++k) th.push_back(arc.chart_inverse(arc.length * rng.uniform()));
      failures += !check_mixing_inequality(c, random_simplex_point(rng, n), th, rng.below(static_cast<std::size_t>(n))).ok;
    }
    const auto s = spd_structure(3);
    for (std::size_t t = 0; t < std::max<std::size_t>(trials / 10, 1); ++t) {
      const auto n = static_cast<Eigen::Index>(2 + rng.below(3));
      std::vector<SpdMatrix> pts;
      for (Eigen::Index k = 0; k < n; ++k) pts.push_back(random_spd(rng, 3));
      failures += !check_mixing_inequality(s, random_simplex_point(rng, n), pts, rng.below(static_cast<std::size_t>(n))).ok;
    }
    r.params["mixing_failures"] = failures;
    r.check("mixing_inequality", failures == 0);
  }
  {  // Karcher residual.
    CounterRng rng = root.derive(4);
    double worst = 0.0;
    for (std::size_t t = 0; t < std::max<std::size_t>(trials / 20, 1); ++t) {
      const auto d = static_cast<Eigen::Index>(1 + rng.below(5));
      std::vector<SpdMatrix> pts{random_spd(rng, d), random_spd(rng, d), random_spd(rng, d)};
      const Vector w = random_simplex_point(rng, 3);
      const auto k = karcher_barycenter(pts, w);
      worst = std::max(worst, karcher_residual(k.mean, pts, w));
    }
    r.metrics["karcher_residual"] = worst;
    r.check("karcher_residual", worst <= 1e-8);
  }
  {  // Chen identity and the square loop.
    CounterRng rng = root.derive(5);
    double worst = 0.0;
    for (std::size_t t = 0; t < trials / 10 + 1; ++t) {
      std::vector<Vector> v;
      std::vector<double> times;
      for (int k = 0; k < 4; ++k) {
        v.push_back(Vector::NullaryExpr(2, [&] { return rng.normal(); }));
        times.push_back(k == 0 ? 0.0 : times.back() + 0.1 + rng.uniform());
      }
      const PiecewiseLinearPath p(v, times);
      const double u = rng.uniform(p.start() + 1e-3, p.end() - 1e-3);
      worst = std::max(worst, tangent_distance(signature_level2(p), group_multiply(signature_level2(p, p.start(), u),
                                                                                     signature_level2(p, u, p.end()))));
    }
    auto pt = [](double a, double b) { return (Vector(2) << a, b).finished(); };
    const PiecewiseLinearPath square({pt(0, 0), pt(1, 0), pt(1, 1), pt(0, 1), pt(0, 0)}, {0, 1, 2, 3, 4});
    const double area = signature_level2(square).A(0, 1);
    const VectorField lin = [](const Vector& y) { return Matrix(y); };
    const PiecewiseLinearPath clock({Vector::Zero(1), Vector::Ones(1)}, {0.0, 1.0});
    const double flow = std::abs(rde_flow_oracle(lin, clock, Vector::Ones(1), 0.1).y[0] - std::exp(1.0));
    r.metrics["chen_identity"] = worst;
    r.metrics["square_area_error"] = std::abs(area - 1.0);
    r.metrics["exponential_flow_error"] = flow;
    r.check("chen_identity", worst <= 1e-12);
    r.check("square_area", std::abs(area - 1.0) <= 1e-6);
    r.check("exponential_flow", flow <= 1e-8);
  }
  {  // Partition of unity on the good set.
    CounterRng rng = root.derive(6);
    double worst = 0.0;
    std::size_t leaks = 0;
    for (std::size_t t = 0; t < trials / 10 + 1; ++t) {
      const std::size_t n = 4 + rng.below(8);
      const auto s = shortest_path_metric(random_connected_graph(rng, n), n);
      std::vector<IndexSet> parts(2 + rng.below(2));
      for (std::size_t v = 0; v < n; ++v) {
        parts[rng.below(parts.size())].push_back(v);
        if (rng.uniform() < 0.3) parts[rng.below(parts.size())].push_back(v);
      }
      for (auto& p : parts) {
        std::sort(p.begin(), p.end());
        p.erase(std::unique(p.begin(), p.end()), p.end());
        if (p.empty()) p.push_back(0);
      }
      const auto pou = finite_partition(s, parts);
      for (std::size_t x = 0; x < n; ++x) {
        const auto pw = partition_weights(pou, x, parts.size(), s.separation());
        if (!pw.good) continue;
        worst = std::max(worst, std::abs(pw.psi.sum() - 1.0));
        for (std::size_t p = 0; p < parts.size(); ++p)
          leaks += pw.psi[static_cast<Eigen::Index>(p)] < 0.0 ||
                   (pw.psi[static_cast<Eigen::Index>(p)] > 0.0 && !std::binary_search(parts[p].begin(), parts[p].end(), x));
      }
    }
    r.metrics["partition_sum_error"] = worst;
    r.params["partition_support_leaks"] = leaks;
    r.check("partition_of_unity", worst <= 1e-12 && leaks == 0);
  }
  {  // Attention form and the contraction bound on random Euclidean models.
    CounterRng rng = root.derive(7);
    double attn = 0.0, gap = -std::numeric_limits<double>::infinity();
    std::size_t invalid = 0;
    for (int rep = 0; rep < 5; ++rep) {
      std::vector<Vector> xs, ys, dense;
      for (int k = 0; k < 30; ++k) {
        xs.push_back(Vector::NullaryExpr(3, [&] { return rng.uniform(-1.0, 1.0); }));
        ys.push_back(Vector::NullaryExpr(2, [&] { return rng.normal(); }));
      }
      for (int k = 0; k < 6; ++k) dense.push_back(Vector::NullaryExpr(2, [&] { return rng.normal(); }));
      FeatureMap<Vector> id;
      id.kind = FeatureKind::chart;
      id.target_dim = 3;
      id.norm = FeatureNorm::l2;
      id.map = [](const Vector& x) { return x; };
      const std::function<double(const Vector&, const Vector&)> dist = [](const Vector& a, const Vector& b) { return (a - b).norm(); };
      HeadSpec<Vector> spec;
      spec.mode = HeadMode::interpolate2;
      const auto m = build_unstructured(xs, ys, id, dense, dist, Budget{16, 0, 2, {}}, 1.0, rng(), spec);
      for (int k = 0; k < 50; ++k) {
        const Vector x = Vector::NullaryExpr(3, [&] { return rng.uniform(-1.5, 1.5); });
        const auto mu = evaluate(m, x);
        invalid += !on_simplex(mu.weights());
        const auto pm = to_points(m, mu);
        const Vector t = barycenter_euclidean(pm);
        attn = std::max(attn, (t - attention_form(m, x)).lpNorm<Eigen::Infinity>());
        const Vector y = Vector::NullaryExpr(2, [&] { return rng.normal(); });
        gap = std::max(gap, (t - y).norm() - w1_to_point(pm, y, dist));
      }
    }
    r.metrics["attention_form"] = attn;
    r.metrics["contraction_max_gap"] = gap;
    r.params["invalid_measures"] = invalid;
    r.check("attention_form", attn <= 1e-12);
    r.check("contraction", gap <= 1e-12);
    r.check("measures_valid", invalid == 0);
  }
  r.params["trials"] = trials;
  return out;
}

// ---------------------------------------------------------------------------

/// Runs one experiment; deterministic in the config.
inline RunOutput run_experiment(const ExperimentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  RunOutput out;
  if (cfg.kind == "graph_map") out = run_graph_map(cfg);
  else if (cfg.kind == "graph_coloring") out = run_graph_coloring(cfg);
  else if (cfg.kind == "classification") out = run_classification(cfg);
  else if (cfg.kind == "operator") out = run_operator(cfg);
  else if (cfg.kind == "circle_target") out = run_circle_target(cfg);
  else if (cfg.kind == "spd_map") out = run_spd_map(cfg);
  else if (cfg.kind == "rde_flow") out = run_rde_flow(cfg);
  else if (cfg.kind == "invariant_suite") out = run_invariant_suite(cfg);
  else throw DomainError("unknown experiment kind '" + cfg.kind + "'");
  out.report.kind = cfg.kind;
  out.report.seed = cfg.seed;
  out.report.finalize();
  out.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace qas
