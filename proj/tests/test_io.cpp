#include <catch_amalgamated.hpp>

#include <filesystem>
#include <limits>
#include <sstream>

#include "qas/experiments.hpp"
#include "qas/io.hpp"
#include "support.hpp"

using namespace qas;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / "qas_test_io" / name;
  std::filesystem::remove_all(p);
  return p;
}

CsvTable csv(const std::string& text) {
  std::istringstream in(text);
  return parse_csv(in);
}

}  // namespace

TEST_CASE("doubles round trip through text") {
  CounterRng rng(41);
  for (int t = 0; t < 2000; ++t) {
    const double x = rng.normal() * std::pow(10.0, rng.uniform(-30.0, 30.0));
    CHECK(parse_double(format_double(x), 0) == x);
  }
  CHECK(std::isnan(parse_double(format_double(std::numeric_limits<double>::quiet_NaN()), 0)));
  CHECK(parse_double(format_double(-std::numeric_limits<double>::infinity()), 0) < 0);
  CHECK_THROWS_AS(parse_double("1.5x", 3), ParseError);
}

TEST_CASE("csv parsing") {
  const auto t = csv("# samples\nx,y\n0,1.5\n\n2,-3e-2 # trailing\n");
  CHECK(t.header == std::vector<std::string>{"x", "y"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[1][1] == -3e-2);
  CHECK(t.column("y") == 1);
  CHECK_THROWS_AS(t.column("z"), DomainError);

  const auto bare = csv("1,2,3\n4,5,6\n");
  CHECK(bare.header.empty());
  CHECK(bare.rows.size() == 2);

  try {
    csv("a,b\n1,2\n3\n");
    FAIL("ragged row accepted");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  try {
    csv("1,2\n3,oops\n");
    FAIL("bad number accepted");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }

  const auto s = function_samples(csv("x1,x2,y\n0,1,2\n3,4,5\n"), 2);
  CHECK(s.xs[1] == (Vector(2) << 3, 4).finished());
  CHECK(s.ys[0] == Vector::Constant(1, 2.0));
  CHECK_THROWS_AS(function_samples(csv("1,2\n"), 2), ShapeError);
}

TEST_CASE("vertex maps") {
  const auto f = vertex_map(csv("source,target\n1,0\n0,2\n"), 2, 3);
  CHECK(f == std::vector<std::size_t>{2, 0});
  CHECK_THROWS_AS(vertex_map(csv("0,5\n1,0\n"), 2, 3), RangeError);
  CHECK_THROWS_AS(vertex_map(csv("0,1\n"), 2, 3), DomainError);
  CHECK_THROWS_AS(vertex_map(csv("0,0.5\n1,0\n"), 2, 3), DomainError);
}

TEST_CASE("edge list files") {
  const auto dir = scratch("edges");
  write_text(dir / "g.edges", "# tri\n0 1 1.5\n1 2 2\n");
  const auto g = read_edge_list(dir / "g.edges");
  CHECK(g.n_vertices == 3);
  CHECK(g.edges.size() == 2);
  write_text(dir / "bad.edges", "0 1 1\n0 1 -2\n");
  CHECK_THROWS_AS(read_edge_list(dir / "bad.edges"), IoError);
  CHECK_THROWS_AS(read_edge_list(dir / "missing.edges"), IoError);
}

TEST_CASE("path csv round trip") {
  CounterRng rng(42);
  std::vector<Vector> v;
  std::vector<double> t;
  for (int k = 0; k < 6; ++k) {
    v.push_back((Vector(3) << rng.normal(), rng.normal(), rng.normal()).finished());
    t.push_back(0.1 * k + rng.uniform(0.0, 0.01));
  }
  const PiecewiseLinearPath p(v, t);
  const auto q = path_from_csv(csv(path_to_csv(p)));
  CHECK(q.times == p.times);
  CHECK(q.vertices == p.vertices);
  CHECK_THROWS_AS(path_from_csv(csv("0\n1\n")), ShapeError);
}

TEST_CASE("json encodings round trip") {
  CounterRng rng(43);
  const DiscreteMeasure mu({0, 3, 3, 5}, random_simplex_point(rng, 4), 7);
  CHECK(measure_from_json(Json::parse(to_json(mu).dump())) == mu);

  std::vector<SpdMatrix> ms{random_spd(rng, 3), random_spd(rng, 3)};
  const auto back = spd_from_json(Json::parse(to_json(ms).dump()));
  REQUIRE(back.size() == 2);
  CHECK(back[0] == ms[0]);
  CHECK(back[1] == ms[1]);

  ReluNet net;
  net.capacity = 4;
  net.weights = {Matrix::Random(4, 3), Matrix::Random(2, 4)};
  net.biases = {Vector::Random(4), Vector::Random(2)};
  CHECK(relu_from_json(Json::parse(to_json(net).dump())) == net);

  Vector special(3);
  special << std::numeric_limits<double>::infinity(), -0.0, 1e-310;
  const Vector sb = vector_from_json(Json::parse(to_json(special).dump()));
  CHECK(std::isinf(sb[0]));
  CHECK(sb[2] == 1e-310);
  CHECK(matrix_from_json(Json::array(), 3).cols() == 3);
  CHECK_THROWS_AS(matrix_from_json(Json::parse("[[1,2],[3]]")), ShapeError);
}

TEST_CASE("saved graph model re-evaluates exactly") {
  CounterRng rng(44);
  const std::size_t n = 9, m = 6;
  const auto src = testing_support::random_graph_metric(rng, n);
  const auto tgt = testing_support::random_graph_metric(rng, m);
  std::vector<std::size_t> xs(n), f(n), dense(m);
  for (std::size_t i = 0; i < n; ++i) xs[i] = i, f[i] = rng.below(m);
  for (std::size_t i = 0; i < m; ++i) dense[i] = i;
  const std::function<double(const std::size_t&, const std::size_t&)> dist = [tgt](const std::size_t& a, const std::size_t& b) { return tgt(a, b); };
  const auto model = build_unstructured(xs, f, kuratowski_embed(src), dense, dist, Budget{}, 1e-6, 7);

  const auto encode = [](std::size_t y) { return Json(y); };
  const auto record = model_record(model, encode);
  const auto text = to_json(record).dump(2);
  const auto loaded = model_from_json(Json::parse(text));
  CHECK(loaded == record);
  CHECK(to_json(loaded).dump(2) == text);

  std::vector<std::size_t> dense_back;
  for (const auto& j : loaded.dense) dense_back.push_back(j.get<std::size_t>());
  const auto rebuilt = model_from_record(loaded, kuratowski_embed(src, loaded.anchors), dense_back, dist);
  for (auto x : xs) CHECK(evaluate(rebuilt, x) == evaluate(model, x));

  auto wrong = Json::parse(text);
  wrong["version"] = 99;
  CHECK_THROWS_AS(model_from_json(wrong), DomainError);
  wrong["schema"] = "other";
  CHECK_THROWS_AS(model_from_json(wrong), DomainError);
  CHECK_THROWS_AS(model_from_record(loaded, kuratowski_embed(src, {0, 1}), dense_back, dist), ShapeError);
}

TEST_CASE("reports round trip through their files") {
  ExperimentReport r;
  r.kind = "graph_map";
  r.seed = 12;
  r.metrics = {{"sup_w1_error", 1.25e-7}, {"odd", std::numeric_limits<double>::quiet_NaN()}};
  r.thresholds = {{"sup_w1_error", 1e-6}};
  r.params = {{"c", 64}, {"N", 5}};
  r.rows = {{0, 0.0, true, 0}, {1, 1.5e-8, false, -1}, {2, std::numeric_limits<double>::infinity(), true, 2}};
  r.check("sup_w1_error", true);
  r.check("other", false);
  r.finalize();
  CHECK_FALSE(r.pass);

  const auto dir = scratch("report");
  const auto files = emit_report(r, dir);
  CHECK(report_from_json(read_json(files.report)) == r);
  std::istringstream in(read_text(files.errors));
  const auto rows = parse_errors_csv(in);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == r.rows[0]);
  CHECK(rows[1] == r.rows[1]);
  CHECK(std::isinf(rows[2].w1_error));
  CHECK(read_json(files.timing).contains("wall_seconds"));
  CHECK_FALSE(read_json(files.report).contains("wall_seconds"));

  ExperimentReport empty;
  empty.finalize();
  CHECK(empty.pass);
  CHECK(errors_csv(empty) == "input_id,w1_error,certified,part_index\n");
  std::istringstream bad("a,b\n1,2\n");
  CHECK_THROWS_AS(parse_errors_csv(bad), DomainError);
}
