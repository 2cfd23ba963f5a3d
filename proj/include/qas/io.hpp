#pragma once

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "qas/approximator.hpp"
#include "qas/carnot.hpp"
#include "qas/error.hpp"
#include "qas/measure.hpp"
#include "qas/metric.hpp"
#include "qas/relu.hpp"
#include "qas/spd.hpp"

namespace qas {

using Json = nlohmann::ordered_json;

inline constexpr int kModelSchemaVersion = 1;
inline constexpr int kReportSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Files

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out.flush()) throw IoError("write failed: " + path.string());
}

inline Json read_json(const std::filesystem::path& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

inline EdgeList read_edge_list(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  try {
    return parse_edge_list(in);
  } catch (const ParseError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

/// Shortest round-trip decimal form of a double.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

inline double parse_double(const std::string& s, std::size_t line) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const char* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end) throw ParseError("not a number: '" + s + "'", line);
  return v;
}

// ---------------------------------------------------------------------------
// CSV

struct CsvTable {
  std::vector<std::string> header;  // empty when the file has none
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw DomainError("csv: no column named '" + name + "'");
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ls(line);
  while (std::getline(ls, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline bool is_number(const std::string& s) {
  try {
    parse_double(s, 0);
    return true;
  } catch (const ParseError&) {
    return false;
  }
}

}  // namespace detail

/// Comma-separated numeric table. An optional header is recognised by a
/// first row containing a non-numeric cell; `#` starts a comment.
inline CsvTable parse_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = detail::split_csv_line(line);
    if (t.header.empty() && t.rows.empty()) {
      bool numeric = true;
      for (const auto& c : cells) numeric = numeric && detail::is_number(c);
      if (!numeric) {
        t.header = cells;
        width = cells.size();
        continue;
      }
    }
    if (width == 0) width = cells.size();
    if (cells.size() != width)
      throw ParseError("expected " + std::to_string(width) + " columns, got " + std::to_string(cells.size()), lineno);
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_double(c, lineno));
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  try {
    return parse_csv(in);
  } catch (const ParseError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

/// Function samples: the first `input_dim` columns are x, the rest f(x).
struct FunctionSamples {
  std::vector<Vector> xs, ys;
};

inline FunctionSamples function_samples(const CsvTable& t, std::size_t input_dim) {
  FunctionSamples s;
  for (const auto& r : t.rows) {
    if (r.size() <= input_dim) throw ShapeError("function samples: no output columns");
    s.xs.push_back(Eigen::Map<const Vector>(r.data(), static_cast<Eigen::Index>(input_dim)));
    s.ys.push_back(Eigen::Map<const Vector>(r.data() + input_dim, static_cast<Eigen::Index>(r.size() - input_dim)));
  }
  return s;
}

/// Integer map between finite spaces: columns `source,target`.
inline std::vector<std::size_t> vertex_map(const CsvTable& t, std::size_t n_source, std::size_t n_target) {
  std::vector<std::size_t> f(n_source, std::numeric_limits<std::size_t>::max());
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    const auto& r = t.rows[k];
    if (r.size() != 2) throw ShapeError("vertex map: expected two columns");
    if (r[0] < 0 || r[1] < 0 || r[0] != std::floor(r[0]) || r[1] != std::floor(r[1]))
      throw DomainError("vertex map: indices must be nonnegative integers");
    const auto s = static_cast<std::size_t>(r[0]), y = static_cast<std::size_t>(r[1]);
    if (s >= n_source || y >= n_target) throw RangeError("vertex map: index out of range in row " + std::to_string(k + 1));
    f[s] = y;
  }
  for (std::size_t s = 0; s < n_source; ++s)
    if (f[s] == std::numeric_limits<std::size_t>::max()) throw DomainError("vertex map: no image for vertex " + std::to_string(s));
  return f;
}

/// Path CSV: columns time, x1, ..., xd.
inline PiecewiseLinearPath path_from_csv(const CsvTable& t) {
  std::vector<Vector> v;
  std::vector<double> times;
  for (const auto& r : t.rows) {
    if (r.size() < 2) throw ShapeError("path csv: need a time and at least one coordinate");
    times.push_back(r[0]);
    v.push_back(Eigen::Map<const Vector>(r.data() + 1, static_cast<Eigen::Index>(r.size() - 1)));
  }
  return PiecewiseLinearPath(std::move(v), std::move(times));
}

inline std::string path_to_csv(const PiecewiseLinearPath& p) {
  std::string out = "time";
  for (Eigen::Index i = 0; i < p.dim(); ++i) out += ",x" + std::to_string(i + 1);
  out += "\n";
  for (std::size_t k = 0; k < p.times.size(); ++k) {
    out += format_double(p.times[k]);
    for (Eigen::Index i = 0; i < p.dim(); ++i) out += "," + format_double(p.vertices[k][i]);
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON encodings of numeric values. Non-finite doubles become strings.

inline Json to_json(double x) {
  if (std::isfinite(x)) return x;
  return format_double(x);
}

inline double double_from_json(const Json& j) {
  if (j.is_string()) return parse_double(j.get<std::string>(), 0);
  if (!j.is_number()) throw DomainError("json: expected a number");
  return j.get<double>();
}

inline Json to_json(const Vector& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(to_json(x));
  return a;
}

inline Vector vector_from_json(const Json& j) {
  if (!j.is_array()) throw DomainError("json: expected an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = double_from_json(j[i]);
  return v;
}

/// Row-major nested arrays.
inline Json to_json(const Matrix& m) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(to_json(Vector(m.row(i).transpose())));
  return a;
}

inline Matrix matrix_from_json(const Json& j, Eigen::Index cols_if_empty = 0) {
  if (!j.is_array()) throw DomainError("json: expected an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows == 0 ? cols_if_empty : static_cast<Eigen::Index>(j[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Vector r = vector_from_json(j[static_cast<std::size_t>(i)]);
    if (r.size() != cols) throw ShapeError("json: ragged matrix");
    m.row(i) = r.transpose();
  }
  return m;
}

// Measures: {"carrier_size": n, "atoms": [...], "weights": [...]}.
inline Json to_json(const DiscreteMeasure& mu) {
  Json j;
  j["carrier_size"] = mu.carrier_size();
  j["atoms"] = mu.atoms();
  j["weights"] = to_json(mu.weights());
  return j;
}

inline DiscreteMeasure measure_from_json(const Json& j) {
  return DiscreteMeasure(j.at("atoms").get<std::vector<std::size_t>>(), vector_from_json(j.at("weights")),
                         j.at("carrier_size").get<std::size_t>());
}

// SPD: {"matrices": [[[...], ...], ...]}.
inline Json to_json(const std::vector<SpdMatrix>& ms) {
  Json a = Json::array();
  for (const auto& m : ms) a.push_back(to_json(m.matrix()));
  return Json{{"matrices", a}};
}

inline std::vector<SpdMatrix> spd_from_json(const Json& j) {
  std::vector<SpdMatrix> out;
  for (const auto& m : j.at("matrices")) out.emplace_back(matrix_from_json(m));
  return out;
}

inline Json to_json(const ReluNet& net) {
  Json layers = Json::array();
  for (std::size_t t = 0; t < net.weights.size(); ++t)
    layers.push_back({{"in", net.weights[t].cols()}, {"weights", to_json(net.weights[t])}, {"bias", to_json(net.biases[t])}});
  return Json{{"capacity", net.capacity}, {"layers", layers}};
}

inline ReluNet relu_from_json(const Json& j) {
  ReluNet net;
  net.capacity = j.at("capacity").get<std::size_t>();
  for (const auto& l : j.at("layers")) {
    net.weights.push_back(matrix_from_json(l.at("weights"), l.at("in").get<Eigen::Index>()));
    net.biases.push_back(vector_from_json(l.at("bias")));
  }
  return net;
}

// ---------------------------------------------------------------------------
// Models

/// Everything needed to re-evaluate an unstructured model except the feature
/// map itself, which is rebuilt from its descriptor by the caller.
struct ModelRecord {
  std::string feature_kind;
  std::size_t feature_dim = 0;
  std::string feature_norm;
  IndexSet anchors;
  ReluNet core;
  std::vector<QuantizedBlock> head;
  IndexSet atoms;
  Json dense;  // encoded by the caller
  double eps = 0.0, achieved_error = 0.0, fit_error = 0.0;
  bool fallback = false;
  std::uint64_t seed = 0;

  friend bool operator==(const ModelRecord& a, const ModelRecord& b) {
    bool head_eq = a.head.size() == b.head.size();
    for (std::size_t i = 0; head_eq && i < a.head.size(); ++i) head_eq = a.head[i].u == b.head[i].u && a.head[i].z == b.head[i].z;
    return head_eq && a.feature_kind == b.feature_kind && a.feature_dim == b.feature_dim &&
           a.feature_norm == b.feature_norm && a.anchors == b.anchors && a.core == b.core && a.atoms == b.atoms &&
           a.dense == b.dense && a.eps == b.eps && a.achieved_error == b.achieved_error &&
           a.fit_error == b.fit_error && a.fallback == b.fallback && a.seed == b.seed;
  }
};

template <class X, class Y, class Encode>
ModelRecord model_record(const UnstructuredModel<X, Y>& m, Encode&& encode_point) {
  ModelRecord r;
  r.feature_kind = to_string(m.feature.kind);
  r.feature_dim = m.feature.target_dim;
  r.feature_norm = m.feature.norm == FeatureNorm::linf ? "linf" : "l2";
  r.anchors = m.feature.anchors;
  r.core = m.core;
  r.head = m.head;
  r.atoms = m.atoms;
  r.dense = Json::array();
  for (const auto& y : m.dense) r.dense.push_back(encode_point(y));
  r.eps = m.eps;
  r.achieved_error = m.achieved_error;
  r.fit_error = m.fit_error;
  r.fallback = m.fallback;
  r.seed = m.seed;
  return r;
}

inline Json to_json(const ModelRecord& r) {
  Json head = Json::array();
  for (const auto& b : r.head) head.push_back({{"u", to_json(b.u)}, {"z", to_json(b.z)}});
  return Json{{"schema", "qas.model"},
              {"version", kModelSchemaVersion},
              {"feature", {{"kind", r.feature_kind}, {"dim", r.feature_dim}, {"norm", r.feature_norm}, {"anchors", r.anchors}}},
              {"core", to_json(r.core)},
              {"head", head},
              {"atoms", r.atoms},
              {"dense", r.dense},
              {"eps", to_json(r.eps)},
              {"achieved_error", to_json(r.achieved_error)},
              {"fit_error", to_json(r.fit_error)},
              {"fallback", r.fallback},
              {"seed", r.seed}};
}

inline ModelRecord model_from_json(const Json& j) {
  if (j.value("schema", "") != "qas.model") throw DomainError("model json: wrong schema tag");
  const int version = j.at("version").get<int>();
  if (version != kModelSchemaVersion) throw DomainError("model json: unsupported version " + std::to_string(version));
  ModelRecord r;
  const auto& f = j.at("feature");
  r.feature_kind = f.at("kind").get<std::string>();
  r.feature_dim = f.at("dim").get<std::size_t>();
  r.feature_norm = f.at("norm").get<std::string>();
  r.anchors = f.at("anchors").get<IndexSet>();
  r.core = relu_from_json(j.at("core"));
  for (const auto& b : j.at("head")) r.head.push_back({vector_from_json(b.at("u")), vector_from_json(b.at("z"))});
  r.atoms = j.at("atoms").get<IndexSet>();
  r.dense = j.at("dense");
  r.eps = double_from_json(j.at("eps"));
  r.achieved_error = double_from_json(j.at("achieved_error"));
  r.fit_error = double_from_json(j.at("fit_error"));
  r.fallback = j.at("fallback").get<bool>();
  r.seed = j.at("seed").get<std::uint64_t>();
  return r;
}

/// Rebuilds a model from its record, a feature map and decoded dense points.
template <class X, class Y>
UnstructuredModel<X, Y> model_from_record(const ModelRecord& r, FeatureMap<X> feature, std::vector<Y> dense,
                                          std::function<double(const Y&, const Y&)> distance) {
  if (feature.target_dim != r.feature_dim) throw ShapeError("model: feature dimension does not match the record");
  UnstructuredModel<X, Y> m;
  m.feature = std::move(feature);
  m.core = r.core;
  m.head = r.head;
  m.atoms = r.atoms;
  m.dense = std::move(dense);
  m.distance = std::move(distance);
  m.eps = r.eps;
  m.achieved_error = r.achieved_error;
  m.fit_error = r.fit_error;
  m.fallback = r.fallback;
  m.seed = r.seed;
  return m;
}

// ---------------------------------------------------------------------------
// Reports

struct ErrorRow {
  std::size_t input_id = 0;
  double w1_error = 0.0;
  bool certified = true;
  long part_index = -1;  // -1: no part

  friend bool operator==(const ErrorRow&, const ErrorRow&) = default;
};

struct ExperimentReport {
  std::string kind;
  std::uint64_t seed = 0;
  bool pass = false;
  std::map<std::string, double> thresholds;
  std::map<std::string, double> metrics;
  std::map<std::string, std::uint64_t> params;  // c, d, N, D, parameter counts
  std::map<std::string, bool> checks;           // pass is the conjunction
  std::vector<ErrorRow> rows;
  double wall_seconds = 0.0;                    // written to timing.json only

  void check(const std::string& name, bool ok) { checks[name] = ok; }
  void finalize() {
    pass = true;
    for (const auto& [_, ok] : checks) pass = pass && ok;
  }

  friend bool operator==(const ExperimentReport& a, const ExperimentReport& b) {
    auto same = [](const std::map<std::string, double>& x, const std::map<std::string, double>& y) {
      if (x.size() != y.size()) return false;
      for (auto i = x.begin(), j = y.begin(); i != x.end(); ++i, ++j)
        if (i->first != j->first || !(i->second == j->second || (std::isnan(i->second) && std::isnan(j->second)))) return false;
      return true;
    };
    bool rows_eq = a.rows.size() == b.rows.size();
    for (std::size_t k = 0; rows_eq && k < a.rows.size(); ++k)
      rows_eq = a.rows[k].input_id == b.rows[k].input_id && a.rows[k].certified == b.rows[k].certified &&
                a.rows[k].part_index == b.rows[k].part_index &&
                (a.rows[k].w1_error == b.rows[k].w1_error || (std::isnan(a.rows[k].w1_error) && std::isnan(b.rows[k].w1_error)));
    return a.kind == b.kind && a.seed == b.seed && a.pass == b.pass && same(a.thresholds, b.thresholds) &&
           same(a.metrics, b.metrics) && a.params == b.params && a.checks == b.checks && rows_eq;
  }
};

inline Json to_json(const ExperimentReport& r) {
  Json th = Json::object(), me = Json::object(), pa = Json::object(), ch = Json::object(), rows = Json::array();
  for (const auto& [k, v] : r.thresholds) th[k] = to_json(v);
  for (const auto& [k, v] : r.metrics) me[k] = to_json(v);
  for (const auto& [k, v] : r.params) pa[k] = v;
  for (const auto& [k, v] : r.checks) ch[k] = v;
  for (const auto& row : r.rows)
    rows.push_back({{"input_id", row.input_id}, {"w1_error", to_json(row.w1_error)}, {"certified", row.certified}, {"part_index", row.part_index}});
  return Json{{"schema", "qas.report"}, {"version", kReportSchemaVersion}, {"kind", r.kind}, {"seed", r.seed},
              {"pass", r.pass}, {"thresholds", th}, {"metrics", me}, {"params", pa}, {"checks", ch}, {"rows", rows}};
}

inline ExperimentReport report_from_json(const Json& j) {
  if (j.value("schema", "") != "qas.report") throw DomainError("report json: wrong schema tag");
  if (j.at("version").get<int>() != kReportSchemaVersion) throw DomainError("report json: unsupported version");
  ExperimentReport r;
  r.kind = j.at("kind").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.pass = j.at("pass").get<bool>();
  for (const auto& [k, v] : j.at("thresholds").items()) r.thresholds[k] = double_from_json(v);
  for (const auto& [k, v] : j.at("metrics").items()) r.metrics[k] = double_from_json(v);
  for (const auto& [k, v] : j.at("params").items()) r.params[k] = v.get<std::uint64_t>();
  for (const auto& [k, v] : j.at("checks").items()) r.checks[k] = v.get<bool>();
  for (const auto& row : j.at("rows"))
    r.rows.push_back({row.at("input_id").get<std::size_t>(), double_from_json(row.at("w1_error")),
                      row.at("certified").get<bool>(), row.at("part_index").get<long>()});
  return r;
}

inline std::string errors_csv(const ExperimentReport& r) {
  std::string out = "input_id,w1_error,certified,part_index\n";
  for (const auto& row : r.rows)
    out += std::to_string(row.input_id) + "," + format_double(row.w1_error) + "," + (row.certified ? "1" : "0") + "," +
           std::to_string(row.part_index) + "\n";
  return out;
}

inline std::vector<ErrorRow> parse_errors_csv(std::istream& in) {
  const auto t = parse_csv(in);
  if (t.header != std::vector<std::string>{"input_id", "w1_error", "certified", "part_index"})
    throw DomainError("errors.csv: unexpected header");
  std::vector<ErrorRow> rows;
  for (const auto& r : t.rows)
    rows.push_back({static_cast<std::size_t>(r[0]), r[1], r[2] != 0.0, static_cast<long>(r[3])});
  return rows;
}

struct ReportFiles {
  std::filesystem::path report, errors, timing;
};

/// Writes report.json, errors.csv and timing.json into `dir`.
inline ReportFiles emit_report(const ExperimentReport& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  ReportFiles f{dir / "report.json", dir / "errors.csv", dir / "timing.json"};
  write_text(f.report, to_json(r).dump(2) + "\n");
  write_text(f.errors, errors_csv(r));
  write_text(f.timing, Json{{"kind", r.kind}, {"wall_seconds", r.wall_seconds}}.dump(2) + "\n");
  return f;
}

}  // namespace qas
