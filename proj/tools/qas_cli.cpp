// qas: batch runner for the approximation experiments.
#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

#include "qas/experiments.hpp"

namespace {

std::filesystem::path output_dir(const qas::ExperimentConfig& cfg, const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("QAS_OUTPUT_DIR"); env && *env) return env;
  return cfg.output_dir;
}

int finish(const qas::RunOutput& run, const std::filesystem::path& dir) {
  const auto files = qas::write_run(run, dir);
  const auto& r = run.report;
  std::cout << r.kind << " seed=" << r.seed << " " << (r.pass ? "PASS" : "FAIL") << "  (" << r.wall_seconds << " s)\n";
  for (const auto& [name, ok] : r.checks) std::cout << "  " << (ok ? "ok   " : "FAIL ") << name << "\n";
  std::cout << "  report: " << files.report.string() << "\n";
  return r.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Randomized approximators between metric spaces: experiment runner"};
  app.require_subcommand(1);

  std::string config_path, run_out;
  auto* run = app.add_subcommand("run", "Run the experiment described by a JSON config");
  run->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  run->add_option("-o,--output-dir", run_out, "Output directory (overrides QAS_OUTPUT_DIR and the config)");

  std::uint64_t seed = 0;
  std::size_t trials = 1000;
  std::string suite_name, suite_out;
  auto* suite = app.add_subcommand("suite", "Run a named property suite");
  suite->add_option("name", suite_name, "Suite name")->required()->check(CLI::IsMember({"invariants"}));
  suite->add_option("--seed", seed, "Master seed")->required();
  suite->add_option("--trials", trials, "Random instances per property");
  suite->add_option("-o,--output-dir", suite_out, "Output directory");

  std::string graph_path, cover_path;
  auto* verify = app.add_subcommand("verify-cover", "Check that a sub-graph cover has isometric pieces");
  verify->add_option("graph", graph_path, "Edge list")->required()->check(CLI::ExistingFile);
  verify->add_option("cover", cover_path, "Cover file, one piece per line")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help exits 0; usage errors share the error exit code.
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*run) {
      const auto cfg = qas::read_config(config_path);
      return finish(qas::run_experiment(cfg), output_dir(cfg, run_out));
    }
    if (*suite) {
      qas::ExperimentConfig cfg;
      cfg.kind = "invariant_suite";
      cfg.seed = seed;
      cfg.trials = trials;
      cfg.output_dir = std::filesystem::path("out") / "invariant_suite";
      return finish(qas::run_experiment(cfg), output_dir(cfg, suite_out));
    }
    if (*verify) {
      const auto g = qas::read_edge_list(graph_path);
      const auto pieces = qas::read_cover(cover_path);
      try {
        qas::verify_cover(g, pieces);
      } catch (const qas::CoverError& e) {
        std::cout << "FAIL " << e.what() << "\n";
        return 1;
      }
      std::cout << "PASS " << pieces.size() << " isometric pieces cover all " << g.n_vertices << " vertices\n";
      return 0;
    }
  } catch (const qas::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
