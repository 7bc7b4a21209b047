#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "relup/config.hpp"

namespace {

using nlohmann::json;

relup::Method method_from(const std::string& s) {
  if (s == "mc") return relup::Method::MonteCarlo;
  if (s == "apis") return relup::Method::Apis;
  if (s == "form") return relup::Method::Form;
  if (s == "sorm") return relup::Method::Sorm;
  return relup::Method::Quadrature;
}

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json run_to_json(const relup::SolverRun& r) {
  json j;
  j["label"] = r.label;
  j["p"] = r.p ? json(*r.p) : json(nullptr);
  j["beta"] = r.beta ? json(*r.beta) : json(nullptr);
  if (r.interval)
    j["interval"] = {r.interval->first, r.interval->second};
  else
    j["interval"] = nullptr;
  j["n_evals"] = r.n_evals;
  j["converged"] = r.converged;
  return j;
}

int run_example_command(int id, const std::string& solver, std::uint64_t seed,
                        std::uint64_t n, const std::string& out, bool quiet) {
  relup::SolverSpec spec;
  spec.method = method_from(solver);
  spec.seed = seed;
  if (n > 0) spec.n = n;

  try {
    if (id == 3 && spec.method == relup::Method::MonteCarlo) {
      // The crack growth example's deliverable is the reliability curve.
      std::vector<relup::CrackMeasurement> schedule = {{3.0e5, 0.5, 1.0},
                                                       {2.0e6, 3.0, 1.0}};
      auto curve = relup::reliability_curve(schedule, relup::default_curve_grid(),
                                            spec);
      const std::string path = out.empty() ? "curve.csv" : out;
      std::ofstream f(path);
      if (!f) {
        if (!quiet) std::cerr << "error: cannot write '" << path << "'\n";
        return 3;
      }
      f << relup::curve_to_csv(curve);
      if (!quiet)
        std::cout << "wrote " << path << " (" << curve.size() << " rows)\n";
      return 0;
    }

    relup::BenchmarkReport report = relup::run_example(id, spec);
    json j;
    j["example"] = report.example_id;
    j["prior"] = run_to_json(report.prior);
    j["conditional"] = json::array();
    for (const auto& r : report.conditional) j["conditional"].push_back(run_to_json(r));
    j["oracle_beta"] =
        report.oracle_beta ? json(*report.oracle_beta) : json(nullptr);
    j["runtime_seconds"] = report.runtime_seconds;
    if (!out.empty()) {
      std::ofstream f(out);
      if (!f) {
        if (!quiet) std::cerr << "error: cannot write '" << out << "'\n";
        return 3;
      }
      f << j.dump(2) << "\n";
    }
    if (!quiet) {
      std::cout << "example " << id << "\n";
      if (report.prior.beta)
        std::cout << "  prior beta        " << g17(*report.prior.beta) << "\n";
      for (const auto& r : report.conditional)
        if (r.beta)
          std::cout << "  " << r.label << "  beta " << g17(*r.beta) << "\n";
      if (report.oracle_beta)
        std::cout << "  oracle beta       " << g17(*report.oracle_beta) << "\n";
    }
    return 0;
  } catch (const std::exception& e) {
    if (!quiet) std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian reliability updating with measurement observations"};
  app.require_subcommand(1);

  std::string config_path, out_path, solver = "mc";
  bool quiet = false;
  std::uint64_t seed = 0, n_samples = 0;
  int example_id = 1;
  std::vector<double> grid;

  app.add_flag("--quiet,-q", quiet, "suppress progress output");
  app.fallthrough();

  auto* run = app.add_subcommand("run", "run a problem config");
  run->add_option("config", config_path, "JSON problem config")->required();
  run->add_option("--out", out_path, "output path override");

  auto* example = app.add_subcommand("example", "run a built-in worked example");
  example->add_option("id", example_id, "example id (1, 2 or 3)")
      ->required()
      ->check(CLI::Range(1, 3));
  example->add_option("--solver", solver, "mc|apis|form|sorm|quadrature")
      ->check(CLI::IsMember({"mc", "apis", "form", "sorm", "quadrature"}));
  example->add_option("--seed", seed, "random seed");
  example->add_option("--n", n_samples, "Monte Carlo sample count");
  example->add_option("--out", out_path, "write the report (JSON) or curve (CSV)");

  auto* curve = app.add_subcommand("curve", "reliability curve from a config");
  curve->add_option("config", config_path, "JSON config with a curve section")
      ->required();
  curve->add_option("--grid", grid, "cycle-count grid override")->expected(-1);
  curve->add_option("--out", out_path, "output CSV path override");

  auto* validate = app.add_subcommand("validate", "validate a config, run nothing");
  validate->add_option("config", config_path, "JSON problem config")->required();

  for (auto* sub : {run, example, curve, validate}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 64;
  }

  if (app.got_subcommand(run)) return relup::run_config(config_path, out_path, quiet);
  if (app.got_subcommand(example))
    return run_example_command(example_id, solver, seed, n_samples, out_path, quiet);
  if (app.got_subcommand(curve))
    return relup::run_curve_config(config_path, out_path, grid, quiet);
  if (app.got_subcommand(validate)) return relup::validate_config(config_path, quiet);
  return 64;
}
