#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "relup/fatigue.hpp"
#include "relup/updating.hpp"

namespace relup {

/// Config rejected before any computation.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Fully validated problem definition loaded from a JSON document.
struct LoadedProblem {
  ProbabilisticModel model;
  LimitStateExpression event;
  std::vector<Likelihood> likelihoods;
  ScaleStrategy c_strategy;
  SolverSpec solver;
  std::string output_path;  // empty = caller decides

  // Present when the config carries a "curve" section (crack growth model,
  // measurement schedule, cycle grid).
  bool has_curve = false;
  std::vector<CrackMeasurement> schedule;
  std::vector<double> grid;

  nlohmann::json echo;  // resolved config for reproducibility
};

/// Parse and validate; throws ConfigError with a message naming the offender.
LoadedProblem load_problem(const nlohmann::json& config);
LoadedProblem load_problem_file(const std::string& path);

nlohmann::json results_to_json(const LoadedProblem& problem,
                               const ReliabilityResult& prior,
                               const ConditionalResult& conditional);

std::string curve_to_csv(const std::vector<CurvePoint>& curve);

/// Full run: load, solve, write results JSON (and curve CSV when the config
/// has a curve section). Returns the process exit code: 0 success, 2 config
/// validation failure (no output written), 3 numerical failure.
int run_config(const std::string& path, const std::string& out_override,
               bool quiet);

/// Curve-only run; the config must carry a curve section.
int run_curve_config(const std::string& path, const std::string& out_override,
                     const std::vector<double>& grid_override, bool quiet);

/// Validation only: 0 valid, 2 invalid.
int validate_config(const std::string& path, bool quiet);

}  // namespace relup
