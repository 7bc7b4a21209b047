#include "relup/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include "relup/expression.hpp"
#include "relup/normal.hpp"

namespace relup {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& msg) { throw ConfigError(msg); }

const json& require(const json& j, const char* key, const char* ctx) {
  auto it = j.find(key);
  if (it == j.end()) bad(std::string(ctx) + ": missing field '" + key + "'");
  return *it;
}

double require_number(const json& j, const char* key, const char* ctx) {
  const json& v = require(j, key, ctx);
  if (!v.is_number()) bad(std::string(ctx) + ": field '" + key + "' must be a number");
  return v.get<double>();
}

std::string require_string(const json& j, const char* key, const char* ctx) {
  const json& v = require(j, key, ctx);
  if (!v.is_string()) bad(std::string(ctx) + ": field '" + key + "' must be a string");
  return v.get<std::string>();
}

Marginal parse_marginal(const json& j, const char* ctx) {
  if (!j.is_object()) bad(std::string(ctx) + ": distribution must be an object");
  const std::string kind = require_string(j, "distribution", ctx);
  std::vector<double> p;
  const json& params = require(j, "params", ctx);
  if (!params.is_array()) bad(std::string(ctx) + ": 'params' must be an array");
  for (const auto& v : params) {
    if (!v.is_number()) bad(std::string(ctx) + ": parameters must be numbers");
    p.push_back(v.get<double>());
  }
  const std::string units = j.value("units", std::string{});
  auto arity = [&](std::size_t n) {
    if (p.size() != n)
      bad(std::string(ctx) + ": distribution '" + kind + "' takes " +
          std::to_string(n) + " parameter(s), got " + std::to_string(p.size()));
  };
  try {
    if (kind == "normal") { arity(2); return Marginal::normal(p[0], p[1], units); }
    if (kind == "weibull") { arity(2); return Marginal::weibull(p[0], p[1], units); }
    if (kind == "exponential") { arity(1); return Marginal::exponential(p[0], units); }
    if (kind == "lognormal") { arity(2); return Marginal::lognormal(p[0], p[1], units); }
    if (kind == "deterministic") { arity(1); return Marginal::deterministic(p[0], units); }
  } catch (const std::invalid_argument& e) {
    bad(std::string(ctx) + ": " + e.what());
  }
  bad(std::string(ctx) + ": unknown distribution '" + kind + "'");
}

Expression parse_checked_expression(const std::string& text,
                                    const ProbabilisticModel& model,
                                    const std::vector<std::string>& extra,
                                    const char* ctx) {
  Expression e = [&] {
    try {
      return Expression::parse(text);
    } catch (const ExpressionError& err) {
      bad(std::string(ctx) + ": " + err.what());
    }
  }();
  for (const auto& v : e.variables()) {
    if (model.has_variable(v)) continue;
    if (std::find(extra.begin(), extra.end(), v) != extra.end()) continue;
    bad(std::string(ctx) + ": expression references undeclared variable '" + v + "'");
  }
  return e;
}

LimitStateExpression parse_event(const json& j, const ProbabilisticModel& model) {
  auto leaf_of = [&](const json& v, const char* ctx) {
    if (!v.is_string()) bad(std::string(ctx) + ": expected an expression string");
    return parse_checked_expression(v.get<std::string>(), model, {}, ctx)
        .to_limit_state();
  };
  if (j.is_string()) return leaf_of(j, "event");
  if (j.is_object()) {
    if (j.contains("all_of")) {
      std::vector<LimitStateExpression> kids;
      for (const auto& v : j["all_of"]) kids.push_back(leaf_of(v, "event.all_of"));
      if (kids.empty()) bad("event.all_of: needs at least one expression");
      return LimitStateExpression::intersection(std::move(kids));
    }
    if (j.contains("any_of")) {
      std::vector<LimitStateExpression> kids;
      for (const auto& v : j["any_of"]) kids.push_back(leaf_of(v, "event.any_of"));
      if (kids.empty()) bad("event.any_of: needs at least one expression");
      return LimitStateExpression::union_of(std::move(kids));
    }
    if (j.contains("components")) {
      std::vector<LimitStateExpression> comps;
      for (const auto& v : j["components"])
        comps.push_back(leaf_of(v, "event.components"));
      std::vector<std::vector<std::size_t>> cuts;
      for (const auto& cs : require(j, "cut_sets", "event")) {
        std::vector<std::size_t> cut;
        for (const auto& idx : cs) {
          if (!idx.is_number_unsigned() || idx.get<std::size_t>() >= comps.size())
            bad("event.cut_sets: component index out of range");
          cut.push_back(idx.get<std::size_t>());
        }
        cuts.push_back(std::move(cut));
      }
      return LimitStateExpression::cut_set_system(std::move(comps), std::move(cuts));
    }
  }
  bad("event: expected an expression string, all_of/any_of, or components+cut_sets");
}

Likelihood parse_observation(const json& j, const ProbabilisticModel& model,
                             int index) {
  const std::string ctx_s = "observations[" + std::to_string(index) + "]";
  const char* ctx = ctx_s.c_str();
  const std::string type = require_string(j, "type", ctx);
  if (type == "additive_error") {
    Expression pred = parse_checked_expression(
        require_string(j, "prediction", ctx), model, {}, ctx);
    const double measured = require_number(j, "measured", ctx);
    Marginal err = parse_marginal(require(j, "error", ctx), ctx);
    auto vars = pred.variables();
    try {
      return additive_error_likelihood(
          [pred](const VarFrame& f) { return pred.evaluate(f); },
          std::move(vars), measured, err);
    } catch (const std::invalid_argument& e) {
      bad(ctx_s + ": " + e.what());
    }
  }
  if (type == "equality_lsf") {
    const std::string noise_name = require_string(j, "noise_variable", ctx);
    if (model.has_variable(noise_name))
      bad(ctx_s + ": noise variable '" + noise_name + "' shadows a model variable");
    Expression h = parse_checked_expression(require_string(j, "h", ctx), model,
                                            {noise_name}, ctx);
    Marginal noise = parse_marginal(require(j, "noise", ctx), ctx);
    const json& br = require(j, "bracket", ctx);
    if (!br.is_array() || br.size() != 2 || !br[0].is_number() || !br[1].is_number())
      bad(ctx_s + ": 'bracket' must be [lo, hi]");
    const double lo = br[0].get<double>(), hi = br[1].get<double>();
    if (!(lo < hi)) bad(ctx_s + ": bracket must satisfy lo < hi");
    const int grid = j.value("grid", 512);
    if (grid < 2) bad(ctx_s + ": grid must be at least 2");
    auto vars = h.variables();
    vars.erase(std::remove(vars.begin(), vars.end(), noise_name), vars.end());
    auto h_fn = [h, noise_name](const VarFrame& f, double xh) {
      std::vector<std::string> names(f.names.begin(), f.names.end());
      std::vector<double> values(f.values.begin(), f.values.end());
      names.push_back(noise_name);
      values.push_back(xh);
      return h.evaluate(VarFrame{names, values});
    };
    return likelihood_from_equality_lsf(h_fn, std::move(vars), noise, lo, hi, grid);
  }
  if (type == "regularized") {
    Expression h =
        parse_checked_expression(require_string(j, "h", ctx), model, {}, ctx);
    const double sigma = require_number(j, "sigma", ctx);
    if (!(sigma > 0.0)) bad(ctx_s + ": sigma must be positive");
    auto vars = h.variables();
    return regularize_equality([h](const VarFrame& f) { return h.evaluate(f); },
                               std::move(vars), sigma);
  }
  bad(ctx_s + ": unknown observation type '" + type + "'");
}

ScaleStrategy parse_c_strategy(const json& cfg) {
  if (!cfg.contains("c_strategy")) return ScaleStrategy::from_sup_bound();
  const json& j = cfg["c_strategy"];
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "sup_bound") return ScaleStrategy::from_sup_bound();
    if (s == "empirical_max") return ScaleStrategy::empirical_max();
    bad("c_strategy: unknown strategy '" + s + "'");
  }
  if (j.is_object()) {
    if (j.contains("user_value")) {
      const double c = j["user_value"].get<double>();
      if (!(c > 0.0)) bad("c_strategy.user_value must be positive");
      return ScaleStrategy::user_value(c);
    }
    if (j.contains("empirical_max")) {
      const json& e = j["empirical_max"];
      return ScaleStrategy::empirical_max(e.value("probes", 10000),
                                          e.value("seed", 0ull));
    }
  }
  bad("c_strategy: expected 'sup_bound', 'empirical_max' or {user_value: c}");
}

Method parse_method(const std::string& s) {
  if (s == "mc") return Method::MonteCarlo;
  if (s == "apis") return Method::Apis;
  if (s == "form") return Method::Form;
  if (s == "sorm") return Method::Sorm;
  if (s == "quadrature") return Method::Quadrature;
  bad("solver.method: unknown method '" + s + "' (mc|apis|form|sorm|quadrature)");
}

SolverSpec parse_solver(const json& cfg) {
  SolverSpec spec;
  if (cfg.contains("solver")) {
    const json& j = cfg["solver"];
    if (!j.is_object()) bad("solver: must be an object");
    if (j.contains("method")) spec.method = parse_method(j["method"].get<std::string>());
    if (j.contains("n")) {
      if (!j["n"].is_number_unsigned() || j["n"].get<std::uint64_t>() < 100)
        bad("solver.n: must be an integer >= 100");
      spec.n = j["n"].get<std::size_t>();
    }
    spec.apis.n_ls = j.value("n_ls", spec.apis.n_ls);
    if (spec.apis.n_ls < 1) bad("solver.n_ls: must be positive");
    spec.apis.sampler_spread = j.value("spread", spec.apis.sampler_spread);
    spec.apis.t_max = j.value("t_max", spec.apis.t_max);
    spec.form.max_iter = j.value("max_iter", spec.form.max_iter);
    spec.form.tol = j.value("tol", spec.form.tol);
    spec.quad_rel_tol = j.value("quad_rel_tol", spec.quad_rel_tol);
  }
  spec.seed = cfg.value("seed", 0ull);
  return spec;
}

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json number_or_null(const std::optional<double>& v) {
  if (!v) return nullptr;
  return *v;
}

json diag_to_json(const SolverDiagnostics& d) {
  json j;
  j["converged"] = d.converged;
  j["iterations"] = d.iterations;
  j["origin_in_failure"] = d.origin_in_failure;
  j["heuristic_nonsmooth"] = d.heuristic_nonsmooth;
  j["degenerate_curvature"] = d.degenerate_curvature;
  j["no_crossing_safe"] = d.no_crossing_safe;
  j["no_crossing_fail"] = d.no_crossing_fail;
  if (!d.design_point.empty()) j["design_point"] = d.design_point;
  if (!d.alpha.empty()) j["alpha"] = d.alpha;
  return j;
}

}  // namespace

LoadedProblem load_problem(const json& config) {
  if (!config.is_object()) bad("config: top level must be a JSON object");

  // Curve configs rely on the built-in crack growth model.
  if (config.contains("curve")) {
    const json& c = config["curve"];
    if (config.contains("model") &&
        config["model"].get<std::string>() != "crack_growth")
      bad("curve: only the 'crack_growth' model supports curves");
    std::vector<CrackMeasurement> schedule;
    for (const auto& m : require(c, "schedule", "curve")) {
      CrackMeasurement meas;
      meas.n_cycles = require_number(m, "n", "curve.schedule");
      meas.measured_mm = require_number(m, "measured", "curve.schedule");
      meas.noise_std = m.value("noise_std", 1.0);
      if (!(meas.n_cycles >= 0)) bad("curve.schedule: n must be nonnegative");
      if (!(meas.noise_std > 0)) bad("curve.schedule: noise_std must be positive");
      schedule.push_back(meas);
    }
    std::vector<double> grid;
    if (c.contains("grid")) {
      for (const auto& v : c["grid"]) grid.push_back(v.get<double>());
      if (!std::is_sorted(grid.begin(), grid.end()) || grid.empty())
        bad("curve.grid: must be a nonempty ascending array");
    } else {
      grid = default_curve_grid();
    }
    ProbabilisticModel model = crack_growth_model();
    LimitStateExpression event = fatigue_failure_lsf(50.0, grid.back());
    std::vector<Likelihood> Ls;
    for (const auto& m : schedule) Ls.push_back(crack_measurement_likelihood(m));
    LoadedProblem out{std::move(model),    std::move(event), std::move(Ls),
                      parse_c_strategy(config), parse_solver(config),
                      config.value("output", std::string{})};
    out.has_curve = true;
    out.schedule = std::move(schedule);
    out.grid = std::move(grid);
    out.echo = config;
    return out;
  }

  std::vector<std::pair<std::string, Marginal>> vars;
  const json& jvars = require(config, "variables", "config");
  if (!jvars.is_array() || jvars.empty())
    bad("variables: must be a nonempty array");
  for (const auto& v : jvars) {
    const std::string name = require_string(v, "name", "variables");
    vars.emplace_back(name, parse_marginal(v, ("variable '" + name + "'").c_str()));
  }
  std::vector<Correlation> corrs;
  if (config.contains("correlations")) {
    for (const auto& c : config["correlations"]) {
      corrs.push_back({require_string(c, "a", "correlations"),
                       require_string(c, "b", "correlations"),
                       require_number(c, "rho", "correlations")});
    }
  }
  ProbabilisticModel model = [&] {
    try {
      return ProbabilisticModel(std::move(vars), std::move(corrs));
    } catch (const std::invalid_argument& e) {
      bad(std::string("model: ") + e.what());
    }
  }();

  LimitStateExpression event = parse_event(require(config, "event", "config"), model);

  std::vector<Likelihood> likelihoods;
  if (config.contains("observations")) {
    const json& jobs = config["observations"];
    if (!jobs.is_array()) bad("observations: must be an array");
    int i = 0;
    for (const auto& o : jobs) likelihoods.push_back(parse_observation(o, model, i++));
  }

  LoadedProblem out{std::move(model),    std::move(event),
                    std::move(likelihoods), parse_c_strategy(config),
                    parse_solver(config),   config.value("output", std::string{})};
  out.echo = config;
  return out;
}

LoadedProblem load_problem_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) bad("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    bad("config is not valid JSON: " + std::string(e.what()));
  }
  return load_problem(j);
}

json results_to_json(const LoadedProblem& problem, const ReliabilityResult& prior,
                     const ConditionalResult& conditional) {
  json j;
  j["prior"]["p"] = number_or_null(prior.p);
  j["prior"]["beta"] = number_or_null(prior.beta);
  j["prior"]["n_evals"] = prior.n_evals;
  j["conditional"]["p"] = conditional.p_conditional;
  j["conditional"]["beta"] = conditional.beta_conditional;
  j["conditional"]["p_numerator"] = number_or_null(conditional.p_numerator);
  j["conditional"]["p_denominator"] = number_or_null(conditional.p_denominator);
  if (conditional.interval)
    j["conditional"]["interval"] = {conditional.interval->first,
                                    conditional.interval->second};
  else
    j["conditional"]["interval"] = nullptr;
  j["conditional"]["num_hits"] = conditional.num_hits;
  j["conditional"]["denom_hits"] = conditional.denom_hits;
  j["conditional"]["ratio_clamped"] = conditional.ratio_clamped;
  j["conditional"]["n_evals"] = conditional.n_evals;
  j["diagnostics"]["numerator"] = diag_to_json(conditional.diag_numerator);
  j["diagnostics"]["denominator"] = diag_to_json(conditional.diag_denominator);
  switch (conditional.solver_used) {
    case Method::MonteCarlo: j["method"] = "mc"; break;
    case Method::Apis: j["method"] = "apis"; break;
    case Method::Form: j["method"] = "form"; break;
    case Method::Sorm: j["method"] = "sorm"; break;
    case Method::Quadrature: j["method"] = "quadrature"; break;
  }
  j["config"] = problem.echo;
  return j;
}

std::string curve_to_csv(const std::vector<CurvePoint>& curve) {
  std::string out = "n,beta_prior,beta_conditional,ci_low,ci_high\n";
  for (const auto& p : curve) {
    out += format_g17(p.n_cycles) + "," + format_g17(p.beta_prior) + "," +
           format_g17(p.beta_conditional) + "," + format_g17(p.ci_low) + "," +
           format_g17(p.ci_high) + "\n";
  }
  return out;
}

namespace {

std::string timestamp_now() {
  char buf[32];
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

bool write_file(const std::string& path, const std::string& content, bool quiet) {
  std::ofstream out(path);
  if (!out) {
    if (!quiet) std::cerr << "error: cannot write '" << path << "'\n";
    return false;
  }
  out << content;
  return true;
}

std::string resolve_out(const LoadedProblem& p, const std::string& override_path,
                        const char* fallback) {
  if (!override_path.empty()) return override_path;
  if (!p.output_path.empty()) return p.output_path;
  return fallback;
}

int run_curve_loaded(const LoadedProblem& problem, const std::string& out_path,
                     const std::vector<double>& grid_override, bool quiet) {
  const std::vector<double>& grid =
      grid_override.empty() ? problem.grid : grid_override;
  try {
    auto curve = reliability_curve(problem.schedule, grid, problem.solver);
    if (!write_file(out_path, curve_to_csv(curve), quiet)) return 3;
    if (!quiet) std::cout << "wrote " << out_path << " (" << curve.size() << " rows)\n";
    return 0;
  } catch (const std::exception& e) {
    if (!quiet) std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace

int run_config(const std::string& path, const std::string& out_override,
               bool quiet) {
  std::optional<LoadedProblem> loaded;
  try {
    loaded.emplace(load_problem_file(path));
  } catch (const ConfigError& e) {
    if (!quiet) std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  LoadedProblem& problem = *loaded;
  if (problem.has_curve)
    return run_curve_loaded(problem, resolve_out(problem, out_override, "curve.csv"),
                            {}, quiet);

  const std::string out_path = resolve_out(problem, out_override, "results.json");
  json results;
  try {
    ReliabilityResult prior =
        solve_reliability(problem.model, problem.event, problem.solver);
    AugmentedProblem aug = augment(problem.model, problem.event,
                                   problem.likelihoods, problem.c_strategy);
    ConditionalResult cond = update_reliability(aug, problem.solver);
    results = results_to_json(problem, prior, cond);
  } catch (const std::exception& e) {
    if (!quiet) std::cerr << "numerical failure: " << e.what() << "\n";
    json partial;
    partial["error"] = e.what();
    partial["config"] = problem.echo;
    partial["timestamp"] = timestamp_now();
    write_file(out_path, partial.dump(2) + "\n", true);
    return 3;
  }
  results["timestamp"] = timestamp_now();
  if (!write_file(out_path, results.dump(2) + "\n", quiet)) return 3;
  if (!quiet) {
    std::cout << "beta_conditional = "
              << format_g17(results["conditional"]["beta"].get<double>())
              << "  (results in " << out_path << ")\n";
  }
  return 0;
}

int run_curve_config(const std::string& path, const std::string& out_override,
                     const std::vector<double>& grid_override, bool quiet) {
  try {
    LoadedProblem problem = load_problem_file(path);
    if (!problem.has_curve) bad("config has no 'curve' section");
    return run_curve_loaded(problem,
                            resolve_out(problem, out_override, "curve.csv"),
                            grid_override, quiet);
  } catch (const ConfigError& e) {
    if (!quiet) std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
}

int validate_config(const std::string& path, bool quiet) {
  try {
    load_problem_file(path);
    if (!quiet) std::cout << "valid\n";
    return 0;
  } catch (const ConfigError& e) {
    if (!quiet) std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace relup
