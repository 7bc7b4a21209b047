#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "relup/augment.hpp"
#include "relup/updating.hpp"

namespace relup {

/// Paris-law crack growth in a plate of infinite size (geometry factor 1).
struct CrackGrowthParams {
  double a0;    // initial crack length [mm]
  double ac;    // critical crack length [mm]
  double dS;    // stress range [N mm^-2]
  double lnC;   // log of the Paris coefficient
  double m;     // Paris exponent (m != 2)
  double n;     // stress cycles
};

/// Closed-form crack size after n cycles. Returns nullopt (the "failed"
/// marker, crack grown beyond any finite size) when the bracket collapses,
/// which happens in finite time for m > 2. Throws for m == 2.
std::optional<double> crack_size(const CrackGrowthParams& p);

/// g = ac - a(n) over variables (a0, dS, lnC, m); the failed marker maps to
/// the deeply negative value -ac.
LimitStateExpression fatigue_failure_lsf(double ac, double n);

/// Prior model of the crack growth example: a0 Exponential(1), dS
/// Normal(60,10), (lnC, m) bi-Normal with rho = -0.9, ac deterministic 50.
ProbabilisticModel crack_growth_model();

struct CrackMeasurement {
  double n_cycles;
  double measured_mm;
  double noise_std = 1.0;  // standard Normal measurement error
};

/// phi[a_m - a(x, n_i)] likelihood for one crack-depth measurement.
Likelihood crack_measurement_likelihood(const CrackMeasurement& meas);

struct SolverRun {
  std::string label;
  std::optional<double> p;
  std::optional<double> beta;
  std::optional<std::pair<double, double>> interval;
  long long n_evals = 0;
  bool converged = true;
};

struct BenchmarkReport {
  int example_id = 0;
  SolverRun prior;
  std::vector<SolverRun> conditional;  // one per requested solver
  std::optional<double> oracle_beta;   // exact/analytic reference
  double runtime_seconds = 0.0;
};

/// Build and run one of the three worked examples with the given solver.
BenchmarkReport run_example(int id, const SolverSpec& spec);

struct CurvePoint {
  double n_cycles;
  double beta_prior;
  double beta_conditional;
  double ci_low;   // 95% interval on beta_conditional
  double ci_high;
};

/// Conditional reliability index over a grid of cycle counts; measurement i
/// enters the conditioning once n_i <= n. Monte Carlo reuses one common
/// sample set of the underlying variables across all grid points.
std::vector<CurvePoint> reliability_curve(const std::vector<CrackMeasurement>& schedule,
                                          const std::vector<double>& n_grid,
                                          const SolverSpec& spec);

/// Default Figure-3-style grid: {0.25, 0.5, ..., 5.0} million cycles.
std::vector<double> default_curve_grid();

}  // namespace relup
