#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "relup/augment.hpp"
#include "relup/likelihood.hpp"
#include "relup/solvers.hpp"

namespace relup {

enum class Method { MonteCarlo, Apis, Form, Sorm, Quadrature };

struct SolverSpec {
  Method method = Method::MonteCarlo;
  std::size_t n = 1000000;  // Monte Carlo sample count
  std::uint64_t seed = 0;
  ApisOptions apis;
  FormOptions form;
  double quad_rel_tol = 1e-9;
};

struct ConditionalResult {
  double p_conditional = 0.0;
  double beta_conditional = 0.0;
  std::optional<double> p_numerator;
  std::optional<double> p_denominator;
  /// 95% interval on p_conditional (Wilson for common-sample MC,
  /// delta-propagated for APIS; absent for FORM/SORM/quadrature).
  std::optional<std::pair<double, double>> interval;
  Method solver_used = Method::MonteCarlo;
  long long num_hits = 0;    // common-sample MC only
  long long denom_hits = 0;
  bool ratio_clamped = false;
  long long n_evals = 0;
  SolverDiagnostics diag_numerator;
  SolverDiagnostics diag_denominator;
};

/// Conditional probability of the event given the observations, as the ratio
/// of two standard reliability integrals over the augmented space. Monte
/// Carlo uses one common sample set for numerator and denominator; the other
/// methods solve the two problems independently (the ratio is clamped to
/// [0,1] and flagged when needed).
ConditionalResult update_reliability(const AugmentedProblem& problem,
                                     const SolverSpec& spec);

/// Scalar reliability problem solved per spec (no ratio). Quadrature is
/// available for standard dimension <= 2.
ReliabilityResult solve_reliability(const ProbabilisticModel& model,
                                    const LimitStateExpression& expr,
                                    const SolverSpec& spec);

/// 95% Wilson interval for the conditional Bernoulli: numerator hits out of
/// denominator hits under common samples.
std::pair<double, double> conditional_ci(long long num_hits, long long denom_hits);

/// Adaptive-quadrature oracle for one physical random variable with failure
/// {x <= threshold}: Pr(F|Z) = int_{-inf}^{thr} f L / int f L.
double exact_conditional_1d(const Marginal& prior, const Likelihood& L,
                            double failure_threshold);

struct LinearObservation {
  std::vector<double> h;  // coefficient vector
  double offset;          // observation: h.x + offset + eps = 0
  double noise_std;
};

/// Closed-form Gaussian conditioning oracle. Failure event {a.x <= 0};
/// returns the conditional reliability index E[a.X|Z] / sd(a.X|Z).
double exact_conditional_linear_gaussian(
    const std::vector<double>& a, const std::vector<double>& mean,
    const std::vector<std::vector<double>>& cov,
    const std::vector<LinearObservation>& obs);

/// Gauss measure of the failing u2-set at fixed u1, and the dense 2-D
/// quadrature probability built from it (standard dimension 1 or 2).
double quadrature_probability_2d(const ProbabilisticModel& model,
                                 const LimitStateExpression& expr,
                                 double rel_tol = 1e-9);

}  // namespace relup
