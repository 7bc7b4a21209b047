#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "relup/limit_state.hpp"
#include "relup/model.hpp"

namespace relup {

struct SolverDiagnostics {
  std::vector<double> design_point;  // u* in standard space
  std::vector<double> alpha;         // -u*/||u*||
  std::vector<double> curvatures;    // SORM principal curvatures
  bool converged = true;
  bool heuristic_nonsmooth = false;  // gradient solver on a min/max composite
  bool origin_in_failure = false;
  bool degenerate_curvature = false;  // some 1 + beta*kappa <= 0
  int iterations = 0;
  long long no_crossing_safe = 0;  // APIS line searches with no crossing
  long long no_crossing_fail = 0;
};

struct ReliabilityResult {
  std::optional<double> p;
  std::optional<double> beta;        // -Phi^{-1}(p)
  std::optional<double> std_error;   // sampling methods only
  long long n_evals = 0;
  SolverDiagnostics diag;
};

/// Limit state expression seen through the model transform:
/// G(u) = expr(from_standard(u)). Counts every limit-state evaluation,
/// including finite-difference probes.
class StandardSpaceFn {
 public:
  StandardSpaceFn(const ProbabilisticModel& model, const LimitStateExpression& expr);

  double operator()(std::span<const double> u) const;
  /// FD gradient of the active leaf at u (forward differences,
  /// step 1e-6 * (1 + ||u||)).
  std::vector<double> gradient(std::span<const double> u) const;

  std::size_t dim() const;
  long long n_evals() const;
  void add_evals(long long n) const;
  const ProbabilisticModel& model() const;
  const LimitStateExpression& expr() const;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

struct FormOptions {
  int max_iter = 100;
  double tol = 1e-6;
  std::optional<std::vector<double>> start;
};

struct LinearizedComponent {
  std::vector<double> alpha;  // unit gradient direction
  double b;                   // failure half-space {alpha . u <= b}
};

struct FormResult : ReliabilityResult {
  /// Components linearized at the joint design point (children of a
  /// top-level Intersection, else the expression itself).
  std::vector<LinearizedComponent> components;
  /// First-order multinormal probability of the intersection of the
  /// linearized half-spaces. Equals p for a single component.
  std::optional<double> p_first_order_system;
};

/// Crude Monte Carlo with counter-based per-sample streams; bit-identical
/// for a fixed (seed, n) regardless of thread count (RELUP_THREADS).
ReliabilityResult monte_carlo(const ProbabilisticModel& model,
                              const LimitStateExpression& expr, std::size_t n,
                              std::uint64_t seed);

/// Design point search (iHL-RF with merit line search; intersections are
/// handled by sequential linearization over the components). beta is
/// negative when the origin lies in the failure domain; p = Phi(-beta).
FormResult form(const ProbabilisticModel& model, const LimitStateExpression& expr,
                const FormOptions& opts = {});

/// Breitung's second-order correction at the FORM design point.
ReliabilityResult sorm(const ProbabilisticModel& model,
                       const LimitStateExpression& expr,
                       const FormResult& form_result);

/// Product over principal curvatures of (1 + beta*kappa)^{-1/2} for one
/// component surface at point u (curvatures in the hyperplane orthogonal to
/// the component's own gradient). Factors with 1 + beta*kappa <= 0 are
/// skipped and flagged through `degenerate`.
double breitung_correction(const StandardSpaceFn& G, std::span<const double> u,
                           double beta, bool& degenerate);

struct ApisOptions {
  int n_ls = 500;
  double sampler_spread = 1.0;  // std of the hyperplane sampling density
  double t_max = 12.0;
  double tol = 1e-3;  // crossing refinement tolerance along a ray
};

/// Axis-parallel importance sampling: samples on the hyperplane through the
/// origin orthogonal to the design point direction, one line search each.
/// Requires a converged FORM run with beta > 0.
ReliabilityResult apis(const ProbabilisticModel& model,
                       const LimitStateExpression& expr, const ApisOptions& opts,
                       std::uint64_t seed);

/// Scans 64 equal subintervals of [-t_max, t_max] for sign changes, refines
/// each by bisection, and returns the crossing nearest the origin whose safe
/// (G > 0) side faces the origin. nullopt when G does not change sign.
std::optional<double> line_search(const std::function<double(double)>& G,
                                  double t_max, double tol);

/// Thread cap from RELUP_THREADS (0 or unset = hardware concurrency).
unsigned worker_threads();

}  // namespace relup
