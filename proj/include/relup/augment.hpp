#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "relup/likelihood.hpp"
#include "relup/limit_state.hpp"
#include "relup/model.hpp"

namespace relup {

/// How to choose the constant c with 0 <= c*L <= 1.
struct ScaleStrategy {
  enum class Kind { FromSupBound, UserValue, EmpiricalMax };
  Kind kind = Kind::FromSupBound;
  double user_c = 0.0;
  int probe_samples = 10000;
  std::uint64_t probe_seed = 0;
  double safety = 10.0;

  static ScaleStrategy from_sup_bound() { return {}; }
  static ScaleStrategy user_value(double c) {
    return {Kind::UserValue, c, 0, 0, 0.0};
  }
  static ScaleStrategy empirical_max(int probe_samples = 10000,
                                     std::uint64_t probe_seed = 0) {
    return {Kind::EmpiricalMax, 0.0, probe_samples, probe_seed, 10.0};
  }
};

/// Shared evaluation diagnostics of the equivalent-inequality leaves.
struct ClampStats {
  std::atomic<long long> evaluations{0};
  std::atomic<long long> clamped_above_one{0};

  double violation_fraction() const {
    const long long n = evaluations.load();
    return n == 0 ? 0.0 : static_cast<double>(clamped_above_one.load()) / n;
  }
};

/// Event domain plus equivalent-inequality observation domains over the
/// augmented space [X_g; U_1..U_n].
struct AugmentedProblem {
  ProbabilisticModel model;                         // includes the auxiliaries
  LimitStateExpression event;
  std::vector<LimitStateExpression> observation_lsfs;
  std::vector<std::string> aux_names;
  std::vector<double> scale_constants;
  std::shared_ptr<ClampStats> clamp_stats;

  /// Intersection of the observation domains (the denominator domain);
  /// throws if there are no observations.
  LimitStateExpression observation_domain() const;
  /// Intersection of event and observation domains (the numerator domain).
  LimitStateExpression joint_domain() const;
};

/// Determine c for one likelihood. FromSupBound requires L.sup_bound;
/// EmpiricalMax probes prior samples of the model and applies a safety
/// factor of 10 on the observed maximum.
double scale_constant(const Likelihood& L, const ScaleStrategy& strategy,
                      const ProbabilisticModel& model);

/// h_e(x_g, u) = u - Phi^{-1}[clamp(c*L(x_g))]. The product c*L is clamped to
/// [1e-300, 1]; values above 1 are counted in `stats` (bound violations).
LimitStateExpression equivalent_lsf(const Likelihood& L, double c,
                                    const std::string& aux_name,
                                    std::shared_ptr<ClampStats> stats = nullptr);

/// Build the augmented problem: one auxiliary standard Normal per likelihood.
AugmentedProblem augment(const ProbabilisticModel& model,
                         const LimitStateExpression& event,
                         const std::vector<Likelihood>& likelihoods,
                         const ScaleStrategy& strategy = {});

}  // namespace relup
