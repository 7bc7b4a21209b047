#include "relup/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "relup/normal.hpp"

namespace relup {

namespace {
constexpr double kClampFloor = 1e-300;  // keeps h_e finite (~u + 37)
}

LimitStateExpression AugmentedProblem::observation_domain() const {
  if (observation_lsfs.empty())
    throw std::logic_error("augmented problem has no observations");
  if (observation_lsfs.size() == 1) return observation_lsfs[0];
  return LimitStateExpression::intersection(observation_lsfs);
}

LimitStateExpression AugmentedProblem::joint_domain() const {
  std::vector<LimitStateExpression> all{event};
  all.insert(all.end(), observation_lsfs.begin(), observation_lsfs.end());
  if (all.size() == 1) return all[0];
  return LimitStateExpression::intersection(std::move(all));
}

double scale_constant(const Likelihood& L, const ScaleStrategy& strategy,
                      const ProbabilisticModel& model) {
  switch (strategy.kind) {
    case ScaleStrategy::Kind::FromSupBound:
      if (!L.sup_bound)
        throw std::invalid_argument("scale_constant: likelihood has no sup bound");
      if (!(*L.sup_bound > 0.0))
        throw std::invalid_argument("scale_constant: nonpositive sup bound");
      return std::min(1.0, 1.0 / *L.sup_bound);
    case ScaleStrategy::Kind::UserValue:
      if (!(strategy.user_c > 0.0))
        throw std::invalid_argument("scale_constant: user value must be > 0");
      return strategy.user_c;
    case ScaleStrategy::Kind::EmpiricalMax: {
      double max_L = 0.0;
      for (int i = 0; i < strategy.probe_samples; ++i) {
        const auto x = model.sample_one(strategy.probe_seed, i);
        const VarFrame f{model.names(), x};
        max_L = std::max(max_L, L.eval(f));
      }
      if (!(max_L > 0.0))
        throw std::runtime_error(
            "scale_constant: likelihood vanished on all probe samples");
      return 1.0 / (strategy.safety * max_L);
    }
  }
  throw std::logic_error("unreachable");
}

LimitStateExpression equivalent_lsf(const Likelihood& L, double c,
                                    const std::string& aux_name,
                                    std::shared_ptr<ClampStats> stats) {
  if (!(c > 0.0)) throw std::invalid_argument("equivalent_lsf: c must be > 0");
  auto vars = L.variables;
  vars.push_back(aux_name);
  return LimitStateExpression::leaf(
      vars, [L, c, aux_name, stats](const VarFrame& f) {
        double cl = c * L.eval(f);
        if (stats) stats->evaluations.fetch_add(1, std::memory_order_relaxed);
        if (cl > 1.0) {
          if (stats)
            stats->clamped_above_one.fetch_add(1, std::memory_order_relaxed);
          cl = 1.0;
        }
        if (cl < kClampFloor) cl = kClampFloor;
        return f.get(aux_name) - std_normal_quantile(cl);
      });
}

AugmentedProblem augment(const ProbabilisticModel& model,
                         const LimitStateExpression& event,
                         const std::vector<Likelihood>& likelihoods,
                         const ScaleStrategy& strategy) {
  for (const auto& L : likelihoods)
    for (const auto& v : L.variables)
      if (!model.has_variable(v))
        throw std::invalid_argument("likelihood reads unknown variable: " + v);

  std::vector<std::string> aux_names;
  for (std::size_t i = 0; i < likelihoods.size(); ++i) {
    std::string name = "u" + std::to_string(i + 1);
    while (model.has_variable(name) ||
           std::find(aux_names.begin(), aux_names.end(), name) != aux_names.end())
      name += "_aux";
    aux_names.push_back(name);
  }

  auto stats = std::make_shared<ClampStats>();
  std::vector<double> cs;
  std::vector<LimitStateExpression> lsfs;
  for (std::size_t i = 0; i < likelihoods.size(); ++i) {
    ScaleStrategy st = strategy;
    // default order: sup bound if the likelihood has one, else empirical max
    if (st.kind == ScaleStrategy::Kind::FromSupBound && !likelihoods[i].sup_bound)
      st = ScaleStrategy::empirical_max(st.probe_samples, st.probe_seed);
    const double c = scale_constant(likelihoods[i], st, model);
    cs.push_back(c);
    lsfs.push_back(equivalent_lsf(likelihoods[i], c, aux_names[i], stats));
  }

  return AugmentedProblem{model.extended(aux_names), event, std::move(lsfs),
                          std::move(aux_names), std::move(cs), std::move(stats)};
}

}  // namespace relup
