#include "relup/updating.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "relup/normal.hpp"
#include "relup/parallel.hpp"
#include "relup/quadrature.hpp"
#include "relup/rng.hpp"

namespace relup {

namespace {

// Gauss measure of {u2 : G(u1, u2) <= 0} by crossing detection on a scan over
// [-39, 39] with bisection refinement; exact Phi differences between crossings.
double failing_measure_1d(const std::function<double(double)>& G) {
  constexpr double kLim = 39.0;
  constexpr int kCells = 512;
  const double dx = 2.0 * kLim / kCells;
  double measure = 0.0;
  double seg_start = -kLim;
  double prev_t = -kLim, prev_v = G(-kLim);
  bool in_fail = prev_v <= 0.0;
  for (int i = 1; i <= kCells; ++i) {
    const double t = -kLim + i * dx;
    const double v = G(t);
    if ((prev_v <= 0.0) != (v <= 0.0)) {
      double a = prev_t, b = t, fa = prev_v;
      while (b - a > 1e-13 * kLim) {
        const double m = 0.5 * (a + b);
        const double fm = G(m);
        if ((fm <= 0.0) == (fa <= 0.0)) {
          a = m;
          fa = fm;
        } else {
          b = m;
        }
      }
      const double cross = 0.5 * (a + b);
      if (in_fail) measure += std_normal_cdf(cross) - std_normal_cdf(seg_start);
      else seg_start = cross;
      in_fail = !in_fail;
    }
    prev_t = t;
    prev_v = v;
  }
  if (in_fail) measure += std_normal_cdf(kLim) - std_normal_cdf(seg_start);
  return std::clamp(measure, 0.0, 1.0);
}

}  // namespace

double quadrature_probability_2d(const ProbabilisticModel& model,
                                 const LimitStateExpression& expr,
                                 double rel_tol) {
  if (model.standard_dim() == 1) {
    StandardSpaceFn G1(model, expr);
    return failing_measure_1d(
        [&](double u) { return G1(std::vector<double>{u}); });
  }
  if (model.standard_dim() != 2)
    throw std::invalid_argument(
        "quadrature_probability_2d: needs standard dim 1 or 2");
  StandardSpaceFn G(model, expr);
  const auto integrand = [&](double t) {
    const double u1 = std_normal_quantile(t);
    return failing_measure_1d(
        [&](double u2) { return G(std::vector<double>{u1, u2}); });
  };
  return integrate(integrand, 0.0, 1.0, rel_tol);
}

std::pair<double, double> conditional_ci(long long num_hits, long long denom_hits) {
  if (denom_hits < 1)
    throw std::runtime_error(
        "observation probability indistinguishable from zero; increase samples "
        "or use importance sampling");
  if (num_hits < 0 || num_hits > denom_hits)
    throw std::invalid_argument("conditional_ci: hit counts inconsistent");
  const double z = 1.959963984540054;  // 97.5% Normal quantile
  const double n = static_cast<double>(denom_hits);
  const double ph = static_cast<double>(num_hits) / n;
  const double z2n = z * z / n;
  const double denom = 1.0 + z2n;
  const double center = (ph + z2n / 2.0) / denom;
  const double half =
      z * std::sqrt(ph * (1.0 - ph) / n + z2n / (4.0 * n)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

namespace {

ReliabilityResult solve_form_like(const ProbabilisticModel& model,
                                  const LimitStateExpression& expr,
                                  const SolverSpec& spec, bool second_order,
                                  double* p_system_out) {
  FormResult fr = form(model, expr, spec.form);
  if (!fr.diag.converged)
    throw std::runtime_error("FORM did not converge");
  double p_sys = fr.p_first_order_system ? *fr.p_first_order_system : *fr.p;
  long long evals = fr.n_evals;
  if (second_order) {
    // Breitung correction per linearized component at the joint design point
    bool degenerate = false;
    double corr = 1.0;
    const auto comps = expr.kind() == LimitStateExpression::Kind::Intersection
                           ? expr.children()
                           : std::vector<LimitStateExpression>{expr};
    for (std::size_t i = 0; i < comps.size(); ++i) {
      StandardSpaceFn Gc(model, comps[i]);
      const double beta_i = i < fr.components.size() ? -fr.components[i].b : 0.0;
      corr *= breitung_correction(Gc, fr.diag.design_point, beta_i, degenerate);
      evals += Gc.n_evals();
    }
    fr.diag.degenerate_curvature = degenerate;
    p_sys *= corr;
  }
  ReliabilityResult out;
  out.p = std::clamp(p_sys, 0.0, 1.0);
  out.beta = -std_normal_quantile(*out.p);
  out.n_evals = evals;
  out.diag = fr.diag;
  if (p_system_out) *p_system_out = p_sys;
  return out;
}

}  // namespace

ReliabilityResult solve_reliability(const ProbabilisticModel& model,
                                    const LimitStateExpression& expr,
                                    const SolverSpec& spec) {
  switch (spec.method) {
    case Method::MonteCarlo:
      return monte_carlo(model, expr, spec.n, spec.seed);
    case Method::Apis:
      return apis(model, expr, spec.apis, spec.seed);
    case Method::Form:
      return solve_form_like(model, expr, spec, false, nullptr);
    case Method::Sorm:
      return solve_form_like(model, expr, spec, true, nullptr);
    case Method::Quadrature: {
      ReliabilityResult r;
      r.p = quadrature_probability_2d(model, expr, spec.quad_rel_tol);
      r.beta = -std_normal_quantile(*r.p);
      return r;
    }
  }
  throw std::logic_error("unreachable");
}

ConditionalResult update_reliability(const AugmentedProblem& problem,
                                     const SolverSpec& spec) {
  ConditionalResult res;
  res.solver_used = spec.method;

  if (problem.observation_lsfs.empty()) {
    // empty conditioning: the conditional equals the prior
    const ReliabilityResult prior =
        solve_reliability(problem.model, problem.event, spec);
    res.p_conditional = prior.p.value();
    res.beta_conditional = prior.beta.value();
    res.p_numerator = prior.p;
    res.p_denominator = 1.0;
    res.n_evals = prior.n_evals;
    res.diag_numerator = prior.diag;
    if (spec.method == Method::MonteCarlo) {
      res.denom_hits = static_cast<long long>(spec.n);
      res.num_hits = std::llround(*prior.p * spec.n);
      res.interval = conditional_ci(res.num_hits, res.denom_hits);
    }
    return res;
  }

  const LimitStateExpression num_domain = problem.joint_domain();
  const LimitStateExpression den_domain = problem.observation_domain();

  if (spec.method == Method::MonteCarlo) {
    // common random numbers: one sample set, nested indicators
    StandardSpaceFn Gnum(problem.model, num_domain);
    StandardSpaceFn Gden(problem.model, den_domain);
    const std::size_t d = Gnum.dim();
    const std::size_t n = spec.n;
    std::vector<unsigned char> flags(n, 0);
    parallel_for_indexed(n, [&](std::size_t i) {
      CounterRng rng(spec.seed, i);
      std::vector<double> u(d);
      for (auto& ui : u) ui = rng.normal();
      unsigned char f = 0;
      if (Gden(u) <= 0.0) {
        f = 1;
        if (Gnum(u) <= 0.0) f = 2;
      }
      flags[i] = f;
    });
    long long den_hits = 0, num_hits = 0;
    for (auto f : flags) {
      if (f >= 1) ++den_hits;
      if (f == 2) ++num_hits;
    }
    if (den_hits == 0)
      throw std::runtime_error(
          "observation probability indistinguishable from zero; increase "
          "samples or use importance sampling");
    res.num_hits = num_hits;
    res.denom_hits = den_hits;
    res.p_numerator = static_cast<double>(num_hits) / n;
    res.p_denominator = static_cast<double>(den_hits) / n;
    res.p_conditional = static_cast<double>(num_hits) / den_hits;
    res.interval = conditional_ci(num_hits, den_hits);
    res.n_evals = Gnum.n_evals() + Gden.n_evals();
  } else if (spec.method == Method::Apis) {
    // Independent solves for the two domains; the same seed reuses one
    // stream of underlying draws, which is harmless across the two
    // adaptively rotated frames.
    const ReliabilityResult rn =
        apis(problem.model, num_domain, spec.apis, spec.seed);
    const ReliabilityResult rd =
        apis(problem.model, den_domain, spec.apis, spec.seed);
    res.p_numerator = rn.p;
    res.p_denominator = rd.p;
    if (!(*rd.p > 0.0))
      throw std::runtime_error("sampled observation probability is zero");
    double ratio = *rn.p / *rd.p;
    if (ratio > 1.0) {
      ratio = 1.0;
      res.ratio_clamped = true;
    }
    res.p_conditional = ratio;
    const double rn_rse =
        *rn.p > 0.0 ? rn.std_error.value_or(0.0) / *rn.p : 0.0;
    const double rd_rse = rd.std_error.value_or(0.0) / *rd.p;
    const double sd = ratio * std::sqrt(rn_rse * rn_rse + rd_rse * rd_rse);
    res.interval = {std::max(0.0, ratio - 1.96 * sd),
                    std::min(1.0, ratio + 1.96 * sd)};
    res.n_evals = rn.n_evals + rd.n_evals;
    res.diag_numerator = rn.diag;
    res.diag_denominator = rd.diag;
  } else if (spec.method == Method::Form || spec.method == Method::Sorm) {
    const bool so = spec.method == Method::Sorm;
    const ReliabilityResult rn =
        solve_form_like(problem.model, num_domain, spec, so, nullptr);
    const ReliabilityResult rd =
        solve_form_like(problem.model, den_domain, spec, so, nullptr);
    res.p_numerator = rn.p;
    res.p_denominator = rd.p;
    if (!(*rd.p > 0.0)) throw std::runtime_error("FORM denominator probability is zero");
    double ratio = *rn.p / *rd.p;
    if (ratio > 1.0) {
      ratio = 1.0;
      res.ratio_clamped = true;
    }
    res.p_conditional = ratio;
    res.n_evals = rn.n_evals + rd.n_evals;
    res.diag_numerator = rn.diag;
    res.diag_denominator = rd.diag;
  } else {  // Quadrature
    const double pn =
        quadrature_probability_2d(problem.model, num_domain, spec.quad_rel_tol);
    const double pd =
        quadrature_probability_2d(problem.model, den_domain, spec.quad_rel_tol);
    if (!(pd > 0.0)) throw std::runtime_error("quadrature denominator is zero");
    res.p_numerator = pn;
    res.p_denominator = pd;
    double ratio = pn / pd;
    if (ratio > 1.0) {
      ratio = 1.0;
      res.ratio_clamped = true;
    }
    res.p_conditional = ratio;
  }

  res.beta_conditional = -std_normal_quantile(res.p_conditional);
  return res;
}

double exact_conditional_1d(const Marginal& prior, const Likelihood& L,
                            double failure_threshold) {
  if (L.variables.size() != 1)
    throw std::invalid_argument("exact_conditional_1d: needs a single variable");
  const std::vector<std::string> names{L.variables[0]};
  const auto integrand = [&](double t) {
    const double x = prior.quantile(t);
    const std::vector<double> vals{x};
    const double v = L.eval(VarFrame{names, vals});
    if (!std::isfinite(v))
      throw std::runtime_error("exact_conditional_1d: non-integrable likelihood");
    return v;
  };
  const double F_thr = prior.cdf(failure_threshold);
  const double den = integrate(integrand, 0.0, 1.0, 1e-10);
  if (!(den > 0.0))
    throw std::runtime_error("exact_conditional_1d: zero normalizing integral");
  if (F_thr <= 0.0) return 0.0;
  if (F_thr >= 1.0) return 1.0;
  const double num = integrate(integrand, 0.0, F_thr, 1e-10);
  return std::clamp(num / den, 0.0, 1.0);
}

double exact_conditional_linear_gaussian(
    const std::vector<double>& a, const std::vector<double>& mean,
    const std::vector<std::vector<double>>& cov,
    const std::vector<LinearObservation>& obs) {
  const int d = static_cast<int>(a.size());
  if (static_cast<int>(mean.size()) != d || static_cast<int>(cov.size()) != d)
    throw std::invalid_argument("exact_conditional_linear_gaussian: size mismatch");
  Eigen::VectorXd av = Eigen::Map<const Eigen::VectorXd>(a.data(), d);
  Eigen::VectorXd mu = Eigen::Map<const Eigen::VectorXd>(mean.data(), d);
  Eigen::MatrixXd S(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) S(i, j) = cov[i][j];

  if (!obs.empty()) {
    const int m = static_cast<int>(obs.size());
    Eigen::MatrixXd H(m, d);
    Eigen::VectorXd off(m);
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i) {
      if (static_cast<int>(obs[i].h.size()) != d)
        throw std::invalid_argument("observation coefficient size mismatch");
      H.row(i) = Eigen::Map<const Eigen::VectorXd>(obs[i].h.data(), d);
      off[i] = obs[i].offset;
      D(i, i) = obs[i].noise_std * obs[i].noise_std;
    }
    const Eigen::MatrixXd Shh = H * S * H.transpose() + D;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(Shh);
    if (ldlt.info() != Eigen::Success)
      throw std::runtime_error("singular observation covariance");
    const Eigen::MatrixXd K = S * H.transpose() * ldlt.solve(
        Eigen::MatrixXd::Identity(m, m));
    mu = mu - K * (H * mu + off);
    S = S - K * H * S;
  }

  const double var = av.dot(S * av);
  if (!(var > 0.0))
    throw std::runtime_error("singular conditioned covariance");
  return av.dot(mu) / std::sqrt(var);
}

}  // namespace relup
