#include "relup/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "relup/normal.hpp"

namespace relup {

namespace {
// Density at the mode; used as the natural sup bound for unimodal errors.
double mode_density(const Marginal& m) {
  switch (m.kind()) {
    case Marginal::Kind::Normal:
      return std_normal_pdf(0.0) / m.param2();
    case Marginal::Kind::Exponential:
      return 1.0 / m.param1();
    case Marginal::Kind::Weibull: {
      const double k = m.param1(), v = m.param2();
      if (k <= 1.0) return m.pdf(1e-12 * v);  // density peaks at the origin
      const double mode = v * std::pow((k - 1.0) / k, 1.0 / k);
      return m.pdf(mode);
    }
    case Marginal::Kind::Lognormal: {
      const double mode = std::exp(m.param1() - m.param2() * m.param2());
      return m.pdf(mode);
    }
    case Marginal::Kind::Deterministic:
      throw std::invalid_argument("error marginal must have a density");
  }
  return 0.0;
}
}  // namespace

Likelihood additive_error_likelihood(std::function<double(const VarFrame&)> prediction,
                                     std::vector<std::string> variables,
                                     double measured, const Marginal& error) {
  if (error.is_deterministic())
    throw std::invalid_argument(
        "additive_error_likelihood: error marginal must have a density");
  const double sup = mode_density(error);
  Likelihood L;
  L.eval = [prediction = std::move(prediction), measured, error](const VarFrame& f) {
    return error.pdf(measured - prediction(f));
  };
  L.sup_bound = sup;
  L.variables = std::move(variables);
  return L;
}

Likelihood likelihood_from_equality_lsf(
    std::function<double(const VarFrame&, double)> h,
    std::vector<std::string> variables, const Marginal& noise, double bracket_lo,
    double bracket_hi, int grid) {
  if (noise.is_deterministic())
    throw std::invalid_argument("equality-LSF likelihood: noise must have a density");
  if (!(bracket_hi > bracket_lo) || grid < 1)
    throw std::invalid_argument("equality-LSF likelihood: bad bracket or grid");

  const double scale = std::max(1.0, std::max(std::fabs(bracket_lo), std::fabs(bracket_hi)));
  const double root_tol = 1e-10 * scale;

  Likelihood L;
  L.eval = [h = std::move(h), noise, bracket_lo, bracket_hi, grid,
            root_tol](const VarFrame& f) {
    const double dx = (bracket_hi - bracket_lo) / grid;
    double sum = 0.0;
    double prev_x = bracket_lo;
    double prev_v = h(f, prev_x);
    if (!std::isfinite(prev_v))
      throw std::runtime_error("equality-LSF likelihood: non-finite h on bracket");
    for (int i = 1; i <= grid; ++i) {
      const double x = bracket_lo + i * dx;
      const double v = h(f, x);
      if (!std::isfinite(v))
        throw std::runtime_error("equality-LSF likelihood: non-finite h on bracket");
      if ((prev_v <= 0.0) != (v <= 0.0)) {
        double a = prev_x, b = x, fa = prev_v;
        while (b - a > root_tol) {
          const double m = 0.5 * (a + b);
          const double fm = h(f, m);
          if ((fm <= 0.0) == (fa <= 0.0)) {
            a = m;
            fa = fm;
          } else {
            b = m;
          }
        }
        sum += noise.pdf(0.5 * (a + b));
      }
      prev_x = x;
      prev_v = v;
    }
    return sum;
  };
  L.sup_bound = std::nullopt;  // root count can vary with x_g
  L.variables = std::move(variables);
  return L;
}

Likelihood product_likelihood(std::vector<Likelihood> parts) {
  if (parts.empty())
    throw std::invalid_argument("product_likelihood: needs at least one part");
  if (parts.size() == 1) return parts[0];
  Likelihood L;
  std::optional<double> sup = 1.0;
  for (const auto& p : parts) {
    if (p.sup_bound && sup)
      *sup *= *p.sup_bound;
    else
      sup.reset();
    for (const auto& v : p.variables)
      if (std::find(L.variables.begin(), L.variables.end(), v) == L.variables.end())
        L.variables.push_back(v);
  }
  L.sup_bound = sup;
  L.eval = [parts = std::move(parts)](const VarFrame& f) {
    double prod = 1.0;
    for (const auto& p : parts) prod *= p.eval(f);
    return prod;
  };
  return L;
}

Likelihood regularize_equality(std::function<double(const VarFrame&)> h,
                               std::vector<std::string> variables, double sigma) {
  if (!(sigma > 0.0))
    throw std::invalid_argument("regularize_equality: sigma must be > 0");
  Likelihood L;
  L.eval = [h = std::move(h), sigma](const VarFrame& f) {
    return std_normal_pdf(h(f) / sigma) / sigma;
  };
  L.sup_bound = std_normal_pdf(0.0) / sigma;
  L.variables = std::move(variables);
  return L;
}

}  // namespace relup
