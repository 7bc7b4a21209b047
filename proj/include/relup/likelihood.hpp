#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "relup/limit_state.hpp"
#include "relup/marginal.hpp"

namespace relup {

/// Nonnegative function of the reduced variables, defined up to a positive
/// proportionality constant. Immutable; eval is pure.
struct Likelihood {
  std::function<double(const VarFrame&)> eval;
  std::optional<double> sup_bound;
  std::vector<std::string> variables;

  double operator()(const VarFrame& f) const { return eval(f); }
};

/// L(x) = f_err(measured - prediction(x)). The error marginal must have a
/// density (Deterministic is rejected).
Likelihood additive_error_likelihood(std::function<double(const VarFrame&)> prediction,
                                     std::vector<std::string> variables,
                                     double measured, const Marginal& error);

/// L(x) = sum over roots x_h of h(x, x_h) = 0 of f_noise(x_h). Roots are
/// located by scanning `grid` equal subintervals of [bracket_lo, bracket_hi]
/// for sign changes, then bisection. At most one root per cell is found: the
/// bracket and grid resolution are the caller's responsibility. Valid only
/// when the noise variable is independent of the reduced variables.
Likelihood likelihood_from_equality_lsf(
    std::function<double(const VarFrame&, double)> h,
    std::vector<std::string> variables, const Marginal& noise, double bracket_lo,
    double bracket_hi, int grid = 512);

/// Pointwise product; sup_bound is the product of bounds when all present.
Likelihood product_likelihood(std::vector<Likelihood> parts);

/// Artificial-noise regularization of an exact equality h(x) = 0:
/// L(x) = phi(h(x)/sigma)/sigma.
Likelihood regularize_equality(std::function<double(const VarFrame&)> h,
                               std::vector<std::string> variables, double sigma);

}  // namespace relup
