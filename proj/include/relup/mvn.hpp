#pragma once

#include <vector>

namespace relup {

/// Bivariate standard Normal CDF P(X <= b1, Y <= b2) with correlation rho.
double bivariate_normal_cdf(double b1, double b2, double rho);

/// Multivariate standard Normal orthant probability P(X_i <= b_i for all i)
/// for a full correlation matrix R (row-major, k x k), k <= 6. Computed by
/// exact bivariate evaluation plus recursive conditioning quadrature on the
/// most restrictive coordinates; retains relative accuracy for small
/// probabilities.
double multivariate_normal_cdf(const std::vector<double>& b,
                               const std::vector<std::vector<double>>& R,
                               double rel_tol = 1e-9);

}  // namespace relup
