#pragma once

// Standard Normal density, distribution and quantile functions.
// The quantile is accurate deep into the tails (|x| up to ~38), which the
// equivalent-inequality transform relies on when likelihood values get tiny.

namespace relup {

inline constexpr double kSqrt2 = 1.4142135623730950488016887242097;
inline constexpr double kSqrt2Pi = 2.5066282746310005024157652848110;

/// Standard Normal PDF phi(x).
double std_normal_pdf(double x);

/// Standard Normal CDF Phi(x). Total function; Phi(-inf)=0, Phi(+inf)=1.
double std_normal_cdf(double x);

/// Inverse standard Normal CDF. Throws std::domain_error outside [0,1];
/// returns -inf at 0 and +inf at 1.
double std_normal_quantile(double p);

}  // namespace relup
