#pragma once

#include <functional>

namespace relup {

/// Adaptive Gauss-Kronrod (G7,K15) integration of f over [a,b].
/// Subdivides until the local error estimate meets rel_tol against the
/// running total (with an absolute floor), up to max_depth levels.
double integrate(const std::function<double(double)>& f, double a, double b,
                 double rel_tol = 1e-10, int max_depth = 64);

}  // namespace relup
