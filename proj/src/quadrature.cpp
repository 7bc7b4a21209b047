#include "relup/quadrature.hpp"

#include <cmath>
#include <stdexcept>

namespace relup {

namespace {

// K15 nodes/weights on [-1,1]; odd-index nodes form the embedded G7 rule.
constexpr double kNodes[15] = {
    -0.991455371120813, -0.949107912342759, -0.864864423359769,
    -0.741531185599394, -0.586087235467691, -0.405845151377397,
    -0.207784955007898, 0.0,               0.207784955007898,
    0.405845151377397,  0.586087235467691, 0.741531185599394,
    0.864864423359769,  0.949107912342759, 0.991455371120813};
constexpr double kWeightsK[15] = {
    0.022935322010529, 0.063092092629979, 0.104790010322250,
    0.140653259715525, 0.169004726639267, 0.190350578064785,
    0.204432940075298, 0.209482141084728, 0.204432940075298,
    0.190350578064785, 0.169004726639267, 0.140653259715525,
    0.104790010322250, 0.063092092629979, 0.022935322010529};
constexpr double kWeightsG[7] = {
    0.129484966168870, 0.279705391489277, 0.381830050505119,
    0.417959183673469, 0.381830050505119, 0.279705391489277,
    0.129484966168870};

struct Panel {
  double value;
  double error;
};

Panel gk15(const std::function<double(double)>& f, double a, double b) {
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  double k = 0.0, g = 0.0;
  for (int i = 0; i < 15; ++i) {
    const double v = f(c + h * kNodes[i]);
    k += kWeightsK[i] * v;
    if (i % 2 == 1) g += kWeightsG[i / 2] * v;
  }
  k *= h;
  g *= h;
  return {k, std::fabs(k - g)};
}

double adapt(const std::function<double(double)>& f, double a, double b,
             Panel p, double tol_per_unit, int depth) {
  if (p.error <= tol_per_unit * (b - a) || b - a < 1e-14 * (std::fabs(a) + 1.0))
    return p.value;
  if (depth <= 0)
    throw std::runtime_error("integrate: subdivision limit reached");
  const double m = 0.5 * (a + b);
  const Panel left = gk15(f, a, m), right = gk15(f, m, b);
  return adapt(f, a, m, left, tol_per_unit, depth - 1) +
         adapt(f, m, b, right, tol_per_unit, depth - 1);
}

}  // namespace

double integrate(const std::function<double(double)>& f, double a, double b,
                 double rel_tol, int max_depth) {
  if (!(b >= a)) throw std::invalid_argument("integrate: requires b >= a");
  if (a == b) return 0.0;
  const Panel whole = gk15(f, a, b);
  const double scale = std::max(std::fabs(whole.value), 1e-300);
  const double tol_per_unit = rel_tol * scale / (b - a);
  return adapt(f, a, b, whole, tol_per_unit, max_depth);
}

}  // namespace relup
