#include "relup/mvn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "relup/normal.hpp"
#include "relup/quadrature.hpp"

namespace relup {

namespace {

// Genz's BVNU: upper-quadrant probability P(X > dh, Y > dk) for standard
// bivariate Normal with correlation r (Drezner-Wesolowsky / Genz hybrid).
double bvnu(double dh, double dk, double r) {
  if (std::isinf(dh) || std::isinf(dk)) {
    if (dh == std::numeric_limits<double>::infinity() ||
        dk == std::numeric_limits<double>::infinity())
      return 0.0;
    if (dh == -std::numeric_limits<double>::infinity())
      return std_normal_cdf(-dk);
    return std_normal_cdf(-dh);
  }
  static const double x6[3] = {0.9324695142031522, 0.6612093864662647,
                               0.2386191860831970};
  static const double w6[3] = {0.1713244923791705, 0.3607615730481384,
                               0.4679139345726904};
  static const double x12[6] = {0.9815606342467191, 0.9041172563704750,
                                0.7699026741943050, 0.5873179542866171,
                                0.3678314989981802, 0.1252334085114692};
  static const double w12[6] = {0.04717533638651177, 0.1069393259953183,
                                0.1600783285433464,  0.2031674267230659,
                                0.2334925365383547,  0.2491470458134029};
  static const double x20[10] = {0.9931285991850949, 0.9639719272779138,
                                 0.9122344282513259, 0.8391169718222188,
                                 0.7463319064601508, 0.6360536807265150,
                                 0.5108670019508271, 0.3737060887154196,
                                 0.2277858511416451, 0.07652652113349733};
  static const double w20[10] = {0.01761400713915212, 0.04060142980038694,
                                 0.06267204833410906, 0.08327674157670475,
                                 0.1019301198172404,  0.1181945319615184,
                                 0.1316886384491766,  0.1420961093183821,
                                 0.1491729864726037,  0.1527533871307259};

  const double* x;
  const double* w;
  int ng;
  if (std::fabs(r) < 0.3) {
    x = x6; w = w6; ng = 3;
  } else if (std::fabs(r) < 0.75) {
    x = x12; w = w12; ng = 6;
  } else {
    x = x20; w = w20; ng = 10;
  }

  double h = dh, k = dk;
  double hk = h * k;
  double bvn = 0.0;
  if (std::fabs(r) < 0.925) {
    const double hs = (h * h + k * k) / 2.0;
    const double asr = std::asin(r);
    for (int i = 0; i < ng; ++i) {
      for (int is = -1; is <= 1; is += 2) {
        const double sn = std::sin(asr * (is * x[i] + 1.0) / 2.0);
        bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
      }
    }
    bvn = bvn * asr / (4.0 * M_PI) + std_normal_cdf(-h) * std_normal_cdf(-k);
  } else {
    if (r < 0.0) {
      k = -k;
      hk = -hk;
    }
    if (std::fabs(r) < 1.0) {
      const double as = (1.0 - r) * (1.0 + r);
      double a = std::sqrt(as);
      const double bs = (h - k) * (h - k);
      const double c = (4.0 - hk) / 8.0;
      const double d = (12.0 - hk) / 16.0;
      double asr = -(bs / as + hk) / 2.0;
      if (asr > -100.0)
        bvn = a * std::exp(asr) *
              (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 +
               c * d * as * as / 5.0);
      if (-hk < 100.0) {
        const double b = std::sqrt(bs);
        bvn -= std::exp(-hk / 2.0) * kSqrt2Pi * std_normal_cdf(-b / a) * b *
               (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
      }
      a /= 2.0;
      for (int i = 0; i < ng; ++i) {
        for (int is = -1; is <= 1; is += 2) {
          const double xs = a * (is * x[i] + 1.0);
          const double xs2 = xs * xs;
          const double rs = std::sqrt(1.0 - xs2);
          asr = -(bs / xs2 + hk) / 2.0;
          if (asr > -100.0) {
            bvn += a * w[i] * std::exp(asr) *
                   (std::exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs -
                    (1.0 + c * xs2 * (1.0 + d * xs2)));
          }
        }
      }
      bvn = -bvn / (2.0 * M_PI);
    }
    if (r > 0.0) {
      bvn += std_normal_cdf(-std::max(h, k));
    } else {
      bvn = -bvn;
      if (k > h) bvn += std_normal_cdf(k) - std_normal_cdf(h);
    }
  }
  return std::max(0.0, std::min(1.0, bvn));
}

}  // namespace

double bivariate_normal_cdf(double b1, double b2, double rho) {
  if (!(std::fabs(rho) <= 1.0))
    throw std::invalid_argument("bivariate_normal_cdf: |rho| must be <= 1");
  if (rho > 1.0 - 1e-14) return std_normal_cdf(std::min(b1, b2));
  if (rho < -1.0 + 1e-14) {
    const double p = std_normal_cdf(b1) + std_normal_cdf(b2) - 1.0;
    return std::max(0.0, p);
  }
  return bvnu(-b1, -b2, rho);
}

double multivariate_normal_cdf(const std::vector<double>& b,
                               const std::vector<std::vector<double>>& R,
                               double rel_tol) {
  const std::size_t k = b.size();
  if (R.size() != k)
    throw std::invalid_argument("multivariate_normal_cdf: size mismatch");
  if (k == 0) return 1.0;
  if (k == 1) return std_normal_cdf(b[0]);
  if (k == 2) return bivariate_normal_cdf(b[0], b[1], R[0][1]);
  if (k > 6)
    throw std::invalid_argument("multivariate_normal_cdf: supports k <= 6");

  // Condition on the most restrictive coordinate (smallest bound) so the
  // small outer factor is resolved exactly by the quadrature substitution.
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&b](std::size_t i, std::size_t j) { return b[i] < b[j]; });
  const std::size_t c0 = order[0];
  const double P1 = std_normal_cdf(b[c0]);
  if (P1 <= 0.0) return 0.0;

  std::vector<std::size_t> rest(order.begin() + 1, order.end());
  const std::size_t m = rest.size();
  std::vector<double> r1(m), s(m), bb(m);
  for (std::size_t i = 0; i < m; ++i) r1[i] = R[rest[i]][c0];
  std::vector<std::vector<double>> C(m, std::vector<double>(m));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      C[i][j] = R[rest[i]][rest[j]] - r1[i] * r1[j];
  for (std::size_t i = 0; i < m; ++i) s[i] = std::sqrt(std::max(C[i][i], 1e-16));
  std::vector<std::vector<double>> Rc(m, std::vector<double>(m, 1.0));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (i != j)
        Rc[i][j] = std::clamp(C[i][j] / (s[i] * s[j]), -1.0, 1.0);

  const auto inner = [&](double t) {
    const double x = std_normal_quantile(t);
    std::vector<double> bc(m);
    for (std::size_t i = 0; i < m; ++i) bc[i] = (b[rest[i]] - r1[i] * x) / s[i];
    return multivariate_normal_cdf(bc, Rc, rel_tol);
  };
  // substitute t = Phi(x): integral over t in (0, P1]
  return integrate(inner, 1e-320, P1, rel_tol);
}

}  // namespace relup
