#include "relup/marginal.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

#include "relup/normal.hpp"

namespace relup {

Marginal::Marginal(Kind kind, double p1, double p2, std::string units)
    : kind_(kind), p1_(p1), p2_(p2), units_(std::move(units)) {}

Marginal Marginal::normal(double mean, double std_dev, std::string units) {
  if (!(std_dev > 0.0))
    throw std::invalid_argument("Normal: std must be > 0");
  return Marginal(Kind::Normal, mean, std_dev, std::move(units));
}

Marginal Marginal::weibull(double shape_k, double scale_v, std::string units) {
  if (!(shape_k > 0.0) || !(scale_v > 0.0))
    throw std::invalid_argument("Weibull: shape and scale must be > 0");
  return Marginal(Kind::Weibull, shape_k, scale_v, std::move(units));
}

Marginal Marginal::exponential(double mean, std::string units) {
  if (!(mean > 0.0))
    throw std::invalid_argument("Exponential: mean must be > 0");
  return Marginal(Kind::Exponential, mean, 0.0, std::move(units));
}

Marginal Marginal::lognormal(double mean_log, double std_log, std::string units) {
  if (!(std_log > 0.0))
    throw std::invalid_argument("Lognormal: std of log must be > 0");
  return Marginal(Kind::Lognormal, mean_log, std_log, std::move(units));
}

Marginal Marginal::deterministic(double value, std::string units) {
  if (!std::isfinite(value))
    throw std::invalid_argument("Deterministic: value must be finite");
  return Marginal(Kind::Deterministic, value, 0.0, std::move(units));
}

double Marginal::pdf(double x) const {
  switch (kind_) {
    case Kind::Normal:
      return std_normal_pdf((x - p1_) / p2_) / p2_;
    case Kind::Weibull: {
      if (x < 0.0) return 0.0;
      const double t = x / p2_;
      return (p1_ / p2_) * std::pow(t, p1_ - 1.0) * std::exp(-std::pow(t, p1_));
    }
    case Kind::Exponential:
      return x < 0.0 ? 0.0 : std::exp(-x / p1_) / p1_;
    case Kind::Lognormal:
      if (x <= 0.0) return 0.0;
      return std_normal_pdf((std::log(x) - p1_) / p2_) / (p2_ * x);
    case Kind::Deterministic:
      return 0.0;
  }
  return 0.0;
}

double Marginal::cdf(double x) const {
  switch (kind_) {
    case Kind::Normal:
      return std_normal_cdf((x - p1_) / p2_);
    case Kind::Weibull:
      return x <= 0.0 ? 0.0 : -std::expm1(-std::pow(x / p2_, p1_));
    case Kind::Exponential:
      return x <= 0.0 ? 0.0 : -std::expm1(-x / p1_);
    case Kind::Lognormal:
      return x <= 0.0 ? 0.0 : std_normal_cdf((std::log(x) - p1_) / p2_);
    case Kind::Deterministic:
      return x < p1_ ? 0.0 : 1.0;
  }
  return 0.0;
}

double Marginal::quantile(double p) const {
  if (std::isnan(p) || p < 0.0 || p > 1.0)
    throw std::domain_error("Marginal::quantile: p must be in [0,1]");
  switch (kind_) {
    case Kind::Normal:
      return p1_ + p2_ * std_normal_quantile(p);
    case Kind::Weibull:
      if (p == 1.0) return std::numeric_limits<double>::infinity();
      // -log1p(-p) = -ln(1-p), accurate for small p
      return p2_ * std::pow(-std::log1p(-p), 1.0 / p1_);
    case Kind::Exponential:
      if (p == 1.0) return std::numeric_limits<double>::infinity();
      return -p1_ * std::log1p(-p);
    case Kind::Lognormal:
      return std::exp(p1_ + p2_ * std_normal_quantile(p));
    case Kind::Deterministic:
      return p1_;
  }
  return 0.0;
}

double Marginal::mean() const {
  switch (kind_) {
    case Kind::Normal:
      return p1_;
    case Kind::Weibull:
      return p2_ * std::tgamma(1.0 + 1.0 / p1_);
    case Kind::Exponential:
      return p1_;
    case Kind::Lognormal:
      return std::exp(p1_ + 0.5 * p2_ * p2_);
    case Kind::Deterministic:
      return p1_;
  }
  return 0.0;
}

}  // namespace relup
