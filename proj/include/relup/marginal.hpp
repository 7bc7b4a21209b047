#pragma once

#include <string>

namespace relup {

/// One-dimensional marginal distribution. Construction validates parameters;
/// instances are immutable.
class Marginal {
 public:
  enum class Kind { Normal, Weibull, Exponential, Lognormal, Deterministic };

  static Marginal normal(double mean, double std_dev, std::string units = "");
  static Marginal weibull(double shape_k, double scale_v, std::string units = "");
  static Marginal exponential(double mean, std::string units = "");
  /// Parameters are the mean and std of ln(X).
  static Marginal lognormal(double mean_log, double std_log, std::string units = "");
  static Marginal deterministic(double value, std::string units = "");

  Kind kind() const { return kind_; }
  double param1() const { return p1_; }
  double param2() const { return p2_; }
  const std::string& units() const { return units_; }

  double pdf(double x) const;
  /// Clamps to {0,1} outside the support.
  double cdf(double x) const;
  /// Throws std::domain_error for p outside [0,1].
  double quantile(double p) const;

  double mean() const;
  double median() const { return quantile(0.5); }

  bool is_deterministic() const { return kind_ == Kind::Deterministic; }
  /// Normal or Lognormal: admits a bi-Normal correlation in underlying
  /// Gaussian space.
  bool has_gaussian_underlying() const {
    return kind_ == Kind::Normal || kind_ == Kind::Lognormal;
  }

 private:
  Marginal(Kind kind, double p1, double p2, std::string units);

  Kind kind_;
  double p1_, p2_;
  std::string units_;
};

}  // namespace relup
