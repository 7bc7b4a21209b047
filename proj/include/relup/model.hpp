#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "relup/marginal.hpp"

namespace relup {

struct Correlation {
  std::string a;
  std::string b;
  double rho;
};

/// Ordered set of named marginals with optional pairwise bi-Normal
/// correlations, owning the bijection between physical space and independent
/// standard Normal space. Immutable after construction.
class ProbabilisticModel {
 public:
  ProbabilisticModel(std::vector<std::pair<std::string, Marginal>> variables,
                     std::vector<Correlation> correlations = {});

  const std::vector<std::pair<std::string, Marginal>>& variables() const {
    return vars_;
  }
  const std::vector<Correlation>& correlations() const { return corrs_; }
  const std::vector<std::string>& names() const { return names_; }

  std::size_t dim() const { return vars_.size(); }
  /// Number of standard-normal coordinates (deterministic marginals occupy none).
  std::size_t standard_dim() const { return std_dim_; }

  std::size_t index_of(const std::string& name) const;
  bool has_variable(const std::string& name) const;

  /// Physical vector (one entry per variable, model order) -> independent
  /// standard normals (one entry per non-deterministic variable).
  std::vector<double> to_standard(std::span<const double> x) const;
  std::vector<double> from_standard(std::span<const double> u) const;

  /// Deterministic draw i of a fixed (seed, count) run; pure in (seed, i).
  std::vector<double> sample_one(std::uint64_t seed, std::uint64_t index) const;
  std::vector<std::vector<double>> sample(std::uint64_t seed, std::size_t count) const;

  /// Model extended with extra independent standard Normal variables.
  ProbabilisticModel extended(
      const std::vector<std::string>& extra_standard_normals) const;

 private:
  std::vector<std::pair<std::string, Marginal>> vars_;
  std::vector<Correlation> corrs_;
  std::vector<std::string> names_;
  std::size_t std_dim_;
  // per variable: index into the standard vector, or npos for deterministic
  std::vector<std::size_t> std_index_;
  // per variable: index of correlation partner (npos if none); the partner
  // with the *higher* model index carries the conditional map
  std::vector<std::size_t> partner_;
  std::vector<double> pair_rho_;  // per variable, 0 if uncorrelated
};

}  // namespace relup
