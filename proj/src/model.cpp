#include "relup/model.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>
#include <utility>

#include "relup/normal.hpp"
#include "relup/rng.hpp"

namespace relup {

namespace {
constexpr std::size_t npos = static_cast<std::size_t>(-1);

// Underlying Gaussian coordinate of a Normal/Lognormal marginal.
double to_gaussian(const Marginal& m, double x) {
  if (m.kind() == Marginal::Kind::Normal) return (x - m.param1()) / m.param2();
  if (x <= 0.0)
    throw std::domain_error("to_standard: Lognormal variable must be positive");
  return (std::log(x) - m.param1()) / m.param2();
}

double from_gaussian(const Marginal& m, double z) {
  if (m.kind() == Marginal::Kind::Normal) return m.param1() + m.param2() * z;
  return std::exp(m.param1() + m.param2() * z);
}
}  // namespace

ProbabilisticModel::ProbabilisticModel(
    std::vector<std::pair<std::string, Marginal>> variables,
    std::vector<Correlation> correlations)
    : vars_(std::move(variables)), corrs_(std::move(correlations)) {
  std::unordered_set<std::string> seen;
  for (const auto& [name, m] : vars_) {
    if (!seen.insert(name).second)
      throw std::invalid_argument("duplicate variable name: " + name);
    names_.push_back(name);
  }
  std_dim_ = 0;
  std_index_.assign(vars_.size(), npos);
  partner_.assign(vars_.size(), npos);
  pair_rho_.assign(vars_.size(), 0.0);
  for (std::size_t i = 0; i < vars_.size(); ++i)
    if (!vars_[i].second.is_deterministic()) std_index_[i] = std_dim_++;

  for (const auto& c : corrs_) {
    if (c.a == c.b)
      throw std::invalid_argument("correlation must reference two distinct variables");
    if (!(std::fabs(c.rho) < 1.0))
      throw std::invalid_argument("correlation requires |rho| < 1");
    const std::size_t ia = index_of(c.a), ib = index_of(c.b);
    for (std::size_t i : {ia, ib}) {
      if (!vars_[i].second.has_gaussian_underlying())
        throw std::invalid_argument(
            "correlation only supported between Normal/Lognormal variables: " +
            vars_[i].first);
      if (partner_[i] != npos)
        throw std::invalid_argument("variable in more than one correlation pair: " +
                                    vars_[i].first);
    }
    partner_[ia] = ib;
    partner_[ib] = ia;
    pair_rho_[ia] = pair_rho_[ib] = c.rho;
  }
}

std::size_t ProbabilisticModel::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  throw std::invalid_argument("unknown variable: " + name);
}

bool ProbabilisticModel::has_variable(const std::string& name) const {
  for (const auto& n : names_)
    if (n == name) return true;
  return false;
}

std::vector<double> ProbabilisticModel::to_standard(std::span<const double> x) const {
  if (x.size() != vars_.size())
    throw std::invalid_argument("to_standard: wrong vector length");
  std::vector<double> u(std_dim_);
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    const auto& m = vars_[i].second;
    if (m.is_deterministic()) continue;
    double ui;
    if (partner_[i] == npos) {
      const double F = m.cdf(x[i]);
      if (F <= 0.0 || F >= 1.0) {
        // map support endpoints to +/-inf consistently
        ui = std_normal_quantile(F < 0.5 ? 0.0 : 1.0);
        if (!((F <= 0.0 && x[i] <= m.quantile(0.5)) ||
              (F >= 1.0 && x[i] >= m.quantile(0.5))))
          throw std::domain_error("to_standard: value outside marginal support");
      } else {
        ui = std_normal_quantile(F);
      }
    } else {
      const double z = to_gaussian(m, x[i]);
      const std::size_t j = partner_[i];
      if (j > i) {
        ui = z;  // anchor of the pair
      } else {
        const double zj = to_gaussian(vars_[j].second, x[j]);
        const double rho = pair_rho_[i];
        ui = (z - rho * zj) / std::sqrt(1.0 - rho * rho);
      }
    }
    u[std_index_[i]] = ui;
  }
  return u;
}

std::vector<double> ProbabilisticModel::from_standard(std::span<const double> u) const {
  if (u.size() != std_dim_)
    throw std::invalid_argument("from_standard: wrong vector length");
  std::vector<double> x(vars_.size());
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    const auto& m = vars_[i].second;
    if (m.is_deterministic()) {
      x[i] = m.param1();
      continue;
    }
    const double ui = u[std_index_[i]];
    if (partner_[i] == npos) {
      x[i] = m.quantile(std_normal_cdf(ui));
    } else {
      const std::size_t j = partner_[i];
      if (j > i) {
        x[i] = from_gaussian(m, ui);
      } else {
        const double zj = u[std_index_[j]];
        const double rho = pair_rho_[i];
        x[i] = from_gaussian(m, rho * zj + std::sqrt(1.0 - rho * rho) * ui);
      }
    }
  }
  return x;
}

std::vector<double> ProbabilisticModel::sample_one(std::uint64_t seed,
                                                   std::uint64_t index) const {
  CounterRng rng(seed, index);
  std::vector<double> u(std_dim_);
  for (auto& ui : u) ui = rng.normal();
  return from_standard(u);
}

std::vector<std::vector<double>> ProbabilisticModel::sample(std::uint64_t seed,
                                                            std::size_t count) const {
  std::vector<std::vector<double>> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(sample_one(seed, i));
  return out;
}

ProbabilisticModel ProbabilisticModel::extended(
    const std::vector<std::string>& extra_standard_normals) const {
  auto vars = vars_;
  for (const auto& name : extra_standard_normals)
    vars.emplace_back(name, Marginal::normal(0.0, 1.0));
  return ProbabilisticModel(std::move(vars), corrs_);
}

}  // namespace relup
