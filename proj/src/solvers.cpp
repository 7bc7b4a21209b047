#include "relup/solvers.hpp"

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <thread>

#include "relup/mvn.hpp"
#include "relup/normal.hpp"
#include "relup/parallel.hpp"
#include "relup/rng.hpp"

namespace relup {

unsigned worker_threads() {
  if (const char* env = std::getenv("RELUP_THREADS")) {
    const long v = std::atol(env);
    if (v > 0) return static_cast<unsigned>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

void parallel_for_indexed(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const unsigned nt = std::min<std::size_t>(worker_threads(), n);
  if (nt <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  constexpr std::size_t kChunk = 1024;
  std::vector<std::thread> pool;
  pool.reserve(nt);
  for (unsigned t = 0; t < nt; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t begin = next.fetch_add(kChunk);
        if (begin >= n) return;
        const std::size_t end = std::min(n, begin + kChunk);
        for (std::size_t i = begin; i < end; ++i) fn(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

// ---------------------------------------------------------------------------
// StandardSpaceFn

struct StandardSpaceFn::Impl {
  ProbabilisticModel model;
  LimitStateExpression expr;
  mutable std::atomic<long long> evals{0};

  Impl(const ProbabilisticModel& m, const LimitStateExpression& e)
      : model(m), expr(e) {}
};

StandardSpaceFn::StandardSpaceFn(const ProbabilisticModel& model,
                                 const LimitStateExpression& expr)
    : impl_(std::make_shared<Impl>(model, expr)) {}

double StandardSpaceFn::operator()(std::span<const double> u) const {
  const auto x = impl_->model.from_standard(u);
  impl_->evals.fetch_add(1, std::memory_order_relaxed);
  return impl_->expr.evaluate(VarFrame{impl_->model.names(), x});
}

std::vector<double> StandardSpaceFn::gradient(std::span<const double> u) const {
  const std::size_t d = dim();
  const auto x = impl_->model.from_standard(u);
  const VarFrame frame{impl_->model.names(), x};
  const LimitStateExpression& leaf = impl_->expr.active_leaf(frame);
  impl_->evals.fetch_add(1, std::memory_order_relaxed);
  const double f0 = leaf.evaluate(frame);

  double norm = 0.0;
  for (double ui : u) norm += ui * ui;
  const double h = 1e-6 * (1.0 + std::sqrt(norm));

  std::vector<double> g(d), up(u.begin(), u.end());
  for (std::size_t i = 0; i < d; ++i) {
    up[i] = u[i] + h;
    const auto xp = impl_->model.from_standard(up);
    impl_->evals.fetch_add(1, std::memory_order_relaxed);
    g[i] = (leaf.evaluate(VarFrame{impl_->model.names(), xp}) - f0) / h;
    up[i] = u[i];
  }
  return g;
}

std::size_t StandardSpaceFn::dim() const { return impl_->model.standard_dim(); }
long long StandardSpaceFn::n_evals() const { return impl_->evals.load(); }
void StandardSpaceFn::add_evals(long long n) const { impl_->evals.fetch_add(n); }
const ProbabilisticModel& StandardSpaceFn::model() const { return impl_->model; }
const LimitStateExpression& StandardSpaceFn::expr() const { return impl_->expr; }

// ---------------------------------------------------------------------------
// Monte Carlo

ReliabilityResult monte_carlo(const ProbabilisticModel& model,
                              const LimitStateExpression& expr, std::size_t n,
                              std::uint64_t seed) {
  if (n < 100) throw std::invalid_argument("monte_carlo: n must be >= 100");
  StandardSpaceFn G(model, expr);
  const std::size_t d = G.dim();
  std::vector<unsigned char> fail(n, 0);
  parallel_for_indexed(n, [&](std::size_t i) {
    CounterRng rng(seed, i);
    std::vector<double> u(d);
    for (auto& ui : u) ui = rng.normal();
    fail[i] = G(u) <= 0.0 ? 1 : 0;
  });
  long long hits = 0;
  for (std::size_t i = 0; i < n; ++i) hits += fail[i];  // fixed-order reduction
  const double p = static_cast<double>(hits) / static_cast<double>(n);
  ReliabilityResult r;
  r.p = p;
  r.beta = -std_normal_quantile(p);
  r.std_error = std::sqrt(p * (1.0 - p) / static_cast<double>(n));
  r.n_evals = G.n_evals();
  return r;
}

// ---------------------------------------------------------------------------
// Design point search

namespace {

std::vector<LimitStateExpression> top_components(const LimitStateExpression& expr) {
  if (expr.kind() == LimitStateExpression::Kind::Intersection) return expr.children();
  return {expr};
}

struct ComponentEval {
  double value;
  Eigen::VectorXd grad;
};

ComponentEval eval_component(const StandardSpaceFn& base,
                             const LimitStateExpression& comp,
                             const Eigen::VectorXd& u) {
  const auto& model = base.model();
  const std::size_t d = u.size();
  std::vector<double> uv(u.data(), u.data() + d);
  const auto x = model.from_standard(uv);
  const VarFrame frame{model.names(), x};
  const LimitStateExpression& leaf = comp.active_leaf(frame);
  base.add_evals(1);
  ComponentEval out;
  out.value = leaf.evaluate(frame);
  const double h = 1e-6 * (1.0 + u.norm());
  out.grad.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    uv[i] = u[i] + h;
    const auto xp = model.from_standard(uv);
    base.add_evals(1);
    out.grad[i] = (leaf.evaluate(VarFrame{model.names(), xp}) - out.value) / h;
    uv[i] = u[i];
  }
  return out;
}

// min ||w||^2 subject to the linearized constraints A w <= bs, solved by
// active-set enumeration (component counts here are small).
bool solve_linearized_qp(const Eigen::MatrixXd& A, const Eigen::VectorXd& bs,
                         Eigen::VectorXd& w) {
  const int k = static_cast<int>(A.rows());
  const double tol = 1e-9 * (1.0 + bs.cwiseAbs().maxCoeff());
  // unconstrained minimizer
  if ((bs.array() >= -tol).all()) {
    w.setZero(A.cols());
    return true;
  }
  bool found = false;
  double best = 0.0;
  for (int mask = 1; mask < (1 << k); ++mask) {
    std::vector<int> S;
    for (int i = 0; i < k; ++i)
      if (mask >> i & 1) S.push_back(i);
    Eigen::MatrixXd As(S.size(), A.cols());
    Eigen::VectorXd bsS(S.size());
    for (std::size_t i = 0; i < S.size(); ++i) {
      As.row(i) = A.row(S[i]);
      bsS[i] = bs[S[i]];
    }
    const Eigen::MatrixXd M = As * As.transpose();
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
    if (ldlt.info() != Eigen::Success) continue;
    const Eigen::VectorXd mu = ldlt.solve(-bsS);
    if ((M * mu + bsS).norm() > 1e-6 * (1.0 + bsS.norm())) continue;  // singular
    if ((mu.array() < -1e-10).any()) continue;
    const Eigen::VectorXd cand = -As.transpose() * mu;
    if (((A * cand - bs).array() > tol).any()) continue;
    const double nn = cand.squaredNorm();
    if (!found || nn < best) {
      best = nn;
      w = cand;
      found = true;
    }
  }
  return found;
}

bool expr_is_composite(const LimitStateExpression& e) {
  if (e.kind() != LimitStateExpression::Kind::Leaf) return true;
  return false;
}

}  // namespace

FormResult form(const ProbabilisticModel& model, const LimitStateExpression& expr,
                const FormOptions& opts) {
  StandardSpaceFn G(model, expr);
  const std::size_t d = G.dim();
  if (d == 0) throw std::invalid_argument("form: model has no random variables");
  const auto comps = top_components(expr);
  const int k = static_cast<int>(comps.size());
  if (k > 12) throw std::invalid_argument("form: too many intersection components");

  Eigen::VectorXd u = Eigen::VectorXd::Zero(d);
  if (opts.start) {
    if (opts.start->size() != d)
      throw std::invalid_argument("form: start point has wrong dimension");
    for (std::size_t i = 0; i < d; ++i) u[i] = (*opts.start)[i];
  }

  const double g_origin = G(std::vector<double>(d, 0.0));
  const double feas_scale = 1.0 + std::fabs(g_origin);
  double merit_c = 10.0;

  FormResult res;
  res.diag.heuristic_nonsmooth = expr_is_composite(expr);
  res.diag.converged = false;

  std::vector<ComponentEval> ce(k);
  for (int it = 0; it < opts.max_iter; ++it) {
    Eigen::MatrixXd A(k, d);
    Eigen::VectorXd g(k), bs(k);
    double gmax = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < k; ++i) {
      ce[i] = eval_component(G, comps[i], u);
      g[i] = ce[i].value;
      gmax = std::max(gmax, g[i]);
      A.row(i) = ce[i].grad;
      bs[i] = ce[i].grad.dot(u) - g[i];
    }
    Eigen::VectorXd w;
    if (!solve_linearized_qp(A, bs, w)) break;

    Eigen::VectorXd step = w - u;
    const double ns = step.norm();

    if (k == 1) {
      // iHL-RF merit line search
      const double gn = A.row(0).norm();
      if (gn > 1e-14) merit_c = std::max(merit_c, 2.0 * u.norm() / gn + 10.0);
      auto merit = [&](const Eigen::VectorXd& v) {
        std::vector<double> vv(v.data(), v.data() + d);
        return 0.5 * v.squaredNorm() + merit_c * std::fabs(G(vv));
      };
      const double m0 = merit(u);
      double lam = 1.0;
      while (lam > 1e-4 && merit(u + lam * step) > m0 - 1e-4 * lam * ns * ns)
        lam *= 0.5;
      u += lam * step;
    } else {
      // merit line search on ||u||^2/2 + c * sum of constraint violations
      auto comp_value = [&](const Eigen::VectorXd& v, int i) {
        std::vector<double> vv(v.data(), v.data() + d);
        const auto x = G.model().from_standard(vv);
        G.add_evals(1);
        return comps[i].evaluate(VarFrame{G.model().names(), x});
      };
      double min_gn = std::numeric_limits<double>::infinity();
      for (int i = 0; i < k; ++i) min_gn = std::min(min_gn, A.row(i).norm());
      if (min_gn > 1e-14) merit_c = std::max(merit_c, 2.0 * u.norm() / min_gn + 10.0);
      auto merit = [&](const Eigen::VectorXd& v) {
        double viol = 0.0;
        for (int i = 0; i < k; ++i) viol += std::max(0.0, comp_value(v, i));
        return 0.5 * v.squaredNorm() + merit_c * viol;
      };
      const double m0 = merit(u);
      double lam = std::min(1.0, 4.0 / std::max(ns, 1e-12));
      double best_lam = lam, best_m = merit(u + lam * step);
      while (lam > 1e-3 && best_m > m0 - 1e-4 * lam * ns * ns) {
        lam *= 0.5;
        const double m = merit(u + lam * step);
        if (m < best_m) {
          best_m = m;
          best_lam = lam;
        }
      }
      u += best_lam * step;
    }
    res.diag.iterations = it + 1;

    if (ns <= opts.tol * (1.0 + u.norm()) &&
        std::fabs(gmax) <= 1e-6 * feas_scale) {
      res.diag.converged = true;
      break;
    }
  }

  res.n_evals = G.n_evals();
  if (!res.diag.converged) return res;  // p absent, flagged

  const double bnorm = u.norm();
  res.diag.design_point.assign(u.data(), u.data() + d);
  res.diag.alpha.resize(d);
  for (std::size_t i = 0; i < d; ++i)
    res.diag.alpha[i] = bnorm > 0 ? -u[i] / bnorm : 0.0;

  const bool origin_fails = g_origin <= 0.0;
  res.diag.origin_in_failure = origin_fails;
  const double beta = origin_fails ? -bnorm : bnorm;
  res.beta = beta;
  res.p = std_normal_cdf(-beta);

  // linearizations at the design point for system-level use
  std::vector<std::vector<double>> R(k, std::vector<double>(k, 1.0));
  std::vector<double> b(k);
  std::vector<Eigen::VectorXd> alphas(k);
  bool sys_ok = true;
  for (int i = 0; i < k; ++i) {
    const auto cei = eval_component(G, comps[i], u);
    const double gn = cei.grad.norm();
    if (gn < 1e-14) {
      sys_ok = false;
      break;
    }
    alphas[i] = cei.grad / gn;
    b[i] = (cei.grad.dot(u) - cei.value) / gn;
    LinearizedComponent lc;
    lc.alpha.assign(alphas[i].data(), alphas[i].data() + d);
    lc.b = b[i];
    res.components.push_back(lc);
  }
  if (sys_ok) {
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j)
        if (i != j) R[i][j] = std::clamp(alphas[i].dot(alphas[j]), -1.0, 1.0);
    res.p_first_order_system = multivariate_normal_cdf(b, R);
  }
  res.n_evals = G.n_evals();
  return res;
}

// ---------------------------------------------------------------------------
// SORM

namespace {

// Orthonormal basis whose last column equals dir.
Eigen::MatrixXd rotation_with_last_axis(const Eigen::VectorXd& dir) {
  const int d = static_cast<int>(dir.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(d, d);
  A.col(0) = dir;
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
  Eigen::MatrixXd Q = qr.householderQ();
  if (Q.col(0).dot(dir) < 0) Q.col(0) *= -1.0;
  // move dir to the last column
  Eigen::MatrixXd out(d, d);
  out.rightCols(1) = Q.col(0);
  out.leftCols(d - 1) = Q.rightCols(d - 1);
  return out;
}

// Central-difference gradient and Hessian of the active leaf of `comp` at u.
void grad_and_hessian(const StandardSpaceFn& base,
                      const LimitStateExpression& comp,
                      const Eigen::VectorXd& u, Eigen::VectorXd& grad,
                      Eigen::MatrixXd& H, double* f0_out = nullptr) {
  const auto& model = base.model();
  const int d = static_cast<int>(u.size());
  std::vector<double> uv(u.data(), u.data() + d);
  const auto x0 = model.from_standard(uv);
  const VarFrame f0{model.names(), x0};
  const LimitStateExpression& leaf = comp.active_leaf(f0);

  auto eval = [&](const Eigen::VectorXd& v) {
    std::vector<double> vv(v.data(), v.data() + d);
    const auto xx = model.from_standard(vv);
    base.add_evals(1);
    const double val = leaf.evaluate(VarFrame{model.names(), xx});
    if (!std::isfinite(val))
      throw std::runtime_error("sorm: non-finite limit state value");
    return val;
  };


  // Economical stencil: the axis evaluations are shared between the central
  // gradient, the central diagonal, and the one-sided cross differences, so
  // the cost is 1 + 2d + d(d-1)/2 evaluations instead of O(2d^2). The O(h)
  // cross-term error is immaterial for proposal fitting and curvature
  // corrections.
  const double h = 1e-4 * (1.0 + u.norm());
  H.resize(d, d);
  grad.resize(d);
  const double fc = eval(u);
  if (f0_out) *f0_out = fc;
  std::vector<double> fp(d), fm(d);
  for (int i = 0; i < d; ++i) {
    Eigen::VectorXd up = u, um = u;
    up[i] += h;
    um[i] -= h;
    fp[i] = eval(up);
    fm[i] = eval(um);
    grad[i] = (fp[i] - fm[i]) / (2.0 * h);
    H(i, i) = (fp[i] - 2.0 * fc + fm[i]) / (h * h);
  }
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      Eigen::VectorXd upp = u;
      upp[i] += h;
      upp[j] += h;
      H(i, j) = H(j, i) = (eval(upp) - fp[i] - fp[j] + fc) / (h * h);
    }
  }
}

std::vector<double> surface_curvatures(const StandardSpaceFn& base,
                                       const LimitStateExpression& comp,
                                       const Eigen::VectorXd& u) {
  const int d = static_cast<int>(u.size());
  Eigen::VectorXd grad;
  Eigen::MatrixXd H;
  grad_and_hessian(base, comp, u, grad, H);
  const double gn = grad.norm();
  if (gn < 1e-14) throw std::runtime_error("sorm: vanishing gradient");

  if (d == 1) return {};
  const Eigen::MatrixXd Q = rotation_with_last_axis(-grad / gn);
  const Eigen::MatrixXd B = Q.transpose() * (H / gn) * Q;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
      B.topLeftCorner(d - 1, d - 1));
  std::vector<double> kap(es.eigenvalues().data(), es.eigenvalues().data() + d - 1);
  return kap;
}

}  // namespace

double breitung_correction(const StandardSpaceFn& G, std::span<const double> u,
                           double beta, bool& degenerate) {
  Eigen::VectorXd uu = Eigen::Map<const Eigen::VectorXd>(u.data(), u.size());
  const auto kap = surface_curvatures(G, G.expr(), uu);
  double corr = 1.0;
  for (double k : kap) {
    const double t = 1.0 + beta * k;
    if (t <= 0.0) {
      degenerate = true;
      continue;
    }
    corr /= std::sqrt(t);
  }
  return corr;
}

ReliabilityResult sorm(const ProbabilisticModel& model,
                       const LimitStateExpression& expr,
                       const FormResult& form_result) {
  if (!form_result.diag.converged || !form_result.beta || *form_result.beta <= 0.0)
    throw std::invalid_argument("sorm: requires a converged FORM result with beta > 0");
  StandardSpaceFn G(model, expr);
  const std::size_t d = G.dim();
  const Eigen::VectorXd u = Eigen::Map<const Eigen::VectorXd>(
      form_result.diag.design_point.data(), d);
  ReliabilityResult res;
  res.diag = form_result.diag;
  const double beta = *form_result.beta;

  std::vector<double> kap;
  try {
    kap = surface_curvatures(G, expr, u);
  } catch (const std::runtime_error&) {
    res.diag.converged = false;
    res.n_evals = G.n_evals();
    return res;
  }
  double corr = 1.0;
  for (double k : kap) {
    const double t = 1.0 + beta * k;
    if (t <= 0.0 || !std::isfinite(t)) {
      res.diag.degenerate_curvature = true;
      continue;
    }
    corr /= std::sqrt(t);
  }
  res.diag.curvatures = kap;
  res.p = std_normal_cdf(-beta) * corr;
  res.beta = -std_normal_quantile(*res.p);
  res.n_evals = G.n_evals();
  return res;
}

// ---------------------------------------------------------------------------
// Line searches and APIS

std::optional<double> line_search(const std::function<double(double)>& G,
                                  double t_max, double tol) {
  constexpr int kCells = 64;
  const double lo = -t_max, dx = 2.0 * t_max / kCells;
  double prev_t = lo, prev_v = G(lo);
  std::vector<double> crossings;
  std::vector<bool> safe_below;  // G > 0 on the lower side of the crossing
  for (int i = 1; i <= kCells; ++i) {
    const double t = lo + i * dx;
    const double v = G(t);
    if ((prev_v <= 0.0) != (v <= 0.0)) {
      double a = prev_t, b = t, fa = prev_v;
      while (b - a > tol) {
        const double m = 0.5 * (a + b);
        const double fm = G(m);
        if ((fm <= 0.0) == (fa <= 0.0)) {
          a = m;
          fa = fm;
        } else {
          b = m;
        }
      }
      crossings.push_back(0.5 * (a + b));
      safe_below.push_back(prev_v > 0.0);
    }
    prev_t = t;
    prev_v = v;
  }
  if (crossings.empty()) return std::nullopt;
  // Prefer the crossing nearest the origin whose safe side faces the origin:
  // for t > 0 that means G > 0 below the crossing, for t < 0 the reverse.
  std::optional<double> best;
  for (std::size_t i = 0; i < crossings.size(); ++i) {
    const double t = crossings[i];
    const bool toward_origin = t >= 0.0 ? safe_below[i] : !safe_below[i];
    if (!toward_origin) continue;
    if (!best || std::fabs(t) < std::fabs(*best)) best = t;
  }
  if (!best) best = *std::min_element(
      crossings.begin(), crossings.end(),
      [](double a, double b) { return std::fabs(a) < std::fabs(b); });
  return best;
}

namespace {

// Safeguarded false-position refinement of a bracketed sign change.
double refine_crossing(const std::function<double(double)>& G, double a, double fa,
                       double b, double fb, double tol) {
  const double fscale = std::max(std::fabs(fa), std::fabs(fb));
  int side = 0;  // Illinois bookkeeping: which endpoint was retained last
  for (int it = 0; it < 80 && std::fabs(b - a) > tol; ++it) {
    double m = (std::fabs(fb - fa) > 1e-300) ? (a - fa * (b - a) / (fb - fa))
                                             : 0.5 * (a + b);
    // keep strictly inside, fall back to bisection near the ends
    const double lo = std::min(a, b), hi = std::max(a, b);
    if (!(m > lo + 0.1 * tol) || !(m < hi - 0.1 * tol)) m = 0.5 * (a + b);
    const double fm = G(m);
    // secant lands on the root to round-off for near-affine rays
    if (std::fabs(fm) <= 1e-14 * fscale) return m;
    if ((fm <= 0.0) == (fa <= 0.0)) {
      a = m;
      fa = fm;
      if (side == -1) fb *= 0.5;  // Illinois: unstick the retained endpoint
      side = -1;
    } else {
      b = m;
      fb = fm;
      if (side == 1) fa *= 0.5;
      side = 1;
    }
  }
  return 0.5 * (a + b);
}

// One APIS ray: Gauss measure of {t : G(t) <= 0}, by marching outward from
// the hyperplane (starting near the FORM beta), refining each sign change,
// and continuing past the first crossing so that rays which exit the failure
// domain again are not credited with the tail beyond the exit.
struct RayScan {
  double measure = 0.0;
  double first_crossing = 0.0;  // entry nearest the design point, if any
  bool any_crossing = false;
  bool base_fails = false;
};

RayScan scan_ray(const std::function<double(double)>& G, double beta0,
                 double t_max, double tol) {
  static const bool dense = std::getenv("RELUP_DENSE") != nullptr;
  RayScan out;
  const double f0 = G(0.0);
  out.base_fails = f0 <= 0.0;

  std::vector<double> pos;  // ascending crossings at t > 0
  const double step0 = dense ? 0.05 : std::max(0.4, 0.35 * beta0);
  double t_prev = 0.0, f_prev = f0;
  double t = dense ? step0 : std::min(std::max(0.8 * beta0, step0), t_max);
  double step = step0;
  bool cur_fail = out.base_fails;
  double covered = 0.0;  // failing mass already bracketed
  while (pos.size() < 6) {
    const double f = G(t);
    if ((f <= 0.0) != (f_prev <= 0.0)) {
      const double c = refine_crossing(G, t_prev, f_prev, t, f, tol);
      if (cur_fail) covered += std_normal_cdf(c) - std_normal_cdf(pos.empty() ? 0.0 : pos.back());
      pos.push_back(c);
      cur_fail = !cur_fail;
      if (cur_fail && !dense) {
        // Just entered the failure domain: one probe decides whether the
        // domain persists well into the tail. If it does, the mass of any
        // exit beyond the probe is below Phi(-tp), which is negligible
        // relative to Phi(-c); crediting the full tail there removes the
        // exit-search cost and the window-length noise. Otherwise the exit
        // is bracketed by the probe and refined coarsely.
        const double tp = std::min(std::max(c + 1.2, 3.9), t_max);
        if (tp > t) {
          const double fp = G(tp);
          if (fp <= 0.0) break;  // failing tail persists; assembly credits it
          const double e = refine_crossing(G, t, f, tp, fp,
                                           std::max(tol, 0.02));
          covered += std_normal_cdf(e) - std_normal_cdf(c);
          pos.push_back(e);
          cur_fail = false;
          t_prev = tp;
          f_prev = fp;
          step = 1.0;
          t = std::min(tp + step, t_max);
          step *= 1.6;
          if (t_prev >= t_max) break;
          continue;
        }
      }
      step = 1.0;  // restart the march to catch a nearby exit
    }
    if (t >= t_max) break;
    // once safe again, stop when the remaining tail cannot matter
    if (!cur_fail && !pos.empty() &&
        std_normal_cdf(-t) < 1e-2 * std::max(covered, std_normal_cdf(-pos.front())))
      break;
    t_prev = t;
    f_prev = f;
    t = std::min(t + step, t_max);
    step *= dense ? 1.0 : 1.6;
  }

  std::vector<double> neg;  // descending crossings at t < 0
  if (out.base_fails || pos.empty()) {
    t_prev = 0.0;
    f_prev = f0;
    t = -step0;
    step = step0;
    bool nf = out.base_fails;
    while (neg.size() < 6) {
      const double f = G(t);
      if ((f <= 0.0) != (f_prev <= 0.0)) {
        const double c = refine_crossing(G, t, f, t_prev, f_prev, tol);
        neg.push_back(c);
        nf = !nf;
        step = 1.0;
      }
      if (t <= -t_max) break;
      if (!nf && !neg.empty() &&
          std_normal_cdf(t) < 1e-2 * std::max(covered, 1e-12))
        break;
      t_prev = t;
      f_prev = f;
      t = std::max(t - step, -t_max);
      step *= dense ? 1.0 : 1.6;
    }
  }

  // full-line crossing list, ascending
  std::vector<double> cr(neg.rbegin(), neg.rend());
  cr.insert(cr.end(), pos.begin(), pos.end());
  if (cr.empty()) return out;  // caller applies the no-crossing convention

  out.any_crossing = true;
  out.first_crossing = pos.empty() ? neg.front() : pos.front();
  // state left of the first crossing
  bool fail = out.base_fails ? (neg.size() % 2 == 0) : (neg.size() % 2 == 1);
  double prev_cdf = 0.0;  // Phi(-inf)
  double measure = 0.0;
  for (double c : cr) {
    const double cdf = std_normal_cdf(c);
    if (fail) measure += cdf - prev_cdf;
    prev_cdf = cdf;
    fail = !fail;
  }
  if (fail) measure += 1.0 - prev_cdf;  // failing state persists beyond the scan
  out.measure = std::clamp(measure, 0.0, 1.0);
  return out;
}

// Linearized-geometry control variate for one domain: constraints from the
// FORM linearization that bound the ray parameter t from below give a
// closed-form crossing per ray, and their exact Gauss measure is a
// multinormal CDF. The sampler then only estimates the nonlinearity
// correction, which vanishes for linear limit states.
struct CvSetup {
  bool use_cv = false;
  std::vector<Eigen::VectorXd> alpha;
  std::vector<double> b, adir;
  double p_ref = 0.0;
};

CvSetup make_cv(const FormResult& fr, const Eigen::VectorXd& dir,
                std::size_t d) {
  CvSetup cv;
  if (fr.components.empty() || fr.components.size() > 6) return cv;
  const std::size_t m = fr.components.size();
  for (std::size_t i = 0; i < m; ++i) {
    cv.alpha.emplace_back(
        Eigen::Map<const Eigen::VectorXd>(fr.components[i].alpha.data(), d));
    cv.b.push_back(fr.components[i].b);
    cv.adir.push_back(cv.alpha.back().dot(dir));
  }
  std::vector<std::vector<double>> R(m, std::vector<double>(m, 1.0));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (i != j) R[i][j] = std::clamp(cv.alpha[i].dot(cv.alpha[j]), -1.0, 1.0);
  cv.p_ref = multivariate_normal_cdf(cv.b, R);
  cv.use_cv = true;
  return cv;
}

// Gauss measure along the ray base + t*dir of the linearized failure wedge
// {u : alpha_i . u <= b_i for all i}. Constraints with a component along the
// ray bound t below or above; ray-parallel ones act as indicators.
double cv_measure(const CvSetup& cv, const Eigen::VectorXd& base) {
  double t_lo = -std::numeric_limits<double>::infinity();
  double t_hi = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < cv.alpha.size(); ++c) {
    const double rest = cv.b[c] - cv.alpha[c].dot(base);
    const double ad = cv.adir[c];
    if (ad < -1e-12) {
      t_lo = std::max(t_lo, rest / ad);
    } else if (ad > 1e-12) {
      t_hi = std::min(t_hi, rest / ad);
    } else if (rest < 0.0) {
      return 0.0;  // ray-parallel constraint violated everywhere on the ray
    }
  }
  if (!(t_hi > t_lo)) return 0.0;
  return std_normal_cdf(t_hi) - std_normal_cdf(t_lo);
}

// Fixed-order compensated mean keeps results thread-count independent.
double mean_of(const std::vector<double>& xs) {
  double sum = 0.0, comp = 0.0;
  for (double t : xs) {
    const double y = t - comp;
    const double s = sum + y;
    comp = (s - sum) - y;
    sum = s;
  }
  return sum / static_cast<double>(xs.size());
}

// Regression-adjusted control-variate estimate: the coefficient adapts to
// how well the linearization tracks the true surface, so a poor fit simply
// degrades toward the plain estimator instead of adding noise.
struct DomainEstimate {
  double p = 0.0;
  double var = 0.0;             // sample variance of the residual terms
  std::vector<double> resid;    // terms - coef*controls (for covariances)
};

DomainEstimate finalize_estimate(const std::vector<double>& terms,
                                 const std::vector<double>& controls,
                                 bool use_cv, double p_ref) {
  const std::size_t n = terms.size();
  DomainEstimate est;
  const double y_bar = mean_of(terms);
  double coef = 0.0;
  if (std::getenv("RELUP_DEBUG") && use_cv) {
    const double c_bar = mean_of(controls);
    double vy = 0, vc = 0, cyc2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      vy += (terms[i] - y_bar) * (terms[i] - y_bar);
      vc += (controls[i] - c_bar) * (controls[i] - c_bar);
      cyc2 += (terms[i] - y_bar) * (controls[i] - c_bar);
    }
    vy /= (n - 1); vc /= (n - 1); cyc2 /= (n - 1);
    const double corr = (vy > 0 && vc > 0) ? cyc2 / std::sqrt(vy * vc) : 0.0;
    const double plain_rse = std::sqrt(vy / n) / y_bar;
    const double ratio_rv = vy / (y_bar * y_bar) + vc / (c_bar * c_bar) -
                            2.0 * cyc2 / (y_bar * c_bar);
    std::fprintf(stderr,
                 "[apis cv] p_ref=%.3e y=%.3e c=%.3e corr=%.3f plain_rse=%.3f "
                 "ratio_rse=%.3f\n",
                 p_ref, y_bar, c_bar, corr, plain_rse,
                 std::sqrt(std::max(0.0, ratio_rv) / n));
  }
  if (use_cv) {
    const double c_bar = mean_of(controls);
    double cyc = 0.0, ccc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      cyc += (terms[i] - y_bar) * (controls[i] - c_bar);
      ccc += (controls[i] - c_bar) * (controls[i] - c_bar);
    }
    coef = ccc > 0.0 ? std::clamp(cyc / ccc, 0.0, 2.0) : 0.0;
    est.p = y_bar + coef * (p_ref - c_bar);
  } else {
    est.p = y_bar;
  }
  est.resid.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    est.resid[i] = terms[i] - (use_cv ? coef * controls[i] : 0.0);
  const double r_bar = mean_of(est.resid);
  double rvar = 0.0;
  for (double r : est.resid) rvar += (r - r_bar) * (r - r_bar);
  est.var = n > 1 ? rvar / (n - 1) : 0.0;
  return est;
}

}  // namespace

ReliabilityResult apis(const ProbabilisticModel& model,
                       const LimitStateExpression& expr, const ApisOptions& opts,
                       std::uint64_t seed) {
  if (opts.n_ls < 1) throw std::invalid_argument("apis: n_ls must be >= 1");
  if (!(opts.t_max > 0.0)) throw std::invalid_argument("apis: t_max must be > 0");

  const FormResult fr = form(model, expr);
  if (!fr.diag.converged)
    throw std::runtime_error("apis: FORM prerequisite did not converge");
  if (!fr.beta || *fr.beta <= 0.0)
    throw std::runtime_error(
        "apis: origin lies in the failure domain; geometry is degenerate");
  const double beta0 = *fr.beta;

  StandardSpaceFn G(model, expr);
  const std::size_t d = G.dim();
  if (d < 1) throw std::invalid_argument("apis: empty standard space");

  // direction toward the design point; hyperplane basis orthogonal to it
  Eigen::VectorXd dir = Eigen::Map<const Eigen::VectorXd>(
      fr.diag.design_point.data(), d);
  dir /= dir.norm();
  const Eigen::MatrixXd Q = rotation_with_last_axis(dir);
  const Eigen::MatrixXd B = Q.leftCols(d - 1);  // d x (d-1)

  const double spread = opts.sampler_spread;
  const std::size_t n_total = static_cast<std::size_t>(opts.n_ls);
  const std::size_t dh = d - 1;  // hyperplane dimension
  const CvSetup cv = make_cv(fr, dir, d);

  std::vector<double> terms(n_total);
  std::vector<double> controls(n_total, 0.0);
  std::vector<signed char> miss(n_total, 0);  // 1 = safe, -1 = failing

  auto scan_one = [&](std::size_t i, const Eigen::VectorXd& v, double w) {
    const Eigen::VectorXd base = B * v;
    auto Gray = [&](double t) {
      Eigen::VectorXd u = base + t * dir;
      return G(std::span<const double>(u.data(), d));
    };
    const RayScan rs = scan_ray(Gray, beta0, opts.t_max, opts.tol);
    double measure;
    if (rs.any_crossing) {
      measure = rs.measure;
    } else if (rs.base_fails) {
      measure = 1.0;
      miss[i] = -1;
    } else {
      measure = std_normal_cdf(-opts.t_max);
      miss[i] = 1;
    }
    terms[i] = measure * w;
  };

  // log density of the stage-1 proposal N(0, spread^2 I), constants dropped
  // against log phi so that the weight is exp(log phi - log psi).
  auto log_phi = [dh](const Eigen::VectorXd& v) {
    return -0.5 * v.squaredNorm() -
           0.5 * static_cast<double>(dh) * std::log(2.0 * M_PI);
  };
  auto log_psi1 = [dh, spread](const Eigen::VectorXd& v) {
    return -0.5 * v.squaredNorm() / (spread * spread) -
           0.5 * static_cast<double>(dh) * std::log(2.0 * M_PI) -
           static_cast<double>(dh) * std::log(spread);
  };

  // Second-order proposal. The crossing distance along a ray through
  // hyperplane point v behaves like t(v) ~ beta + a_j.v + v'M_j v/2 per
  // component, so the integrand Phi(-t(v))*phi(v) decays with precision
  // roughly I + r*sum(M_j), r = phi(beta)/Phi(-beta). The proposal is that
  // curvature-narrowed Gaussian, used defensively in a mixture with the
  // base density so importance weights stay bounded. Linear problems have
  // zero curvature and keep the plain estimator (and its exact
  // zero-variance property).
  bool adapted = false;
  // Per-component quadratic crossing model t_j(v) = t0_j + a_j.v + v'M_j v/2,
  // reused below as a control variate for the sampled ray measures.
  std::vector<Eigen::VectorXd> mod_gt;
  std::vector<Eigen::MatrixXd> mod_M;
  std::vector<double> mod_t0;
  std::vector<int> mod_side;  // +1: fails beyond t_j, -1: fails before t_j
  Eigen::MatrixXd fit_L;          // Cholesky factor of the shared covariance
  Eigen::LLT<Eigen::MatrixXd> fit_llt;
  double fit_logdet = 0.0;
  std::vector<Eigen::VectorXd> fit_mu;   // one mean per mixture component
  std::vector<double> fit_lw;            // log component weights, normalized
  if (dh >= 1) {
    try {
      Eigen::MatrixXd prec = Eigen::MatrixXd::Identity(dh, dh);
      const double rate = std_normal_pdf(beta0) / std_normal_cdf(-beta0);
      const Eigen::VectorXd up = Eigen::Map<const Eigen::VectorXd>(
          fr.diag.design_point.data(), d);
      std::size_t n_curved = 0;
      for (const auto& comp : top_components(expr)) {
        Eigen::VectorXd grad;
        Eigen::MatrixXd H;
        double fcomp = 0.0;
        grad_and_hessian(G, comp, up, grad, H, &fcomp);
        const double gd = grad.dot(dir);
        if (std::fabs(gd) < 1e-10) continue;
        const Eigen::VectorXd gt = -(B.transpose() * grad) / gd;  // dt/dv
        const Eigen::VectorXd hd = B.transpose() * (H * dir);
        const Eigen::MatrixXd M =
            -(B.transpose() * H * B + hd * gt.transpose() +
              gt * hd.transpose() +
              (dir.dot(H * dir)) * gt * gt.transpose()) /
            gd;
        prec += rate * M;
        ++n_curved;
        if (std::fabs(gd) >= 0.3 * grad.norm()) {
          // transverse component: quadratic model of its crossing distance
          mod_gt.push_back(gt);
          mod_M.push_back(M);
          mod_t0.push_back(beta0 - fcomp / gd);
          mod_side.push_back(gd < 0.0 ? +1 : -1);
        } else {
          // near-ray-parallel component: solving for t(v) divides by the
          // vanishing along-ray slope, so model it as an in-plane indicator
          // f(v) <= 0 from the quadratic of f itself at the design point
          mod_gt.push_back(B.transpose() * grad);
          mod_M.push_back(B.transpose() * H * B);
          mod_t0.push_back(fcomp);
          mod_side.push_back(0);
        }
        if (std::getenv("RELUP_DEBUG"))
          std::fprintf(stderr,
                       "[apis comp] f0=%.3e gd=%.3e t0=%.3f side=%+d |gt|=%.2f\n",
                       fcomp, gd, mod_t0.back(), mod_side.back(),
                       mod_gt.back().norm());
      }
      if (n_curved > 0) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(
            Eigen::MatrixXd(0.5 * (prec + prec.transpose())));
        // sigma per direction clamped to [0.3, 1] times the base spread; the
        // defensive mixture component already covers wider-than-base tails.
        // Eigenvalue magnitudes are used so that a surface crossed from the
        // reverse side (flipped curvature sign) still narrows the proposal.
        const Eigen::VectorXd lam =
            eig.eigenvalues().cwiseAbs().cwiseMax(1.0 / (spread * spread))
                .cwiseMin(11.0 / (spread * spread));
        const Eigen::MatrixXd phat = eig.eigenvectors() * lam.asDiagonal() *
                                     eig.eigenvectors().transpose();
        const Eigen::MatrixXd cov = eig.eigenvectors() *
                                    lam.cwiseInverse().asDiagonal() *
                                    eig.eigenvectors().transpose();
        fit_llt.compute(cov);
        if (fit_llt.info() == Eigen::Success) {
          fit_L = fit_llt.matrixL();
          fit_logdet = 2.0 * fit_L.diagonal().array().log().sum();
          // unshifted copy first, then one tilted copy per component
          fit_mu.push_back(Eigen::VectorXd::Zero(dh));
          fit_lw.push_back(0.0);
          const double narrowing = (lam.array() - 1.0).abs().maxCoeff();
          if (narrowing > 1e-10 || fit_mu.size() > 1) {
            // normalize the component log weights
            double lmax = *std::max_element(fit_lw.begin(), fit_lw.end());
            double sum = 0.0;
            for (double lw : fit_lw) sum += std::exp(lw - lmax);
            const double lnorm = lmax + std::log(sum);
            for (double& lw : fit_lw) lw -= lnorm;
            adapted = true;
            if (std::getenv("RELUP_DEBUG")) {
              std::fprintf(stderr, "[apis prop] rate=%.2f ncomp=%zu sd:",
                           rate, fit_mu.size());
              for (std::size_t j = 0; j < dh; ++j)
                std::fprintf(stderr, " %.2f", 1.0 / std::sqrt(lam[j]));
              std::fprintf(stderr, " |mu|:");
              for (const auto& mu : fit_mu)
                std::fprintf(stderr, " %.2f", mu.norm());
              std::fprintf(stderr, "\n");
            }
          }
        }
      }
    } catch (const std::exception&) {
      adapted = false;  // curvature unavailable; keep the base density
      mod_gt.clear();
      mod_M.clear();
      mod_t0.clear();
      mod_side.clear();
    }
  }

  // Quadratic-model control variate: the modeled ray measure shares the
  // interaction structure of the true one, so regression on it removes the
  // variance the Gaussian proposal cannot. Its mean under the proposal is
  // estimated by model-only Monte Carlo (no limit-state calls).
  const bool model_cv = !mod_gt.empty();
  auto model_measure = [&](const Eigen::VectorXd& v) {
    double lo = 0.0;
    double hi = opts.t_max;
    for (std::size_t j = 0; j < mod_gt.size(); ++j) {
      const double t = mod_t0[j] + mod_gt[j].dot(v) + 0.5 * v.dot(mod_M[j] * v);
      if (!std::isfinite(t)) return 0.0;
      if (mod_side[j] > 0) lo = std::max(lo, t);
      else if (mod_side[j] < 0) hi = std::min(hi, t);
      else if (t > 0.0) return 0.0;  // in-plane indicator component is safe
    }
    if (!(hi > lo) || lo > 40.0) return 0.0;
    double m = std_normal_cdf(-lo);
    if (hi < 40.0) m -= std_normal_cdf(-hi);
    return std::max(m, 0.0);
  };

  // density of the adapted mixture (log), shared covariance across copies
  auto log_fit_density = [&](const Eigen::VectorXd& v) {
    double lmax = -std::numeric_limits<double>::infinity();
    std::vector<double> ls(fit_mu.size());
    for (std::size_t j = 0; j < fit_mu.size(); ++j) {
      ls[j] = fit_lw[j] -
              0.5 * fit_llt.matrixL().solve(v - fit_mu[j]).squaredNorm() -
              0.5 * static_cast<double>(dh) * std::log(2.0 * M_PI) -
              0.5 * fit_logdet;
      lmax = std::max(lmax, ls[j]);
    }
    double sum = 0.0;
    for (double l : ls) sum += std::exp(l - lmax);
    return lmax + std::log(sum);
  };

  // draw the hyperplane point for ray i and return the proposal log density
  constexpr double w_fit = 0.8;  // defensive mixture: weights stay <= 5
  auto draw_v = [&](std::size_t i, Eigen::VectorXd& v) {
    CounterRng rng(seed, i);
    if (!adapted) {
      for (std::size_t j = 0; j < dh; ++j) v[j] = spread * rng.normal();
      return log_psi1(v);
    }
    const double u0 = std_normal_cdf(rng.normal());
    Eigen::VectorXd z(dh);
    for (std::size_t j = 0; j < dh; ++j) z[j] = rng.normal();
    if (u0 >= w_fit) {
      v = spread * z;
    } else {
      // pick a mixture copy by its weight
      double r = u0 / w_fit;
      std::size_t pick = 0;
      for (; pick + 1 < fit_mu.size(); ++pick) {
        r -= std::exp(fit_lw[pick]);
        if (r < 0.0) break;
      }
      v = fit_mu[pick] + fit_L * z;
    }
    const double la = log_psi1(v), lb = log_fit_density(v);
    const double lmax = std::max(la, lb);
    return lmax + std::log((1.0 - w_fit) * std::exp(la - lmax) +
                           w_fit * std::exp(lb - lmax));
  };

  const bool use_cv = model_cv || cv.use_cv;
  double p_ref = cv.p_ref;
  if (model_cv) {
    // mean of the modeled measure under the proposal, from model-only draws
    // on fresh substreams of the same counter-based generator
    const std::size_t n_model = 40000;
    std::vector<double> mterms(n_model);
    parallel_for_indexed(n_model, [&](std::size_t k) {
      Eigen::VectorXd v(dh);
      const double log_mix = draw_v(n_total + k, v);
      mterms[k] = model_measure(v) * std::exp(log_phi(v) - log_mix);
    });
    p_ref = mean_of(mterms);
  }

  parallel_for_indexed(n_total, [&](std::size_t i) {
    Eigen::VectorXd v(dh);
    const double log_mix = draw_v(i, v);
    const double w = std::exp(log_phi(v) - log_mix);
    scan_one(i, v, w);
    if (model_cv) controls[i] = model_measure(v) * w;
    else if (cv.use_cv) controls[i] = cv_measure(cv, B * v) * w;
  });

  if (std::getenv("RELUP_DEBUG2") && adapted) {
    // top contributions and where they came from, for proposal diagnosis
    std::vector<std::size_t> idx(n_total);
    for (std::size_t i = 0; i < n_total; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return terms[a] > terms[b]; });
    double tot = 0.0;
    std::size_t nz = 0;
    for (double x : terms) { tot += x; if (x > 0.0) ++nz; }
    std::fprintf(stderr, "[apis top] nonzero=%zu total=%.3e\n", nz, tot);
    for (int k = 0; k < 10; ++k) {
      const std::size_t i = idx[k];
      Eigen::VectorXd v(dh);
      draw_v(i, v);
      std::fprintf(stderr, "  i=%zu frac=%.3f |v|=%.2f\n", i,
                   terms[i] / tot, v.norm());
    }
    // contribution-weighted moments along each proposal eigendirection,
    // in units of the fitted sd: reveals under/over-dispersion and shift
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ed(
        (fit_L * fit_L.transpose()).eval());
    Eigen::VectorXd m1 = Eigen::VectorXd::Zero(dh), m2 = Eigen::VectorXd::Zero(dh);
    double sw = 0.0, sw2 = 0.0;
    for (std::size_t i = 0; i < n_total; ++i) {
      if (terms[i] <= 0.0) continue;
      Eigen::VectorXd v(dh);
      draw_v(i, v);
      const Eigen::VectorXd c = ed.eigenvectors().transpose() * v;
      m1 += terms[i] * c;
      m2 += terms[i] * c.cwiseAbs2();
      sw += terms[i];
      sw2 += terms[i] * terms[i];
    }
    m1 /= sw; m2 /= sw;
    std::fprintf(stderr, "  ess=%.1f\n  dir(sd_fit, mean, sd_w):\n", sw * sw / sw2);
    for (std::size_t j = 0; j < dh; ++j)
      std::fprintf(stderr, "    %.2f %+.2f %.2f\n",
                   std::sqrt(ed.eigenvalues()[j]), m1[j],
                   std::sqrt(std::max(0.0, m2[j] - m1[j] * m1[j])));
  }

  const DomainEstimate est = finalize_estimate(terms, controls, use_cv, p_ref);

  ReliabilityResult res;
  res.p = std::clamp(est.p, 0.0, 1.0);
  res.beta = -std_normal_quantile(*res.p);
  res.std_error = std::sqrt(est.var / n_total);
  res.n_evals = G.n_evals() + fr.n_evals;
  res.diag = fr.diag;
  for (signed char m : miss) {
    if (m > 0) ++res.diag.no_crossing_safe;
    if (m < 0) ++res.diag.no_crossing_fail;
  }
  return res;
}

}  // namespace relup
