#pragma once

#include <acsel/likelihood.hpp>
#include <acsel/linalg.hpp>
#include <acsel/models.hpp>
#include <acsel/nelder_mead.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace acsel {

struct OptimizerOptions {
  /// Number of starting points: the moment-based start plus restarts-1 random ones.
  std::size_t restarts = 3;
  /// Evaluation budget of one simplex run.
  std::size_t max_evaluations = 20000;
  /// Simplex restarts from the incumbent after convergence.
  std::size_t polish_rounds = 3;
  double xtol = 1e-8;
  /// Relative tolerance on -2 L_n.
  double ftol = 1e-12;
  /// Finite-difference step h_i = fd_scale * max(|theta_i|, fd_floor).
  double fd_scale = std::cbrt(std::numeric_limits<double>::epsilon());
  double fd_floor = 1e-2;
  /// Seed of the random restart points.
  std::uint64_t seed = 0;
  /// Moment order r of the admissible region.
  double moment_order = kDefaultMomentOrder;
  /// Compute F_hat, G_hat and the sandwich covariance at the optimum.
  bool compute_covariance = true;
  /// Newton steps on the finite-difference score after the simplex search
  /// (interior optima only; a step is kept only if it raises L_n).
  std::size_t newton_steps = 2;

  /// Looser settings for Monte Carlo loops: one start, one polish round, no
  /// covariance. Criterion differences between candidates are orders of
  /// magnitude above these tolerances.
  static OptimizerOptions fast() {
    OptimizerOptions o;
    o.restarts = 1;
    o.polish_rounds = 1;
    o.ftol = 1e-9;
    o.xtol = 1e-4;
    o.compute_covariance = false;
    o.newton_steps = 0;
    return o;
  }

  void validate() const {
    if (restarts < 1) throw InvalidParameters("restarts must be >= 1");
    if (!(xtol > 0.0) || !(ftol > 0.0)) throw InvalidParameters("tolerances must be > 0");
    if (!(fd_scale > 0.0) || !(fd_floor > 0.0))
      throw InvalidParameters("finite-difference steps must be > 0");
    if (max_evaluations < 1) throw InvalidParameters("max_evaluations must be >= 1");
  }
};

/// Penalty weight on constraint violation added to -2 L_n.
inline constexpr double kInfeasibilityPenalty = 1e8;
/// Distance to a constraint below which the optimum is flagged as a boundary point.
inline constexpr double kBoundaryTolerance = 1e-6;

struct ConvergenceInfo {
  bool converged = false;
  /// Optimum within kBoundaryTolerance of a constraint.
  bool boundary = false;
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
  /// Index of the start that produced the optimum (0 = moment-based).
  std::size_t best_start = 0;
  std::size_t starts_run = 0;
  std::size_t starts_converged = 0;
};

struct FitResult {
  ModelSpec spec;
  ParamVector theta;
  double loglik = 0.0;
  std::size_t n = 0;
  ConvergenceInfo convergence;
  bool has_covariance = false;
  /// Why the covariance is missing, if it is.
  std::string covariance_note;
  /// |m| x |m| over active slots, in active_indices() order.
  Matrix F_hat;
  Matrix G_hat;
  /// Asymptotic covariance of sqrt(n) (theta_hat - theta*).
  Matrix sandwich;
  /// sqrt(diag(sandwich) / n), one per active slot.
  std::vector<double> std_errors;
};

struct ScoreCurvature {
  Matrix G_hat;
  Matrix F_hat;
};

namespace detail {

inline std::vector<double> fd_steps(std::span<const double> theta,
                                    const std::vector<std::size_t>& idx,
                                    const OptimizerOptions& opts) {
  std::vector<double> h(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k)
    h[k] = opts.fd_scale * std::max(std::abs(theta[idx[k]]), opts.fd_floor);
  return h;
}

}  // namespace detail

/// Per-observation score outer product G_hat and curvature F_hat over the
/// active slots, by central finite differences of q_hat_t.
inline ScoreCurvature score_and_curvature(const ModelSpec& spec, const ParamVector& theta,
                                          const TimeSeries& x, const OptimizerOptions& opts = {}) {
  detail::require_valid(spec, theta);
  const auto idx = spec.active_indices();
  const std::size_t d = idx.size();
  const std::size_t n = x.size();
  const auto h = detail::fd_steps(theta.span(), idx, opts);
  LikelihoodWorkspace ws;
  std::vector<double> th = theta.values;

  auto q_at = [&](std::vector<double>& out) { ws.q_terms(spec.family, th, x.span(), out); };

  std::vector<double> q0;
  q_at(q0);
  std::vector<std::vector<double>> qp(d), qm(d), qp2(d), qm2(d);
  for (std::size_t k = 0; k < d; ++k) {
    const std::size_t i = idx[k];
    const double base = th[i];
    th[i] = base + h[k];
    q_at(qp[k]);
    th[i] = base - h[k];
    q_at(qm[k]);
    th[i] = base + 2.0 * h[k];
    q_at(qp2[k]);
    th[i] = base - 2.0 * h[k];
    q_at(qm2[k]);
    th[i] = base;
  }

  ScoreCurvature out{Matrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)),
                     Matrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d))};
  const double nn = static_cast<double>(n);

  Matrix grad(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t k = 0; k < d; ++k)
    for (std::size_t t = 0; t < n; ++t)
      grad(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) =
          (qp[k][t] - qm[k][t]) / (2.0 * h[k]);
  out.G_hat = grad.transpose() * grad / nn;

  for (std::size_t k = 0; k < d; ++k) {
    double s = 0.0;
    for (std::size_t t = 0; t < n; ++t) s += qp2[k][t] - 2.0 * q0[t] + qm2[k][t];
    out.F_hat(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) =
        s / (4.0 * h[k] * h[k]) / nn;
  }
  std::vector<double> qpp, qpm, qmp, qmm;
  for (std::size_t k = 0; k < d; ++k) {
    for (std::size_t l = k + 1; l < d; ++l) {
      const std::size_t i = idx[k], j = idx[l];
      const double bi = th[i], bj = th[j];
      th[i] = bi + h[k];
      th[j] = bj + h[l];
      q_at(qpp);
      th[j] = bj - h[l];
      q_at(qpm);
      th[i] = bi - h[k];
      q_at(qmm);
      th[j] = bj + h[l];
      q_at(qmp);
      th[i] = bi;
      th[j] = bj;
      double s = 0.0;
      for (std::size_t t = 0; t < n; ++t) s += qpp[t] - qpm[t] - qmp[t] + qmm[t];
      const double v = s / (4.0 * h[k] * h[l]) / nn;
      out.F_hat(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l)) = v;
      out.F_hat(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(k)) = v;
    }
  }
  if (!out.F_hat.allFinite() || !out.G_hat.allFinite())
    throw NonFiniteValue("score or curvature is not finite", 0);
  return out;
}

/// Central finite-difference gradient of L_n over the active slots.
inline std::vector<double> loglik_gradient(const ModelSpec& spec, const ParamVector& theta,
                                           const TimeSeries& x, const OptimizerOptions& opts = {}) {
  detail::require_valid(spec, theta);
  const auto idx = spec.active_indices();
  const auto h = detail::fd_steps(theta.span(), idx, opts);
  LikelihoodWorkspace ws;
  std::vector<double> th = theta.values, q;
  auto total = [&] {
    ws.q_terms(spec.family, th, x.span(), q);
    double s = 0.0;
    for (double v : q) s += v;
    return -0.5 * s;
  };
  std::vector<double> g(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const double base = th[idx[k]];
    th[idx[k]] = base + h[k];
    const double up = total();
    th[idx[k]] = base - h[k];
    const double down = total();
    th[idx[k]] = base;
    g[k] = (up - down) / (2.0 * h[k]);
  }
  return g;
}

/// Condition number above which F_hat is treated as singular.
inline constexpr double kMaxCurvatureCondition = 1e12;

/// F^-1 G F^-1, symmetrised.
inline Matrix sandwich_covariance(const Matrix& F, const Matrix& G) {
  const double cond = condition_number(F);
  if (!(cond < kMaxCurvatureCondition)) throw SingularMatrix("F_hat is numerically singular", cond);
  const Matrix finv = F.fullPivLu().inverse();
  Matrix s = finv * G * finv.transpose();
  return 0.5 * (s + s.transpose());
}

namespace detail {

inline double sample_variance(std::span<const double> x) {
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size());
}

/// Least squares of x_t on the given lags of x with zero pre-sample values.
/// Returns the coefficients and fills `resid`.
inline std::vector<double> lagged_least_squares(std::span<const double> x,
                                                const std::vector<int>& lags,
                                                std::vector<double>& resid) {
  const std::size_t n = x.size();
  const auto k = static_cast<Eigen::Index>(lags.size());
  resid.assign(x.begin(), x.end());
  if (k == 0) return {};
  Matrix xtx = Matrix::Zero(k, k);
  Vector xty = Vector::Zero(k);
  Vector row(k);
  for (std::size_t t = 0; t < n; ++t) {
    for (Eigen::Index a = 0; a < k; ++a) {
      const auto l = static_cast<std::size_t>(lags[static_cast<std::size_t>(a)]);
      row(a) = t >= l ? x[t - l] : 0.0;
    }
    xtx.noalias() += row * row.transpose();
    xty += row * x[t];
  }
  const Vector beta = xtx.ldlt().solve(xty);
  std::vector<double> out(beta.data(), beta.data() + beta.size());
  for (std::size_t t = 0; t < n; ++t) {
    double f = 0.0;
    for (std::size_t a = 0; a < lags.size(); ++a) {
      const auto l = static_cast<std::size_t>(lags[a]);
      if (t >= l) f += out[a] * x[t - l];
    }
    resid[t] = x[t] - f;
  }
  return out;
}

// Fills active AR-type slots [off, off+p) by lagged least squares and returns
// the residuals.
inline std::vector<double> fill_ar_start(const ModelSpec& spec, std::span<const double> x,
                                         std::size_t off, int p, std::vector<double>& theta) {
  std::vector<int> lags;
  for (int i = 1; i <= p; ++i)
    if (spec.active[off + static_cast<std::size_t>(i) - 1]) lags.push_back(i);
  std::vector<double> resid;
  const auto coef = lagged_least_squares(x, lags, resid);
  for (std::size_t a = 0; a < lags.size(); ++a)
    theta[off + static_cast<std::size_t>(lags[a]) - 1] = coef[a];
  return resid;
}

inline void fill_spread(const ModelSpec& spec, std::size_t off, int count, double total,
                        std::vector<double>& theta) {
  int act = 0;
  for (int i = 0; i < count; ++i) act += spec.active[off + static_cast<std::size_t>(i)] ? 1 : 0;
  for (int i = 0; i < count; ++i)
    if (spec.active[off + static_cast<std::size_t>(i)])
      theta[off + static_cast<std::size_t>(i)] = total / act;
}

/// Pulls every non-scale slot towards zero until the point is admissible.
inline bool shrink_to_admissible(const ModelSpec& spec, ParamVector& theta, double r) {
  for (int tries = 0; tries < 200; ++tries) {
    if (validate_params(spec, theta, r).valid) return true;
    for (std::size_t i = 1; i < theta.size(); ++i) theta[i] *= 0.8;
    if (theta[0] <= 0.0) theta[0] = 1e-3;
  }
  return validate_params(spec, theta, r).valid;
}

}  // namespace detail

/// Moment-based starting point: regressions for the mean part, fixed shares
/// of the sample variance for the variance part.
inline ParamVector moment_start(const ModelSpec& spec, const TimeSeries& x,
                                double r = kDefaultMomentOrder) {
  std::vector<double> th(spec.full_dim(), 0.0);
  const auto xs = x.span();
  const double var = std::max(detail::sample_variance(xs), kVarianceFloor);
  std::visit(overloaded{
                 [&](const family::WhiteNoise&) { th[0] = std::sqrt(var); },
                 [&](const family::AR& f) {
                   const auto res = detail::fill_ar_start(spec, xs, 1, f.p, th);
                   th[0] = std::sqrt(std::max(detail::sample_variance(res), kVarianceFloor));
                 },
                 [&](const family::ARMA& f) {
                   const auto res = detail::fill_ar_start(spec, xs, 1, f.p, th);
                   th[0] = std::sqrt(std::max(detail::sample_variance(res), kVarianceFloor));
                 },
                 [&](const family::ARCH& f) {
                   th[0] = 0.5 * var;
                   detail::fill_spread(spec, 1, f.p, 0.2, th);
                 },
                 [&](const family::GARCH& f) {
                   th[0] = 0.5 * var;
                   detail::fill_spread(spec, 1, f.p, 0.2, th);
                   detail::fill_spread(spec, 1 + static_cast<std::size_t>(f.p), f.q, 0.5, th);
                 },
                 [&](const family::APARCH& f) {
                   double m = 0.0;
                   for (double v : xs) m += std::pow(std::abs(v), f.delta);
                   m /= static_cast<double>(xs.size());
                   th[0] = 0.5 * std::max(m, kVarianceFloor);
                   detail::fill_spread(spec, 1, f.p, 0.2, th);
                   detail::fill_spread(spec, 1 + 2 * static_cast<std::size_t>(f.p), f.q, 0.5, th);
                 },
                 [&](const family::ArmaGarch& f) {
                   const std::size_t off = 1 + static_cast<std::size_t>(f.arch + f.garch);
                   const auto res = detail::fill_ar_start(spec, xs, off, f.p, th);
                   th[0] = 0.5 * std::max(detail::sample_variance(res), kVarianceFloor);
                   detail::fill_spread(spec, 1, f.arch, 0.2, th);
                   detail::fill_spread(spec, 1 + static_cast<std::size_t>(f.arch), f.garch, 0.5, th);
                 },
                 [&](const family::ArArchInf& f) {
                   const auto res = detail::fill_ar_start(spec, xs, 2, f.p, th);
                   th[0] = 0.5 * std::max(detail::sample_variance(res), kVarianceFloor);
                   th[1] = spec.active[1] ? 0.2 : 0.0;
                 },
             },
             spec.family);
  ParamVector out = make_params(spec, std::move(th));
  detail::shrink_to_admissible(spec, out, r);
  return out;
}

/// Random admissible starting point around the scale of `anchor`.
template <class Rng>
bool random_start(const ModelSpec& spec, const ParamVector& anchor, Rng& rng, double r,
                  ParamVector& out) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto idx = spec.active_indices();
  std::size_t n_arch = 0, n_pers = 0, n_mean = 0;
  for (std::size_t i : idx) {
    switch (anchor.layout[i].role) {
      case SlotRole::Arch: ++n_arch; break;
      case SlotRole::Persistence: ++n_pers; break;
      case SlotRole::Mean:
      case SlotRole::MovingAverage: ++n_mean; break;
      default: break;
    }
  }
  for (int attempt = 0; attempt < 100; ++attempt) {
    out = anchor;
    for (std::size_t i : idx) {
      const double v = u(rng);
      switch (anchor.layout[i].role) {
        case SlotRole::Scale: out[i] = anchor[i] * (0.5 + 1.5 * v); break;
        case SlotRole::Mean:
        case SlotRole::MovingAverage:
          out[i] = (v - 0.5) / std::sqrt(static_cast<double>(n_mean));
          break;
        case SlotRole::Arch: out[i] = 0.4 * v / static_cast<double>(n_arch); break;
        case SlotRole::Persistence: out[i] = 0.9 * v / static_cast<double>(n_pers); break;
        case SlotRole::Asymmetry: out[i] = v - 0.5; break;
      }
    }
    if (validate_params(spec, out, r).valid) return true;
  }
  return false;
}

namespace detail {

/// -2 L_n plus the infeasibility penalty, as a function of the active slots.
class QmleObjective {
 public:
  QmleObjective(const ModelSpec& spec, const TimeSeries& x, ParamVector base, double r)
      : spec_(spec), x_(x), theta_(std::move(base)), idx_(spec.active_indices()), r_(r) {}

  double operator()(std::span<const double> active) {
    for (std::size_t k = 0; k < idx_.size(); ++k) theta_[idx_[k]] = active[k];
    const Validity v = validate_params(spec_, theta_, r_);
    double val = ws_.neg2_loglik(spec_.family, theta_.span(), x_.span());
    if (!std::isfinite(val)) {
      if (v.valid) return std::numeric_limits<double>::infinity();
      val = 1e10;
    }
    return val + kInfeasibilityPenalty * v.violation;
  }

  [[nodiscard]] const std::vector<std::size_t>& active() const { return idx_; }

 private:
  const ModelSpec& spec_;
  const TimeSeries& x_;
  ParamVector theta_;
  std::vector<std::size_t> idx_;
  double r_;
  LikelihoodWorkspace ws_;
};

inline std::vector<double> simplex_steps(const ParamVector& theta,
                                         const std::vector<std::size_t>& idx) {
  std::vector<double> step(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const double v = theta[idx[k]];
    if (theta.layout[idx[k]].role == SlotRole::Scale)
      step[k] = 0.2 * std::abs(v);
    else
      step[k] = std::max(0.1 * std::abs(v), 0.05);
  }
  return step;
}

struct StartOutcome {
  std::vector<double> active;
  double value = std::numeric_limits<double>::infinity();
  bool converged = false;
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
};

inline StartOutcome optimise_from(QmleObjective& obj, const ParamVector& start,
                                  const OptimizerOptions& opts) {
  const auto& idx = obj.active();
  std::vector<double> x0(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) x0[k] = start[idx[k]];
  NelderMeadOptions nm;
  nm.max_evaluations = opts.max_evaluations;
  nm.xtol = opts.xtol;
  nm.ftol_rel = opts.ftol;
  nm.ftol_abs = opts.ftol;
  ParamVector cur = start;
  StartOutcome out;
  auto res = nelder_mead(obj, x0, simplex_steps(cur, idx), nm);
  out.iterations += res.iterations;
  out.evaluations += res.evaluations;
  for (std::size_t round = 0; round < opts.polish_rounds; ++round) {
    for (std::size_t k = 0; k < idx.size(); ++k) cur[idx[k]] = res.x[k];
    auto again = nelder_mead(obj, res.x, simplex_steps(cur, idx), nm);
    out.iterations += again.iterations;
    out.evaluations += again.evaluations;
    const bool improved = again.value < res.value - opts.ftol * (std::abs(res.value) + 1.0);
    if (again.value <= res.value) res = std::move(again);
    if (!improved) break;
  }
  out.active = std::move(res.x);
  out.value = res.value;
  out.converged = res.converged;
  return out;
}

}  // namespace detail

namespace detail {

inline void newton_polish(FitResult& fit, const TimeSeries& x, const OptimizerOptions& opts) {
  const auto idx = fit.spec.active_indices();
  const auto d = static_cast<Eigen::Index>(idx.size());
  for (std::size_t step = 0; step < opts.newton_steps; ++step) {
    Matrix F;
    std::vector<double> g;
    try {
      F = score_and_curvature(fit.spec, fit.theta, x, opts).F_hat;
      g = loglik_gradient(fit.spec, fit.theta, x, opts);
    } catch (const Error&) {
      return;
    }
    Eigen::LLT<Matrix> llt(F);
    if (llt.info() != Eigen::Success) return;
    // mean q has gradient -2 g / n
    Vector grad(d);
    for (Eigen::Index k = 0; k < d; ++k)
      grad(k) = -2.0 * g[static_cast<std::size_t>(k)] / static_cast<double>(fit.n);
    const Vector delta = -llt.solve(grad);
    bool moved = false;
    for (double scale = 1.0; scale > 0.1 && !moved; scale *= 0.5) {
      ParamVector cand = fit.theta;
      for (Eigen::Index k = 0; k < d; ++k) cand[idx[static_cast<std::size_t>(k)]] += scale * delta(k);
      const Validity v = validate_params(fit.spec, cand, opts.moment_order);
      if (!v.valid || v.margin < kBoundaryTolerance) continue;
      double ll = 0.0;
      try {
        ll = quasi_loglik(fit.spec, cand, x).total;
      } catch (const Error&) {
        continue;
      }
      if (ll > fit.loglik) {
        fit.theta = std::move(cand);
        fit.loglik = ll;
        moved = true;
      }
    }
    if (!moved) return;
  }
}

}  // namespace detail

/// Gaussian QMLE over the active slots of `spec`.
inline FitResult fit_qmle(const ModelSpec& spec, const TimeSeries& x,
                          const OptimizerOptions& opts = {}) {
  opts.validate();
  const std::size_t n = x.size();
  if (n <= 10 * spec.dim())
    throw InvalidParameters("series of length " + std::to_string(n) + " is too short to fit " +
                            spec.name() + " (need n > 10 |m|)");
  {
    const auto [lo, hi] = std::minmax_element(x.values.begin(), x.values.end());
    if (*lo == *hi) throw DegenerateSeries("constant series cannot be fitted");
  }

  const ParamVector first = moment_start(spec, x, opts.moment_order);
  detail::QmleObjective obj(spec, x, first, opts.moment_order);
  auto rng = make_rng(opts.seed);

  FitResult fit;
  fit.spec = spec;
  fit.n = n;
  detail::StartOutcome best;
  bool have_best = false;
  ParamVector start = first;
  for (std::size_t s = 0; s < opts.restarts; ++s) {
    if (s > 0 && !random_start(spec, first, rng, opts.moment_order, start)) continue;
    auto out = detail::optimise_from(obj, start, opts);
    ++fit.convergence.starts_run;
    if (out.converged) ++fit.convergence.starts_converged;
    fit.convergence.iterations += out.iterations;
    fit.convergence.evaluations += out.evaluations;
    // Lowest start index wins ties within tolerance.
    const bool better =
        !have_best || out.value < best.value - opts.ftol * (std::abs(best.value) + 1.0);
    if (better) {
      best = std::move(out);
      fit.convergence.best_start = s;
      have_best = true;
    }
  }
  if (!have_best || !std::isfinite(best.value))
    throw EstimationFailed("no start produced a finite objective for " + spec.name());

  std::vector<double> th(spec.full_dim(), 0.0);
  const auto idx = spec.active_indices();
  for (std::size_t k = 0; k < idx.size(); ++k) th[idx[k]] = best.active[k];
  fit.theta = make_params(spec, std::move(th));
  const Validity v = validate_params(spec, fit.theta, opts.moment_order);
  if (!v.valid) throw EstimationFailed("optimum of " + spec.name() + " is not admissible");
  fit.convergence.converged = best.converged;
  fit.convergence.boundary = v.margin < kBoundaryTolerance;

  fit.loglik = quasi_loglik(spec, fit.theta, x).total;
  if (!fit.convergence.boundary) detail::newton_polish(fit, x, opts);

  if (opts.compute_covariance) {
    try {
      auto sc = score_and_curvature(spec, fit.theta, x, opts);
      fit.F_hat = std::move(sc.F_hat);
      fit.G_hat = std::move(sc.G_hat);
      fit.sandwich = sandwich_covariance(fit.F_hat, fit.G_hat);
      fit.std_errors.resize(idx.size());
      for (std::size_t k = 0; k < idx.size(); ++k)
        fit.std_errors[k] = std::sqrt(std::max(
            0.0, fit.sandwich(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) /
                     static_cast<double>(n)));
      fit.has_covariance = true;
    } catch (const Error& e) {
      fit.has_covariance = false;
      fit.covariance_note = e.what();
    }
  }
  return fit;
}

}  // namespace acsel
