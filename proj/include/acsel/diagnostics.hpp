#pragma once

#include <acsel/estimation.hpp>
#include <acsel/likelihood.hpp>
#include <acsel/linalg.hpp>

#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <string>
#include <vector>

namespace acsel {

/// Upper tail P(chi2_df > x).
inline double chi2_sf(double x, double df) {
  if (std::isnan(x) || x < 0.0) throw InvalidParameters("chi2_sf: statistic must be >= 0");
  if (!(df >= 1.0)) throw InvalidParameters("chi2_sf: degrees of freedom must be >= 1");
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return boost::math::gamma_q(df / 2.0, x / 2.0);
}

/// Adjusted autocovariances of e_t^2 - 1.
struct Correlogram {
  std::size_t K = 0;
  /// gamma_0 .. gamma_K
  std::vector<double> gamma;
  /// rho_1 .. rho_K
  std::vector<double> rho;
};

inline Correlogram squared_residual_correlogram(const ResidualSeries& e, std::size_t K) {
  const std::size_t n = e.size();
  if (K >= n) throw InvalidParameters("correlogram lag K must be < n");
  std::vector<double> c(n);
  for (std::size_t t = 0; t < n; ++t) {
    if (!std::isfinite(e.e_hat[t])) throw NonFiniteValue("residual is not finite", t);
    c[t] = e.e_hat[t] * e.e_hat[t] - 1.0;
  }
  Correlogram out;
  out.K = K;
  out.gamma.assign(K + 1, 0.0);
  for (std::size_t k = 0; k <= K; ++k) {
    double s = 0.0;
    for (std::size_t t = k; t < n; ++t) s += c[t] * c[t - k];
    out.gamma[k] = s / static_cast<double>(n);
  }
  if (!(out.gamma[0] > 0.0))
    throw DegenerateResiduals("squared residuals are constant; the correlogram is undefined");
  out.rho.resize(K);
  for (std::size_t k = 1; k <= K; ++k) out.rho[k - 1] = out.gamma[k] / out.gamma[0];
  return out;
}

/// Variant of the limiting covariance of sqrt(n) rho_hat.
enum class VarianceForm {
  /// I + (mu4-1)^-2 J F^-1 G F^-1 J' + (mu4-1)^-1 J F^-1 J'. Never smaller
  /// than I, so the test is strongly conservative.
  Additive,
  /// I + (mu4-1)^-2 J F^-1 G F^-1 J' - 2 (mu4-1)^-1 J F^-1 J', with
  /// theta_hat - theta* = -F^-1 (1/n) sum dq_t entering both cross terms.
  /// Default.
  Subtractive,
  /// I; Q becomes the Box-Pierce statistic n sum rho_k^2.
  Identity,
};

inline const char* variance_form_name(VarianceForm f) {
  switch (f) {
    case VarianceForm::Additive: return "additive";
    case VarianceForm::Subtractive: return "subtractive";
    case VarianceForm::Identity: return "identity";
  }
  return "?";
}

struct VEstimate {
  double mu4_hat = 0.0;
  /// K x |m|
  Matrix J_hat;
  /// K x K
  Matrix V_hat;
};

namespace detail {

// d/d theta_j log M_t over active slots, n x |m|, by central differences.
inline Matrix log_scale_gradient(const ModelSpec& spec, const ParamVector& theta,
                                 const TimeSeries& x, const OptimizerOptions& opts) {
  const auto idx = spec.active_indices();
  const auto h = fd_steps(theta.span(), idx, opts);
  const std::size_t n = x.size();
  Matrix d(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(idx.size()));
  LikelihoodWorkspace ws;
  std::vector<double> th = theta.values, hp(n);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const double base = th[idx[k]];
    th[idx[k]] = base + h[k];
    ws.run(spec.family, th, x.span());
    hp = ws.h();
    th[idx[k]] = base - h[k];
    ws.run(spec.family, th, x.span());
    th[idx[k]] = base;
    const auto& hm = ws.h();
    for (std::size_t t = 0; t < n; ++t)
      d(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) =
          0.5 * (std::log(hp[t]) - std::log(hm[t])) / (2.0 * h[k]);
  }
  return d;
}

inline ScoreCurvature fit_curvature(const FitResult& fit, const TimeSeries& x,
                                    const OptimizerOptions& opts) {
  if (fit.has_covariance) return {fit.G_hat, fit.F_hat};
  return score_and_curvature(fit.spec, fit.theta, x, opts);
}

}  // namespace detail

inline VEstimate estimate_V(const FitResult& fit, const TimeSeries& x, std::size_t K,
                            VarianceForm form = VarianceForm::Subtractive,
                            const OptimizerOptions& opts = {}) {
  const std::size_t n = x.size();
  if (K < 1 || K >= n) throw InvalidParameters("portmanteau lag K must satisfy 1 <= K < n");
  const auto e = residuals(fit.spec, fit.theta, x);
  VEstimate out;
  double s4 = 0.0;
  for (double v : e.e_hat) s4 += v * v * v * v;
  out.mu4_hat = s4 / static_cast<double>(n);
  if (!(out.mu4_hat > 1.0))
    throw DegenerateResiduals("sample fourth moment of the residuals is <= 1");

  const auto dlogm = detail::log_scale_gradient(fit.spec, fit.theta, x, opts);
  const auto m = dlogm.cols();
  const auto Ki = static_cast<Eigen::Index>(K);
  out.J_hat = Matrix::Zero(Ki, m);
  for (std::size_t k = 1; k <= K; ++k)
    for (std::size_t t = k; t < n; ++t) {
      const double w = e.e_hat[t - k] * e.e_hat[t - k] - 1.0;
      out.J_hat.row(static_cast<Eigen::Index>(k - 1)) += w * dlogm.row(static_cast<Eigen::Index>(t));
    }
  out.J_hat *= -2.0 / static_cast<double>(n);

  out.V_hat = Matrix::Identity(Ki, Ki);
  if (form == VarianceForm::Identity) return out;
  const auto sc = detail::fit_curvature(fit, x, opts);
  if (condition_number(sc.F_hat) > kMaxCurvatureCondition)
    throw SingularMatrix("curvature matrix F_hat is numerically singular",
                         condition_number(sc.F_hat));
  // W = F^-1 J'
  const Matrix W = sc.F_hat.lu().solve(out.J_hat.transpose());
  const double a = out.mu4_hat - 1.0;
  const Matrix outer = W.transpose() * sc.G_hat * W;
  const Matrix cross = out.J_hat * W;
  const double c = form == VarianceForm::Additive ? 1.0 : -2.0;
  out.V_hat += outer / (a * a) + c * cross / a;
  out.V_hat = 0.5 * (out.V_hat + out.V_hat.transpose()).eval();
  return out;
}

enum class PortmanteauVariant { General, ArchSpecial };

struct PortmanteauReport {
  std::size_t K = 0;
  Correlogram rho;
  double mu4_hat = 0.0;
  Matrix J_hat;
  Matrix V_hat;
  double Q = 0.0;
  std::size_t df = 0;
  double p_value = 1.0;
  PortmanteauVariant variant = PortmanteauVariant::General;
  /// ARCH order removed from the degrees of freedom (ArchSpecial only).
  std::size_t arch_p = 0;
  VarianceForm form = VarianceForm::Subtractive;
  /// V_hat needed the ridge to be factorised.
  bool regularized = false;

  [[nodiscard]] bool rejects(double level = 0.05) const { return p_value < level; }
};

struct QuadraticForm {
  double Q = 0.0;
  bool regularized = false;
};

/// n rho' V^-1 rho, clamped at 0.
inline QuadraticForm quadratic_statistic(const Vector& rho, const Matrix& V, std::size_t n) {
  const auto sol = solve_spd(V, rho);
  return {std::max(0.0, static_cast<double>(n) * rho.dot(sol.x.col(0))), sol.regularized};
}

/// Q = n rho' V^-1 rho against chi2(K).
inline PortmanteauReport portmanteau(const FitResult& fit, const TimeSeries& x, std::size_t K,
                                     VarianceForm form = VarianceForm::Subtractive,
                                     const OptimizerOptions& opts = {}) {
  PortmanteauReport rep;
  rep.K = K;
  rep.form = form;
  auto v = estimate_V(fit, x, K, form, opts);
  rep.rho = squared_residual_correlogram(residuals(fit.spec, fit.theta, x), K);
  rep.mu4_hat = v.mu4_hat;
  rep.J_hat = std::move(v.J_hat);
  rep.V_hat = std::move(v.V_hat);
  const Vector rho = Eigen::Map<const Vector>(rep.rho.rho.data(), static_cast<Eigen::Index>(K));
  const auto qf = quadratic_statistic(rho, rep.V_hat, x.size());
  rep.regularized = qf.regularized;
  rep.Q = qf.Q;
  rep.df = K;
  rep.p_value = chi2_sf(rep.Q, static_cast<double>(K));
  return rep;
}

/// n sum_{i=p+1}^K rho_i^2.
inline double arch_statistic(std::span<const double> rho, std::size_t n, std::size_t p) {
  double s = 0.0;
  for (std::size_t i = p; i < rho.size(); ++i) s += rho[i] * rho[i];
  return static_cast<double>(n) * s;
}

/// ARCH(p) shortcut: Q = n sum_{i=p+1}^K rho_i^2 against chi2(K - p).
inline PortmanteauReport portmanteau_arch(const FitResult& fit, const TimeSeries& x,
                                          std::size_t p, std::size_t K) {
  const bool is_arch = std::visit(
      overloaded{
          [&](const family::ARCH& f) { return static_cast<std::size_t>(f.p) == p; },
          [&](const family::GARCH& f) { return static_cast<std::size_t>(f.p) == p && f.q == 0; },
          [](const auto&) { return false; },
      },
      fit.spec.family);
  if (!is_arch) throw InvalidParameters("portmanteau_arch needs an ARCH(" + std::to_string(p) +
                                        ") fit, got " + fit.spec.name());
  if (K <= p) throw InvalidParameters("portmanteau_arch requires K > p");
  PortmanteauReport rep;
  rep.K = K;
  rep.variant = PortmanteauVariant::ArchSpecial;
  rep.arch_p = p;
  const auto e = residuals(fit.spec, fit.theta, x);
  rep.rho = squared_residual_correlogram(e, K);
  double s4 = 0.0;
  for (double v : e.e_hat) s4 += v * v * v * v;
  rep.mu4_hat = s4 / static_cast<double>(x.size());
  rep.Q = arch_statistic(rep.rho.rho, x.size(), p);
  rep.df = K - p;
  rep.p_value = chi2_sf(rep.Q, static_cast<double>(rep.df));
  return rep;
}

}  // namespace acsel
