#pragma once

#include <acsel/detail/filter.hpp>
#include <acsel/models.hpp>

#include <Eigen/Core>

#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace acsel {

/// Truncated conditional moments: unknown pre-sample values replaced by 0.
struct ConditionalMoments {
  std::vector<double> f_hat;
  std::vector<double> h_hat;
};

struct QuasiLikEval {
  std::vector<double> f_hat;
  std::vector<double> h_hat;
  std::vector<double> q_hat;
  /// -0.5 * sum(q_hat)
  double total = 0.0;
};

struct ResidualSeries {
  std::vector<double> e_hat;
  [[nodiscard]] std::size_t size() const { return e_hat.size(); }
};

/// Reusable scratch space for repeated quasi-likelihood evaluation on one
/// series. Not shareable across threads.
class LikelihoodWorkspace {
 public:
  /// Runs the zero-past recursion on `x` for the raw parameter values `theta`.
  /// No admissibility check; callers decide what to do with odd points.
  void run(const ModelFamily& fam, std::span<const double> theta, std::span<const double> x) {
    detail::run_filter(fam, theta, x.size(), detail::Presample::ZeroPast,
                       detail::ObservedSource{x}, buf_);
  }

  /// -2 * L_n(theta), i.e. sum of q_t. Non-finite on numerical failure.
  double neg2_loglik(const ModelFamily& fam, std::span<const double> theta,
                     std::span<const double> x) {
    run(fam, theta, x);
    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::Map<const Eigen::ArrayXd> xa(x.data(), n), fa(buf_.f.data(), n), ha(buf_.h.data(), n);
    return ((xa - fa).square() / ha).sum() + ha.log().sum();
  }

  /// Per-observation q_t into `out`.
  void q_terms(const ModelFamily& fam, std::span<const double> theta, std::span<const double> x,
               std::vector<double>& out) {
    run(fam, theta, x);
    out.resize(x.size());
    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::Map<const Eigen::ArrayXd> xa(x.data(), n), fa(buf_.f.data(), n), ha(buf_.h.data(), n);
    Eigen::Map<Eigen::ArrayXd>(out.data(), n) = (xa - fa).square() / ha + ha.log();
  }

  [[nodiscard]] const std::vector<double>& f() const { return buf_.f; }
  [[nodiscard]] const std::vector<double>& h() const { return buf_.h; }

 private:
  detail::FilterBuffers buf_;
};

namespace detail {

inline void require_valid(const ModelSpec& spec, const ParamVector& theta) {
  const Validity v = validate_params(spec, theta);
  if (!v.valid) {
    std::string msg = "inadmissible parameters for " + spec.name();
    for (const auto& s : v.violations) msg += "; " + s;
    throw InvalidParameters(msg);
  }
}

inline void require_finite(const std::vector<double>& v, const char* what) {
  for (std::size_t t = 0; t < v.size(); ++t)
    if (!std::isfinite(v[t])) throw NonFiniteValue(what, t);
}

}  // namespace detail

/// f_hat_t and H_hat_t for t = 1..n, computed with u = 0 pre-sample values.
inline ConditionalMoments conditional_moments(const ModelSpec& spec, const ParamVector& theta,
                                              const TimeSeries& x) {
  detail::require_valid(spec, theta);
  LikelihoodWorkspace ws;
  ws.run(spec.family, theta.span(), x.span());
  ConditionalMoments out{ws.f(), ws.h()};
  detail::require_finite(out.f_hat, "conditional mean recursion is not finite");
  detail::require_finite(out.h_hat, "conditional variance recursion is not finite");
  return out;
}

inline QuasiLikEval quasi_loglik(const ModelSpec& spec, const ParamVector& theta,
                                 const TimeSeries& x) {
  auto m = conditional_moments(spec, theta, x);
  QuasiLikEval out;
  out.q_hat.resize(x.size());
  double s = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    const double r = x[t] - m.f_hat[t];
    out.q_hat[t] = r * r / m.h_hat[t] + std::log(m.h_hat[t]);
    s += out.q_hat[t];
  }
  out.total = -0.5 * s;
  out.f_hat = std::move(m.f_hat);
  out.h_hat = std::move(m.h_hat);
  return out;
}

/// Standardised residuals e_t = (X_t - f_hat_t) / sqrt(H_hat_t).
inline ResidualSeries residuals(const ModelSpec& spec, const ParamVector& theta,
                                const TimeSeries& x) {
  const auto m = conditional_moments(spec, theta, x);
  ResidualSeries out;
  out.e_hat.resize(x.size());
  for (std::size_t t = 0; t < x.size(); ++t)
    out.e_hat[t] = (x[t] - m.f_hat[t]) / std::sqrt(m.h_hat[t]);
  detail::require_finite(out.e_hat, "residual is not finite");
  return out;
}

}  // namespace acsel
