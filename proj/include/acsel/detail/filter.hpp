#pragma once

// Shared recursion for the conditional mean f_t and conditional variance H_t
// of every family. The same code drives simulation (the source draws X_t
// from f_t and H_t) and quasi-likelihood evaluation (the source returns the
// observed X_t), so both always agree on the model definition.

#include <acsel/model_types.hpp>

#include <Eigen/Core>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <type_traits>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

namespace acsel {

/// Lower bound applied to every conditional variance inside the recursions.
inline constexpr double kVarianceFloor = 1e-10;

namespace detail {

/// How unobserved pre-sample variance states are filled.
enum class Presample {
  /// Variance state at the unconditional mean of the process (simulation).
  Stationary,
  /// Variance state at the value that makes the recursion equal the
  /// zero-past ARCH(inf) expansion (quasi-likelihood).
  ZeroPast,
};

struct FilterBuffers {
  std::vector<double> x;    // realised X_t
  std::vector<double> f;    // conditional mean
  std::vector<double> h;    // conditional variance
  std::vector<double> eps;  // X_t - f_t
  std::vector<double> state;  // APARCH sigma_t^delta
  // AR-ARCH(inf) scratch: squared innovations in reverse time order and the
  // lag weights i^-decay.
  std::vector<double> e2_rev;
  std::vector<double> weights;
  double weights_decay = 0.0;
  // Spectrum of the zero-padded weights for the convolution path.
  std::vector<std::complex<double>> weights_fft;
  std::size_t fft_size = 0;
  Eigen::FFT<double> fft;
  std::vector<double> pad;
  std::vector<std::complex<double>> spec;

  void resize(std::size_t n) {
    x.resize(n);
    f.resize(n);
    h.resize(n);
    eps.resize(n);
  }
};

/// Source that replays an observed series; recursions may exploit that
/// X_t does not depend on the filtered moments.
struct ObservedSource {
  std::span<const double> x;
  double operator()(std::size_t t, double, double) const { return x[t]; }
};

inline double sum_of(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0); }

inline double floor_variance(double h) { return h > kVarianceFloor ? h : kVarianceFloor; }

/// E|xi|^r for standard Gaussian xi.
inline double gaussian_abs_moment(double r) {
  return std::pow(2.0, r / 2.0) * std::tgamma((r + 1.0) / 2.0) / std::sqrt(M_PI);
}

// ARMA mean with constant variance sigma^2. Also serves WN and AR.
template <class Source>
void filter_arma(double sigma, std::span<const double> a, std::span<const double> b, std::size_t n,
                 Source& src, FilterBuffers& buf) {
  const double h = floor_variance(sigma * sigma);
  const std::size_t p = a.size();
  const std::size_t q = b.size();
  for (std::size_t t = 0; t < n; ++t) {
    double f = 0.0;
    const std::size_t pl = std::min(p, t);
    for (std::size_t i = 1; i <= pl; ++i) f += a[i - 1] * buf.x[t - i];
    const std::size_t ql = std::min(q, t);
    for (std::size_t j = 1; j <= ql; ++j) f -= b[j - 1] * buf.eps[t - j];
    const double xt = src(t, f, h);
    buf.x[t] = xt;
    buf.f[t] = f;
    buf.h[t] = h;
    buf.eps[t] = xt - f;
  }
}

// GARCH variance driven by the innovations e_t = X_t - f_t, with an optional
// ARMA mean (pure GARCH/ARCH pass empty a and b).
template <class Source>
void filter_arma_garch(double c0, std::span<const double> c, std::span<const double> d,
                       std::span<const double> a, std::span<const double> b, Presample mode,
                       std::size_t n, Source& src, FilterBuffers& buf) {
  const double sc = sum_of(c);
  const double sd = sum_of(d);
  double h_init = c0;
  if (mode == Presample::Stationary) {
    if (1.0 - sc - sd > 0.0) h_init = c0 / (1.0 - sc - sd);
  } else if (1.0 - sd > 0.0) {
    h_init = c0 / (1.0 - sd);
  }
  h_init = floor_variance(h_init);
  const std::size_t p = a.size(), q = b.size(), pc = c.size(), qd = d.size();
  for (std::size_t t = 0; t < n; ++t) {
    double f = 0.0;
    const std::size_t pl = std::min(p, t);
    for (std::size_t i = 1; i <= pl; ++i) f += a[i - 1] * buf.x[t - i];
    const std::size_t ql = std::min(q, t);
    for (std::size_t j = 1; j <= ql; ++j) f -= b[j - 1] * buf.eps[t - j];

    double h = c0;
    const std::size_t cl = std::min(pc, t);
    for (std::size_t i = 1; i <= cl; ++i) h += c[i - 1] * buf.eps[t - i] * buf.eps[t - i];
    for (std::size_t j = 1; j <= qd; ++j) h += d[j - 1] * (t >= j ? buf.h[t - j] : h_init);
    h = floor_variance(h);

    const double xt = src(t, f, h);
    buf.x[t] = xt;
    buf.f[t] = f;
    buf.h[t] = h;
    buf.eps[t] = xt - f;
  }
}

// APARCH recursion on s_t = sigma_t^delta. `h` stores sigma_t^2.
template <class Source>
void filter_aparch(double delta, double omega, std::span<const double> alpha,
                   std::span<const double> gamma, std::span<const double> beta, Presample mode,
                   std::size_t n, Source& src, FilterBuffers& buf) {
  const bool square = delta == 2.0;
  const double sb = sum_of(beta);
  double s_init = omega;
  if (mode == Presample::Stationary) {
    // E(|xi| - gamma xi)^delta = E|xi|^delta ((1-gamma)^delta + (1+gamma)^delta) / 2
    const double m = gaussian_abs_moment(delta);
    double load = 0.0;
    for (std::size_t i = 0; i < alpha.size(); ++i)
      load += alpha[i] * m *
              (std::pow(std::max(0.0, 1.0 - gamma[i]), delta) +
               std::pow(std::max(0.0, 1.0 + gamma[i]), delta)) /
              2.0;
    if (1.0 - sb - load > 0.0) s_init = omega / (1.0 - sb - load);
  } else if (1.0 - sb > 0.0) {
    s_init = omega / (1.0 - sb);
  }
  const double s_floor = square ? kVarianceFloor : std::pow(kVarianceFloor, delta / 2.0);
  s_init = std::max(s_init, s_floor);
  std::vector<double>& s = buf.state;
  s.resize(n);
  const std::size_t p = alpha.size(), q = beta.size();
  for (std::size_t t = 0; t < n; ++t) {
    double st = omega;
    const std::size_t pl = std::min(p, t);
    for (std::size_t i = 1; i <= pl; ++i) {
      const double xv = buf.x[t - i];
      const double base = std::max(0.0, std::abs(xv) - gamma[i - 1] * xv);
      st += alpha[i - 1] * (square ? base * base : std::pow(base, delta));
    }
    for (std::size_t j = 1; j <= q; ++j) st += beta[j - 1] * (t >= j ? s[t - j] : s_init);
    st = std::max(st, s_floor);
    const double h = floor_variance(square ? st : std::pow(st, 2.0 / delta));
    const double xt = src(t, 0.0, h);
    buf.x[t] = xt;
    buf.f[t] = 0.0;
    buf.h[t] = h;
    buf.eps[t] = xt;
    s[t] = st;
  }
}

// Above this many lags the observed-data path convolves by FFT.
inline constexpr std::size_t kDirectConvolutionLags = 64;

// AR(p) mean; the innovation is ARCH(inf) with weights alpha * i^-decay,
// truncated at min(available lags, max_lag).
template <class Source>
void filter_ar_archinf(double omega, double alpha, std::span<const double> phi, double decay,
                       std::size_t max_lag, std::size_t n, Source& src, FilterBuffers& buf) {
  const std::size_t wlen = std::min(max_lag, n);
  if (buf.weights.size() != wlen + 1 || buf.weights_decay != decay) {
    buf.weights.resize(wlen + 1);
    buf.weights[0] = 0.0;
    for (std::size_t i = 1; i <= wlen; ++i)
      buf.weights[i] = std::pow(static_cast<double>(i), -decay);
    buf.weights_decay = decay;
    buf.weights_fft.clear();
  }
  const std::size_t p = phi.size();
  if constexpr (std::is_same_v<std::decay_t<Source>, ObservedSource>) {
    // Observed data: innovations do not depend on H, so all lags can be
    // combined at once with an FFT convolution.
    if (wlen > kDirectConvolutionLags) {
      for (std::size_t t = 0; t < n; ++t) {
        double f = 0.0;
        const std::size_t pl = std::min(p, t);
        for (std::size_t i = 1; i <= pl; ++i) f += phi[i - 1] * src.x[t - i];
        buf.x[t] = src.x[t];
        buf.f[t] = f;
        buf.eps[t] = src.x[t] - f;
      }
      std::size_t size = 1;
      while (size < n + wlen + 1) size <<= 1;
      if (buf.fft_size != size || buf.weights_fft.empty()) {
        buf.pad.assign(size, 0.0);
        std::copy(buf.weights.begin(), buf.weights.end(), buf.pad.begin());
        buf.fft.fwd(buf.weights_fft, buf.pad);
        buf.fft_size = size;
      }
      buf.pad.assign(size, 0.0);
      for (std::size_t t = 0; t < n; ++t) buf.pad[t] = buf.eps[t] * buf.eps[t];
      buf.fft.fwd(buf.spec, buf.pad);
      for (std::size_t k = 0; k < buf.spec.size(); ++k) buf.spec[k] *= buf.weights_fft[k];
      buf.fft.inv(buf.pad, buf.spec);
      for (std::size_t t = 0; t < n; ++t)
        buf.h[t] = floor_variance(omega + alpha * std::max(0.0, buf.pad[t]));
      return;
    }
  }
  buf.e2_rev.assign(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double f = 0.0;
    const std::size_t pl = std::min(p, t);
    for (std::size_t i = 1; i <= pl; ++i) f += phi[i - 1] * buf.x[t - i];

    // Lags 1..m of the squared innovation sit contiguously at e2_rev[n-t ..].
    const std::size_t m = std::min(t, wlen);
    double acc = 0.0;
    if (m > 0) {
      Eigen::Map<const Eigen::VectorXd> w(buf.weights.data() + 1, static_cast<Eigen::Index>(m));
      Eigen::Map<const Eigen::VectorXd> e(buf.e2_rev.data() + (n - t),
                                          static_cast<Eigen::Index>(m));
      acc = w.dot(e);
    }
    const double h = floor_variance(omega + alpha * acc);
    const double xt = src(t, f, h);
    const double e = xt - f;
    buf.x[t] = xt;
    buf.f[t] = f;
    buf.h[t] = h;
    buf.eps[t] = e;
    buf.e2_rev[n - 1 - t] = e * e;
  }
}

/// Runs the family recursion over t = 0..n-1. `src(t, f_t, h_t)` returns X_t.
template <class Source>
void run_filter(const ModelFamily& fam, std::span<const double> theta, std::size_t n,
                Presample mode, Source&& src, FilterBuffers& buf) {
  buf.resize(n);
  auto seg = [&](std::size_t off, int len) {
    return theta.subspan(off, static_cast<std::size_t>(len));
  };
  std::visit(overloaded{
                 [&](const family::WhiteNoise&) { filter_arma(theta[0], {}, {}, n, src, buf); },
                 [&](const family::AR& f) { filter_arma(theta[0], seg(1, f.p), {}, n, src, buf); },
                 [&](const family::ARMA& f) {
                   filter_arma(theta[0], seg(1, f.p), seg(1 + f.p, f.q), n, src, buf);
                 },
                 [&](const family::ARCH& f) {
                   filter_arma_garch(theta[0], seg(1, f.p), {}, {}, {}, mode, n, src, buf);
                 },
                 [&](const family::GARCH& f) {
                   filter_arma_garch(theta[0], seg(1, f.p), seg(1 + f.p, f.q), {}, {}, mode, n,
                                     src, buf);
                 },
                 [&](const family::APARCH& f) {
                   filter_aparch(f.delta, theta[0], seg(1, f.p), seg(1 + f.p, f.p),
                                 seg(1 + 2 * f.p, f.q), mode, n, src, buf);
                 },
                 [&](const family::ArmaGarch& f) {
                   const std::size_t off = 1 + f.arch + f.garch;
                   filter_arma_garch(theta[0], seg(1, f.arch), seg(1 + f.arch, f.garch),
                                     seg(off, f.p), seg(off + f.p, f.q), mode, n, src, buf);
                 },
                 [&](const family::ArArchInf& f) {
                   filter_ar_archinf(theta[0], theta[1], seg(2, f.p), f.decay,
                                     static_cast<std::size_t>(f.max_lag), n, src, buf);
                 },
             },
             fam);
}

}  // namespace detail
}  // namespace acsel
