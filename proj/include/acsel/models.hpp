#pragma once

#include <acsel/detail/filter.hpp>
#include <acsel/error.hpp>
#include <acsel/model_types.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace acsel {

/// Moment order used when no other is requested: finite variance.
inline constexpr double kDefaultMomentOrder = 2.0;

/// Default number of discarded leading simulation steps.
inline constexpr std::size_t kDefaultBurnIn = 1000;

/// Standard Gaussian driving noise. Other zero-mean unit-variance noises can
/// be plugged into simulate() by providing the same two members.
struct GaussianNoise {
  template <class Rng>
  double operator()(Rng& rng) {
    return dist(rng);
  }
  /// ||xi_0||_r = (E|xi_0|^r)^(1/r).
  static double lr_norm(double r) { return std::pow(detail::gaussian_abs_moment(r), 1.0 / r); }

  std::normal_distribution<double> dist{0.0, 1.0};
};

/// Generator for replication `seed`; distinct seeds give independent streams.
inline std::mt19937_64 make_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    0x9e3779b9u};
  return std::mt19937_64(seq);
}

/// Verdict of validate_params.
struct Validity {
  bool valid = true;
  std::vector<std::string> violations;
  /// Sum of the amounts by which constraints are exceeded (0 when valid).
  double violation = 0.0;
  /// Smallest slack over the checked constraints; small values mean the
  /// point sits near the boundary of the admissible region.
  double margin = std::numeric_limits<double>::infinity();
};

/// Modulus of the largest root of z^p - a_1 z^{p-1} - ... - a_p, i.e. the
/// inverse of the smallest root of 1 - sum a_i z^i. The polynomial is stable
/// (roots outside the unit disk) iff this is < 1.
inline double inverse_root_radius(std::span<const double> a) {
  std::size_t p = a.size();
  while (p > 0 && a[p - 1] == 0.0) --p;
  if (p == 0) return 0.0;
  if (p == 1) return std::abs(a[0]);
  Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p),
                                               static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < p; ++i) comp(0, static_cast<Eigen::Index>(i)) = a[i];
  for (std::size_t i = 1; i < p; ++i)
    comp(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i - 1)) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(comp, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Weights b+_k, b-_k of the APARCH ARCH(inf) expansion of sigma_t^delta,
/// truncated at `lags` terms.
inline void aparch_expansion(double delta, std::span<const double> alpha,
                             std::span<const double> gamma, std::span<const double> beta,
                             std::size_t lags, std::vector<double>& bplus,
                             std::vector<double>& bminus) {
  // Impulse response g of 1 / (1 - sum beta_j L^j).
  std::vector<double> g(lags + 1, 0.0);
  g[0] = 1.0;
  for (std::size_t k = 1; k <= lags; ++k)
    for (std::size_t j = 1; j <= beta.size() && j <= k; ++j) g[k] += beta[j - 1] * g[k - j];
  bplus.assign(lags + 1, 0.0);
  bminus.assign(lags + 1, 0.0);
  for (std::size_t i = 1; i <= alpha.size(); ++i) {
    const double up = alpha[i - 1] * std::pow(std::max(0.0, 1.0 - gamma[i - 1]), delta);
    const double dn = alpha[i - 1] * std::pow(std::max(0.0, 1.0 + gamma[i - 1]), delta);
    for (std::size_t k = i; k <= lags; ++k) {
      bplus[k] += up * g[k - i];
      bminus[k] += dn * g[k - i];
    }
  }
}

namespace detail {

inline void check_slots(const ModelSpec& spec, const ParamVector& theta, Validity& v) {
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (!spec.active[i]) continue;
    const Slot& s = theta.layout[i];
    const double x = theta[i];
    if (std::isfinite(s.lower)) {
      const double slack = x - s.lower;
      const bool bad = s.lower_strict ? slack <= 0.0 : slack < 0.0;
      if (bad) {
        v.valid = false;
        v.violations.push_back(s.name + " below lower bound " + std::to_string(s.lower));
        v.violation += -slack + (s.lower_strict ? 1e-12 : 0.0);
      }
      v.margin = std::min(v.margin, slack);
    }
    if (std::isfinite(s.upper)) {
      const double slack = s.upper - x;
      const bool bad = s.upper_strict ? slack <= 0.0 : slack < 0.0;
      if (bad) {
        v.valid = false;
        v.violations.push_back(s.name + " above upper bound " + std::to_string(s.upper));
        v.violation += -slack + (s.upper_strict ? 1e-12 : 0.0);
      }
      v.margin = std::min(v.margin, slack);
    }
  }
}

// Records the contraction condition `value < 1`.
inline void check_contraction(double value, const std::string& what, Validity& v) {
  if (!std::isfinite(value) || value >= 1.0) {
    v.valid = false;
    v.violations.push_back(what + " = " + std::to_string(value) + " is not < 1");
    v.violation += std::isfinite(value) ? value - 1.0 + 1e-12 : 1e6;
  }
  v.margin = std::min(v.margin, 1.0 - value);
}

// sum_{i=1}^{lags} i^-decay, memoised per thread for the optimizer loop.
inline double zeta_partial(double decay, std::size_t lags) {
  thread_local double last_decay = 0.0;
  thread_local std::size_t last_lags = 0;
  thread_local double last_value = 0.0;
  if (decay == last_decay && lags == last_lags) return last_value;
  double s = 0.0;
  for (std::size_t i = lags; i >= 1; --i) s += std::pow(static_cast<double>(i), -decay);
  last_decay = decay;
  last_lags = lags;
  last_value = s;
  return s;
}

}  // namespace detail

/// Checks per-slot bounds and the family's stationarity (contraction)
/// condition at moment order r, with the Gaussian ||xi_0||_r.
template <class Noise = GaussianNoise>
Validity validate_params(const ModelSpec& spec, const ParamVector& theta,
                         double r = kDefaultMomentOrder) {
  if (theta.size() != spec.full_dim())
    throw DimensionMismatch("parameter vector has " + std::to_string(theta.size()) +
                            " entries, " + spec.name() + " expects " +
                            std::to_string(spec.full_dim()));
  Validity v;
  detail::check_slots(spec, theta, v);
  const double norm = Noise::lr_norm(r);
  const auto th = theta.span();
  auto seg = [&](std::size_t off, int len) { return th.subspan(off, static_cast<std::size_t>(len)); };
  std::visit(
      overloaded{
          [&](const family::WhiteNoise&) {},
          [&](const family::AR& f) {
            detail::check_contraction(inverse_root_radius(seg(1, f.p)), "AR root radius", v);
          },
          [&](const family::ARMA& f) {
            detail::check_contraction(inverse_root_radius(seg(1, f.p)), "AR root radius", v);
            detail::check_contraction(inverse_root_radius(seg(1 + f.p, f.q)), "MA root radius",
                                      v);
          },
          [&](const family::ARCH& f) {
            detail::check_contraction(norm * norm * detail::sum_of(seg(1, f.p)),
                                      "||xi||_r^2 * sum ARCH weights", v);
          },
          [&](const family::GARCH& f) {
            const double sd = detail::sum_of(seg(1 + f.p, f.q));
            detail::check_contraction(sd, "sum d", v);
            const double psi = sd < 1.0 ? detail::sum_of(seg(1, f.p)) / (1.0 - sd)
                                        : std::numeric_limits<double>::infinity();
            detail::check_contraction(norm * norm * psi, "||xi||_r^2 * sum ARCH(inf) weights", v);
          },
          [&](const family::APARCH& f) {
            const auto alpha = seg(1, f.p), gamma = seg(1 + f.p, f.p), beta = seg(1 + 2 * f.p, f.q);
            const double sb = detail::sum_of(beta);
            detail::check_contraction(sb, "sum beta", v);
            if (sb < 1.0) {
              std::vector<double> bp, bm;
              // Geometric tail: 2000 lags is far below double precision for sum beta < 0.98.
              aparch_expansion(f.delta, alpha, gamma, beta, 2000, bp, bm);
              double lip = 0.0;
              for (std::size_t k = 1; k < bp.size(); ++k)
                lip += std::pow(std::max(std::abs(bp[k]), std::abs(bm[k])), 1.0 / f.delta);
              detail::check_contraction(norm * lip, "||xi||_r * APARCH Lipschitz sum", v);
            }
          },
          [&](const family::ArmaGarch& f) {
            const std::size_t off = 1 + f.arch + f.garch;
            detail::check_contraction(inverse_root_radius(seg(off, f.p)), "AR root radius", v);
            detail::check_contraction(inverse_root_radius(seg(off + f.p, f.q)), "MA root radius",
                                      v);
            detail::check_contraction(
                detail::sum_of(seg(1 + f.arch, f.garch)) + norm * detail::sum_of(seg(1, f.arch)),
                "sum d + ||xi||_r * sum c", v);
          },
          [&](const family::ArArchInf& f) {
            detail::check_contraction(inverse_root_radius(seg(2, f.p)), "AR root radius", v);
            const double tail =
                th[1] * detail::zeta_partial(f.decay, static_cast<std::size_t>(f.max_lag));
            detail::check_contraction(norm * norm * tail, "||xi||_r^2 * sum ARCH(inf) weights", v);
          },
      },
      spec.family);
  return v;
}

/// A simulated path together with the noise that drove it.
struct SimulationTrace {
  TimeSeries series;
  std::vector<double> noise;  // xi_t aligned with series
};

/// Simulates burn_in + n steps from zero pre-sample values and returns the
/// last n, together with the driving noise. Identical seeds give bit-identical
/// output.
template <class Noise = GaussianNoise>
SimulationTrace simulate_trace(const ModelSpec& spec, const ParamVector& theta, std::size_t n,
                               std::size_t burn_in, std::uint64_t seed,
                               double r = kDefaultMomentOrder) {
  if (n < 1) throw InvalidParameters("simulation length must be >= 1");
  const Validity v = validate_params<Noise>(spec, theta, r);
  if (!v.valid) {
    std::string msg = "cannot simulate " + spec.name() + ": inadmissible parameters";
    for (const auto& s : v.violations) msg += "; " + s;
    throw InvalidParameters(msg);
  }
  const std::size_t total = burn_in + n;
  auto rng = make_rng(seed);
  Noise noise;
  std::vector<double> xi(total);
  detail::FilterBuffers buf;
  detail::run_filter(
      spec.family, theta.span(), total, detail::Presample::Stationary,
      [&](std::size_t t, double f, double h) {
        xi[t] = noise(rng);
        return f + std::sqrt(h) * xi[t];
      },
      buf);
  for (std::size_t t = 0; t < total; ++t)
    if (!std::isfinite(buf.x[t]))
      throw NonFiniteValue("simulation of " + spec.name() + " diverged", t);
  std::vector<double> out(buf.x.begin() + static_cast<std::ptrdiff_t>(burn_in), buf.x.end());
  std::vector<double> noise_out(xi.begin() + static_cast<std::ptrdiff_t>(burn_in), xi.end());
  return {TimeSeries(std::move(out), spec.name()), std::move(noise_out)};
}

template <class Noise = GaussianNoise>
TimeSeries simulate(const ModelSpec& spec, const ParamVector& theta, std::size_t n,
                    std::size_t burn_in, std::uint64_t seed) {
  return simulate_trace<Noise>(spec, theta, n, burn_in, seed).series;
}

}  // namespace acsel
