#pragma once

#include <acsel/error.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

namespace acsel {

// Process families. Orders are counts of lags; every layout starts with the
// scale slot (sigma, c0 or omega).
namespace family {

struct WhiteNoise {
  friend bool operator==(const WhiteNoise&, const WhiteNoise&) = default;
};

struct AR {
  int p = 0;
  friend bool operator==(const AR&, const AR&) = default;
};

/// X_t = sum a_i X_{t-i} + e_t - sum b_j e_{t-j}, e_t = sigma xi_t.
struct ARMA {
  int p = 0;
  int q = 0;
  friend bool operator==(const ARMA&, const ARMA&) = default;
};

struct ARCH {
  int p = 0;
  friend bool operator==(const ARCH&, const ARCH&) = default;
};

/// H_t = c0 + sum_{i<=p} c_i X_{t-i}^2 + sum_{j<=q} d_j H_{t-j}.
/// `p` counts ARCH lags, `q` counts lagged variances.
struct GARCH {
  int p = 0;
  int q = 0;
  friend bool operator==(const GARCH&, const GARCH&) = default;
};

/// sigma_t^delta = omega + sum alpha_i (|X_{t-i}| - gamma_i X_{t-i})^delta
///                 + sum beta_j sigma_{t-j}^delta.
struct APARCH {
  double delta = 2.0;
  int p = 0;
  int q = 0;
  friend bool operator==(const APARCH&, const APARCH&) = default;
};

/// ARMA(p, q) mean with GARCH(arch, garch) innovations.
struct ArmaGarch {
  int p = 0;
  int q = 0;
  int arch = 0;
  int garch = 0;
  friend bool operator==(const ArmaGarch&, const ArmaGarch&) = default;
};

/// AR(p) mean whose noise is ARCH(inf) with weights alpha * i^-decay.
struct ArArchInf {
  int p = 0;
  double decay = 3.0;
  int max_lag = 10000;
  friend bool operator==(const ArArchInf&, const ArArchInf&) = default;
};

}  // namespace family

using ModelFamily = std::variant<family::WhiteNoise, family::AR, family::ARMA, family::ARCH,
                                 family::GARCH, family::APARCH, family::ArmaGarch,
                                 family::ArArchInf>;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

enum class SlotRole { Scale, Mean, MovingAverage, Arch, Asymmetry, Persistence };

/// One parameter slot: its label and admissible interval.
struct Slot {
  std::string name;
  SlotRole role = SlotRole::Mean;
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  bool lower_strict = false;
  bool upper_strict = false;

  friend bool operator==(const Slot&, const Slot&) = default;
};

namespace detail {

inline void check_order(int k, const char* what) {
  if (k < 0) throw InvalidParameters(std::string("negative order for ") + what);
}

inline void append_slots(std::vector<Slot>& out, const std::string& stem, int count, SlotRole role,
                         double lower, double upper, bool lower_strict, bool upper_strict) {
  for (int i = 1; i <= count; ++i)
    out.push_back({stem + std::to_string(i), role, lower, upper, lower_strict, upper_strict});
}

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace detail

inline void validate_family(const ModelFamily& fam) {
  std::visit(overloaded{
                 [](const family::WhiteNoise&) {},
                 [](const family::AR& f) { detail::check_order(f.p, "AR"); },
                 [](const family::ARMA& f) {
                   detail::check_order(f.p, "ARMA");
                   detail::check_order(f.q, "ARMA");
                 },
                 [](const family::ARCH& f) { detail::check_order(f.p, "ARCH"); },
                 [](const family::GARCH& f) {
                   detail::check_order(f.p, "GARCH");
                   detail::check_order(f.q, "GARCH");
                 },
                 [](const family::APARCH& f) {
                   detail::check_order(f.p, "APARCH");
                   detail::check_order(f.q, "APARCH");
                   if (!(f.delta >= 1.0)) throw InvalidParameters("APARCH requires delta >= 1");
                 },
                 [](const family::ArmaGarch& f) {
                   detail::check_order(f.p, "ARMA-GARCH");
                   detail::check_order(f.q, "ARMA-GARCH");
                   detail::check_order(f.arch, "ARMA-GARCH");
                   detail::check_order(f.garch, "ARMA-GARCH");
                 },
                 [](const family::ArArchInf& f) {
                   detail::check_order(f.p, "AR-ARCH(inf)");
                   if (!(f.decay > 1.0))
                     throw InvalidParameters("AR-ARCH(inf) requires decay exponent > 1");
                   if (f.max_lag < 1) throw InvalidParameters("AR-ARCH(inf) requires max_lag >= 1");
                 },
             },
             fam);
}

/// Ordered parameter layout of a family. Slot 0 is always the scale slot.
inline std::vector<Slot> param_layout(const ModelFamily& fam) {
  using detail::kInf;
  validate_family(fam);
  std::vector<Slot> out;
  std::visit(
      overloaded{
          [&](const family::WhiteNoise&) {
            out.push_back({"sigma", SlotRole::Scale, 0.0, kInf, true, false});
          },
          [&](const family::AR& f) {
            out.push_back({"sigma", SlotRole::Scale, 0.0, kInf, true, false});
            detail::append_slots(out, "phi", f.p, SlotRole::Mean, -kInf, kInf, false, false);
          },
          [&](const family::ARMA& f) {
            out.push_back({"sigma", SlotRole::Scale, 0.0, kInf, true, false});
            detail::append_slots(out, "a", f.p, SlotRole::Mean, -kInf, kInf, false, false);
            detail::append_slots(out, "b", f.q, SlotRole::MovingAverage, -kInf, kInf, false, false);
          },
          [&](const family::ARCH& f) {
            out.push_back({"a0", SlotRole::Scale, 0.0, kInf, true, false});
            detail::append_slots(out, "a", f.p, SlotRole::Arch, 0.0, kInf, false, false);
          },
          [&](const family::GARCH& f) {
            out.push_back({"c0", SlotRole::Scale, 0.0, kInf, true, false});
            detail::append_slots(out, "c", f.p, SlotRole::Arch, 0.0, kInf, false, false);
            detail::append_slots(out, "d", f.q, SlotRole::Persistence, 0.0, kInf, false, false);
          },
          [&](const family::APARCH& f) {
            out.push_back({"omega", SlotRole::Scale, 0.0, kInf, true, false});
            detail::append_slots(out, "alpha", f.p, SlotRole::Arch, 0.0, kInf, false, false);
            detail::append_slots(out, "gamma", f.p, SlotRole::Asymmetry, -1.0, 1.0, true, true);
            detail::append_slots(out, "beta", f.q, SlotRole::Persistence, 0.0, kInf, false, false);
          },
          [&](const family::ArmaGarch& f) {
            out.push_back({"c0", SlotRole::Scale, 0.0, kInf, true, false});
            detail::append_slots(out, "c", f.arch, SlotRole::Arch, 0.0, kInf, false, false);
            detail::append_slots(out, "d", f.garch, SlotRole::Persistence, 0.0, kInf, false, false);
            detail::append_slots(out, "a", f.p, SlotRole::Mean, -kInf, kInf, false, false);
            detail::append_slots(out, "b", f.q, SlotRole::MovingAverage, -kInf, kInf, false, false);
          },
          [&](const family::ArArchInf& f) {
            out.push_back({"omega", SlotRole::Scale, 0.0, kInf, true, false});
            out.push_back({"alpha", SlotRole::Arch, 0.0, kInf, false, false});
            detail::append_slots(out, "phi", f.p, SlotRole::Mean, -kInf, kInf, false, false);
          },
      },
      fam);
  return out;
}

inline std::size_t full_dimension(const ModelFamily& fam) {
  return std::visit(overloaded{
                        [](const family::WhiteNoise&) -> std::size_t { return 1; },
                        [](const family::AR& f) -> std::size_t { return 1 + f.p; },
                        [](const family::ARMA& f) -> std::size_t { return 1 + f.p + f.q; },
                        [](const family::ARCH& f) -> std::size_t { return 1 + f.p; },
                        [](const family::GARCH& f) -> std::size_t { return 1 + f.p + f.q; },
                        [](const family::APARCH& f) -> std::size_t { return 1 + 2 * f.p + f.q; },
                        [](const family::ArmaGarch& f) -> std::size_t {
                          return 1 + f.arch + f.garch + f.p + f.q;
                        },
                        [](const family::ArArchInf& f) -> std::size_t { return 2 + f.p; },
                    },
                    fam);
}

/// Short human-readable name such as "GARCH(1,1)".
inline std::string family_name(const ModelFamily& fam) {
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.15g", v);
    return std::string(buf);
  };
  return std::visit(
      overloaded{
          [](const family::WhiteNoise&) { return std::string("WN"); },
          [](const family::AR& f) { return "AR(" + std::to_string(f.p) + ")"; },
          [](const family::ARMA& f) {
            return "ARMA(" + std::to_string(f.p) + "," + std::to_string(f.q) + ")";
          },
          [](const family::ARCH& f) { return "ARCH(" + std::to_string(f.p) + ")"; },
          [](const family::GARCH& f) {
            return "GARCH(" + std::to_string(f.p) + "," + std::to_string(f.q) + ")";
          },
          [&](const family::APARCH& f) {
            return "APARCH(" + num(f.delta) + ";" + std::to_string(f.p) + "," +
                   std::to_string(f.q) + ")";
          },
          [](const family::ArmaGarch& f) {
            return "ARMA(" + std::to_string(f.p) + "," + std::to_string(f.q) + ")-GARCH(" +
                   std::to_string(f.arch) + "," + std::to_string(f.garch) + ")";
          },
          [&](const family::ArArchInf& f) {
            return "AR(" + std::to_string(f.p) + ")-ARCHinf(" + num(f.decay) + ";" +
                   std::to_string(f.max_lag) + ")";
          },
      },
      fam);
}

/// A family together with the set m of estimated slots.
struct ModelSpec {
  ModelFamily family;
  std::vector<bool> active;

  /// Every slot of `fam` estimated.
  static ModelSpec full(ModelFamily fam) {
    const auto d = full_dimension(fam);
    validate_family(fam);
    return ModelSpec{std::move(fam), std::vector<bool>(d, true)};
  }

  static ModelSpec masked(ModelFamily fam, std::vector<bool> mask) {
    validate_family(fam);
    if (mask.size() != full_dimension(fam))
      throw DimensionMismatch("active mask has " + std::to_string(mask.size()) +
                              " entries, family " + family_name(fam) + " has " +
                              std::to_string(full_dimension(fam)) + " slots");
    if (!mask[0]) throw InvalidParameters("the scale slot must be active");
    return ModelSpec{std::move(fam), std::move(mask)};
  }

  [[nodiscard]] std::size_t full_dim() const { return active.size(); }

  [[nodiscard]] std::size_t dim() const {
    return static_cast<std::size_t>(std::count(active.begin(), active.end(), true));
  }

  [[nodiscard]] std::vector<std::size_t> active_indices() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < active.size(); ++i)
      if (active[i]) idx.push_back(i);
    return idx;
  }

  [[nodiscard]] bool is_full() const {
    return std::all_of(active.begin(), active.end(), [](bool b) { return b; });
  }

  [[nodiscard]] std::string name() const {
    std::string s = family_name(family);
    if (!is_full()) {
      s += "[";
      for (bool b : active) s += b ? '1' : '0';
      s += "]";
    }
    return s;
  }

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// A parameter point theta in the full layout of a family.
struct ParamVector {
  std::vector<double> values;
  std::vector<Slot> layout;

  [[nodiscard]] std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }
  [[nodiscard]] std::span<const double> span() const { return values; }

  friend bool operator==(const ParamVector&, const ParamVector&) = default;
};

/// Builds a ParamVector for `spec`, rejecting wrong lengths and nonzero inactive slots.
inline ParamVector make_params(const ModelSpec& spec, std::vector<double> values) {
  if (values.size() != spec.full_dim())
    throw DimensionMismatch("parameter vector has " + std::to_string(values.size()) +
                            " entries, " + spec.name() + " expects " +
                            std::to_string(spec.full_dim()));
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!spec.active[i] && values[i] != 0.0)
      throw InvalidParameters("inactive slot " + std::to_string(i) + " must be exactly 0");
    if (!std::isfinite(values[i]))
      throw InvalidParameters("parameter slot " + std::to_string(i) + " is not finite");
  }
  return ParamVector{std::move(values), param_layout(spec.family)};
}

/// Observed or simulated trajectory X_1..X_n.
struct TimeSeries {
  std::vector<double> values;
  std::string label;

  TimeSeries() = default;
  explicit TimeSeries(std::vector<double> v, std::string lbl = {})
      : values(std::move(v)), label(std::move(lbl)) {
    if (values.empty()) throw InvalidParameters("time series must contain at least one value");
    for (std::size_t i = 0; i < values.size(); ++i)
      if (!std::isfinite(values[i]))
        throw NonFiniteValue("time series contains a non-finite value", i);
  }

  [[nodiscard]] std::size_t size() const { return values.size(); }
  [[nodiscard]] std::span<const double> span() const { return values; }
  double operator[](std::size_t i) const { return values[i]; }
};

}  // namespace acsel
