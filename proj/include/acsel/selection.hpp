#pragma once

#include <acsel/estimation.hpp>
#include <acsel/parallel.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace acsel {

/// Per-parameter penalty weight kappa_n.
struct Penalty {
  enum class Kind { LogN, SqrtN, PowerN, Custom };

  Kind kind = Kind::LogN;
  /// Exponent of PowerN.
  double delta = 0.5;
  std::function<double(std::size_t)> custom;
  /// Display name of a Custom penalty.
  std::string custom_label = "custom";

  static Penalty log_n() { return {}; }
  static Penalty sqrt_n() { return {Kind::SqrtN}; }
  static Penalty power_n(double delta) {
    if (!(delta > 0.0 && delta < 1.0))
      throw InvalidParameters("PowerN exponent must lie in (0, 1)");
    return {Kind::PowerN, delta};
  }
  static Penalty custom_sequence(std::function<double(std::size_t)> fn, std::string label) {
    Penalty p{Kind::Custom};
    p.custom = std::move(fn);
    p.custom_label = std::move(label);
    return p;
  }

  [[nodiscard]] std::string label() const {
    switch (kind) {
      case Kind::LogN: return "log(n)";
      case Kind::SqrtN: return "sqrt(n)";
      case Kind::PowerN: {
        char buf[48];
        std::snprintf(buf, sizeof buf, "n^%.6g", delta);
        return buf;
      }
      case Kind::Custom: return custom_label;
    }
    return "?";
  }
};

inline double penalty_value(const Penalty& p, std::size_t n) {
  if (n < 2) throw InvalidParameters("penalty requires n >= 2");
  const double dn = static_cast<double>(n);
  double k = 0.0;
  switch (p.kind) {
    case Penalty::Kind::LogN: k = std::log(dn); break;
    case Penalty::Kind::SqrtN: k = std::sqrt(dn); break;
    case Penalty::Kind::PowerN:
      if (!(p.delta > 0.0 && p.delta < 1.0))
        throw InvalidParameters("PowerN exponent must lie in (0, 1)");
      k = std::pow(dn, p.delta);
      break;
    case Penalty::Kind::Custom:
      if (!p.custom) throw InvalidParameters("custom penalty has no sequence");
      k = p.custom(n);
      break;
  }
  if (!(k > 0.0) || !std::isfinite(k))
    throw InvalidParameters("penalty " + p.label() + " is not positive at n = " +
                            std::to_string(n));
  return k;
}

/// C(m) = -2 L_n(theta_hat(m)) + |m| kappa_n.
inline double criterion(double loglik, std::size_t m_size, double kappa) {
  return -2.0 * loglik + static_cast<double>(m_size) * kappa;
}

struct OrderRange {
  int lo = 0;
  int hi = 0;
  friend bool operator==(const OrderRange&, const OrderRange&) = default;
};

namespace grid {

struct Arma {
  OrderRange p, q;
};
/// `p` ranges over ARCH lags, `q` over lagged variances.
struct Garch {
  OrderRange p, q;
};
struct Ar {
  OrderRange p;
};
struct Arch {
  OrderRange p;
};
/// Every coefficient mask of AR(p_max); sigma always active.
struct ArSubsets {
  int p_max = 0;
};
struct Aparch {
  double delta = 2.0;
  OrderRange p, q;
};
struct ArmaGarch {
  OrderRange p, q, arch, garch;
};
struct ArArchInf {
  OrderRange p;
  double decay = 3.0;
  int max_lag = 10000;
};
struct Explicit {
  std::vector<ModelSpec> specs;
};

using Part = std::variant<Arma, Garch, Ar, Arch, ArSubsets, Aparch, ArmaGarch, ArArchInf, Explicit>;

}  // namespace grid

/// Union of grid parts, enumerated in order.
struct CandidateGrid {
  std::vector<grid::Part> parts;
};

namespace detail {

inline void check_range(const OrderRange& r, int min_lo, const char* what) {
  if (r.lo < min_lo || r.hi < r.lo)
    throw InvalidParameters(std::string("invalid order range for ") + what + ": [" +
                            std::to_string(r.lo) + ", " + std::to_string(r.hi) + "]");
}

}  // namespace detail

/// Deterministically ordered candidate list; outer loops run over the first order.
inline std::vector<ModelSpec> enumerate_candidates(const CandidateGrid& g) {
  std::vector<ModelSpec> out;
  for (const auto& part : g.parts) {
    std::visit(
        overloaded{
            [&](const grid::Arma& a) {
              detail::check_range(a.p, 0, "ARMA p");
              detail::check_range(a.q, 0, "ARMA q");
              for (int p = a.p.lo; p <= a.p.hi; ++p)
                for (int q = a.q.lo; q <= a.q.hi; ++q)
                  out.push_back(ModelSpec::full(family::ARMA{p, q}));
            },
            [&](const grid::Garch& a) {
              detail::check_range(a.p, 0, "GARCH p");
              detail::check_range(a.q, 0, "GARCH q");
              for (int p = a.p.lo; p <= a.p.hi; ++p)
                for (int q = a.q.lo; q <= a.q.hi; ++q)
                  out.push_back(ModelSpec::full(family::GARCH{p, q}));
            },
            [&](const grid::Ar& a) {
              detail::check_range(a.p, 0, "AR p");
              for (int p = a.p.lo; p <= a.p.hi; ++p) out.push_back(ModelSpec::full(family::AR{p}));
            },
            [&](const grid::Arch& a) {
              detail::check_range(a.p, 0, "ARCH p");
              for (int p = a.p.lo; p <= a.p.hi; ++p)
                out.push_back(ModelSpec::full(family::ARCH{p}));
            },
            [&](const grid::ArSubsets& a) {
              if (a.p_max < 0 || a.p_max > 20)
                throw InvalidParameters("AR subset enumeration needs 0 <= p_max <= 20");
              const std::size_t count = std::size_t{1} << a.p_max;
              for (std::size_t bits = 0; bits < count; ++bits) {
                std::vector<bool> mask(static_cast<std::size_t>(a.p_max) + 1, false);
                mask[0] = true;
                for (int i = 0; i < a.p_max; ++i) mask[1 + i] = (bits >> i) & 1u;
                out.push_back(ModelSpec::masked(family::AR{a.p_max}, std::move(mask)));
              }
            },
            [&](const grid::Aparch& a) {
              detail::check_range(a.p, 0, "APARCH p");
              detail::check_range(a.q, 0, "APARCH q");
              for (int p = a.p.lo; p <= a.p.hi; ++p)
                for (int q = a.q.lo; q <= a.q.hi; ++q)
                  out.push_back(ModelSpec::full(family::APARCH{a.delta, p, q}));
            },
            [&](const grid::ArmaGarch& a) {
              detail::check_range(a.p, 0, "ARMA-GARCH p");
              detail::check_range(a.q, 0, "ARMA-GARCH q");
              detail::check_range(a.arch, 0, "ARMA-GARCH arch");
              detail::check_range(a.garch, 0, "ARMA-GARCH garch");
              for (int p = a.p.lo; p <= a.p.hi; ++p)
                for (int q = a.q.lo; q <= a.q.hi; ++q)
                  for (int c = a.arch.lo; c <= a.arch.hi; ++c)
                    for (int d = a.garch.lo; d <= a.garch.hi; ++d)
                      out.push_back(ModelSpec::full(family::ArmaGarch{p, q, c, d}));
            },
            [&](const grid::ArArchInf& a) {
              detail::check_range(a.p, 0, "AR-ARCH(inf) p");
              for (int p = a.p.lo; p <= a.p.hi; ++p)
                out.push_back(ModelSpec::full(family::ArArchInf{p, a.decay, a.max_lag}));
            },
            [&](const grid::Explicit& e) {
              for (const auto& s : e.specs) out.push_back(s);
            },
        },
        part);
  }
  if (out.empty()) throw InvalidParameters("candidate grid is empty");
  return out;
}

enum class Outcome { Wrong, True, Overfitted };

inline const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::Wrong: return "wrong";
    case Outcome::True: return "true";
    case Outcome::Overfitted: return "overfitted";
  }
  return "?";
}

namespace detail {

// A family kind plus the names of its active slots after mapping
// WN -> ARMA(0,0), AR(p) -> ARMA(p,0) and ARCH(p) -> GARCH(p,0), whose
// layouts coincide slot by slot.
struct Structure {
  std::string kind;
  std::set<std::string> active;
};

inline Structure structure_of(const ModelSpec& spec) {
  ModelFamily canon = std::visit(
      overloaded{
          [](const family::WhiteNoise&) -> ModelFamily { return family::ARMA{0, 0}; },
          [](const family::AR& f) -> ModelFamily { return family::ARMA{f.p, 0}; },
          [](const family::ARCH& f) -> ModelFamily { return family::GARCH{f.p, 0}; },
          [](const auto& f) -> ModelFamily { return f; },
      },
      spec.family);
  Structure s;
  s.kind = std::visit(
      overloaded{
          [](const family::APARCH& f) { return "APARCH/" + std::to_string(f.delta); },
          [](const family::ArArchInf& f) {
            return "ARARCHINF/" + std::to_string(f.decay) + "/" + std::to_string(f.max_lag);
          },
          [](const auto&) { return std::string(); },
      },
      canon);
  s.kind += "#" + std::to_string(canon.index());
  const auto layout = param_layout(canon);
  for (std::size_t i = 0; i < spec.active.size(); ++i)
    if (spec.active[i]) s.active.insert(layout[i].name);
  return s;
}

}  // namespace detail

/// true: same family and active structure as `reference`; overfitted: same
/// family, strictly more active slots containing the reference ones; wrong
/// otherwise (including every cross-family choice).
inline Outcome classify(const ModelSpec& chosen, const ModelSpec& reference) {
  const auto c = detail::structure_of(chosen);
  const auto r = detail::structure_of(reference);
  if (c.kind != r.kind) return Outcome::Wrong;
  if (c.active == r.active) return Outcome::True;
  if (std::includes(c.active.begin(), c.active.end(), r.active.begin(), r.active.end()))
    return Outcome::Overfitted;
  return Outcome::Wrong;
}

/// Fit of one candidate; `fit` is empty when the candidate was excluded.
struct CandidateFit {
  ModelSpec spec;
  std::optional<FitResult> fit;
  std::string error;
};

/// Fits every candidate; failures are recorded rather than thrown. Fits are
/// independent and run on up to `threads` workers.
inline std::vector<CandidateFit> fit_candidates(const TimeSeries& x,
                                                const std::vector<ModelSpec>& candidates,
                                                const OptimizerOptions& opts,
                                                std::size_t threads = 1) {
  std::vector<CandidateFit> out(candidates.size());
  parallel_for(candidates.size(), threads, [&](std::size_t i) {
    out[i].spec = candidates[i];
    try {
      out[i].fit = fit_qmle(candidates[i], x, opts);
    } catch (const Error& e) {
      out[i].error = e.what();
    }
  });
  return out;
}

struct CandidateRecord {
  ModelSpec spec;
  /// Empty for excluded candidates.
  std::optional<FitResult> fit;
  std::size_t m_size = 0;
  double loglik = 0.0;
  double criterion = 0.0;
  bool excluded = false;
  std::string note;
};

struct SelectionReport {
  std::string penalty;
  double kappa = 0.0;
  std::size_t n = 0;
  std::vector<CandidateRecord> records;
  std::size_t chosen = 0;
  /// Candidates whose criterion is within tolerance of the minimum.
  std::vector<std::size_t> ties;
  std::vector<std::string> warnings;
  std::optional<ModelSpec> reference;
  std::optional<Outcome> outcome;

  [[nodiscard]] const CandidateRecord& winner() const { return records.at(chosen); }
};

/// Criteria closer than this, relative to the minimum, count as tied.
inline constexpr double kTieTolerance = 1e-9;

/// Applies a penalty to precomputed fits. Among tied minima the smallest |m|
/// wins, then the lowest enumeration index.
inline SelectionReport select_from_fits(const std::vector<CandidateFit>& fits,
                                        const Penalty& penalty, std::size_t n,
                                        const std::optional<ModelSpec>& reference = std::nullopt) {
  if (fits.empty()) throw InvalidParameters("no candidates to select from");
  SelectionReport rep;
  rep.penalty = penalty.label();
  rep.kappa = penalty_value(penalty, n);
  rep.n = n;
  rep.reference = reference;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& cf : fits) {
    CandidateRecord r;
    r.spec = cf.spec;
    r.m_size = cf.spec.dim();
    if (cf.fit) {
      r.fit = cf.fit;
      r.loglik = cf.fit->loglik;
      r.criterion = criterion(r.loglik, r.m_size, rep.kappa);
      if (!cf.fit->convergence.converged) r.note = "not converged";
      if (cf.fit->convergence.boundary) r.note += r.note.empty() ? "boundary" : ", boundary";
      best = std::min(best, r.criterion);
    } else {
      r.excluded = true;
      r.note = cf.error;
      r.loglik = std::numeric_limits<double>::quiet_NaN();
      r.criterion = std::numeric_limits<double>::quiet_NaN();
      rep.warnings.push_back("excluded " + cf.spec.name() + ": " + cf.error);
    }
    rep.records.push_back(std::move(r));
  }
  if (!std::isfinite(best)) throw EstimationFailed("every candidate failed to fit");
  const double tol = kTieTolerance * (std::abs(best) + 1.0);
  bool have = false;
  for (std::size_t i = 0; i < rep.records.size(); ++i) {
    const auto& r = rep.records[i];
    if (r.excluded || r.criterion > best + tol) continue;
    rep.ties.push_back(i);
    if (!have || r.m_size < rep.records[rep.chosen].m_size) {
      rep.chosen = i;
      have = true;
    }
  }
  if (reference) rep.outcome = classify(rep.winner().spec, *reference);
  return rep;
}

inline SelectionReport select(const TimeSeries& x, const std::vector<ModelSpec>& candidates,
                              const Penalty& penalty, const OptimizerOptions& opts = {},
                              const std::optional<ModelSpec>& reference = std::nullopt,
                              std::size_t threads = 1) {
  if (candidates.empty()) throw InvalidParameters("no candidates to select from");
  if (x.size() < 2) throw InvalidParameters("selection requires n >= 2");
  penalty_value(penalty, x.size());
  return select_from_fits(fit_candidates(x, candidates, opts, threads), penalty, x.size(),
                          reference);
}

}  // namespace acsel
