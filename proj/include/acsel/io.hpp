#pragma once

// JSON forms of specs, parameters, penalties, grids and results, plus the
// compact spec syntax used on the command line ("garch(1,1)", "ar(4)[10011]").

#include <acsel/diagnostics.hpp>
#include <acsel/estimation.hpp>
#include <acsel/selection.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

namespace acsel {

using Json = nlohmann::ordered_json;

namespace detail {

inline std::string lower_no_space(std::string_view in) {
  std::string s;
  for (char c : in)
    if (!std::isspace(static_cast<unsigned char>(c)))
      s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return s;
}

inline int to_order(const std::string& s) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos != s.size() || v < 0 || v > 100000) throw ConfigError("bad order '" + s + "'");
    return static_cast<int>(v);
  } catch (const std::logic_error&) {
    throw ConfigError("bad order '" + s + "'");
  }
}

inline double to_real(const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw ConfigError("bad number '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError("bad number '" + s + "'");
  }
}

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

template <class T>
T get_req(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key))
    throw ConfigError(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

}  // namespace detail

/// Parses the compact syntax, case-insensitive:
///   wn | ar(p) | arma(p,q) | arch(p) | garch(p,q) | aparch(delta;p,q)
///   | arma(p,q)-garch(arch,garch) | ar(p)-archinf[(decay[;max_lag])]
/// optionally followed by an active mask such as [1011]. Every
/// ModelSpec::name() parses back to the same spec.
inline ModelSpec parse_spec(std::string_view text) {
  std::string s = detail::lower_no_space(text);
  std::string mask;
  if (!s.empty() && s.back() == ']') {
    const auto open = s.rfind('[');
    if (open == std::string::npos) throw ConfigError("unbalanced mask in '" + std::string(text) + "'");
    mask = s.substr(open + 1, s.size() - open - 2);
    s.resize(open);
  }
  static const std::string num = R"(([-+0-9.e]+))";
  static const std::regex re_wn(R"(wn|whitenoise)");
  static const std::regex re_ar(R"(ar\((\d+)\))");
  static const std::regex re_arma(R"(arma\((\d+),(\d+)\))");
  static const std::regex re_arch(R"(arch\((\d+)\))");
  static const std::regex re_garch(R"(garch\((\d+),(\d+)\))");
  static const std::regex re_aparch("aparch\\(" + num + R"(;(\d+),(\d+)\))");
  static const std::regex re_ag(R"(arma\((\d+),(\d+)\)-garch\((\d+),(\d+)\))");
  static const std::regex re_ai("ar\\((\\d+)\\)-archinf(?:\\(" + num + R"((?:;(\d+))?\))?)");
  std::smatch m;
  ModelFamily fam;
  using detail::to_order;
  if (std::regex_match(s, re_wn)) {
    fam = family::WhiteNoise{};
  } else if (std::regex_match(s, m, re_ar)) {
    fam = family::AR{to_order(m[1])};
  } else if (std::regex_match(s, m, re_arma)) {
    fam = family::ARMA{to_order(m[1]), to_order(m[2])};
  } else if (std::regex_match(s, m, re_arch)) {
    fam = family::ARCH{to_order(m[1])};
  } else if (std::regex_match(s, m, re_garch)) {
    fam = family::GARCH{to_order(m[1]), to_order(m[2])};
  } else if (std::regex_match(s, m, re_aparch)) {
    fam = family::APARCH{detail::to_real(m[1]), to_order(m[2]), to_order(m[3])};
  } else if (std::regex_match(s, m, re_ag)) {
    fam = family::ArmaGarch{to_order(m[1]), to_order(m[2]), to_order(m[3]), to_order(m[4])};
  } else if (std::regex_match(s, m, re_ai)) {
    family::ArArchInf f{to_order(m[1])};
    if (m[2].matched) f.decay = detail::to_real(m[2]);
    if (m[3].matched) f.max_lag = to_order(m[3]);
    fam = f;
  } else {
    throw ConfigError("unrecognised model '" + std::string(text) + "'");
  }
  if (mask.empty()) return ModelSpec::full(fam);
  std::vector<bool> active;
  for (char c : mask) {
    if (c != '0' && c != '1') throw ConfigError("mask must contain only 0 and 1: '" + mask + "'");
    active.push_back(c == '1');
  }
  return ModelSpec::masked(fam, std::move(active));
}

inline Json spec_to_json(const ModelSpec& spec) {
  Json j = std::visit(
      overloaded{
          [](const family::WhiteNoise&) { return Json{{"family", "WN"}}; },
          [](const family::AR& f) { return Json{{"family", "AR"}, {"p", f.p}}; },
          [](const family::ARMA& f) { return Json{{"family", "ARMA"}, {"p", f.p}, {"q", f.q}}; },
          [](const family::ARCH& f) { return Json{{"family", "ARCH"}, {"p", f.p}}; },
          [](const family::GARCH& f) { return Json{{"family", "GARCH"}, {"p", f.p}, {"q", f.q}}; },
          [](const family::APARCH& f) {
            return Json{{"family", "APARCH"}, {"delta", f.delta}, {"p", f.p}, {"q", f.q}};
          },
          [](const family::ArmaGarch& f) {
            return Json{{"family", "ARMA-GARCH"}, {"p", f.p},         {"q", f.q},
                        {"arch", f.arch},         {"garch", f.garch}};
          },
          [](const family::ArArchInf& f) {
            return Json{
                {"family", "AR-ARCHINF"}, {"p", f.p}, {"decay", f.decay}, {"max_lag", f.max_lag}};
          },
      },
      spec.family);
  if (!spec.is_full()) {
    Json a = Json::array();
    for (bool b : spec.active) a.push_back(b ? 1 : 0);
    j["active"] = a;
  }
  return j;
}

/// Accepts either the compact string or the object form.
inline ModelSpec spec_from_json(const Json& j) {
  if (j.is_string()) return parse_spec(j.get<std::string>());
  if (!j.is_object()) throw ConfigError("model must be a string or an object");
  const auto name = detail::lower_no_space(detail::get_req<std::string>(j, "family"));
  using detail::get_or;
  using detail::get_req;
  ModelFamily fam;
  if (name == "wn" || name == "whitenoise") {
    fam = family::WhiteNoise{};
  } else if (name == "ar") {
    fam = family::AR{get_req<int>(j, "p")};
  } else if (name == "arma") {
    fam = family::ARMA{get_req<int>(j, "p"), get_req<int>(j, "q")};
  } else if (name == "arch") {
    fam = family::ARCH{get_req<int>(j, "p")};
  } else if (name == "garch") {
    fam = family::GARCH{get_req<int>(j, "p"), get_req<int>(j, "q")};
  } else if (name == "aparch") {
    fam = family::APARCH{get_or<double>(j, "delta", 2.0), get_req<int>(j, "p"),
                         get_req<int>(j, "q")};
  } else if (name == "arma-garch" || name == "armagarch") {
    fam = family::ArmaGarch{get_req<int>(j, "p"), get_req<int>(j, "q"), get_req<int>(j, "arch"),
                            get_req<int>(j, "garch")};
  } else if (name == "ar-archinf" || name == "ararchinf") {
    fam = family::ArArchInf{get_req<int>(j, "p"), get_or<double>(j, "decay", 3.0),
                            get_or<int>(j, "max_lag", 10000)};
  } else {
    throw ConfigError("unknown family '" + name + "'");
  }
  if (!j.contains("active")) return ModelSpec::full(fam);
  std::vector<bool> active;
  for (const auto& v : j.at("active")) {
    if (v.is_boolean())
      active.push_back(v.get<bool>());
    else if (v.is_number_integer() && (v.get<int>() == 0 || v.get<int>() == 1))
      active.push_back(v.get<int>() == 1);
    else
      throw ConfigError("active mask entries must be 0/1 or booleans");
  }
  return ModelSpec::masked(fam, std::move(active));
}

/// Slot name -> value, in layout order.
inline Json params_to_json(const ParamVector& theta) {
  Json j = Json::object();
  for (std::size_t i = 0; i < theta.size(); ++i) j[theta.layout[i].name] = theta[i];
  return j;
}

/// Accepts an array in layout order or an object keyed by slot name
/// (omitted slots are 0).
inline ParamVector params_from_json(const ModelSpec& spec, const Json& j) {
  const auto layout = param_layout(spec.family);
  std::vector<double> v(layout.size(), 0.0);
  if (j.is_array()) {
    if (j.size() != layout.size())
      throw ConfigError("parameter array has " + std::to_string(j.size()) + " entries, " +
                        spec.name() + " expects " + std::to_string(layout.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!j[i].is_number()) throw ConfigError("parameter values must be numbers");
      v[i] = j[i].get<double>();
    }
  } else if (j.is_object()) {
    for (const auto& [key, val] : j.items()) {
      const auto it = std::find_if(layout.begin(), layout.end(),
                                   [&](const Slot& s) { return s.name == key; });
      if (it == layout.end())
        throw ConfigError("unknown parameter '" + key + "' for " + spec.name());
      if (!val.is_number()) throw ConfigError("parameter '" + key + "' must be a number");
      v[static_cast<std::size_t>(it - layout.begin())] = val.get<double>();
    }
  } else {
    throw ConfigError("parameters must be an array or an object");
  }
  try {
    return make_params(spec, std::move(v));
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

/// "log", "sqrt", "power:<delta>" (also "bic" for log).
inline Penalty parse_penalty(std::string_view text) {
  const auto s = detail::lower_no_space(text);
  if (s == "log" || s == "logn" || s == "log(n)" || s == "bic") return Penalty::log_n();
  if (s == "sqrt" || s == "sqrtn" || s == "sqrt(n)") return Penalty::sqrt_n();
  for (const char* pre : {"power:", "n^"})
    if (s.rfind(pre, 0) == 0) {
      const auto rest = s.substr(std::char_traits<char>::length(pre));
      const auto slash = rest.find('/');
      const double d = slash == std::string::npos
                           ? detail::to_real(rest)
                           : detail::to_real(rest.substr(0, slash)) /
                                 detail::to_real(rest.substr(slash + 1));
      return Penalty::power_n(d);
    }
  throw ConfigError("unknown penalty '" + std::string(text) + "'");
}

inline Json penalty_to_json(const Penalty& p) {
  switch (p.kind) {
    case Penalty::Kind::LogN: return "log";
    case Penalty::Kind::SqrtN: return "sqrt";
    case Penalty::Kind::PowerN: return Json{{"power", p.delta}};
    case Penalty::Kind::Custom: throw ConfigError("custom penalties cannot be serialised");
  }
  return nullptr;
}

inline Penalty penalty_from_json(const Json& j) {
  if (j.is_string()) return parse_penalty(j.get<std::string>());
  if (j.is_object() && j.contains("power")) {
    try {
      return Penalty::power_n(detail::get_req<double>(j, "power"));
    } catch (const InvalidParameters& e) {
      throw ConfigError(e.what());
    }
  }
  throw ConfigError("penalty must be \"log\", \"sqrt\" or {\"power\": delta}");
}

namespace detail {

inline Json range_json(const OrderRange& r) { return Json::array({r.lo, r.hi}); }

inline OrderRange range_from(const Json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("grid part lacks '") + key + "'");
  const auto& v = j.at(key);
  if (v.is_number_integer()) return {v.get<int>(), v.get<int>()};
  if (v.is_array() && v.size() == 2 && v[0].is_number_integer() && v[1].is_number_integer())
    return {v[0].get<int>(), v[1].get<int>()};
  throw ConfigError(std::string("grid range '") + key + "' must be an integer or [lo, hi]");
}

}  // namespace detail

inline Json grid_to_json(const CandidateGrid& g) {
  using detail::range_json;
  Json out = Json::array();
  for (const auto& part : g.parts)
    out.push_back(std::visit(
        overloaded{
            [](const grid::Arma& a) {
              return Json{{"arma", {{"p", range_json(a.p)}, {"q", range_json(a.q)}}}};
            },
            [](const grid::Garch& a) {
              return Json{{"garch", {{"p", range_json(a.p)}, {"q", range_json(a.q)}}}};
            },
            [](const grid::Ar& a) { return Json{{"ar", {{"p", range_json(a.p)}}}}; },
            [](const grid::Arch& a) { return Json{{"arch", {{"p", range_json(a.p)}}}}; },
            [](const grid::ArSubsets& a) { return Json{{"ar_subsets", {{"p_max", a.p_max}}}}; },
            [](const grid::Aparch& a) {
              return Json{{"aparch",
                           {{"delta", a.delta}, {"p", range_json(a.p)}, {"q", range_json(a.q)}}}};
            },
            [](const grid::ArmaGarch& a) {
              return Json{{"arma_garch",
                           {{"p", range_json(a.p)},
                            {"q", range_json(a.q)},
                            {"arch", range_json(a.arch)},
                            {"garch", range_json(a.garch)}}}};
            },
            [](const grid::ArArchInf& a) {
              return Json{{"ar_archinf",
                           {{"p", range_json(a.p)}, {"decay", a.decay}, {"max_lag", a.max_lag}}}};
            },
            [](const grid::Explicit& e) {
              Json s = Json::array();
              for (const auto& m : e.specs) s.push_back(m.name());
              return Json{{"models", s}};
            },
        },
        part));
  return out;
}

inline CandidateGrid grid_from_json(const Json& j) {
  if (!j.is_array()) throw ConfigError("candidates must be an array of grid parts");
  using detail::range_from;
  CandidateGrid g;
  for (const auto& part : j) {
    if (part.is_string()) {
      g.parts.push_back(grid::Explicit{{parse_spec(part.get<std::string>())}});
      continue;
    }
    if (!part.is_object() || part.size() != 1)
      throw ConfigError("each grid part must be an object with a single key");
    const auto& [key, v] = *part.items().begin();
    if (key == "arma") {
      g.parts.push_back(grid::Arma{range_from(v, "p"), range_from(v, "q")});
    } else if (key == "garch") {
      g.parts.push_back(grid::Garch{range_from(v, "p"), range_from(v, "q")});
    } else if (key == "ar") {
      g.parts.push_back(grid::Ar{range_from(v, "p")});
    } else if (key == "arch") {
      g.parts.push_back(grid::Arch{range_from(v, "p")});
    } else if (key == "ar_subsets") {
      g.parts.push_back(grid::ArSubsets{detail::get_req<int>(v, "p_max")});
    } else if (key == "aparch") {
      g.parts.push_back(grid::Aparch{detail::get_or<double>(v, "delta", 2.0), range_from(v, "p"),
                                     range_from(v, "q")});
    } else if (key == "arma_garch") {
      g.parts.push_back(grid::ArmaGarch{range_from(v, "p"), range_from(v, "q"),
                                        range_from(v, "arch"), range_from(v, "garch")});
    } else if (key == "ar_archinf") {
      g.parts.push_back(grid::ArArchInf{range_from(v, "p"),
                                        detail::get_or<double>(v, "decay", 3.0),
                                        detail::get_or<int>(v, "max_lag", 10000)});
    } else if (key == "models") {
      grid::Explicit e;
      for (const auto& s : v) e.specs.push_back(spec_from_json(s));
      g.parts.push_back(std::move(e));
    } else {
      throw ConfigError("unknown grid part '" + key + "'");
    }
  }
  return g;
}

inline Json options_to_json(const OptimizerOptions& o) {
  return Json{{"restarts", o.restarts},
              {"max_evaluations", o.max_evaluations},
              {"polish_rounds", o.polish_rounds},
              {"xtol", o.xtol},
              {"ftol", o.ftol},
              {"fd_scale", o.fd_scale},
              {"fd_floor", o.fd_floor},
              {"seed", o.seed},
              {"moment_order", o.moment_order},
              {"compute_covariance", o.compute_covariance},
              {"newton_steps", o.newton_steps}};
}

/// Fields absent from `j` keep their value from `base`.
inline OptimizerOptions options_from_json(const Json& j, OptimizerOptions base = {}) {
  if (!j.is_object()) throw ConfigError("optimizer options must be an object");
  using detail::get_or;
  base.restarts = get_or<std::size_t>(j, "restarts", base.restarts);
  base.max_evaluations = get_or<std::size_t>(j, "max_evaluations", base.max_evaluations);
  base.polish_rounds = get_or<std::size_t>(j, "polish_rounds", base.polish_rounds);
  base.xtol = get_or<double>(j, "xtol", base.xtol);
  base.ftol = get_or<double>(j, "ftol", base.ftol);
  base.fd_scale = get_or<double>(j, "fd_scale", base.fd_scale);
  base.fd_floor = get_or<double>(j, "fd_floor", base.fd_floor);
  base.seed = get_or<std::uint64_t>(j, "seed", base.seed);
  base.moment_order = get_or<double>(j, "moment_order", base.moment_order);
  base.compute_covariance = get_or<bool>(j, "compute_covariance", base.compute_covariance);
  base.newton_steps = get_or<std::size_t>(j, "newton_steps", base.newton_steps);
  try {
    base.validate();
  } catch (const InvalidParameters& e) {
    throw ConfigError(e.what());
  }
  return base;
}

inline Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json r = Json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) r.push_back(m(i, k));
    rows.push_back(r);
  }
  return rows;
}

inline Json fit_to_json(const FitResult& f) {
  Json j{{"model", f.spec.name()},
         {"n", f.n},
         {"m", f.spec.dim()},
         {"loglik", f.loglik},
         {"theta", params_to_json(f.theta)},
         {"converged", f.convergence.converged},
         {"boundary", f.convergence.boundary},
         {"iterations", f.convergence.iterations},
         {"evaluations", f.convergence.evaluations},
         {"best_start", f.convergence.best_start},
         {"starts_run", f.convergence.starts_run}};
  if (f.has_covariance) {
    const auto idx = f.spec.active_indices();
    Json se = Json::object();
    for (std::size_t k = 0; k < idx.size(); ++k) se[f.theta.layout[idx[k]].name] = f.std_errors[k];
    j["std_errors"] = se;
    j["F_hat"] = matrix_to_json(f.F_hat);
    j["G_hat"] = matrix_to_json(f.G_hat);
    j["sandwich"] = matrix_to_json(f.sandwich);
  } else if (!f.covariance_note.empty()) {
    j["covariance_note"] = f.covariance_note;
  }
  return j;
}

inline Json selection_to_json(const SelectionReport& r) {
  Json recs = Json::array();
  for (std::size_t i = 0; i < r.records.size(); ++i) {
    const auto& c = r.records[i];
    Json row{{"index", i}, {"model", c.spec.name()}, {"m", c.m_size}};
    if (c.excluded) {
      row["excluded"] = true;
      row["error"] = c.note;
    } else {
      row["loglik"] = c.loglik;
      row["criterion"] = c.criterion;
      if (!c.note.empty()) row["flags"] = c.note;
    }
    recs.push_back(row);
  }
  Json j{{"penalty", r.penalty},
         {"kappa", r.kappa},
         {"n", r.n},
         {"chosen", r.winner().spec.name()},
         {"chosen_index", r.chosen},
         {"ties", r.ties},
         {"candidates", recs}};
  if (r.reference) j["reference"] = r.reference->name();
  if (r.outcome) j["outcome"] = outcome_name(*r.outcome);
  if (!r.warnings.empty()) j["warnings"] = r.warnings;
  return j;
}

inline Json portmanteau_to_json(const PortmanteauReport& p) {
  Json j{{"K", p.K},
         {"variant", p.variant == PortmanteauVariant::General ? "general" : "arch"},
         {"Q", p.Q},
         {"df", p.df},
         {"p_value", p.p_value},
         {"rho", p.rho.rho},
         {"gamma", p.rho.gamma},
         {"mu4_hat", p.mu4_hat}};
  if (p.variant == PortmanteauVariant::General) {
    j["variance_form"] = variance_form_name(p.form);
    j["J_hat"] = matrix_to_json(p.J_hat);
    j["V_hat"] = matrix_to_json(p.V_hat);
    j["regularized"] = p.regularized;
  } else {
    j["arch_p"] = p.arch_p;
  }
  return j;
}

inline VarianceForm parse_variance_form(std::string_view text) {
  const auto s = detail::lower_no_space(text);
  if (s == "additive") return VarianceForm::Additive;
  if (s == "subtractive") return VarianceForm::Subtractive;
  if (s == "identity") return VarianceForm::Identity;
  throw ConfigError("unknown variance form '" + std::string(text) + "'");
}

}  // namespace acsel
