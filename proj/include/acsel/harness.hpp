#pragma once

// Monte Carlo experiments, data ingestion, the selection + test pipeline,
// and report emission.

#include <acsel/diagnostics.hpp>
#include <acsel/io.hpp>
#include <acsel/models.hpp>
#include <acsel/parallel.hpp>
#include <acsel/selection.hpp>

#include <fmt/format.h>

#include <chrono>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace acsel {

/// A data-generating process.
struct Generator {
  ModelSpec spec;
  ParamVector theta;
};

struct ExperimentConfig {
  std::string name = "experiment";
  Generator truth;
  CandidateGrid candidates;
  std::vector<Penalty> penalties{Penalty::log_n(), Penalty::sqrt_n()};
  std::vector<std::size_t> sample_sizes{2000};
  std::size_t replications = 200;
  std::uint64_t base_seed = 1;
  std::size_t burn_in = kDefaultBurnIn;
  /// Classification reference; the truth's structure when absent.
  std::optional<ModelSpec> reference;
  /// Generator of the power experiment.
  std::optional<Generator> alternative;
  /// Model fitted to the alternative's data; the reference when absent.
  std::optional<ModelSpec> power_fit;
  std::vector<std::size_t> K;
  /// Penalty selecting the model whose fit is tested for size.
  Penalty test_penalty = Penalty::sqrt_n();
  double level = 0.05;
  VarianceForm form = VarianceForm::Subtractive;
  OptimizerOptions optimizer = OptimizerOptions::fast();
  /// Worker threads over replications (0 = hardware concurrency). Does not
  /// affect results.
  std::size_t threads = 1;

  [[nodiscard]] const ModelSpec& reference_spec() const {
    return reference ? *reference : truth.spec;
  }
  [[nodiscard]] const ModelSpec& power_spec() const {
    return power_fit ? *power_fit : reference_spec();
  }

  void validate() const {
    if (replications < 1) throw ConfigError("replications must be >= 1");
    if (sample_sizes.empty()) throw ConfigError("at least one sample size is required");
    for (auto n : sample_sizes)
      if (n < 20) throw ConfigError("sample sizes must be >= 20");
    if (penalties.empty()) throw ConfigError("at least one penalty is required");
    if (!(level > 0.0 && level < 1.0)) throw ConfigError("test level must lie in (0, 1)");
    for (auto k : K)
      if (k < 1) throw ConfigError("K values must be >= 1");
    if (truth.theta.size() != truth.spec.full_dim())
      throw ConfigError("truth parameters do not match the truth model");
    const auto v = validate_params(truth.spec, truth.theta);
    if (!v.valid) throw ConfigError("truth parameters are inadmissible for " + truth.spec.name());
    if (alternative) {
      const auto va = validate_params(alternative->spec, alternative->theta);
      if (!va.valid)
        throw ConfigError("alternative parameters are inadmissible for " +
                          alternative->spec.name());
    }
    enumerate_candidates(candidates);
    try {
      optimizer.validate();
    } catch (const InvalidParameters& e) {
      throw ConfigError(e.what());
    }
  }
};

inline Json generator_to_json(const Generator& g) {
  return Json{{"model", g.spec.name()}, {"theta", params_to_json(g.theta)}};
}

inline Generator generator_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("generator must be an object with 'model' and 'theta'");
  Generator g;
  g.spec = spec_from_json(j.contains("model") ? j.at("model") : Json());
  if (!j.contains("theta")) throw ConfigError("generator lacks 'theta'");
  g.theta = params_from_json(g.spec, j.at("theta"));
  return g;
}

inline Json config_to_json(const ExperimentConfig& c) {
  Json pens = Json::array();
  for (const auto& p : c.penalties) pens.push_back(penalty_to_json(p));
  Json j{{"name", c.name},
         {"truth", generator_to_json(c.truth)},
         {"candidates", grid_to_json(c.candidates)},
         {"penalties", pens},
         {"sample_sizes", c.sample_sizes},
         {"replications", c.replications},
         {"base_seed", c.base_seed},
         {"burn_in", c.burn_in}};
  if (c.reference) j["reference"] = c.reference->name();
  if (c.alternative) j["alternative"] = generator_to_json(*c.alternative);
  if (c.power_fit) j["power_fit"] = c.power_fit->name();
  j["K"] = c.K;
  j["test_penalty"] = penalty_to_json(c.test_penalty);
  j["level"] = c.level;
  j["variance_form"] = variance_form_name(c.form);
  j["optimizer"] = options_to_json(c.optimizer);
  return j;
}

/// Thread count is a run-time setting and is read but never echoed.
inline ExperimentConfig config_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("experiment configuration must be an object");
  using detail::get_or;
  ExperimentConfig c;
  c.name = get_or<std::string>(j, "name", c.name);
  if (!j.contains("truth")) throw ConfigError("configuration lacks 'truth'");
  c.truth = generator_from_json(j.at("truth"));
  if (!j.contains("candidates")) throw ConfigError("configuration lacks 'candidates'");
  c.candidates = grid_from_json(j.at("candidates"));
  if (j.contains("penalties")) {
    c.penalties.clear();
    for (const auto& p : j.at("penalties")) c.penalties.push_back(penalty_from_json(p));
  }
  c.sample_sizes = get_or<std::vector<std::size_t>>(j, "sample_sizes", c.sample_sizes);
  c.replications = get_or<std::size_t>(j, "replications", c.replications);
  c.base_seed = get_or<std::uint64_t>(j, "base_seed", c.base_seed);
  c.burn_in = get_or<std::size_t>(j, "burn_in", c.burn_in);
  if (j.contains("reference")) c.reference = spec_from_json(j.at("reference"));
  if (j.contains("alternative")) c.alternative = generator_from_json(j.at("alternative"));
  if (j.contains("power_fit")) c.power_fit = spec_from_json(j.at("power_fit"));
  c.K = get_or<std::vector<std::size_t>>(j, "K", c.K);
  if (j.contains("test_penalty")) c.test_penalty = penalty_from_json(j.at("test_penalty"));
  c.level = get_or<double>(j, "level", c.level);
  if (j.contains("variance_form"))
    c.form = parse_variance_form(get_or<std::string>(j, "variance_form", "subtractive"));
  if (j.contains("optimizer")) c.optimizer = options_from_json(j.at("optimizer"), c.optimizer);
  c.threads = get_or<std::size_t>(j, "threads", c.threads);
  c.validate();
  return c;
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  try {
    return Json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline ExperimentConfig load_config(const std::string& path) {
  return config_from_json(read_json_file(path));
}

/// Selection outcome counts for one (penalty, n) pair.
struct SelectionCell {
  std::string penalty;
  std::size_t n = 0;
  std::size_t wrong = 0;
  std::size_t true_model = 0;
  std::size_t overfitted = 0;
  std::size_t completed = 0;
  std::size_t failed = 0;
  /// Times each candidate was chosen, in enumeration order.
  std::vector<std::pair<std::string, std::size_t>> chosen;

  [[nodiscard]] double pct(std::size_t count) const {
    return completed ? 100.0 * static_cast<double>(count) / static_cast<double>(completed) : 0.0;
  }
  friend bool operator==(const SelectionCell&, const SelectionCell&) = default;
};

/// Portmanteau rejection counts for one (K, n) pair.
struct TestCell {
  std::size_t K = 0;
  std::size_t n = 0;
  std::size_t size_rejections = 0;
  std::size_t size_completed = 0;
  std::size_t size_failed = 0;
  /// Replications whose tested model was classified wrong: H0 is false, so
  /// they do not enter the size. Their rejections are kept separately.
  std::size_t size_misselected = 0;
  std::size_t misselected_rejections = 0;
  std::size_t power_rejections = 0;
  std::size_t power_completed = 0;
  std::size_t power_failed = 0;

  [[nodiscard]] double size_pct() const {
    return size_completed ? 100.0 * static_cast<double>(size_rejections) /
                                static_cast<double>(size_completed)
                          : 0.0;
  }
  [[nodiscard]] double power_pct() const {
    return power_completed ? 100.0 * static_cast<double>(power_rejections) /
                                 static_cast<double>(power_completed)
                           : 0.0;
  }
  friend bool operator==(const TestCell&, const TestCell&) = default;
};

struct FailureRecord {
  std::size_t n = 0;
  std::size_t replication = 0;
  std::string stage;
  std::string error;
  friend bool operator==(const FailureRecord&, const FailureRecord&) = default;
};

struct McReport {
  std::string name;
  /// "selection" or "size-power"
  std::string kind;
  std::size_t replications = 0;
  Json config;
  std::vector<SelectionCell> selection;
  std::vector<TestCell> tests;
  std::vector<FailureRecord> failures;
  /// Wall-clock time; shown in text output only so that the machine-readable
  /// report stays reproducible.
  double elapsed_seconds = 0.0;

  [[nodiscard]] bool empty() const {
    for (const auto& s : selection)
      if (s.completed > 0) return false;
    for (const auto& t : tests)
      if (t.size_completed > 0 || t.power_completed > 0) return false;
    return true;
  }
};

namespace detail {

// Stream offset separating the alternative generator's seeds from the truth's.
inline constexpr std::uint64_t kAlternativeStream = std::uint64_t{1} << 63;

struct ReplicationResult {
  std::string error;  // non-empty: simulation or every fit failed
  std::string stage;
  std::vector<std::size_t> chosen;
  std::vector<Outcome> outcome;
  // Per K: 1 reject, 0 accept, -1 failed.
  std::vector<int> size_reject;
  bool misselected = false;
  std::vector<int> power_reject;
  std::vector<std::string> size_error;
  std::vector<std::string> power_error;
};

inline ReplicationResult run_replication(const ExperimentConfig& cfg,
                                         const std::vector<ModelSpec>& candidates, std::size_t n,
                                         std::size_t r, bool with_tests) {
  ReplicationResult out;
  const std::uint64_t seed = cfg.base_seed + r;
  OptimizerOptions opts = cfg.optimizer;
  opts.seed = seed;
  std::optional<TimeSeries> x;
  try {
    x = simulate(cfg.truth.spec, cfg.truth.theta, n, cfg.burn_in, seed);
  } catch (const Error& e) {
    out.stage = "simulate";
    out.error = e.what();
    return out;
  }
  const auto fits = fit_candidates(*x, candidates, opts);
  try {
    for (const auto& p : cfg.penalties) {
      const auto rep = select_from_fits(fits, p, n, cfg.reference_spec());
      out.chosen.push_back(rep.chosen);
      out.outcome.push_back(*rep.outcome);
    }
  } catch (const Error& e) {
    out.stage = "select";
    out.error = e.what();
    return out;
  }
  if (!with_tests) return out;

  const auto nk = cfg.K.size();
  out.size_reject.assign(nk, -1);
  out.size_error.assign(nk, "");
  try {
    const auto rep = select_from_fits(fits, cfg.test_penalty, n, cfg.reference_spec());
    out.misselected = rep.outcome == Outcome::Wrong;
    const FitResult& fit = *rep.winner().fit;
    for (std::size_t k = 0; k < nk; ++k) {
      try {
        out.size_reject[k] = portmanteau(fit, *x, cfg.K[k], cfg.form, opts).rejects(cfg.level);
      } catch (const Error& e) {
        out.size_error[k] = e.what();
      }
    }
  } catch (const Error& e) {
    for (auto& s : out.size_error) s = e.what();
  }

  if (cfg.alternative) {
    out.power_reject.assign(nk, -1);
    out.power_error.assign(nk, "");
    try {
      const auto xa = simulate(cfg.alternative->spec, cfg.alternative->theta, n, cfg.burn_in,
                               seed + kAlternativeStream);
      const auto fit = fit_qmle(cfg.power_spec(), xa, opts);
      for (std::size_t k = 0; k < nk; ++k) {
        try {
          out.power_reject[k] = portmanteau(fit, xa, cfg.K[k], cfg.form, opts).rejects(cfg.level);
        } catch (const Error& e) {
          out.power_error[k] = e.what();
        }
      }
    } catch (const Error& e) {
      for (auto& s : out.power_error) s = e.what();
    }
  }
  return out;
}

inline McReport run_experiment(const ExperimentConfig& cfg, bool with_tests) {
  cfg.validate();
  if (with_tests && cfg.K.empty()) throw ConfigError("size/power experiments need K values");
  const auto t0 = std::chrono::steady_clock::now();
  const auto candidates = enumerate_candidates(cfg.candidates);
  McReport rep;
  rep.name = cfg.name;
  rep.kind = with_tests ? "size-power" : "selection";
  rep.replications = cfg.replications;
  rep.config = config_to_json(cfg);
  for (const auto n : cfg.sample_sizes) {
    std::vector<ReplicationResult> results(cfg.replications);
    parallel_for(cfg.replications, cfg.threads, [&](std::size_t r) {
      results[r] = run_replication(cfg, candidates, n, r, with_tests);
    });
    // Ordered reduction by replication index.
    std::vector<SelectionCell> cells(cfg.penalties.size());
    for (std::size_t p = 0; p < cells.size(); ++p) {
      cells[p].penalty = cfg.penalties[p].label();
      cells[p].n = n;
      for (const auto& c : candidates) cells[p].chosen.emplace_back(c.name(), 0);
    }
    std::vector<TestCell> tcells(with_tests ? cfg.K.size() : 0);
    for (std::size_t k = 0; k < tcells.size(); ++k) {
      tcells[k].K = cfg.K[k];
      tcells[k].n = n;
    }
    for (std::size_t r = 0; r < results.size(); ++r) {
      const auto& res = results[r];
      if (!res.error.empty()) {
        for (auto& c : cells) ++c.failed;
        for (auto& t : tcells) {
          ++t.size_failed;
          if (cfg.alternative) ++t.power_failed;
        }
        rep.failures.push_back({n, r, res.stage, res.error});
        continue;
      }
      for (std::size_t p = 0; p < cells.size(); ++p) {
        auto& c = cells[p];
        ++c.completed;
        ++c.chosen[res.chosen[p]].second;
        switch (res.outcome[p]) {
          case Outcome::Wrong: ++c.wrong; break;
          case Outcome::True: ++c.true_model; break;
          case Outcome::Overfitted: ++c.overfitted; break;
        }
      }
      for (std::size_t k = 0; k < tcells.size(); ++k) {
        auto& t = tcells[k];
        if (res.size_reject[k] < 0) {
          ++t.size_failed;
          rep.failures.push_back({n, r, "size K=" + std::to_string(t.K), res.size_error[k]});
        } else if (res.misselected) {
          ++t.size_misselected;
          t.misselected_rejections += static_cast<std::size_t>(res.size_reject[k]);
        } else {
          ++t.size_completed;
          t.size_rejections += static_cast<std::size_t>(res.size_reject[k]);
        }
        if (!cfg.alternative) continue;
        if (res.power_reject[k] < 0) {
          ++t.power_failed;
          rep.failures.push_back({n, r, "power K=" + std::to_string(t.K), res.power_error[k]});
        } else {
          ++t.power_completed;
          t.power_rejections += static_cast<std::size_t>(res.power_reject[k]);
        }
      }
    }
    for (auto& c : cells) rep.selection.push_back(std::move(c));
    for (auto& t : tcells) rep.tests.push_back(t);
  }
  rep.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bool any = false;
  for (const auto& c : rep.selection) any = any || c.completed > 0;
  if (!any) throw EstimationFailed("every replication failed");
  return rep;
}

}  // namespace detail

/// simulate -> select per penalty -> classify, for every replication and n.
/// Replication r uses seed base_seed + r.
inline McReport run_selection_experiment(const ExperimentConfig& cfg) {
  return detail::run_experiment(cfg, false);
}

/// As run_selection_experiment, then tests the model chosen by
/// cfg.test_penalty (size) and the power_fit model on data from the
/// alternative (power) for each K.
inline McReport run_size_power_experiment(const ExperimentConfig& cfg) {
  return detail::run_experiment(cfg, true);
}

inline Json mc_to_json(const McReport& r) {
  Json sel = Json::array();
  for (const auto& c : r.selection) {
    Json chosen = Json::object();
    for (const auto& [name, count] : c.chosen)
      if (count > 0) chosen[name] = count;
    sel.push_back(Json{{"penalty", c.penalty},
                       {"n", c.n},
                       {"completed", c.completed},
                       {"failed", c.failed},
                       {"wrong", c.wrong},
                       {"true", c.true_model},
                       {"overfitted", c.overfitted},
                       {"wrong_pct", c.pct(c.wrong)},
                       {"true_pct", c.pct(c.true_model)},
                       {"overfitted_pct", c.pct(c.overfitted)},
                       {"chosen", chosen}});
  }
  Json tests = Json::array();
  for (const auto& t : r.tests)
    tests.push_back(Json{{"K", t.K},
                         {"n", t.n},
                         {"size_rejections", t.size_rejections},
                         {"size_completed", t.size_completed},
                         {"size_failed", t.size_failed},
                         {"size_misselected", t.size_misselected},
                         {"misselected_rejections", t.misselected_rejections},
                         {"size_pct", t.size_pct()},
                         {"power_rejections", t.power_rejections},
                         {"power_completed", t.power_completed},
                         {"power_failed", t.power_failed},
                         {"power_pct", t.power_pct()}});
  Json fails = Json::array();
  for (const auto& f : r.failures)
    fails.push_back(
        Json{{"n", f.n}, {"replication", f.replication}, {"stage", f.stage}, {"error", f.error}});
  return Json{{"name", r.name},       {"kind", r.kind},   {"replications", r.replications},
              {"selection", sel},     {"tests", tests},   {"failures", fails},
              {"config", r.config}};
}

/// Inverse of mc_to_json. Candidates never chosen are absent from the
/// document, so `chosen` holds only the nonzero counts.
inline McReport mc_from_json(const Json& j) {
  using detail::get_req;
  McReport r;
  r.name = get_req<std::string>(j, "name");
  r.kind = get_req<std::string>(j, "kind");
  r.replications = get_req<std::size_t>(j, "replications");
  r.config = j.at("config");
  for (const auto& c : j.at("selection")) {
    SelectionCell s;
    s.penalty = get_req<std::string>(c, "penalty");
    s.n = get_req<std::size_t>(c, "n");
    s.completed = get_req<std::size_t>(c, "completed");
    s.failed = get_req<std::size_t>(c, "failed");
    s.wrong = get_req<std::size_t>(c, "wrong");
    s.true_model = get_req<std::size_t>(c, "true");
    s.overfitted = get_req<std::size_t>(c, "overfitted");
    for (const auto& [name, count] : c.at("chosen").items())
      s.chosen.emplace_back(name, count.get<std::size_t>());
    r.selection.push_back(std::move(s));
  }
  for (const auto& t : j.at("tests")) {
    TestCell c;
    c.K = get_req<std::size_t>(t, "K");
    c.n = get_req<std::size_t>(t, "n");
    c.size_rejections = get_req<std::size_t>(t, "size_rejections");
    c.size_completed = get_req<std::size_t>(t, "size_completed");
    c.size_failed = get_req<std::size_t>(t, "size_failed");
    c.size_misselected = get_req<std::size_t>(t, "size_misselected");
    c.misselected_rejections = get_req<std::size_t>(t, "misselected_rejections");
    c.power_rejections = get_req<std::size_t>(t, "power_rejections");
    c.power_completed = get_req<std::size_t>(t, "power_completed");
    c.power_failed = get_req<std::size_t>(t, "power_failed");
    r.tests.push_back(c);
  }
  for (const auto& f : j.at("failures"))
    r.failures.push_back({get_req<std::size_t>(f, "n"), get_req<std::size_t>(f, "replication"),
                          get_req<std::string>(f, "stage"), get_req<std::string>(f, "error")});
  return r;
}

enum class ReturnScheme { Prices, Returns };

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',' || c == ';' || c == '\t' || c == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline std::optional<double> parse_number(const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
  } catch (const std::logic_error&) {
    return std::nullopt;
  }
}

}  // namespace detail

/// Reads a one-column (value) or two-column (date, value) table separated by
/// commas, semicolons, tabs or spaces. Blank lines and lines starting with '#'
/// are skipped; a non-numeric first row is taken as a header. Prices give
/// r_t = scale * ln(P_t / P_{t-1}); returns are passed through scaled.
inline TimeSeries load_returns(const std::string& path, ReturnScheme scheme, double scale = 1.0) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  if (!std::isfinite(scale) || scale == 0.0) throw ConfigError("scale must be finite and nonzero");
  std::vector<double> vals;
  std::string line;
  std::size_t lineno = 0;
  bool seen_row = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto fields = detail::split_fields(line);
    if (fields.empty() || fields[0][0] == '#') continue;
    if (fields.size() > 2)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 1 or 2 columns, found " +
                        std::to_string(fields.size()));
    const auto v = detail::parse_number(fields.back());
    if (!v) {
      if (!seen_row) {
        seen_row = true;
        continue;
      }
      throw ConfigError(path + ":" + std::to_string(lineno) + ": value '" + fields.back() +
                        "' is not a finite number");
    }
    seen_row = true;
    if (scheme == ReturnScheme::Prices && !(*v > 0.0))
      throw ConfigError(path + ":" + std::to_string(lineno) + ": price must be positive");
    vals.push_back(*v);
  }
  if (scheme == ReturnScheme::Returns) {
    if (vals.empty()) throw ConfigError(path + ": no values");
    for (double& v : vals) v *= scale;
    return TimeSeries(std::move(vals), path);
  }
  if (vals.size() < 2) throw ConfigError(path + ": at least 2 prices are required");
  std::vector<double> r(vals.size() - 1);
  for (std::size_t t = 1; t < vals.size(); ++t) r[t - 1] = scale * std::log(vals[t] / vals[t - 1]);
  return TimeSeries(std::move(r), path);
}

/// Writes one value per line.
inline void write_series(const TimeSeries& x, std::ostream& out) {
  out << fmt::format("# {}\n", x.label.empty() ? "series" : x.label);
  for (double v : x.values) out << fmt::format("{:.17g}\n", v);
}

struct PipelineEntry {
  SelectionReport selection;
  std::vector<PortmanteauReport> tests;
  /// Per K; empty when the test succeeded.
  std::vector<std::string> test_errors;
};

struct PipelineReport {
  std::string label;
  std::size_t n = 0;
  std::vector<std::size_t> K;
  std::vector<PipelineEntry> entries;
};

/// Fits the candidates once, selects per penalty and tests each winner.
inline PipelineReport run_pipeline(const TimeSeries& x, const std::vector<ModelSpec>& candidates,
                                   const std::vector<Penalty>& penalties,
                                   const std::vector<std::size_t>& Ks,
                                   const OptimizerOptions& opts = {},
                                   VarianceForm form = VarianceForm::Subtractive,
                                   std::size_t threads = 1) {
  if (penalties.empty()) throw InvalidParameters("pipeline needs at least one penalty");
  if (candidates.empty()) throw InvalidParameters("no candidates to select from");
  const auto fits = fit_candidates(x, candidates, opts, threads);
  PipelineReport rep;
  rep.label = x.label;
  rep.n = x.size();
  rep.K = Ks;
  for (const auto& p : penalties) {
    PipelineEntry e;
    e.selection = select_from_fits(fits, p, x.size());
    const auto& fit = *e.selection.winner().fit;
    for (auto K : Ks) {
      try {
        e.tests.push_back(portmanteau(fit, x, K, form, opts));
        e.test_errors.emplace_back();
      } catch (const Error& err) {
        e.tests.emplace_back();
        e.test_errors.emplace_back(err.what());
      }
    }
    rep.entries.push_back(std::move(e));
  }
  return rep;
}

inline Json pipeline_to_json(const PipelineReport& r) {
  Json entries = Json::array();
  for (const auto& e : r.entries) {
    Json tests = Json::array();
    for (std::size_t k = 0; k < e.tests.size(); ++k) {
      if (!e.test_errors[k].empty())
        tests.push_back(Json{{"K", r.K[k]}, {"error", e.test_errors[k]}});
      else
        tests.push_back(portmanteau_to_json(e.tests[k]));
    }
    entries.push_back(Json{{"selection", selection_to_json(e.selection)},
                           {"winner_fit", fit_to_json(*e.selection.winner().fit)},
                           {"tests", tests}});
  }
  return Json{{"series", r.label}, {"n", r.n}, {"K", r.K}, {"results", entries}};
}

// ---- text rendering ----

inline std::string render_text(const FitResult& f) {
  std::string s = fmt::format("QMLE fit of {} (n = {}, |m| = {})\n", f.spec.name(), f.n,
                              f.spec.dim());
  s += fmt::format("  log quasi-likelihood  {:.6f}\n", f.loglik);
  s += fmt::format("  converged             {}{}\n", f.convergence.converged ? "yes" : "no",
                   f.convergence.boundary ? " (boundary)" : "");
  s += fmt::format("  evaluations           {}\n", f.convergence.evaluations);
  const auto idx = f.spec.active_indices();
  s += fmt::format("  {:<10} {:>14} {:>14}\n", "parameter", "estimate", "std. error");
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto& name = f.theta.layout[idx[k]].name;
    if (f.has_covariance)
      s += fmt::format("  {:<10} {:>14.6f} {:>14.6f}\n", name, f.theta[idx[k]], f.std_errors[k]);
    else
      s += fmt::format("  {:<10} {:>14.6f} {:>14}\n", name, f.theta[idx[k]], "-");
  }
  if (!f.has_covariance && !f.covariance_note.empty())
    s += "  covariance unavailable: " + f.covariance_note + "\n";
  return s;
}

inline std::string render_text(const SelectionReport& r) {
  std::string s = fmt::format("Model selection, penalty {} (kappa = {:.6g}), n = {}\n", r.penalty,
                              r.kappa, r.n);
  s += fmt::format("  {:>4}  {:<28} {:>4} {:>16} {:>16}  {}\n", "#", "model", "|m|", "loglik",
                   "criterion", "flags");
  for (std::size_t i = 0; i < r.records.size(); ++i) {
    const auto& c = r.records[i];
    const std::string mark = i == r.chosen ? " *" : "";
    if (c.excluded)
      s += fmt::format("  {:>4}  {:<28} {:>4} {:>16} {:>16}  excluded: {}\n", i, c.spec.name(),
                       c.m_size, "-", "-", c.note);
    else
      s += fmt::format("  {:>4}  {:<28} {:>4} {:>16.4f} {:>16.4f}  {}{}\n", i, c.spec.name(),
                       c.m_size, c.loglik, c.criterion, c.note, mark);
  }
  s += fmt::format("  chosen: {}", r.winner().spec.name());
  if (r.outcome) s += fmt::format(" ({} vs {})", outcome_name(*r.outcome), r.reference->name());
  s += "\n";
  if (r.ties.size() > 1) s += fmt::format("  {} candidates tied at the minimum\n", r.ties.size());
  return s;
}

inline std::string render_text(const PortmanteauReport& p) {
  std::string s = fmt::format("Portmanteau test on squared residuals, K = {} ({})\n", p.K,
                              p.variant == PortmanteauVariant::General
                                  ? std::string("V form ") + variance_form_name(p.form)
                                  : fmt::format("ARCH({}) shortcut", p.arch_p));
  s += "  rho:";
  for (double v : p.rho.rho) s += fmt::format(" {:.5f}", v);
  s += "\n";
  s += fmt::format("  Q = {:.4f}, df = {}, p-value = {:.4f}{}\n", p.Q, p.df, p.p_value,
                   p.regularized ? " (V regularized)" : "");
  return s;
}

inline std::string render_text(const PipelineReport& r) {
  std::string s = fmt::format("Pipeline on {} (n = {})\n\n", r.label.empty() ? "series" : r.label,
                              r.n);
  for (const auto& e : r.entries) {
    s += render_text(e.selection);
    s += "\n";
    s += render_text(*e.selection.winner().fit);
    for (std::size_t k = 0; k < e.tests.size(); ++k) {
      if (!e.test_errors[k].empty())
        s += fmt::format("Portmanteau test, K = {}: failed: {}\n", r.K[k], e.test_errors[k]);
      else
        s += render_text(e.tests[k]);
    }
    s += "\n";
  }
  return s;
}

/// Outcome rows by (n, penalty) columns,
/// the distribution of chosen models, and size/power by (K, n).
inline std::string render_text(const McReport& r) {
  if (r.empty()) throw EstimationFailed("report has no completed replications");
  std::string s = fmt::format("{} ({}), {} replications\n\n", r.name, r.kind, r.replications);
  if (!r.selection.empty()) {
    s += fmt::format("Percentage of selected model\n  {:<12}", "");
    for (const auto& c : r.selection) s += fmt::format("{:>16}", fmt::format("n={}", c.n));
    s += fmt::format("\n  {:<12}", "");
    for (const auto& c : r.selection) s += fmt::format("{:>16}", c.penalty);
    s += "\n";
    auto row = [&](const char* label, auto get) {
      s += fmt::format("  {:<12}", label);
      for (const auto& c : r.selection) s += fmt::format("{:>16.1f}", c.pct(get(c)));
      s += "\n";
    };
    row("Wrong", [](const SelectionCell& c) { return c.wrong; });
    row("True", [](const SelectionCell& c) { return c.true_model; });
    row("Overfitted", [](const SelectionCell& c) { return c.overfitted; });
    s += fmt::format("  {:<12}", "failed");
    for (const auto& c : r.selection) s += fmt::format("{:>16}", c.failed);
    s += "\n\nChosen models (percent)\n";
    // Union of chosen names in first-seen order.
    std::vector<std::string> names;
    for (const auto& c : r.selection)
      for (const auto& [name, count] : c.chosen)
        if (count > 0 && std::find(names.begin(), names.end(), name) == names.end())
          names.push_back(name);
    for (const auto& name : names) {
      s += fmt::format("  {:<28}", name);
      for (const auto& c : r.selection) {
        std::size_t count = 0;
        for (const auto& [nm, k] : c.chosen)
          if (nm == name) count = k;
        s += fmt::format("{:>16.1f}", c.pct(count));
      }
      s += "\n";
    }
  }
  if (!r.tests.empty()) {
    s += "\nEmpirical size and power of the portmanteau test (percent)\n";
    s += fmt::format("  {:<6} {:>8} {:>10} {:>10} {:>10} {:>16}\n", "K", "n", "size", "power",
                     "failed", "misselected");
    for (const auto& t : r.tests) {
      const auto power =
          t.power_completed ? fmt::format("{:.1f}", t.power_pct()) : std::string("-");
      s += fmt::format("  {:<6} {:>8} {:>10.1f} {:>10} {:>10} {:>16}\n", t.K, t.n, t.size_pct(),
                       power, t.size_failed + t.power_failed,
                       fmt::format("{} ({} rej.)", t.size_misselected, t.misselected_rejections));
    }
  }
  if (!r.failures.empty()) {
    s += fmt::format("\n{} failures\n", r.failures.size());
    for (const auto& f : r.failures)
      s += fmt::format("  n={} replication={} [{}] {}\n", f.n, f.replication, f.stage, f.error);
  }
  if (r.elapsed_seconds > 0.0) s += fmt::format("\nelapsed {:.1f} s\n", r.elapsed_seconds);
  return s;
}

enum class ReportFormat { Text, Json };

inline ReportFormat parse_format(std::string_view s) {
  const auto t = detail::lower_no_space(s);
  if (t == "text" || t == "txt") return ReportFormat::Text;
  if (t == "json") return ReportFormat::Json;
  throw ConfigError("unknown output format '" + std::string(s) + "'");
}

inline Json to_json(const McReport& r) {
  if (r.empty()) throw EstimationFailed("report has no completed replications");
  return mc_to_json(r);
}
inline Json to_json(const PipelineReport& r) { return pipeline_to_json(r); }
inline Json to_json(const SelectionReport& r) { return selection_to_json(r); }
inline Json to_json(const FitResult& r) { return fit_to_json(r); }
inline Json to_json(const PortmanteauReport& r) { return portmanteau_to_json(r); }

/// Renders `report` and writes it to `path` ("-" for standard output).
/// Nothing is written if rendering fails.
template <class Report>
void emit_report(const Report& report, ReportFormat format, const std::string& path) {
  const std::string body =
      format == ReportFormat::Json ? to_json(report).dump(2) + "\n" : render_text(report);
  if (path == "-") {
    std::cout << body;
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << body;
  out.close();
  if (!out) throw IoError("error while writing '" + path + "'");
}

}  // namespace acsel
