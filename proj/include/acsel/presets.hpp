#pragma once

// The standard simulation designs as ready-made experiment
// configurations. `full` selects the complete candidate grids; otherwise
// orders are capped at 2 (3 for the GARCH-only grid) for quick runs.

#include <acsel/harness.hpp>

#include <string>
#include <vector>

namespace acsel::presets {

inline Generator make_generator(const std::string& model, std::vector<double> theta) {
  auto spec = parse_spec(model);
  auto params = make_params(spec, std::move(theta));
  return {std::move(spec), std::move(params)};
}

/// ARMA(p,q), p,q <= 5, plus GARCH with 1..5 ARCH lags and 0..5 variance
/// lags: 66 candidates. Reduced: orders <= 2, 15 candidates.
inline CandidateGrid arma_garch_grid(bool full) {
  const int h = full ? 5 : 2;
  return {{grid::Arma{{0, h}, {0, h}}, grid::Garch{{1, h}, {0, h}}}};
}

/// GARCH with 1..10 ARCH lags and 0..10 variance lags: 110 candidates.
/// Reduced: 1..3 and 0..3, 12 candidates.
inline CandidateGrid garch_grid(bool full) {
  const int h = full ? 10 : 3;
  return {{grid::Garch{{1, h}, {0, h}}}};
}

inline ExperimentConfig model1(bool full = true) {
  ExperimentConfig c;
  c.name = "Model 1: AR(2)";
  c.truth = make_generator("ar(2)", {1.0, 0.4, 0.4});
  c.reference = parse_spec("arma(2,0)");
  c.candidates = arma_garch_grid(full);
  c.alternative = make_generator("ar(3)", {1.0, 0.2, 0.2, 0.4});
  c.K = {3, 6};
  return c;
}

/// X_t = 0.3 X_{t-1} + xi_t + 0.5 xi_{t-1}, i.e. b_1 = -0.5 in the
/// X = sum a X + e - sum b e convention.
inline ExperimentConfig model2(bool full = true) {
  ExperimentConfig c;
  c.name = "Model 2: ARMA(1,1)";
  c.truth = make_generator("arma(1,1)", {1.0, 0.3, -0.5});
  c.candidates = arma_garch_grid(full);
  c.alternative = make_generator("ar(3)", {1.0, 0.2, 0.2, 0.4});
  c.K = {3, 6};
  return c;
}

inline ExperimentConfig model3(bool full = true) {
  ExperimentConfig c;
  c.name = "Model 3: ARCH(2)";
  c.truth = make_generator("arch(2)", {0.2, 0.4, 0.2});
  c.reference = parse_spec("garch(2,0)");
  c.candidates = arma_garch_grid(full);
  c.alternative = make_generator("arch(3)", {0.4, 0.2, 0.2, 0.2});
  c.K = {3, 6};
  return c;
}

/// X_t = 0.4 X_{t-3} + 0.4 X_{t-4} + xi_t against every subset of AR(4).
inline ExperimentConfig model4() {
  ExperimentConfig c;
  c.name = "Model 4: AR(4) subset {3,4}";
  c.truth = make_generator("ar(4)[10011]", {1.0, 0.0, 0.0, 0.4, 0.4});
  c.candidates = {{grid::ArSubsets{4}}};
  return c;
}

/// AR(2) with ARCH(inf) noise of weights 0.1 i^-3; AR orders 1..8.
inline ExperimentConfig model5() {
  ExperimentConfig c;
  c.name = "Model 5: AR(2)-ARCH(inf)";
  c.truth = make_generator("ar(2)-archinf(3;10000)", {0.5, 0.1, -0.45, 0.4});
  c.candidates = {{grid::ArArchInf{{1, 8}, 3.0, 10000}}};
  c.penalties = {Penalty::log_n(), Penalty::power_n(2.0 / 3.0)};
  return c;
}

/// GARCH(1,1) surrogate for a daily index return series (unit variance,
/// persistence 0.98), n = 2273.
inline ExperimentConfig ftse_surrogate(bool full = true) {
  ExperimentConfig c;
  c.name = "GARCH(1,1) index surrogate";
  c.truth = make_generator("garch(1,1)", {0.02, 0.1, 0.88});
  c.candidates = garch_grid(full);
  c.sample_sizes = {2273};
  c.replications = 50;
  c.K = {3};
  return c;
}

inline const std::vector<std::string>& names() {
  static const std::vector<std::string> n{"model1", "model2", "model3", "model4", "model5",
                                          "ftse"};
  return n;
}

inline ExperimentConfig by_name(const std::string& name, bool full = true) {
  if (name == "model1") return model1(full);
  if (name == "model2") return model2(full);
  if (name == "model3") return model3(full);
  if (name == "model4") return model4();
  if (name == "model5") return model5();
  if (name == "ftse") return ftse_surrogate(full);
  throw ConfigError("unknown preset '" + name + "'");
}

}  // namespace acsel::presets
