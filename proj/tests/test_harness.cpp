#include <acsel/acsel.hpp>

#include <catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace acsel;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "acsel_harness_tests";
  fs::create_directories(dir);
  return dir / name;
}

std::string write_file(const std::string& name, const std::string& body) {
  const auto p = scratch(name);
  std::ofstream(p, std::ios::binary) << body;
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig small_model4(std::size_t reps) {
  auto c = presets::model4();
  c.replications = reps;
  c.sample_sizes = {1000};
  return c;
}

#ifdef ACSEL_CLI_PATH
struct RunResult {
  int status = 0;
  std::string out;
};

// stdout only; stderr goes to a file
RunResult run_cli(const std::string& args, const std::string& err_path) {
  const std::string cmd = std::string(ACSEL_CLI_PATH) + " " + args + " 2>" + err_path;
  RunResult r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), p)) r.out += buf.data();
  const int st = pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}
#endif

}  // namespace

TEST_CASE("prices become log returns", "[harness][io]") {
  const double e = std::exp(1.0);
  const auto path = write_file("prices.csv", fmt::format("1\n{:.17g}\n{:.17g}\n", e, e * e));
  const auto r = load_returns(path, ReturnScheme::Prices);
  REQUIRE(r.size() == 2);
  CHECK_THAT(r[0], WithinAbs(1.0, 1e-14));
  CHECK_THAT(r[1], WithinAbs(1.0, 1e-14));

  const auto scaled = load_returns(path, ReturnScheme::Prices, 100.0);
  CHECK_THAT(scaled[1], WithinAbs(100.0, 1e-12));
}

TEST_CASE("n prices give n - 1 returns", "[harness][io]") {
  std::string body;
  for (int t = 0; t < 2274; ++t) body += fmt::format("{}\n", 100.0 + 0.01 * t);
  CHECK(load_returns(write_file("long.csv", body), ReturnScheme::Prices).size() == 2273);
}

TEST_CASE("header row, dates and comments", "[harness][io]") {
  const auto path = write_file("dated.csv",
                               "# index closes\n"
                               "date,close\n"
                               "2001-01-02,10\n"
                               "\n"
                               "2001-01-03,20\n"
                               "2001-01-04,10\n");
  const auto r = load_returns(path, ReturnScheme::Prices);
  REQUIRE(r.size() == 2);
  CHECK_THAT(r[0], WithinAbs(std::log(2.0), 1e-15));
  CHECK_THAT(r[1], WithinAbs(-std::log(2.0), 1e-15));
}

TEST_CASE("returns pass through scaled", "[harness][io]") {
  const auto path = write_file("rets.txt", "0.5\t\n-0.25\n1e-3\n");
  const auto r = load_returns(path, ReturnScheme::Returns, 2.0);
  CHECK(r.values == std::vector<double>{1.0, -0.5, 2e-3});
}

TEST_CASE("bad input files", "[harness][io]") {
  CHECK_THROWS_AS(load_returns(write_file("zero.csv", "1\n0\n2\n"), ReturnScheme::Prices),
                  ConfigError);
  CHECK_THROWS_AS(load_returns(write_file("neg.csv", "1\n-3\n"), ReturnScheme::Prices),
                  ConfigError);
  try {
    load_returns(write_file("text.csv", "price\n1\n2\nabc\n3\n"), ReturnScheme::Prices);
    FAIL("expected a parse error");
  } catch (const ConfigError& e) {
    CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring(":4:"));
  }
  CHECK_THROWS_AS(load_returns(write_file("wide.csv", "1,2,3\n"), ReturnScheme::Returns),
                  ConfigError);
  CHECK_THROWS_AS(load_returns(write_file("one.csv", "5\n"), ReturnScheme::Prices), ConfigError);
  CHECK_THROWS_AS(load_returns(write_file("empty.csv", ""), ReturnScheme::Returns), ConfigError);
  CHECK_THROWS_AS(load_returns(scratch("missing.csv").string(), ReturnScheme::Prices), IoError);
  CHECK_THROWS_AS(load_returns(write_file("ok.csv", "1\n2\n"), ReturnScheme::Prices, 0.0),
                  ConfigError);
}

TEST_CASE("model names parse back", "[harness][io]") {
  for (const auto& s :
       {ModelSpec::full(family::WhiteNoise{}), ModelSpec::full(family::AR{3}),
        ModelSpec::full(family::ARMA{2, 1}), ModelSpec::full(family::ARCH{2}),
        ModelSpec::full(family::GARCH{1, 1}), ModelSpec::full(family::APARCH{1.5, 1, 1}),
        ModelSpec::full(family::ArmaGarch{1, 1, 1, 1}),
        ModelSpec::full(family::ArArchInf{2, 3.0, 10000}),
        ModelSpec::masked(family::AR{4}, {true, false, false, true, true})}) {
    CHECK(parse_spec(s.name()) == s);
    CHECK(spec_from_json(spec_to_json(s)) == s);
  }
  CHECK_THROWS_AS(parse_spec("garch(1)"), ConfigError);
  CHECK_THROWS_AS(parse_spec("ar(2)[01]"), Error);
}

TEST_CASE("experiment configs round-trip through JSON", "[harness][io]") {
  for (const auto& name : presets::names()) {
    for (bool full : {false, true}) {
      const auto c = presets::by_name(name, full);
      const auto j = config_to_json(c);
      CHECK(config_to_json(config_from_json(j)) == j);
      CHECK(config_to_json(config_from_json(Json::parse(j.dump()))) == j);
    }
  }
}

TEST_CASE("shipped configs load and validate", "[harness][io]") {
  const fs::path dir = fs::path(ACSEL_SOURCE_DIR) / "configs";
  std::size_t seen = 0;
  for (const auto& f : fs::directory_iterator(dir)) {
    if (f.path().extension() != ".json") continue;
    const auto c = load_config(f.path().string());
    CHECK_NOTHROW(c.validate());
    ++seen;
  }
  CHECK(seen >= 6);
}

TEST_CASE("config validation", "[harness]") {
  auto c = small_model4(5);
  c.replications = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_model4(5);
  c.level = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_model4(5);
  c.truth.theta = make_params(c.truth.spec, {1.0, 0.0, 0.0, 0.6, 0.6});
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_model4(5);
  c.sample_sizes = {};
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("a Monte Carlo report round-trips through a file", "[harness][mc]") {
  auto c = small_model4(6);
  c.K = {3};
  c.alternative = presets::make_generator("ar(4)", {1.0, 0.3, 0.0, 0.3, 0.2});
  const auto rep = run_size_power_experiment(c);
  const auto path = scratch("mc.json").string();
  emit_report(rep, ReportFormat::Json, path);
  const auto back = mc_from_json(read_json_file(path));
  CHECK(back.name == rep.name);
  CHECK(back.kind == rep.kind);
  CHECK(back.replications == rep.replications);
  CHECK(back.tests == rep.tests);
  CHECK(back.failures == rep.failures);
  REQUIRE(back.selection.size() == rep.selection.size());
  for (std::size_t i = 0; i < rep.selection.size(); ++i) {
    CHECK(back.selection[i].completed == rep.selection[i].completed);
    CHECK(back.selection[i].true_model == rep.selection[i].true_model);
    CHECK(back.selection[i].overfitted == rep.selection[i].overfitted);
    CHECK(back.selection[i].wrong == rep.selection[i].wrong);
  }
  CHECK(mc_to_json(back) == mc_to_json(rep));
}

TEST_CASE("an empty report is an error and writes nothing", "[harness][mc]") {
  McReport r;
  r.name = "nothing";
  r.kind = "selection";
  const auto path = scratch("empty_report.json");
  fs::remove(path);
  CHECK_THROWS_AS(emit_report(r, ReportFormat::Json, path.string()), EstimationFailed);
  CHECK_FALSE(fs::exists(path));
}

TEST_CASE("one replication gives 0 or 100 percent", "[harness][mc]") {
  const auto rep = run_selection_experiment(small_model4(1));
  for (const auto& s : rep.selection) {
    REQUIRE(s.completed == 1);
    for (double v : {s.pct(s.true_model), s.pct(s.overfitted), s.pct(s.wrong)})
      CHECK((v == 0.0 || v == 100.0));
  }
}

TEST_CASE("outcome counts add up", "[harness][mc]") {
  auto c = small_model4(20);
  c.sample_sizes = {500, 1000};
  const auto rep = run_selection_experiment(c);
  CHECK(rep.selection.size() == 4);
  for (const auto& s : rep.selection) {
    CHECK(s.completed + s.failed == 20);
    CHECK(s.true_model + s.overfitted + s.wrong == s.completed);
    CHECK_THAT(s.pct(s.true_model) + s.pct(s.overfitted) + s.pct(s.wrong),
               WithinAbs(100.0, 1e-9));
    std::size_t chosen = 0;
    for (const auto& [name, k] : s.chosen) chosen += k;
    CHECK(chosen == s.completed);
  }
}

TEST_CASE("thread count does not change the report", "[harness][mc]") {
  auto c = small_model4(12);
  c.K = {3};
  c.alternative = presets::make_generator("ar(4)", {1.0, 0.3, 0.0, 0.3, 0.2});
  c.threads = 1;
  const auto a = mc_to_json(run_size_power_experiment(c)).dump();
  c.threads = 3;
  const auto b = mc_to_json(run_size_power_experiment(c)).dump();
  CHECK(a == b);
  c.base_seed = 2;
  CHECK(mc_to_json(run_size_power_experiment(c)).dump() != a);
}

TEST_CASE("power under a true alternative is close to the size", "[harness][mc][slow]") {
  auto c = small_model4(300);
  c.K = {3};
  c.alternative = c.truth;
  c.threads = 0;
  const auto rep = run_size_power_experiment(c);
  REQUIRE(rep.tests.size() == 1);
  const auto& t = rep.tests[0];
  CHECK(t.size_completed >= 250);
  CHECK(t.power_completed >= 250);
  CHECK(t.size_pct() <= 12.0);
  CHECK(std::abs(t.power_pct() - t.size_pct()) <= 7.0);
}

TEST_CASE("pipeline on a single model is fit then test", "[harness]") {
  const auto spec = ModelSpec::full(family::GARCH{1, 1});
  const auto x = simulate(spec, make_params(spec, {0.1, 0.1, 0.8}), 1500, 500, 5);
  OptimizerOptions o;
  o.seed = 4;
  const auto rep = run_pipeline(x, {spec}, {Penalty::log_n(), Penalty::sqrt_n()}, {3, 6}, o);
  const auto fit = fit_qmle(spec, x, o);
  REQUIRE(rep.entries.size() == 2);
  for (const auto& e : rep.entries) {
    CHECK(e.selection.winner().fit->theta.values == fit.theta.values);
    for (std::size_t k = 0; k < 2; ++k) {
      std::string direct_error;
      PortmanteauReport t;
      try {
        t = portmanteau(fit, x, rep.K[k], VarianceForm::Subtractive, o);
      } catch (const Error& err) {
        direct_error = err.what();
      }
      CHECK(e.test_errors[k] == direct_error);
      if (direct_error.empty()) {
        CHECK(e.tests[k].Q == t.Q);
        CHECK(e.tests[k].p_value == t.p_value);
      }
    }
  }
  const auto j = pipeline_to_json(rep);
  CHECK(j.at("results").size() == 2);
  CHECK(j.at("n") == 1500);
  CHECK(j.at("results")[0].at("tests").size() == 2);
}

TEST_CASE("both penalties find the AR(2) on the reduced grid", "[harness][mc][slow]") {
  auto c = presets::model1(false);
  c.replications = 30;
  c.threads = 0;
  const auto rep = run_selection_experiment(c);
  for (const auto& s : rep.selection) {
    INFO(s.penalty);
    CHECK(s.completed == 30);
    CHECK(s.pct(s.true_model) >= 90.0);
  }
}

#ifdef ACSEL_CLI_PATH
TEST_CASE("command line contract", "[harness][cli]") {
  const auto err = scratch("stderr.txt").string();
  const auto data = scratch("cli_series.txt").string();
  const auto cfg = scratch("cli_cfg.json").string();

  auto r = run_cli(fmt::format("simulate -m 'garch(1,1)' -t 0.1,0.1,0.8 -n 600 -s 3 -o {}", data),
                   err);
  CHECK(r.status == 0);
  CHECK(load_returns(data, ReturnScheme::Returns).size() == 600);

  r = run_cli(fmt::format("fit -i {} -m 'garch(1,1)' -f json --fast", data), err);
  REQUIRE(r.status == 0);
  const auto fit = Json::parse(r.out);
  CHECK(fit.contains("loglik"));

  r = run_cli(fmt::format("select -i {} -g garch-reduced -f json --fast", data), err);
  CHECK(r.status == 0);
  Json sel_json;
  CHECK_NOTHROW(sel_json = Json::parse(r.out));

  r = run_cli(fmt::format("test -i {} -m 'garch(1,1)' -K 3 --fast", data), err);
  CHECK(r.status == 0);
  CHECK_FALSE(r.out.empty());

  r = run_cli(fmt::format("preset model4 -o {}", cfg), err);
  CHECK(r.status == 0);
  CHECK_NOTHROW(load_config(cfg).validate());

  r = run_cli(fmt::format("fit -i {} -m 'garch(1,1)'", scratch("nope.txt").string()), err);
  CHECK(r.status != 0);
  CHECK_FALSE(slurp(err).empty());
  CHECK(r.out.empty());

  r = run_cli(fmt::format("fit -i {} -m 'bogus(1)'", data), err);
  CHECK(r.status != 0);
  CHECK_THAT(slurp(err), Catch::Matchers::ContainsSubstring("error"));

  r = run_cli("frobnicate", err);
  CHECK(r.status != 0);
}
#endif
