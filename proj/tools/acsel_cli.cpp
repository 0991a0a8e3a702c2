#include <acsel/acsel.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace acsel;

struct Output {
  std::string path = "-";
  std::string format = "text";

  void add(CLI::App* app) {
    app->add_option("-o,--out", path, "Output path, '-' for stdout")->capture_default_str();
    app->add_option("-f,--format", format, "Output format: text or json")
        ->check(CLI::IsMember({"text", "json"}))
        ->capture_default_str();
  }
  template <class R>
  void write(const R& report) const {
    emit_report(report, parse_format(format), path);
  }
};

struct Input {
  std::string path;
  std::string scheme = "returns";
  double scale = 1.0;

  void add(CLI::App* app) {
    app->add_option("-i,--input", path, "Delimited text series (1 or 2 columns)")->required();
    app->add_option("--scheme", scheme, "Column holds 'returns' or 'prices'")
        ->check(CLI::IsMember({"returns", "prices"}))
        ->capture_default_str();
    app->add_option("--scale", scale, "Multiplier applied to the (log) returns")
        ->capture_default_str();
  }
  [[nodiscard]] TimeSeries load() const {
    return load_returns(path, scheme == "prices" ? ReturnScheme::Prices : ReturnScheme::Returns,
                        scale);
  }
};

struct Optim {
  std::size_t restarts = 3;
  std::uint64_t seed = 0;
  bool fast = false;

  void add(CLI::App* app) {
    app->add_option("--restarts", restarts, "Starting points per fit")->capture_default_str();
    app->add_option("--opt-seed", seed, "Seed of the random restarts")->capture_default_str();
    app->add_flag("--fast", fast, "Looser optimizer settings (one start, one polish)");
  }
  [[nodiscard]] OptimizerOptions options() const {
    OptimizerOptions o = fast ? OptimizerOptions::fast() : OptimizerOptions{};
    if (!fast) o.restarts = restarts;
    o.seed = seed;
    return o;
  }
};

// Candidates from explicit model strings, a named grid, or a JSON file
// holding a grid array (or an object with a "candidates" array).
struct Candidates {
  std::vector<std::string> models;
  std::string grid;

  void add(CLI::App* app) {
    app->add_option("-m,--models", models, "Candidate models, e.g. 'arma(1,0)' 'garch(1,1)'");
    app->add_option("-g,--grid", grid,
                    "Grid name (arma-garch, arma-garch-reduced, garch, garch-reduced, "
                    "ar-subsets:P, ar:LO-HI) or a JSON file");
  }
  [[nodiscard]] std::vector<ModelSpec> resolve() const {
    CandidateGrid g;
    if (!grid.empty()) {
      if (grid == "arma-garch") {
        g = presets::arma_garch_grid(true);
      } else if (grid == "arma-garch-reduced") {
        g = presets::arma_garch_grid(false);
      } else if (grid == "garch") {
        g = presets::garch_grid(true);
      } else if (grid == "garch-reduced") {
        g = presets::garch_grid(false);
      } else if (grid.rfind("ar-subsets:", 0) == 0) {
        g.parts.push_back(grid::ArSubsets{std::stoi(grid.substr(11))});
      } else if (grid.rfind("ar:", 0) == 0) {
        const auto dash = grid.find('-', 3);
        if (dash == std::string::npos) throw ConfigError("expected ar:LO-HI");
        g.parts.push_back(
            grid::Ar{{std::stoi(grid.substr(3, dash - 3)), std::stoi(grid.substr(dash + 1))}});
      } else if (std::filesystem::exists(grid)) {
        const auto j = read_json_file(grid);
        g = grid_from_json(j.is_object() && j.contains("candidates") ? j.at("candidates") : j);
      } else {
        throw ConfigError("unknown grid '" + grid + "'");
      }
    }
    if (!models.empty()) {
      grid::Explicit e;
      for (const auto& m : models) e.specs.push_back(parse_spec(m));
      g.parts.push_back(std::move(e));
    }
    if (g.parts.empty()) throw ConfigError("give candidates with --models or --grid");
    return enumerate_candidates(g);
  }
};

std::vector<double> parse_theta(const std::string& s) {
  std::vector<double> v;
  std::string cur;
  for (char c : s + ",") {
    if (c == ',' || c == ' ') {
      if (!cur.empty()) v.push_back(detail::to_real(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  return v;
}

std::vector<Penalty> parse_penalties(const std::vector<std::string>& names) {
  std::vector<Penalty> out;
  for (const auto& n : names) out.push_back(parse_penalty(n));
  return out;
}

struct McArgs {
  std::string config;
  std::string preset;
  bool full = false;
  std::optional<std::size_t> replications;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> penalties;
  std::vector<std::size_t> K;
  std::vector<std::size_t> sizes;
  std::size_t threads = 1;

  void add(CLI::App* app) {
    auto* c = app->add_option("-c,--config", config, "Experiment configuration (JSON)");
    auto* p = app->add_option("--preset", preset, "Built-in design: model1..model5, ftse")
                  ->check(CLI::IsMember(presets::names()));
    c->excludes(p);
    app->add_flag("--full", full, "Full candidate grids for presets");
    app->add_option("-r,--replications", replications, "Override the replication count");
    app->add_option("-s,--seed", seed, "Override the base seed");
    app->add_option("-p,--penalty", penalties, "Override penalties: log, sqrt, power:D");
    app->add_option("-K,--K", K, "Override portmanteau lags");
    app->add_option("-n,--sample-sizes", sizes, "Override sample sizes");
    app->add_option("-j,--threads", threads, "Worker threads (0 = all cores)")
        ->capture_default_str();
  }
  [[nodiscard]] ExperimentConfig resolve() const {
    ExperimentConfig cfg;
    if (!config.empty())
      cfg = load_config(config);
    else if (!preset.empty())
      cfg = presets::by_name(preset, full);
    else
      throw ConfigError("give --config or --preset");
    if (replications) cfg.replications = *replications;
    if (seed) cfg.base_seed = *seed;
    if (!penalties.empty()) cfg.penalties = parse_penalties(penalties);
    if (!K.empty()) cfg.K = K;
    if (!sizes.empty()) cfg.sample_sizes = sizes;
    cfg.threads = threads;
    cfg.validate();
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quasi-likelihood estimation, penalized model selection and portmanteau tests "
               "for affine causal time series"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Simulate a trajectory");
  std::string sim_model, sim_theta, sim_config;
  std::size_t sim_n = 1000, sim_burn = kDefaultBurnIn;
  std::uint64_t sim_seed = 1;
  std::string sim_out = "-";
  sim->add_option("-m,--model", sim_model, "Model, e.g. 'garch(1,1)'");
  sim->add_option("-t,--theta", sim_theta, "Comma-separated parameters in layout order");
  sim->add_option("-c,--config", sim_config,
                  "JSON generator {\"model\": ..., \"theta\": ...} or an experiment config");
  sim->add_option("-n,--length", sim_n, "Number of observations")->capture_default_str();
  sim->add_option("--burn-in", sim_burn, "Discarded leading steps")->capture_default_str();
  sim->add_option("-s,--seed", sim_seed, "Seed")->capture_default_str();
  sim->add_option("-o,--out", sim_out, "Output path, '-' for stdout")->capture_default_str();

  // fit
  auto* fit = app.add_subcommand("fit", "Gaussian QMLE of one model");
  std::string fit_model;
  Input fit_in;
  Optim fit_opt;
  Output fit_out;
  fit->add_option("-m,--model", fit_model, "Model, e.g. 'arma(1,1)'")->required();
  fit_in.add(fit);
  fit_opt.add(fit);
  fit_out.add(fit);

  // select
  auto* sel = app.add_subcommand("select", "Penalized model selection over candidates");
  Input sel_in;
  Candidates sel_cand;
  Optim sel_opt;
  Output sel_out;
  std::string sel_pen = "log";
  std::size_t sel_threads = 1;
  sel_in.add(sel);
  sel_cand.add(sel);
  sel_opt.add(sel);
  sel_out.add(sel);
  sel->add_option("-p,--penalty", sel_pen, "log, sqrt or power:D")->capture_default_str();
  sel->add_option("-j,--threads", sel_threads, "Worker threads")->capture_default_str();

  // test
  auto* tst = app.add_subcommand("test", "Fit a model and run the portmanteau test");
  std::string tst_model, tst_form = "subtractive";
  std::size_t tst_K = 3;
  bool tst_arch = false;
  Input tst_in;
  Optim tst_opt;
  Output tst_out;
  tst->add_option("-m,--model", tst_model, "Model to fit and test")->required();
  tst->add_option("-K,--K", tst_K, "Number of lags")->capture_default_str();
  tst->add_option("--variance-form", tst_form, "additive, subtractive or identity")
      ->check(CLI::IsMember({"additive", "subtractive", "identity"}))
      ->capture_default_str();
  tst->add_flag("--arch", tst_arch, "ARCH(p) shortcut with K - p degrees of freedom");
  tst_in.add(tst);
  tst_opt.add(tst);
  tst_out.add(tst);

  // pipeline
  auto* pip = app.add_subcommand("pipeline", "Select per penalty, then test each winner");
  Input pip_in;
  Candidates pip_cand;
  Optim pip_opt;
  Output pip_out;
  std::vector<std::string> pip_pen{"log", "sqrt"};
  std::vector<std::size_t> pip_K{3};
  std::string pip_form = "subtractive";
  std::size_t pip_threads = 1;
  pip_in.add(pip);
  pip_cand.add(pip);
  pip_opt.add(pip);
  pip_out.add(pip);
  pip->add_option("-p,--penalty", pip_pen, "Penalties")->capture_default_str();
  pip->add_option("-K,--K", pip_K, "Portmanteau lags")->capture_default_str();
  pip->add_option("--variance-form", pip_form, "additive, subtractive or identity")
      ->check(CLI::IsMember({"additive", "subtractive", "identity"}))
      ->capture_default_str();
  pip->add_option("-j,--threads", pip_threads, "Worker threads")->capture_default_str();

  // mc-select / mc-sizepower
  auto* mcs = app.add_subcommand("mc-select", "Monte Carlo model selection experiment");
  McArgs mcs_args;
  Output mcs_out;
  mcs_args.add(mcs);
  mcs_out.add(mcs);
  auto* mcp = app.add_subcommand("mc-sizepower", "Monte Carlo size and power of the test");
  McArgs mcp_args;
  Output mcp_out;
  mcp_args.add(mcp);
  mcp_out.add(mcp);

  // preset
  auto* pre = app.add_subcommand("preset", "Write a built-in experiment configuration");
  std::string pre_name;
  bool pre_full = false;
  std::string pre_out = "-";
  pre->add_option("name", pre_name, "model1..model5, ftse")
      ->required()
      ->check(CLI::IsMember(presets::names()));
  pre->add_flag("--full", pre_full, "Full candidate grids");
  pre->add_option("-o,--out", pre_out, "Output path")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      Generator g;
      if (!sim_config.empty()) {
        const auto j = read_json_file(sim_config);
        g = j.contains("truth") ? generator_from_json(j.at("truth")) : generator_from_json(j);
      } else {
        if (sim_model.empty() || sim_theta.empty())
          throw ConfigError("simulate needs --model and --theta, or --config");
        g.spec = parse_spec(sim_model);
        g.theta = make_params(g.spec, parse_theta(sim_theta));
      }
      const auto x = simulate(g.spec, g.theta, sim_n, sim_burn, sim_seed);
      if (sim_out == "-") {
        write_series(x, std::cout);
      } else {
        std::ofstream out(sim_out);
        if (!out) throw IoError("cannot write '" + sim_out + "'");
        write_series(x, out);
        if (!out) throw IoError("error while writing '" + sim_out + "'");
      }
    } else if (fit->parsed()) {
      fit_out.write(fit_qmle(parse_spec(fit_model), fit_in.load(), fit_opt.options()));
    } else if (sel->parsed()) {
      const auto x = sel_in.load();
      sel_out.write(
          select(x, sel_cand.resolve(), parse_penalty(sel_pen), sel_opt.options(), {}, sel_threads));
    } else if (tst->parsed()) {
      const auto x = tst_in.load();
      const auto spec = parse_spec(tst_model);
      const auto f = fit_qmle(spec, x, tst_opt.options());
      if (tst_arch) {
        const std::size_t p = std::visit(
            overloaded{[](const family::ARCH& a) { return static_cast<std::size_t>(a.p); },
                       [](const family::GARCH& a) { return static_cast<std::size_t>(a.p); },
                       [](const auto&) -> std::size_t {
                         throw ConfigError("--arch needs an ARCH(p) model");
                       }},
            spec.family);
        tst_out.write(portmanteau_arch(f, x, p, tst_K));
      } else {
        tst_out.write(portmanteau(f, x, tst_K, parse_variance_form(tst_form), tst_opt.options()));
      }
    } else if (pip->parsed()) {
      const auto x = pip_in.load();
      pip_out.write(run_pipeline(x, pip_cand.resolve(), parse_penalties(pip_pen), pip_K,
                                 pip_opt.options(), parse_variance_form(pip_form), pip_threads));
    } else if (mcs->parsed()) {
      const auto rep = run_selection_experiment(mcs_args.resolve());
      mcs_out.write(rep);
    } else if (mcp->parsed()) {
      const auto rep = run_size_power_experiment(mcp_args.resolve());
      mcp_out.write(rep);
    } else if (pre->parsed()) {
      const auto body = config_to_json(presets::by_name(pre_name, pre_full)).dump(2) + "\n";
      if (pre_out == "-") {
        std::cout << body;
      } else {
        std::ofstream out(pre_out);
        if (!out) throw IoError("cannot write '" + pre_out + "'");
        out << body;
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "acsel: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
