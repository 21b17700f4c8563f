// Command-line frontend: simulate scenario data, fit the latent-class
// treatment model, run the estimators, run the model diagnostic, and drive
// Monte Carlo experiments from TOML configs.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <multicause/multicause.hpp>

namespace mc = multicause;

namespace {

void write_text(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw mc::config_error("cannot open output path '" + path + "'");
  out << text;
  if (!out) throw mc::config_error("failed while writing '" + path + "'");
}

void write_json(const std::string& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + "\n");
}

struct SimulateArgs {
  std::string scenario;
  std::string config;
  std::optional<std::int64_t> n;
  std::optional<std::uint64_t> seed;
  std::string out;
  unsigned threads = 1;
};

void run_simulate(const SimulateArgs& args) {
  mc::ScenarioSpec spec;
  if (!args.config.empty()) {
    spec = mc::scenario_from_toml_file(args.config);
  } else if (!args.scenario.empty()) {
    spec = mc::default_scenario(mc::scenario_from_string(args.scenario));
  } else {
    throw mc::config_error("simulate needs --scenario <name> or --config <file>");
  }
  if (args.n) spec.n = static_cast<std::size_t>(*args.n);
  if (args.seed) spec.seed = *args.seed;
  spec.validate();
  const mc::Dataset data = mc::generate(spec, args.threads);
  if (args.out.empty()) {
    std::cout << mc::to_csv_string(data);
  } else {
    mc::save_csv(args.out, data);
  }
}

struct FitArgs {
  std::string data;
  std::int64_t k = 2;
  mc::FitConfig config;
  std::string out;
};

void run_fit(const FitArgs& args) {
  const mc::Dataset data = mc::load_csv(args.data);
  const mc::LatentClassModel model =
      mc::fit_em(data, static_cast<std::size_t>(args.k), args.config);
  write_json(args.out, mc::model_to_json(model));
}

struct EstimateArgs {
  std::string data;
  std::string method;
  std::string model_path;
  std::string contrast;
  std::string p1;
  std::string p0;
  std::string weights = "posterior";
  bool factorized = false;
  bool no_self_normalize = false;
  std::optional<double> sigma_known;
  double cf_a1 = 1.0;
  double cf_a0 = 0.0;
  std::int64_t bootstrap = 200;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::int64_t k = 2;
  std::int64_t restarts = 10;
  std::string out;
};

mc::LatentClassModel resolve_model(const EstimateArgs& args, const mc::Dataset& data) {
  if (!args.model_path.empty()) {
    std::ifstream in(args.model_path);
    if (!in) throw mc::config_error("cannot open model file '" + args.model_path + "'");
    nlohmann::json j;
    in >> j;
    return mc::model_from_json(j);
  }
  mc::FitConfig fit;
  fit.restarts = static_cast<int>(args.restarts);
  fit.seed = mc::derive_seed(args.seed, 1);
  fit.threads = args.threads;
  return mc::fit_em(data, static_cast<std::size_t>(args.k), fit);
}

std::pair<std::vector<int>, std::vector<int>> resolve_contrast(const EstimateArgs& args,
                                                               std::size_t m) {
  if (args.contrast.empty()) {
    return {std::vector<int>(m, 1), std::vector<int>(m, 0)};
  }
  const auto [a, a0] = mc::parse_contrast(args.contrast);
  if (a.size() != m) {
    throw mc::config_error("contrast length " + std::to_string(a.size()) +
                           " does not match the data's " + std::to_string(m) + " treatments");
  }
  return {a, a0};
}

nlohmann::json coefficient_block(const mc::AdditiveFit& fit) {
  nlohmann::json j;
  j["beta0"] = fit.beta0;
  j["beta0_se"] = fit.beta0_se;
  j["beta"] = fit.beta;
  j["beta_se"] = fit.beta_se;
  j["notes"] = fit.notes;
  return j;
}

void run_estimate(const EstimateArgs& args) {
  const mc::Dataset data = mc::load_csv(args.data);
  const mc::Method method = mc::method_from_string(args.method);
  nlohmann::json out;
  out["method"] = args.method;

  switch (method) {
    case mc::Method::naive: {
      const auto [a, a0] = resolve_contrast(args, data.m);
      mc::RegressionOptions opt{static_cast<int>(args.bootstrap), args.seed, args.threads};
      const mc::AdditiveFit fit = mc::naive_regression(data, {}, opt);
      out["estimand"] = "pattern_contrast";
      out["contrast"] = mc::pattern_to_string(a) + " vs " + mc::pattern_to_string(a0);
      out["estimate"] = fit.contrast(a, a0);
      out.update(coefficient_block(fit));
      break;
    }
    case mc::Method::deconfounder: {
      const auto [a, a0] = resolve_contrast(args, data.m);
      const mc::LatentClassModel model = resolve_model(args, data);
      mc::AteOptions opt{static_cast<int>(args.bootstrap), args.seed, args.threads};
      const mc::EstimateReport report = mc::estimate_ate(data, model, a, a0, opt);
      out.update(mc::report_to_json(report));
      break;
    }
    case mc::Method::parametric: {
      const auto [a, a0] = resolve_contrast(args, data.m);
      const mc::LatentClassModel model = resolve_model(args, data);
      mc::BasisSpec basis;
      if (args.sigma_known) {
        basis.sigma_known = true;
        basis.sigma_value = *args.sigma_known;
      }
      mc::RegressionOptions opt{static_cast<int>(args.bootstrap), args.seed, args.threads};
      const mc::AdditiveFit fit = mc::estimate_additive(data, model, basis, opt);
      out["estimand"] = "additive_outcome_contrast";
      out["contrast"] = mc::pattern_to_string(a) + " vs " + mc::pattern_to_string(a0);
      out["estimate"] = fit.contrast(a, a0, basis);
      out["sigma_hat"] = fit.sigma_hat;
      out["sigma_se"] = fit.sigma_se;
      out["sigma_was_known"] = fit.sigma_was_known;
      out["rank_full"] = fit.rank.full_rank;
      out.update(coefficient_block(fit));
      break;
    }
    case mc::Method::si: {
      if (args.p1.empty() || args.p0.empty()) {
        throw mc::config_error("--method si needs --p1 and --p0 distribution literals");
      }
      mc::SIConfig config;
      config.p1 = mc::parse_distribution(args.p1);
      config.p0 = mc::parse_distribution(args.p0);
      config.mode = mc::weight_mode_from_string(args.weights);
      config.self_normalize = !args.no_self_normalize;
      config.bootstrap = static_cast<int>(args.bootstrap);
      config.seed = args.seed;
      config.threads = args.threads;
      mc::EstimateReport report;
      if (args.factorized) {
        mc::FitConfig fit;
        fit.restarts = static_cast<int>(args.restarts);
        fit.seed = mc::derive_seed(args.seed, 1);
        fit.threads = args.threads;
        const auto fmodel = mc::fit_factorized_model(data, static_cast<std::size_t>(args.k), fit);
        report = mc::delta_from_factorized(data, fmodel, config);
      } else {
        const mc::LatentClassModel model = resolve_model(args, data);
        report = mc::estimate_delta(data, model, config);
      }
      out.update(mc::report_to_json(report));
      break;
    }
    case mc::Method::iv: {
      mc::IVOptions opt{static_cast<int>(args.bootstrap), args.seed, args.threads};
      const mc::QSolution sol = mc::estimate_iv(data, opt);
      out["estimand"] = "pattern_mean_table";
      nlohmann::json table = nlohmann::json::array();
      for (std::size_t bits = 0; bits < sol.q.size(); ++bits) {
        nlohmann::json row;
        row["pattern"] = mc::bits_to_string(static_cast<std::uint32_t>(bits), sol.m);
        row["q"] = sol.q[bits];
        row["se"] = sol.se[bits];
        table.push_back(row);
      }
      out["q"] = table;
      out["rank_verdict"] = sol.rank.verdict;
      if (!args.contrast.empty()) {
        const auto [a, a0] = resolve_contrast(args, data.m);
        const auto b1 = mc::pattern_to_bits(a);
        const auto b0 = mc::pattern_to_bits(a0);
        out["contrast"] = mc::pattern_to_string(a) + " vs " + mc::pattern_to_string(a0);
        out["estimate"] = sol.q[b1] - sol.q[b0];
        out["se"] = std::sqrt(sol.se[b1] * sol.se[b1] + sol.se[b0] * sol.se[b0]);
      }
      break;
    }
    case mc::Method::cf: {
      mc::CFOptions opt{static_cast<int>(args.bootstrap), args.seed, args.threads};
      const mc::ControlFunctionFit fit = mc::control_function_fit(data, opt);
      out["estimand"] = "treatment_shift_effect";
      out["contrast"] =
          "A=" + mc::format_double(args.cf_a1) + " vs A=" + mc::format_double(args.cf_a0);
      out["estimate"] = fit.ate(args.cf_a1, args.cf_a0);
      out["se"] = fit.ate_se(args.cf_a1, args.cf_a0);
      out["coef"] = fit.coef;
      out["coef_names"] = fit.coef_names;
      out["notes"] = fit.notes;
      const mc::CFOverlapReport overlap = mc::cf_overlap_check(fit, data);
      out["overlap_pass"] = overlap.pass;
      out["overlap_flagged_bins"] = overlap.flagged;
      break;
    }
  }
  write_json(args.out, out);
}

struct DiagnoseArgs {
  std::string data;
  std::string model_path;
  std::int64_t k = 2;
  std::int64_t restarts = 10;
  std::int64_t bootstrap = 199;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string out;
};

void run_diagnose(const DiagnoseArgs& args) {
  const mc::Dataset data = mc::load_csv(args.data);
  mc::FitConfig fit;
  fit.restarts = static_cast<int>(args.restarts);
  fit.seed = mc::derive_seed(args.seed, 1);
  fit.threads = args.threads;
  mc::LatentClassModel model;
  if (!args.model_path.empty()) {
    std::ifstream in(args.model_path);
    if (!in) throw mc::config_error("cannot open model file '" + args.model_path + "'");
    nlohmann::json j;
    in >> j;
    model = mc::model_from_json(j);
  } else {
    model = mc::fit_em(data, static_cast<std::size_t>(args.k), fit);
  }
  mc::DiagnosticOptions options;
  options.alpha = args.alpha;
  options.bootstrap = static_cast<int>(args.bootstrap);
  options.seed = mc::derive_seed(args.seed, 2);
  options.threads = args.threads;
  options.refit = fit;
  const mc::DiagnosticReport report = mc::diagnose_conditional_independence(data, model, options);

  nlohmann::json out;
  out["treatment_p"] = report.treatment_p;
  out["gof_statistic"] = report.gof_statistic;
  out["gof_p"] = report.gof_p;
  out["gof_bootstrap"] = report.gof_bootstrap;
  out["low_expected_cells"] = report.low_expected_cells;
  out["total_cells"] = report.total_cells;
  out["sparse_cells_warning"] = report.sparse_cells_warning;
  out["class_counts"] = report.class_counts;
  out["alpha"] = report.alpha;
  out["notes"] = report.notes;
  write_json(args.out, out);
}

struct McArgs {
  std::string config;
  std::string out;
  std::string format;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> replicates;
  std::optional<std::int64_t> parallelism;
};

void run_mc(const McArgs& args) {
  mc::ExperimentConfig config = mc::experiment_from_toml_file(args.config);
  if (!args.out.empty()) config.output_path = args.out;
  if (!args.format.empty()) config.format = args.format;
  if (args.seed) config.base_seed = *args.seed;
  if (args.replicates) config.replicates = static_cast<int>(*args.replicates);
  if (args.parallelism) config.parallelism = static_cast<unsigned>(*args.parallelism);
  config.validate();
  const mc::MCSummary summary = mc::run_experiment(config);
  if (config.output_path.empty()) {
    std::cout << (config.format == "csv" ? mc::summary_to_csv(summary)
                                         : mc::summary_to_canonical_json(summary));
  } else {
    mc::emit_report(summary, config.output_path, config.format);
    std::cerr << "wrote " << config.output_path << " (" << summary.rows.size() << " rows, "
              << summary.failure_count << " failures)\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-confounder adjustment toolkit: simulate, fit, estimate, diagnose, mc"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Generate a scenario dataset as CSV");
  simulate->add_option("--scenario", sim.scenario,
                       "Scenario name: fig1|fig2a|fig2b|fig3|iv_binary|cf_triangular");
  simulate->add_option("--config", sim.config, "Scenario TOML file");
  simulate->add_option("--n", sim.n, "Override the number of rows");
  simulate->add_option("--seed", sim.seed, "Override the generator seed");
  simulate->add_option("--out", sim.out, "Output CSV path (default: stdout)");
  simulate->add_option("--threads", sim.threads, "Generation threads");
  simulate->callback([&] { run_simulate(sim); });

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit the latent-class treatment model");
  fit_cmd->add_option("--data", fit.data, "Input CSV dataset")->required();
  fit_cmd->add_option("--k", fit.k, "Number of latent classes (default 2)");
  fit_cmd->add_option("--restarts", fit.config.restarts, "EM restarts");
  fit_cmd->add_option("--max-iterations", fit.config.max_iterations, "EM iteration cap");
  fit_cmd->add_option("--tolerance", fit.config.tolerance, "EM convergence tolerance");
  fit_cmd->add_option("--seed", fit.config.seed, "EM restart seed");
  fit_cmd->add_option("--threads", fit.config.threads, "Concurrent restarts");
  fit_cmd->add_option("--out", fit.out, "Output model JSON path (default: stdout)");
  fit_cmd->callback([&] { run_fit(fit); });

  EstimateArgs est;
  auto* estimate = app.add_subcommand("estimate", "Run one estimator on a dataset");
  estimate->add_option("--data", est.data, "Input CSV dataset")->required();
  estimate->add_option("--method", est.method, "naive|deconfounder|parametric|si|iv|cf")
      ->required();
  estimate->add_option("--model", est.model_path, "Fitted model JSON (default: fit on the fly)");
  estimate->add_option("--contrast", est.contrast, "Pattern contrast, e.g. 111:000");
  estimate->add_option("--p1", est.p1, "Intervention distribution, e.g. prod:0.8,0.8,0.8");
  estimate->add_option("--p0", est.p0, "Baseline distribution, e.g. prod:0.2,0.2,0.2");
  estimate->add_option("--weights", est.weights, "si weight mode: oracle|posterior");
  estimate->add_flag("--factorized", est.factorized,
                     "si: use the factorized treatment model (4 treatments)");
  estimate->add_flag("--no-self-normalize", est.no_self_normalize,
                     "si: divide by n instead of the weight mass");
  estimate->add_option("--sigma-known", est.sigma_known,
                       "parametric: fix the confounder coefficient");
  estimate->add_option("--cf-a1", est.cf_a1, "cf: target treatment value");
  estimate->add_option("--cf-a0", est.cf_a0, "cf: baseline treatment value");
  estimate->add_option("--bootstrap", est.bootstrap, "Bootstrap replicates (default 200)");
  estimate->add_option("--seed", est.seed, "Bootstrap/fit seed");
  estimate->add_option("--threads", est.threads, "Bootstrap threads");
  estimate->add_option("--k", est.k, "Latent classes when fitting on the fly");
  estimate->add_option("--restarts", est.restarts, "EM restarts when fitting on the fly");
  estimate->add_option("--out", est.out, "Output report JSON path (default: stdout)");
  estimate->callback([&] { run_estimate(est); });

  DiagnoseArgs diag;
  auto* diagnose = app.add_subcommand("diagnose", "Model fit diagnostic for the treatment model");
  diagnose->add_option("--data", diag.data, "Input CSV dataset")->required();
  diagnose->add_option("--model", diag.model_path, "Fitted model JSON (default: fit on the fly)");
  diagnose->add_option("--k", diag.k, "Latent classes when fitting on the fly");
  diagnose->add_option("--restarts", diag.restarts, "EM restarts");
  diagnose->add_option("--bootstrap", diag.bootstrap, "Goodness-of-fit bootstrap replicates");
  diagnose->add_option("--alpha", diag.alpha, "Pairwise test level");
  diagnose->add_option("--seed", diag.seed, "Diagnostic seed");
  diagnose->add_option("--threads", diag.threads, "Bootstrap threads");
  diagnose->add_option("--out", diag.out, "Output report JSON path (default: stdout)");
  diagnose->callback([&] { run_diagnose(diag); });

  McArgs mc_args;
  auto* mc_cmd = app.add_subcommand("mc", "Run a Monte Carlo experiment from a TOML config");
  mc_cmd->add_option("--config", mc_args.config, "Experiment TOML file")->required();
  mc_cmd->add_option("--out", mc_args.out, "Override the output path");
  mc_cmd->add_option("--format", mc_args.format, "Override the output format: json|csv");
  mc_cmd->add_option("--seed", mc_args.seed, "Override the base seed");
  mc_cmd->add_option("--replicates", mc_args.replicates, "Override the replicate count");
  mc_cmd->add_option("--parallelism", mc_args.parallelism, "Override the parallelism degree");
  mc_cmd->callback([&] { run_mc(mc_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const mc::identification_error& e) {
    std::cerr << "identification error: " << e.what() << "\n";
    return 2;
  } catch (const mc::parse_error& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 1;
  } catch (const mc::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
