#pragma once

// Configuration-driven Monte Carlo runner. Replicate r draws its seed from
// (base seed, r), runs generate -> fit -> estimate -> diagnose, and failures
// are contained per replicate. Aggregation is in index order, so output is
// byte-identical for any parallelism degree.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "multicause/dataset.hpp"
#include "multicause/dataset_io.hpp"
#include "multicause/deconfounder.hpp"
#include "multicause/errors.hpp"
#include "multicause/factor_model.hpp"
#include "multicause/iv.hpp"
#include "multicause/parametric.hpp"
#include "multicause/parallel.hpp"
#include "multicause/report.hpp"
#include "multicause/rng.hpp"
#include "multicause/scenarios.hpp"
#include "multicause/stats.hpp"
#include "multicause/stochastic_intervention.hpp"
#include "multicause/treatment_distribution.hpp"

namespace multicause {

/// True class-conditional treatment model implied by a scenario, for
/// oracle-mode validation. Only defined where treatments are conditionally
/// independent given the class.
inline LatentClassModel scenario_model(const ScenarioSpec& spec) {
  spec.validate();
  if (spec.id != ScenarioId::fig1 && spec.id != ScenarioId::fig2a &&
      spec.id != ScenarioId::fig2b) {
    throw config_error("scenario '" + to_string(spec.id) +
                       "' has no class-conditional product treatment law");
  }
  LatentClassModel model;
  model.k = spec.k();
  model.m = spec.m();
  model.prior = spec.prior;
  model.cond = spec.cond;
  model.fit.loglik = 0.0;
  return canonicalize(model);
}

/// True factorized treatment model for the four-treatment scenario with
/// edges from A1 into A2 and A3.
inline FactorizedTreatmentModel scenario_factorized_model(const ScenarioSpec& spec) {
  spec.validate();
  if (spec.id != ScenarioId::fig3) {
    throw config_error("factorized truth is only defined for the fig3 scenario");
  }
  FactorizedTreatmentModel model;
  model.k = spec.k();
  model.prior = spec.prior;
  model.p1.resize(model.k);
  model.p2.resize(model.k);
  model.p3.resize(model.k);
  model.p4.resize(model.k);
  for (std::size_t z = 0; z < model.k; ++z) {
    model.p1[z] = spec.cond[z][0];
    for (int a1 = 0; a1 < 2; ++a1) {
      model.p2[z][static_cast<std::size_t>(a1)] =
          logistic(logit(spec.cond[z][1]) + spec.edge_a1_a2 * a1);
      model.p3[z][static_cast<std::size_t>(a1)] =
          logistic(logit(spec.cond[z][2]) + spec.edge_a1_a3 * a1);
    }
    model.p4[z] = spec.cond[z][3];
  }
  model.fit.loglik = 0.0;
  return canonicalize(model);
}

/// Exact delta oracle for fig3: enumerates the structural law with the
/// treatment-on-treatment edges (the outcome side is unchanged, so this
/// equals the generic enumeration).
inline double true_delta_fig3(const ScenarioSpec& spec, const TreatmentDistribution& p1,
                              const TreatmentDistribution& p0) {
  return true_delta(spec, p1, p0);
}

enum class Method { naive, deconfounder, parametric, si, iv, cf };

inline std::string to_string(Method method) {
  switch (method) {
    case Method::naive: return "naive";
    case Method::deconfounder: return "deconfounder";
    case Method::parametric: return "parametric";
    case Method::si: return "si";
    case Method::iv: return "iv";
    case Method::cf: return "cf";
  }
  throw config_error("unknown method");
}

inline Method method_from_string(const std::string& name) {
  if (name == "naive") return Method::naive;
  if (name == "deconfounder") return Method::deconfounder;
  if (name == "parametric") return Method::parametric;
  if (name == "si") return Method::si;
  if (name == "iv") return Method::iv;
  if (name == "cf") return Method::cf;
  throw config_error("unknown method '" + name +
                     "' (expected naive|deconfounder|parametric|si|iv|cf)");
}

struct EstimatorSpec {
  Method method = Method::deconfounder;
  std::string name;  // output label; defaults to the method name

  // pattern contrast for naive / deconfounder / parametric / iv
  std::vector<int> contrast_a;
  std::vector<int> contrast_a0;

  // stochastic intervention settings
  TreatmentDistribution p1;
  TreatmentDistribution p0;
  WeightMode weights = WeightMode::posterior_mixture;
  bool self_normalize = true;
  bool factorized = false;  // use the factorized treatment model

  // parametric settings
  bool sigma_known = false;
  double sigma_value = 0.0;

  // control-function contrast (treatment values)
  double cf_a1 = 1.0;
  double cf_a0 = 0.0;

  int bootstrap = 0;  // per-replicate bootstrap; 0 skips (MC spread suffices)

  std::string label() const { return name.empty() ? to_string(method) : name; }
};

struct ExperimentConfig {
  ScenarioSpec scenario;
  std::vector<EstimatorSpec> estimators;
  int replicates = 1;
  std::uint64_t base_seed = 1;
  unsigned parallelism = 1;
  std::string output_path;       // empty = stdout
  std::string format = "json";   // json | csv
  std::size_t fit_k = 2;
  FitConfig fit;
  bool run_diagnostic = false;
  DiagnosticOptions diagnostic;
  std::map<int, std::uint64_t> seed_overrides;  // replicate index -> seed

  void validate() const {
    scenario.validate();
    if (replicates < 1) throw config_error("replicates must be >= 1");
    if (estimators.empty()) throw config_error("estimator list must be nonempty");
    if (parallelism < 1) throw config_error("parallelism must be >= 1");
    if (format != "json" && format != "csv") {
      throw config_error("format must be 'json' or 'csv', got '" + format + "'");
    }
  }
};

struct ReplicateResult {
  int replicate = 0;
  std::uint64_t seed = 0;
  std::string estimator;
  double estimate = 0.0;
  double se = 0.0;
  double oracle = 0.0;
  bool failed = false;
  std::string error;

  bool operator==(const ReplicateResult&) const = default;
};

struct EstimatorSummary {
  std::string name;
  int replicates = 0;  // successful ones
  int failures = 0;
  double oracle = 0.0;
  double mean = 0.0;
  double bias = 0.0;
  double sd = 0.0;    // population formula
  double rmse = 0.0;  // rmse^2 = bias^2 + sd^2

  bool operator==(const EstimatorSummary&) const = default;
};

struct MCSummary {
  std::string scenario;
  int replicates = 0;
  std::uint64_t base_seed = 0;
  std::vector<EstimatorSummary> estimators;
  std::vector<ReplicateResult> rows;  // replicate-major, estimator order within
  bool has_diagnostic = false;
  std::vector<double> diagnostic_p;  // per replicate; -1 marks a failed replicate
  double diagnostic_reject_1pct = 0.0;
  double diagnostic_reject_5pct = 0.0;
  int failure_count = 0;

  bool operator==(const MCSummary&) const = default;
};

namespace detail {

inline double estimator_oracle(const ScenarioSpec& spec, const EstimatorSpec& est) {
  switch (est.method) {
    case Method::naive:
    case Method::deconfounder:
    case Method::parametric:
    case Method::iv:
      return true_ate(spec, est.contrast_a, est.contrast_a0);
    case Method::si:
      return true_delta(spec, est.p1, est.p0);
    case Method::cf:
      return spec.cf_ba * (est.cf_a1 - est.cf_a0);
  }
  throw config_error("unknown method");
}

inline void default_contrast(EstimatorSpec& est, std::size_t m) {
  if (est.contrast_a.empty()) est.contrast_a.assign(m, 1);
  if (est.contrast_a0.empty()) est.contrast_a0.assign(m, 0);
}

struct ReplicateOutput {
  std::vector<ReplicateResult> rows;
  double diagnostic_p = -1.0;
  bool replicate_failed = false;
};

}  // namespace detail

/// One full replicate: generate, fit whatever the estimator list needs,
/// estimate, optionally diagnose. Estimator failures are contained per row;
/// generation or fit failures mark every row of the replicate failed.
inline detail::ReplicateOutput run_replicate(const ExperimentConfig& config, int r,
                                             std::uint64_t seed) {
  detail::ReplicateOutput out;
  ScenarioSpec spec = config.scenario;
  spec.seed = seed;

  auto fail_all = [&](const std::string& why) {
    out.rows.clear();
    for (const auto& est : config.estimators) {
      ReplicateResult row;
      row.replicate = r;
      row.seed = seed;
      row.estimator = est.label();
      row.failed = true;
      row.error = why;
      out.rows.push_back(row);
    }
    out.replicate_failed = true;
  };

  Dataset data;
  try {
    data = generate(spec);
  } catch (const std::exception& e) {
    fail_all(std::string("generate: ") + e.what());
    return out;
  }

  const bool needs_model = [&] {
    if (config.run_diagnostic) return true;
    for (const auto& est : config.estimators) {
      if (est.method == Method::deconfounder || est.method == Method::parametric) return true;
      if (est.method == Method::si && !est.factorized &&
          est.weights == WeightMode::posterior_mixture) {
        return true;
      }
    }
    return false;
  }();
  const bool needs_factorized = [&] {
    for (const auto& est : config.estimators) {
      if (est.method == Method::si && est.factorized &&
          est.weights == WeightMode::posterior_mixture) {
        return true;
      }
    }
    return false;
  }();

  // fixed stream layout per replicate: 1 = EM restarts, 2 = diagnostics,
  // 3 = factorized EM, 100+i = estimator i bootstrap
  LatentClassModel model;
  FactorizedTreatmentModel fmodel;
  try {
    if (needs_model) {
      FitConfig fit = config.fit;
      fit.seed = derive_seed(seed, 1);
      model = fit_em(data, config.fit_k, fit);
    }
    if (needs_factorized) {
      FitConfig fit = config.fit;
      fit.seed = derive_seed(seed, 3);
      fmodel = fit_factorized_model(data, config.fit_k, fit);
    }
  } catch (const std::exception& e) {
    fail_all(std::string("fit: ") + e.what());
    return out;
  }

  for (std::size_t e = 0; e < config.estimators.size(); ++e) {
    EstimatorSpec est = config.estimators[e];
    detail::default_contrast(est, spec.m());
    ReplicateResult row;
    row.replicate = r;
    row.seed = seed;
    row.estimator = est.label();
    try {
      row.oracle = detail::estimator_oracle(spec, est);
      const std::uint64_t est_seed = derive_seed(seed, 100 + e);
      switch (est.method) {
        case Method::naive: {
          RegressionOptions opt{est.bootstrap, est_seed, 1};
          const auto fit = naive_regression(data, {}, opt);
          row.estimate = fit.contrast(est.contrast_a, est.contrast_a0);
          break;
        }
        case Method::deconfounder: {
          AteOptions opt{est.bootstrap, est_seed, 1};
          const auto report = estimate_ate(data, model, est.contrast_a, est.contrast_a0, opt);
          row.estimate = report.estimate;
          row.se = report.se;
          break;
        }
        case Method::parametric: {
          BasisSpec basis;
          basis.sigma_known = est.sigma_known;
          basis.sigma_value = est.sigma_value;
          RegressionOptions opt{est.bootstrap, est_seed, 1};
          const auto fit = estimate_additive(data, model, basis, opt);
          row.estimate = fit.contrast(est.contrast_a, est.contrast_a0, basis);
          break;
        }
        case Method::si: {
          SIConfig si;
          si.p1 = est.p1;
          si.p0 = est.p0;
          si.mode = est.weights;
          si.self_normalize = est.self_normalize;
          si.bootstrap = est.bootstrap;
          si.seed = est_seed;
          EstimateReport report;
          if (est.factorized) {
            const FactorizedTreatmentModel& fm =
                est.weights == WeightMode::oracle_latent
                    ? scenario_factorized_model(spec)
                    : fmodel;
            report = delta_from_factorized(data, fm, si);
          } else {
            const LatentClassModel& lm =
                est.weights == WeightMode::oracle_latent ? scenario_model(spec) : model;
            report = estimate_delta(data, lm, si);
          }
          row.estimate = report.estimate;
          row.se = report.se;
          break;
        }
        case Method::iv: {
          IVOptions opt{est.bootstrap, est_seed, 1};
          const auto sol = estimate_iv(data, opt);
          const std::uint32_t b1 = pattern_to_bits(est.contrast_a);
          const std::uint32_t b0 = pattern_to_bits(est.contrast_a0);
          row.estimate = sol.q[b1] - sol.q[b0];
          if (est.bootstrap > 0) {
            row.se = std::sqrt(sol.se[b1] * sol.se[b1] + sol.se[b0] * sol.se[b0]);
          }
          break;
        }
        case Method::cf: {
          CFOptions opt{est.bootstrap, est_seed, 1};
          const auto fit = control_function_fit(data, opt);
          row.estimate = fit.ate(est.cf_a1, est.cf_a0);
          row.se = fit.ate_se(est.cf_a1, est.cf_a0);
          break;
        }
      }
    } catch (const std::exception& ex) {
      row.failed = true;
      row.estimate = 0.0;
      row.se = 0.0;
      row.error = ex.what();
    }
    out.rows.push_back(row);
  }

  if (config.run_diagnostic) {
    try {
      DiagnosticOptions diag = config.diagnostic;
      diag.seed = derive_seed(seed, 2);
      diag.refit = config.fit;
      const auto report = diagnose_conditional_independence(data, model, diag);
      out.diagnostic_p = report.gof_p;
    } catch (const std::exception&) {
      out.diagnostic_p = -1.0;
    }
  }
  return out;
}

inline MCSummary run_experiment(const ExperimentConfig& config) {
  config.validate();
  MCSummary summary;
  summary.scenario = to_string(config.scenario.id);
  summary.replicates = config.replicates;
  summary.base_seed = config.base_seed;
  summary.has_diagnostic = config.run_diagnostic;

  const auto n_reps = static_cast<std::size_t>(config.replicates);
  std::vector<detail::ReplicateOutput> outputs(n_reps);
  parallel_for(n_reps, config.parallelism, [&](std::size_t r) {
    std::uint64_t seed = derive_seed(config.base_seed, r);
    const auto it = config.seed_overrides.find(static_cast<int>(r));
    if (it != config.seed_overrides.end()) seed = it->second;
    outputs[r] = run_replicate(config, static_cast<int>(r), seed);
  });

  for (auto& out : outputs) {
    for (auto& row : out.rows) summary.rows.push_back(row);
    if (config.run_diagnostic) summary.diagnostic_p.push_back(out.diagnostic_p);
  }

  for (const auto& est : config.estimators) {
    EstimatorSummary s;
    s.name = est.label();
    std::vector<double> values;
    double oracle = 0.0;
    for (const auto& row : summary.rows) {
      if (row.estimator != s.name) continue;
      if (row.failed) {
        ++s.failures;
        continue;
      }
      values.push_back(row.estimate);
      oracle = row.oracle;
    }
    s.replicates = static_cast<int>(values.size());
    s.oracle = oracle;
    if (!values.empty()) {
      s.mean = mean(values);
      s.bias = s.mean - s.oracle;
      s.sd = std::sqrt(variance(values));
      double mse = 0.0;
      for (double v : values) mse += (v - s.oracle) * (v - s.oracle);
      s.rmse = std::sqrt(mse / static_cast<double>(values.size()));
    }
    summary.failure_count += s.failures;
    summary.estimators.push_back(s);
  }

  if (config.run_diagnostic) {
    int valid = 0, r1 = 0, r5 = 0;
    for (double p : summary.diagnostic_p) {
      if (p < 0.0) continue;
      ++valid;
      if (p < 0.01) ++r1;
      if (p < 0.05) ++r5;
    }
    if (valid > 0) {
      summary.diagnostic_reject_1pct = static_cast<double>(r1) / valid;
      summary.diagnostic_reject_5pct = static_cast<double>(r5) / valid;
    }
  }
  return summary;
}

inline nlohmann::json summary_to_json(const MCSummary& summary) {
  nlohmann::json j;
  j["scenario"] = summary.scenario;
  j["replicates"] = summary.replicates;
  j["base_seed"] = summary.base_seed;
  j["failure_count"] = summary.failure_count;
  nlohmann::json ests = nlohmann::json::array();
  for (const auto& e : summary.estimators) {
    nlohmann::json je;
    je["name"] = e.name;
    je["replicates"] = e.replicates;
    je["failures"] = e.failures;
    je["oracle"] = e.oracle;
    je["mean"] = e.mean;
    je["bias"] = e.bias;
    je["sd"] = e.sd;
    je["rmse"] = e.rmse;
    ests.push_back(je);
  }
  j["estimators"] = ests;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : summary.rows) {
    nlohmann::json jr;
    jr["replicate"] = r.replicate;
    jr["seed"] = r.seed;
    jr["estimator"] = r.estimator;
    jr["estimate"] = r.estimate;
    jr["se"] = r.se;
    jr["oracle"] = r.oracle;
    jr["failed"] = r.failed;
    jr["error"] = r.error;
    rows.push_back(jr);
  }
  j["rows"] = rows;
  j["has_diagnostic"] = summary.has_diagnostic;
  if (summary.has_diagnostic) {
    j["diagnostic_p"] = summary.diagnostic_p;
    j["diagnostic_reject_1pct"] = summary.diagnostic_reject_1pct;
    j["diagnostic_reject_5pct"] = summary.diagnostic_reject_5pct;
  }
  return j;
}

inline MCSummary summary_from_json(const nlohmann::json& j) {
  MCSummary summary;
  summary.scenario = j.at("scenario").get<std::string>();
  summary.replicates = j.at("replicates").get<int>();
  summary.base_seed = j.at("base_seed").get<std::uint64_t>();
  summary.failure_count = j.at("failure_count").get<int>();
  for (const auto& je : j.at("estimators")) {
    EstimatorSummary e;
    e.name = je.at("name").get<std::string>();
    e.replicates = je.at("replicates").get<int>();
    e.failures = je.at("failures").get<int>();
    e.oracle = je.at("oracle").get<double>();
    e.mean = je.at("mean").get<double>();
    e.bias = je.at("bias").get<double>();
    e.sd = je.at("sd").get<double>();
    e.rmse = je.at("rmse").get<double>();
    summary.estimators.push_back(e);
  }
  for (const auto& jr : j.at("rows")) {
    ReplicateResult r;
    r.replicate = jr.at("replicate").get<int>();
    r.seed = jr.at("seed").get<std::uint64_t>();
    r.estimator = jr.at("estimator").get<std::string>();
    r.estimate = jr.at("estimate").get<double>();
    r.se = jr.at("se").get<double>();
    r.oracle = jr.at("oracle").get<double>();
    r.failed = jr.at("failed").get<bool>();
    r.error = jr.at("error").get<std::string>();
    summary.rows.push_back(r);
  }
  summary.has_diagnostic = j.at("has_diagnostic").get<bool>();
  if (summary.has_diagnostic) {
    summary.diagnostic_p = j.at("diagnostic_p").get<std::vector<double>>();
    summary.diagnostic_reject_1pct = j.at("diagnostic_reject_1pct").get<double>();
    summary.diagnostic_reject_5pct = j.at("diagnostic_reject_5pct").get<double>();
  }
  return summary;
}

/// Canonical serialization: keys in fixed alphabetical order, 2-space
/// indentation, '\n' terminated. Identical summaries produce identical bytes.
inline std::string summary_to_canonical_json(const MCSummary& summary) {
  return summary_to_json(summary).dump(2) + "\n";
}

/// Long-format per-replicate table: one row per (replicate, estimator).
inline std::string summary_to_csv(const MCSummary& summary) {
  std::string out = "replicate,seed,estimator,estimate,se,oracle,failed,error,diagnostic_p\n";
  const std::size_t per_rep = summary.estimators.size();
  for (std::size_t idx = 0; idx < summary.rows.size(); ++idx) {
    const auto& r = summary.rows[idx];
    out += std::to_string(r.replicate);
    out += ',';
    out += std::to_string(r.seed);
    out += ',';
    out += r.estimator;
    out += ',';
    out += format_double(r.estimate);
    out += ',';
    out += format_double(r.se);
    out += ',';
    out += format_double(r.oracle);
    out += ',';
    out += r.failed ? "1" : "0";
    out += ',';
    std::string err = r.error;
    for (char& c : err) {
      if (c == ',' || c == '\n') c = ';';
    }
    out += err;
    out += ',';
    if (summary.has_diagnostic && per_rep > 0) {
      const std::size_t rep = idx / per_rep;
      if (rep < summary.diagnostic_p.size() && summary.diagnostic_p[rep] >= 0.0) {
        out += format_double(summary.diagnostic_p[rep]);
      }
    }
    out += '\n';
  }
  return out;
}

/// Writes the summary to a file in the requested format.
inline void emit_report(const MCSummary& summary, const std::string& path,
                        const std::string& format) {
  std::string body;
  if (format == "json") {
    body = summary_to_canonical_json(summary);
  } else if (format == "csv") {
    body = summary_to_csv(summary);
  } else {
    throw config_error("format must be 'json' or 'csv', got '" + format + "'");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw config_error("cannot open '" + path + "' for writing");
  out << body;
  if (!out) throw config_error("write to '" + path + "' failed");
}

}  // namespace multicause
