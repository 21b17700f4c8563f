#pragma once

// TOML bindings: scenario and experiment configuration files. Scenario
// parsing starts from the named default parameterization and applies field
// overrides, so configs only state what differs.

#include <cstdint>
#include <string>
#include <vector>

#include "multicause/errors.hpp"
#include "multicause/harness.hpp"
#include "multicause/minitoml.hpp"
#include "multicause/scenarios.hpp"
#include "multicause/stochastic_intervention.hpp"
#include "multicause/treatment_distribution.hpp"

namespace multicause {

/// Parses "111:000" into an (a, a0) pattern pair of equal length.
inline std::pair<std::vector<int>, std::vector<int>> parse_contrast(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) {
    throw config_error("contrast must look like '111:000', got '" + text + "'");
  }
  const auto a = parse_pattern(text.substr(0, colon));
  const auto a0 = parse_pattern(text.substr(colon + 1));
  if (a.size() != a0.size()) {
    throw config_error("contrast sides differ in length in '" + text + "'");
  }
  return {a, a0};
}

namespace detail {

inline const minitoml::Value* toml_find(const minitoml::Table& table, const std::string& key) {
  const auto it = table.find(key);
  return it == table.end() ? nullptr : &it->second;
}

inline double toml_double(const minitoml::Value& v, const std::string& field) {
  if (!v.is_float() && !v.is_integer()) {
    throw config_error("field '" + field + "' must be a number");
  }
  return v.as_double();
}

inline std::int64_t toml_int(const minitoml::Value& v, const std::string& field) {
  if (!v.is_integer()) throw config_error("field '" + field + "' must be an integer");
  return v.as_integer();
}

inline bool toml_bool(const minitoml::Value& v, const std::string& field) {
  if (!v.is_bool()) throw config_error("field '" + field + "' must be a boolean");
  return v.as_bool();
}

inline std::string toml_string(const minitoml::Value& v, const std::string& field) {
  if (!v.is_string()) throw config_error("field '" + field + "' must be a string");
  return v.as_string();
}

inline std::vector<double> toml_vector(const minitoml::Value& v, const std::string& field) {
  if (!v.is_array()) throw config_error("field '" + field + "' must be an array");
  std::vector<double> out;
  for (const auto& item : v.as_array()) out.push_back(toml_double(item, field));
  return out;
}

inline std::vector<std::vector<double>> toml_matrix(const minitoml::Value& v,
                                                    const std::string& field) {
  if (!v.is_array()) throw config_error("field '" + field + "' must be an array of arrays");
  std::vector<std::vector<double>> out;
  for (const auto& row : v.as_array()) out.push_back(toml_vector(row, field));
  return out;
}

}  // namespace detail

/// Builds a ScenarioSpec from a TOML table: `id` selects the default
/// parameterization, every other key overrides one field.
inline ScenarioSpec scenario_from_toml(const minitoml::Table& table) {
  using detail::toml_find;
  const auto* id = toml_find(table, "id");
  if (!id) throw config_error("scenario config needs an 'id' field");
  ScenarioSpec spec = default_scenario(scenario_from_string(detail::toml_string(*id, "id")));

  for (const auto& [key, value] : table) {
    if (key == "id") continue;
    if (key == "n") {
      spec.n = static_cast<std::size_t>(detail::toml_int(value, key));
    } else if (key == "seed") {
      spec.seed = static_cast<std::uint64_t>(detail::toml_int(value, key));
    } else if (key == "prior") {
      spec.prior = detail::toml_vector(value, key);
    } else if (key == "cond") {
      spec.cond = detail::toml_matrix(value, key);
    } else if (key == "latent_value") {
      spec.latent_value = detail::toml_vector(value, key);
    } else if (key == "beta0") {
      spec.beta0 = detail::toml_double(value, key);
    } else if (key == "beta") {
      spec.beta = detail::toml_vector(value, key);
    } else if (key == "sigma") {
      spec.sigma = detail::toml_double(value, key);
    } else if (key == "noise_sd") {
      spec.noise_sd = detail::toml_double(value, key);
    } else if (key == "edge_a1_a2") {
      spec.edge_a1_a2 = detail::toml_double(value, key);
    } else if (key == "edge_a1_a3") {
      spec.edge_a1_a3 = detail::toml_double(value, key);
    } else if (key == "instrument_levels") {
      spec.instrument_levels = static_cast<int>(detail::toml_int(value, key));
    } else if (key == "instrument_probs") {
      spec.instrument_probs = detail::toml_vector(value, key);
    } else if (key == "iv_cond") {
      if (!value.is_array()) throw config_error("field 'iv_cond' must be a 3-level array");
      spec.iv_cond.clear();
      for (const auto& per_class : value.as_array()) {
        spec.iv_cond.push_back(detail::toml_matrix(per_class, key));
      }
    } else if (key == "cf_a0") {
      spec.cf_a0 = detail::toml_double(value, key);
    } else if (key == "cf_aw") {
      spec.cf_aw = detail::toml_double(value, key);
    } else if (key == "cf_az") {
      spec.cf_az = detail::toml_double(value, key);
    } else if (key == "cf_b0") {
      spec.cf_b0 = detail::toml_double(value, key);
    } else if (key == "cf_ba") {
      spec.cf_ba = detail::toml_double(value, key);
    } else if (key == "cf_bz") {
      spec.cf_bz = detail::toml_double(value, key);
    } else {
      throw config_error("unknown scenario field '" + key + "'");
    }
  }
  spec.validate();
  return spec;
}

inline ScenarioSpec scenario_from_toml_file(const std::string& path) {
  const auto root = minitoml::parse_file(path);
  const auto* scenario = detail::toml_find(root, "scenario");
  if (scenario) {
    if (!scenario->is_table()) throw config_error("'scenario' must be a table");
    return scenario_from_toml(scenario->as_table());
  }
  return scenario_from_toml(root);  // bare scenario file, no [scenario] header
}

inline FitConfig fit_from_toml(const minitoml::Table& table) {
  FitConfig fit;
  for (const auto& [key, value] : table) {
    if (key == "max_iterations") {
      fit.max_iterations = static_cast<int>(detail::toml_int(value, key));
    } else if (key == "tolerance") {
      fit.tolerance = detail::toml_double(value, key);
    } else if (key == "restarts") {
      fit.restarts = static_cast<int>(detail::toml_int(value, key));
    } else if (key == "seed") {
      fit.seed = static_cast<std::uint64_t>(detail::toml_int(value, key));
    } else if (key == "threads") {
      fit.threads = static_cast<unsigned>(detail::toml_int(value, key));
    } else {
      throw config_error("unknown fit field '" + key + "'");
    }
  }
  fit.validate();
  return fit;
}

inline WeightMode weight_mode_from_string(const std::string& name) {
  if (name == "oracle") return WeightMode::oracle_latent;
  if (name == "posterior") return WeightMode::posterior_mixture;
  throw config_error("weights must be 'oracle' or 'posterior', got '" + name + "'");
}

inline EstimatorSpec estimator_from_toml(const minitoml::Table& table) {
  using detail::toml_find;
  EstimatorSpec est;
  const auto* method = toml_find(table, "method");
  if (!method) throw config_error("estimator config needs a 'method' field");
  est.method = method_from_string(detail::toml_string(*method, "method"));

  for (const auto& [key, value] : table) {
    if (key == "method") continue;
    if (key == "name") {
      est.name = detail::toml_string(value, key);
    } else if (key == "contrast") {
      const auto [a, a0] = parse_contrast(detail::toml_string(value, key));
      est.contrast_a = a;
      est.contrast_a0 = a0;
    } else if (key == "p1") {
      est.p1 = parse_distribution(detail::toml_string(value, key));
    } else if (key == "p0") {
      est.p0 = parse_distribution(detail::toml_string(value, key));
    } else if (key == "weights") {
      est.weights = weight_mode_from_string(detail::toml_string(value, key));
    } else if (key == "self_normalize") {
      est.self_normalize = detail::toml_bool(value, key);
    } else if (key == "factorized") {
      est.factorized = detail::toml_bool(value, key);
    } else if (key == "sigma_known") {
      est.sigma_known = true;
      est.sigma_value = detail::toml_double(value, key);
    } else if (key == "cf_a1") {
      est.cf_a1 = detail::toml_double(value, key);
    } else if (key == "cf_a0") {
      est.cf_a0 = detail::toml_double(value, key);
    } else if (key == "bootstrap") {
      est.bootstrap = static_cast<int>(detail::toml_int(value, key));
    } else {
      throw config_error("unknown estimator field '" + key + "'");
    }
  }
  return est;
}

/// Full experiment file: [scenario] table, [[estimator]] array, optional
/// [experiment], [fit], [diagnostic] tables.
inline ExperimentConfig experiment_from_toml(const minitoml::Table& root) {
  using detail::toml_find;
  ExperimentConfig config;

  const auto* scenario = toml_find(root, "scenario");
  if (!scenario || !scenario->is_table()) {
    throw config_error("experiment config needs a [scenario] table");
  }
  config.scenario = scenario_from_toml(scenario->as_table());

  const auto* estimators = toml_find(root, "estimator");
  if (!estimators || !estimators->is_array() || estimators->as_array().empty()) {
    throw config_error("experiment config needs at least one [[estimator]] block");
  }
  for (const auto& item : estimators->as_array()) {
    if (!item.is_table()) throw config_error("[[estimator]] entries must be tables");
    config.estimators.push_back(estimator_from_toml(item.as_table()));
  }

  if (const auto* experiment = toml_find(root, "experiment")) {
    if (!experiment->is_table()) throw config_error("'experiment' must be a table");
    for (const auto& [key, value] : experiment->as_table()) {
      if (key == "replicates") {
        config.replicates = static_cast<int>(detail::toml_int(value, key));
      } else if (key == "base_seed") {
        config.base_seed = static_cast<std::uint64_t>(detail::toml_int(value, key));
      } else if (key == "parallelism") {
        config.parallelism = static_cast<unsigned>(detail::toml_int(value, key));
      } else if (key == "out") {
        config.output_path = detail::toml_string(value, key);
      } else if (key == "format") {
        config.format = detail::toml_string(value, key);
      } else if (key == "fit_k") {
        config.fit_k = static_cast<std::size_t>(detail::toml_int(value, key));
      } else if (key == "diagnostic") {
        config.run_diagnostic = detail::toml_bool(value, key);
      } else {
        throw config_error("unknown experiment field '" + key + "'");
      }
    }
  }

  if (const auto* fit = toml_find(root, "fit")) {
    if (!fit->is_table()) throw config_error("'fit' must be a table");
    config.fit = fit_from_toml(fit->as_table());
  }

  if (const auto* diagnostic = toml_find(root, "diagnostic")) {
    if (!diagnostic->is_table()) throw config_error("'diagnostic' must be a table");
    for (const auto& [key, value] : diagnostic->as_table()) {
      if (key == "alpha") {
        config.diagnostic.alpha = detail::toml_double(value, key);
      } else if (key == "bootstrap") {
        config.diagnostic.bootstrap = static_cast<int>(detail::toml_int(value, key));
      } else {
        throw config_error("unknown diagnostic field '" + key + "'");
      }
    }
  }

  config.validate();
  return config;
}

inline ExperimentConfig experiment_from_toml_file(const std::string& path) {
  return experiment_from_toml(minitoml::parse_file(path));
}

}  // namespace multicause
