#pragma once

// Contrast between two treatment distributions, estimated by importance
// weighting observed outcomes against the treatment model.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "multicause/dataset.hpp"
#include "multicause/errors.hpp"
#include "multicause/factor_model.hpp"
#include "multicause/parallel.hpp"
#include "multicause/parametric.hpp"
#include "multicause/report.hpp"
#include "multicause/rng.hpp"
#include "multicause/stats.hpp"
#include "multicause/treatment_distribution.hpp"

namespace multicause {

enum class WeightMode { oracle_latent, posterior_mixture };

struct SIConfig {
  TreatmentDistribution p1;
  TreatmentDistribution p0;
  WeightMode mode = WeightMode::posterior_mixture;
  bool self_normalize = true;            // divide each side by its weight mass
  std::optional<double> truncation;      // cap on importance weights
  int bootstrap = 200;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  double support_threshold = 1e-10;

  void validate(std::size_t m) const {
    if (p1.m() != m || p0.m() != m) {
      throw config_error("intervention distribution arity does not match the data");
    }
    if (truncation && !(*truncation > 0.0)) {
      throw config_error("weight truncation threshold must be positive");
    }
    if (bootstrap < 0) throw config_error("bootstrap count must be >= 0");
    if (!(support_threshold > 0.0)) throw config_error("support threshold must be positive");
  }
};

struct SupportReport {
  bool pass = true;
  double threshold = 1e-10;
  std::vector<std::string> offending_p1;  // patterns with vanishing model support
  std::vector<std::string> offending_p0;
  std::vector<std::string> notes;
};

namespace detail {

/// Generic support check: every pattern carrying intervention mass must have
/// conditional probability above the threshold under every reachable class
/// (classes with positive prior).
template <typename ClassProbFn>
SupportReport support_check_impl(const TreatmentDistribution& p1,
                                 const TreatmentDistribution& p0,
                                 std::span<const double> prior, std::size_t m,
                                 ClassProbFn&& class_prob, double threshold) {
  SupportReport report;
  report.threshold = threshold;
  if (m > 20) throw config_error("support check enumeration guard: m <= 20");
  auto scan = [&](const TreatmentDistribution& dist, std::vector<std::string>& offending) {
    for (std::uint32_t bits = 0; bits < (1u << m); ++bits) {
      if (dist.prob_bits(bits) <= 0.0) continue;
      double min_reachable = 1.0;
      for (std::size_t z = 0; z < prior.size(); ++z) {
        if (prior[z] <= 0.0) continue;
        min_reachable = std::min(min_reachable, class_prob(z, bits));
      }
      if (!(min_reachable > threshold)) {
        report.pass = false;
        offending.push_back(bits_to_string(bits, m));
      }
    }
  };
  scan(p1, report.offending_p1);
  scan(p0, report.offending_p0);
  if (const auto bits = p1.point_mass_bits()) {
    report.notes.push_back("p1 is a point mass at " + bits_to_string(*bits, m) +
                           "; its side of the contrast reduces to a reweighted mean over rows "
                           "with that pattern");
  }
  if (const auto bits = p0.point_mass_bits()) {
    report.notes.push_back("p0 is a point mass at " + bits_to_string(*bits, m) +
                           "; its side of the contrast reduces to a reweighted mean over rows "
                           "with that pattern");
  }
  return report;
}

}  // namespace detail

inline SupportReport support_check(const SIConfig& config, const LatentClassModel& model) {
  model.validate();
  config.validate(model.m);
  return detail::support_check_impl(
      config.p1, config.p0, model.prior, model.m,
      [&](std::size_t z, std::uint32_t bits) {
        double prod = 1.0;
        for (std::size_t j = 0; j < model.m; ++j) {
          const double p = model.cond[z][j];
          prod *= ((bits >> j) & 1u) ? p : (1.0 - p);
        }
        return prod;
      },
      config.support_threshold);
}

inline SupportReport support_check(const SIConfig& config, const FactorizedTreatmentModel& model) {
  model.validate();
  config.validate(FactorizedTreatmentModel::m);
  return detail::support_check_impl(
      config.p1, config.p0, model.prior, FactorizedTreatmentModel::m,
      [&](std::size_t z, std::uint32_t bits) { return model.class_pattern_prob(z, bits); },
      config.support_threshold);
}

namespace detail {

/// Core importance-weighting estimator shared by the mutually-independent
/// and factorized treatment models. `class_prob(z, bits)` is p(A=bits|Z=z);
/// `posterior(bits)` the class posterior given the pattern.
template <typename ClassProbFn, typename PosteriorFn>
EstimateReport estimate_delta_impl(const Dataset& data, const SIConfig& config,
                                   std::span<const double> prior, std::size_t m,
                                   ClassProbFn&& class_prob, PosteriorFn&& posterior_fn,
                                   const SupportReport& support, std::string denominator_label) {
  data.validate();
  config.validate(m);
  if (data.m != m) throw config_error("dataset arity does not match the treatment model");
  if (!data.treatments_binary()) throw config_error("estimator requires binary treatments");
  if (!support.pass) {
    std::string msg = "intervention support exceeds the treatment model's support; patterns:";
    for (const auto& p : support.offending_p1) msg += " p1:" + p;
    for (const auto& p : support.offending_p0) msg += " p0:" + p;
    throw identification_error(msg);
  }
  if (config.mode == WeightMode::oracle_latent) {
    if (!data.has_oracle_latent()) {
      throw config_error("oracle weight mode needs the dataset's latent column");
    }
  }

  // posterior-mixture denominators depend only on the pattern; cache them
  std::unordered_map<std::uint32_t, double> mixture_cache;
  auto mixture_denominator = [&](std::uint32_t bits) {
    auto it = mixture_cache.find(bits);
    if (it != mixture_cache.end()) return it->second;
    const auto post = posterior_fn(bits);
    double d = 0.0;
    for (std::size_t z = 0; z < prior.size(); ++z) d += class_prob(z, bits) * post[z];
    mixture_cache.emplace(bits, d);
    return d;
  };

  const std::size_t n = data.n;
  std::vector<double> w1(n), w0(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t bits = data.pattern_bits(i);
    double d;
    if (config.mode == WeightMode::oracle_latent) {
      const double zf = data.oracle_latent[i];
      const auto z = static_cast<std::size_t>(zf);
      if (zf < 0.0 || static_cast<double>(z) != zf || z >= prior.size()) {
        throw config_error("oracle latent at row " + std::to_string(i + 1) +
                           " is not a class index");
      }
      d = class_prob(z, bits);
    } else {
      d = mixture_denominator(bits);
    }
    if (!(d >= 1e-12)) {
      throw identification_error("importance weight explosion at row " + std::to_string(i + 1) +
                                 ": treatment-model probability " + format_double(d) +
                                 " below 1e-12");
    }
    w1[i] = config.p1.prob_bits(bits) / d;
    w0[i] = config.p0.prob_bits(bits) / d;
    if (config.truncation) {
      w1[i] = std::min(w1[i], *config.truncation);
      w0[i] = std::min(w0[i], *config.truncation);
    }
  }

  // each side is a weighted outcome mean; self-normalization divides by the
  // realized weight mass instead of n
  auto side = [&](std::span<const double> w, std::span<const std::size_t> rows) {
    double num = 0.0, mass = 0.0;
    if (rows.empty()) {
      for (std::size_t i = 0; i < n; ++i) {
        num += data.outcome[i] * w[i];
        mass += w[i];
      }
    } else {
      for (const std::size_t i : rows) {
        num += data.outcome[i] * w[i];
        mass += w[i];
      }
    }
    const double denom = config.self_normalize ? mass : static_cast<double>(n);
    if (denom == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return num / denom;
  };
  auto delta_of = [&](std::span<const std::size_t> rows) {
    return side(w1, rows) - side(w0, rows);
  };

  const double point = delta_of({});
  if (std::isnan(point)) {
    throw identification_error(
        "self-normalization impossible: an intervention side carries zero total weight");
  }

  EstimateReport report;
  report.estimand = "delta";
  report.contrast = config.p1.describe() + " vs " + config.p0.describe();
  report.estimate = point;
  report.seed = config.seed;
  report.bootstrap_replicates = config.bootstrap;
  if (config.bootstrap > 0) {
    std::vector<double> draws(static_cast<std::size_t>(config.bootstrap));
    parallel_for(draws.size(), config.threads, [&](std::size_t b) {
      Rng rng(derive_seed(config.seed, b));
      std::vector<std::size_t> rows(n);
      for (std::size_t i = 0; i < n; ++i) rows[i] = rng.uniform_index(n);
      draws[b] = delta_of(rows);
    });
    std::vector<double> finite;
    finite.reserve(draws.size());
    for (double v : draws) {
      if (std::isfinite(v)) finite.push_back(v);
    }
    report.se = sample_sd(finite);
    if (finite.size() < draws.size()) {
      report.notes.push_back(std::to_string(draws.size() - finite.size()) +
                             " bootstrap replicates dropped (zero weight mass)");
    }
  }
  double mass1 = 0.0, mass0 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mass1 += w1[i];
    mass0 += w0[i];
  }
  report.diagnostics["weight_mass_p1"] = mass1;
  report.diagnostics["weight_mass_p0"] = mass0;
  report.diagnostics["support_pass"] = support.pass ? 1.0 : 0.0;
  report.notes.push_back(config.self_normalize
                             ? "weights self-normalized per side (weighted sums divided by the "
                               "weight mass, not n)"
                             : "plain 1/n normalization of the weighted sums");
  report.notes.push_back("denominator: " + denominator_label);
  for (const auto& note : support.notes) report.notes.push_back(note);
  if (config.truncation) {
    report.notes.push_back("weights truncated at " + format_double(*config.truncation) +
                           "; the estimand is shifted slightly");
  }
  DigestBuilder digest;
  digest.add("stochastic_intervention.delta")
      .add(config.p1.describe())
      .add(config.p0.describe())
      .add(config.mode == WeightMode::oracle_latent ? "oracle" : "posterior")
      .add(config.self_normalize)
      .add(config.bootstrap)
      .add(config.seed);
  report.config_digest = digest.hex();
  report.validate();
  return report;
}

}  // namespace detail

/// Importance-weighted contrast under the mutually-independent latent-class
/// treatment model.
inline EstimateReport estimate_delta(const Dataset& data, const LatentClassModel& model,
                                     const SIConfig& config) {
  model.validate();
  const auto support = support_check(config, model);
  return detail::estimate_delta_impl(
      data, config, model.prior, model.m,
      [&](std::size_t z, std::uint32_t bits) {
        double prod = 1.0;
        for (std::size_t j = 0; j < model.m; ++j) {
          const double p = model.cond[z][j];
          prod *= ((bits >> j) & 1u) ? p : (1.0 - p);
        }
        return prod;
      },
      [&](std::uint32_t bits) { return posterior_bits(model, bits); }, support,
      config.mode == WeightMode::oracle_latent
          ? "p(A|Z) from the class table at the oracle latent"
          : "sum_z p(A|z) * posterior(z|A) under the class table");
}

/// Same estimator with the denominator taken from the factorized treatment
/// model, which permits treatment-on-treatment edges.
inline EstimateReport delta_from_factorized(const Dataset& data,
                                            const FactorizedTreatmentModel& model,
                                            const SIConfig& config) {
  model.validate();
  const auto support = support_check(config, model);
  return detail::estimate_delta_impl(
      data, config, model.prior, FactorizedTreatmentModel::m,
      [&](std::size_t z, std::uint32_t bits) { return model.class_pattern_prob(z, bits); },
      [&](std::uint32_t bits) { return model.posterior_bits(bits); }, support,
      config.mode == WeightMode::oracle_latent
          ? "factorized p(A|Z) at the oracle latent"
          : "sum_z factorized p(A|z) * posterior(z|A)");
}

}  // namespace multicause
