#pragma once

// Declarative data-generating scenarios with analytic oracles.
//
// Every scenario draws each row from an independent RNG stream seeded by
// derive_seed(spec.seed, row), so generation is bit-identical whether rows
// are produced sequentially or in parallel. Within a row the draw order is
// fixed: latent variable, instrument (if any), treatments in index order,
// outcome noise.

#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "multicause/dataset.hpp"
#include "multicause/errors.hpp"
#include "multicause/parallel.hpp"
#include "multicause/rng.hpp"
#include "multicause/treatment_distribution.hpp"

namespace multicause {

enum class ScenarioId { fig1, fig2a, fig2b, fig3, iv_binary, cf_triangular };

inline std::string to_string(ScenarioId id) {
  switch (id) {
    case ScenarioId::fig1: return "fig1";
    case ScenarioId::fig2a: return "fig2a";
    case ScenarioId::fig2b: return "fig2b";
    case ScenarioId::fig3: return "fig3";
    case ScenarioId::iv_binary: return "iv_binary";
    case ScenarioId::cf_triangular: return "cf_triangular";
  }
  throw config_error("unknown scenario id");
}

inline ScenarioId scenario_from_string(const std::string& name) {
  if (name == "fig1") return ScenarioId::fig1;
  if (name == "fig2a") return ScenarioId::fig2a;
  if (name == "fig2b") return ScenarioId::fig2b;
  if (name == "fig3") return ScenarioId::fig3;
  if (name == "iv_binary") return ScenarioId::iv_binary;
  if (name == "cf_triangular") return ScenarioId::cf_triangular;
  throw config_error("unknown scenario '" + name +
                     "' (expected fig1|fig2a|fig2b|fig3|iv_binary|cf_triangular)");
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Structural model parameters for one scenario.
///
/// The latent-class scenarios (fig1, fig2a, fig2b, fig3, iv_binary) share
/// one outcome equation: Y = beta0 + sum_j beta[j]*A_j + sigma*latent_value[z]
/// + Normal(0, noise_sd). They differ only in how treatments are drawn.
/// cf_triangular is the continuous-treatment triangular system and uses the
/// cf_* coefficients instead.
struct ScenarioSpec {
  ScenarioId id = ScenarioId::fig1;
  std::size_t n = 10000;
  std::uint64_t seed = 1;

  // latent class machinery
  std::vector<double> prior;                    // k
  std::vector<std::vector<double>> cond;        // k x m, p(A_j=1 | Z=z)
  std::vector<double> latent_value;             // k, value g(z) entering the outcome

  // outcome equation
  double beta0 = 1.0;
  std::vector<double> beta;                     // m
  double sigma = 1.0;
  double noise_sd = 1.0;

  // fig3 treatment-on-treatment edges (log-odds shift when A1 = 1)
  double edge_a1_a2 = 1.0;
  double edge_a1_a3 = 1.0;

  // iv_binary instrument
  int instrument_levels = 0;                    // L
  std::vector<double> instrument_probs;         // L
  std::vector<std::vector<std::vector<double>>> iv_cond;  // k x L x m

  // cf_triangular structural coefficients:
  //   A = cf_a0 + cf_aw*W + cf_az*Z,  Y = cf_b0 + cf_ba*A + cf_bz*Z + noise
  double cf_a0 = 0.0;
  double cf_aw = 2.0;
  double cf_az = 1.0;
  double cf_b0 = 0.5;
  double cf_ba = 1.0;
  double cf_bz = 1.0;

  std::size_t k() const { return prior.size(); }
  std::size_t m() const { return id == ScenarioId::cf_triangular ? 1 : beta.size(); }
  bool is_latent_class() const { return id != ScenarioId::cf_triangular; }

  void validate() const {
    if (n < 1) throw config_error("scenario n must be >= 1");
    if (id == ScenarioId::cf_triangular) {
      if (instrument_levels < 2) throw config_error("cf scenario needs instrument_levels >= 2");
      if (noise_sd <= 0.0) throw config_error("noise_sd must be positive");
      return;
    }
    if (prior.empty()) throw config_error("scenario prior is empty");
    double total = 0.0;
    for (double p : prior) {
      if (p < 0.0) throw config_error("prior entries must be nonnegative");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-12) {
      throw config_error("prior sums to " + format_double(total) + ", expected 1");
    }
    if (cond.size() != prior.size()) throw config_error("cond table row count != k");
    if (beta.empty()) throw config_error("beta is empty");
    for (const auto& row : cond) {
      if (row.size() != beta.size()) throw config_error("cond table column count != m");
      for (double p : row) {
        if (!(p > 0.0 && p < 1.0)) {
          throw config_error("cond entry " + format_double(p) + " outside (0,1)");
        }
      }
    }
    if (latent_value.size() != prior.size()) throw config_error("latent_value length != k");
    if (noise_sd <= 0.0) throw config_error("noise_sd must be positive");
    if (id == ScenarioId::iv_binary) {
      if (instrument_levels < 1) throw config_error("iv scenario needs instrument_levels >= 1");
      if (instrument_probs.size() != static_cast<std::size_t>(instrument_levels)) {
        throw config_error("instrument_probs length != instrument_levels");
      }
      double wt = 0.0;
      for (double p : instrument_probs) {
        if (p < 0.0) throw config_error("instrument_probs entries must be nonnegative");
        wt += p;
      }
      if (std::abs(wt - 1.0) > 1e-12) throw config_error("instrument_probs must sum to 1");
      if (iv_cond.size() != prior.size()) throw config_error("iv_cond size != k");
      for (const auto& per_level : iv_cond) {
        if (per_level.size() != static_cast<std::size_t>(instrument_levels)) {
          throw config_error("iv_cond level count != instrument_levels");
        }
        for (const auto& row : per_level) {
          if (row.size() != beta.size()) throw config_error("iv_cond column count != m");
          for (double p : row) {
            if (!(p > 0.0 && p < 1.0)) {
              throw config_error("iv_cond entry " + format_double(p) + " outside (0,1)");
            }
          }
        }
      }
    }
  }

  /// E[g(Z)] under the class prior.
  double expected_latent() const {
    double e = 0.0;
    for (std::size_t z = 0; z < prior.size(); ++z) e += prior[z] * latent_value[z];
    return e;
  }
};

namespace detail {

/// Composite latent class from three independent Bernoulli(0.5) bits; class
/// index packs the bits, class value is the bit count. Treatment j loads on
/// bit b with log-odds gamma[j][b] around intercept alpha[j].
inline void fill_composite_classes(ScenarioSpec& spec, const std::vector<double>& alpha,
                                   const std::vector<std::vector<double>>& gamma) {
  const std::size_t m = alpha.size();
  const std::size_t k = 8;
  spec.prior.assign(k, 1.0 / static_cast<double>(k));
  spec.cond.assign(k, std::vector<double>(m, 0.0));
  spec.latent_value.resize(k);
  for (std::size_t z = 0; z < k; ++z) {
    spec.latent_value[z] = static_cast<double>(std::popcount(static_cast<unsigned>(z)));
    for (std::size_t j = 0; j < m; ++j) {
      double lp = alpha[j];
      for (std::size_t b = 0; b < 3; ++b) {
        if ((z >> b) & 1u) lp += gamma[j][b];
      }
      spec.cond[z][j] = logistic(lp);
    }
  }
}

}  // namespace detail

inline ScenarioSpec default_scenario(ScenarioId id, std::size_t n = 10000,
                                     std::uint64_t seed = 1) {
  ScenarioSpec spec;
  spec.id = id;
  spec.n = n;
  spec.seed = seed;
  switch (id) {
    case ScenarioId::fig1:
      spec.prior = {0.5, 0.5};
      spec.cond = {{0.2, 0.2, 0.2}, {0.8, 0.8, 0.8}};
      spec.latent_value = {0.0, 1.0};
      spec.beta0 = 1.0;
      spec.beta = {1.0, 2.0, 3.0};
      spec.sigma = 1.0;
      spec.noise_sd = 1.0;
      break;
    case ScenarioId::fig2a:
    case ScenarioId::fig2b: {
      std::vector<double> alpha = {-1.0, -1.0, -1.0};
      std::vector<std::vector<double>> gamma = {
          {2.0, 0.0, 0.0}, {0.0, 2.0, 0.0}, {0.0, 0.0, 2.0}};
      if (id == ScenarioId::fig2b) {
        gamma[0][1] = 1.5;  // second latent bit also drives A1 and A3
        gamma[2][1] = 1.5;
      }
      spec.beta0 = 1.0;
      spec.beta = {1.0, 2.0, 3.0};
      spec.sigma = 1.0;
      spec.noise_sd = 1.0;
      detail::fill_composite_classes(spec, alpha, gamma);
      break;
    }
    case ScenarioId::fig3:
      spec.prior = {0.5, 0.5};
      spec.cond = {{0.2, 0.2, 0.2, 0.2}, {0.8, 0.8, 0.8, 0.8}};
      spec.latent_value = {0.0, 1.0};
      spec.beta0 = 1.0;
      spec.beta = {1.0, 2.0, 3.0, 4.0};
      spec.sigma = 1.0;
      spec.noise_sd = 1.0;
      spec.edge_a1_a2 = 1.0;
      spec.edge_a1_a3 = 1.0;
      break;
    case ScenarioId::iv_binary: {
      spec.prior = {0.5, 0.5};
      spec.latent_value = {0.0, 1.0};
      spec.beta0 = 1.0;
      spec.beta = {1.0, 1.0};
      spec.sigma = 1.0;
      spec.noise_sd = 1.0;
      spec.instrument_levels = 4;
      spec.instrument_probs.assign(4, 0.25);
      // Instrument shifts span a 2-bit grid so the 4x4 matrix p(a|w) is
      // well-conditioned; lambda is the latent load.
      const double alpha[2] = {-0.3, 0.2};
      const double lambda[2] = {1.2, 1.0};
      const double grid[4][2] = {
          {-1.4, -1.4}, {-1.4, 1.4}, {1.4, -1.4}, {1.4, 1.4}};
      spec.iv_cond.assign(2, std::vector<std::vector<double>>(
                                 4, std::vector<double>(2, 0.0)));
      for (int z = 0; z < 2; ++z) {
        for (int w = 0; w < 4; ++w) {
          for (int j = 0; j < 2; ++j) {
            spec.iv_cond[z][w][j] = logistic(alpha[j] + grid[w][j] + lambda[j] * z);
          }
        }
      }
      // marginal cond table (averaged over W), used only for reporting
      spec.cond.assign(2, std::vector<double>(2, 0.0));
      for (int z = 0; z < 2; ++z) {
        for (int j = 0; j < 2; ++j) {
          double p = 0.0;
          for (int w = 0; w < 4; ++w) p += 0.25 * spec.iv_cond[z][w][j];
          spec.cond[z][j] = p;
        }
      }
      break;
    }
    case ScenarioId::cf_triangular:
      spec.instrument_levels = 4;
      spec.cf_a0 = 0.0;
      spec.cf_aw = 2.0;
      spec.cf_az = 1.0;
      spec.cf_b0 = 0.5;
      spec.cf_ba = 1.0;
      spec.cf_bz = 1.0;
      spec.noise_sd = 1.0;
      break;
  }
  spec.validate();
  return spec;
}

inline Dataset generate(const ScenarioSpec& spec, unsigned threads = 1) {
  spec.validate();
  const std::size_t m = spec.m();
  Dataset data = Dataset::with_shape(spec.n, m);
  data.oracle_latent.assign(spec.n, 0.0);
  const bool has_w =
      spec.id == ScenarioId::iv_binary || spec.id == ScenarioId::cf_triangular;
  if (has_w) {
    data.instrument.assign(spec.n, 0);
    data.instrument_levels = spec.instrument_levels;
  }
  parallel_for(spec.n, threads, [&](std::size_t i) {
    Rng rng(derive_seed(spec.seed, i));
    switch (spec.id) {
      case ScenarioId::fig1:
      case ScenarioId::fig2a:
      case ScenarioId::fig2b: {
        const int z = rng.categorical(spec.prior);
        double y = spec.beta0 + spec.sigma * spec.latent_value[z];
        for (std::size_t j = 0; j < m; ++j) {
          const double a = rng.bernoulli(spec.cond[z][j]) ? 1.0 : 0.0;
          data.set_a(i, j, a);
          y += spec.beta[j] * a;
        }
        data.outcome[i] = y + rng.normal(0.0, spec.noise_sd);
        data.oracle_latent[i] = static_cast<double>(z);
        break;
      }
      case ScenarioId::fig3: {
        const int z = rng.categorical(spec.prior);
        const double a1 = rng.bernoulli(spec.cond[z][0]) ? 1.0 : 0.0;
        const double a2 =
            rng.bernoulli(logistic(logit(spec.cond[z][1]) + spec.edge_a1_a2 * a1)) ? 1.0 : 0.0;
        const double a3 =
            rng.bernoulli(logistic(logit(spec.cond[z][2]) + spec.edge_a1_a3 * a1)) ? 1.0 : 0.0;
        const double a4 = rng.bernoulli(spec.cond[z][3]) ? 1.0 : 0.0;
        data.set_a(i, 0, a1);
        data.set_a(i, 1, a2);
        data.set_a(i, 2, a3);
        data.set_a(i, 3, a4);
        const double y = spec.beta0 + spec.beta[0] * a1 + spec.beta[1] * a2 +
                         spec.beta[2] * a3 + spec.beta[3] * a4 +
                         spec.sigma * spec.latent_value[z];
        data.outcome[i] = y + rng.normal(0.0, spec.noise_sd);
        data.oracle_latent[i] = static_cast<double>(z);
        break;
      }
      case ScenarioId::iv_binary: {
        const int z = rng.categorical(spec.prior);
        const int w = rng.categorical(spec.instrument_probs);
        double y = spec.beta0 + spec.sigma * spec.latent_value[z];
        for (std::size_t j = 0; j < m; ++j) {
          const double a = rng.bernoulli(spec.iv_cond[z][w][j]) ? 1.0 : 0.0;
          data.set_a(i, j, a);
          y += spec.beta[j] * a;
        }
        data.outcome[i] = y + rng.normal(0.0, spec.noise_sd);
        data.oracle_latent[i] = static_cast<double>(z);
        data.instrument[i] = w;
        break;
      }
      case ScenarioId::cf_triangular: {
        const double z = rng.normal();
        const int w = static_cast<int>(rng.uniform_index(
            static_cast<std::size_t>(spec.instrument_levels)));
        const double a = spec.cf_a0 + spec.cf_aw * w + spec.cf_az * z;
        data.set_a(i, 0, a);
        data.outcome[i] =
            spec.cf_b0 + spec.cf_ba * a + spec.cf_bz * z + rng.normal(0.0, spec.noise_sd);
        data.oracle_latent[i] = z;
        data.instrument[i] = w;
        break;
      }
    }
  });
  data.validate();
  return data;
}

/// Mean response under a fixed binary pattern: E[Y(a)] = beta0 + sum beta_j a_j
/// + sigma*E[g(Z)]. Valid for the latent-class scenarios.
inline double true_mean_response(const ScenarioSpec& spec, std::uint32_t bits) {
  if (!spec.is_latent_class()) {
    throw config_error("mean-response oracle needs a binary-treatment scenario");
  }
  double y = spec.beta0 + spec.sigma * spec.expected_latent();
  for (std::size_t j = 0; j < spec.beta.size(); ++j) {
    if ((bits >> j) & 1u) y += spec.beta[j];
  }
  return y;
}

inline double true_ate(const ScenarioSpec& spec, std::span<const int> a,
                       std::span<const int> a_prime) {
  if (!spec.is_latent_class()) {
    throw config_error("true_ate needs a linear-outcome binary scenario");
  }
  if (a.size() != spec.m() || a_prime.size() != spec.m()) {
    throw config_error("contrast pattern length != m");
  }
  double tau = 0.0;
  for (std::size_t j = 0; j < spec.m(); ++j) {
    tau += spec.beta[j] * (static_cast<double>(a[j]) - static_cast<double>(a_prime[j]));
  }
  return tau;
}

/// Brute-force enumeration of sum_a E[Y(a)]*(p1(a) - p0(a)).
inline double true_delta(const ScenarioSpec& spec, const TreatmentDistribution& p1,
                         const TreatmentDistribution& p0) {
  if (!spec.is_latent_class()) {
    throw config_error("true_delta needs a binary-treatment scenario");
  }
  const std::size_t m = spec.m();
  if (m > 20) throw config_error("true_delta enumeration guard: m <= 20");
  if (p1.m() != m || p0.m() != m) {
    throw config_error("distribution arity does not match scenario m");
  }
  double delta = 0.0;
  for (std::uint32_t bits = 0; bits < (1u << m); ++bits) {
    delta += true_mean_response(spec, bits) * (p1.prob_bits(bits) - p0.prob_bits(bits));
  }
  return delta;
}

}  // namespace multicause
