#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <multicause/errors.hpp>
#include <multicause/factor_model.hpp>
#include <multicause/harness.hpp>
#include <multicause/scenarios.hpp>
#include <multicause/stats.hpp>
#include <multicause/stochastic_intervention.hpp>

using namespace multicause;
using Catch::Matchers::ContainsSubstring;

namespace {

SIConfig contrast_config(std::vector<double> high, std::vector<double> low) {
  SIConfig config;
  config.p1 = TreatmentDistribution::product(std::move(high));
  config.p0 = TreatmentDistribution::product(std::move(low));
  config.bootstrap = 0;
  return config;
}

bool notes_mention(const EstimateReport& report, const std::string& needle) {
  for (const auto& note : report.notes) {
    if (note.find(needle) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("identical intervention distributions give exactly zero") {
  const ScenarioSpec spec = default_scenario(ScenarioId::fig1, 2000, 3);
  const Dataset data = generate(spec);
  const LatentClassModel model = scenario_model(spec);
  SIConfig config = contrast_config({0.5, 0.5, 0.5}, {0.5, 0.5, 0.5});
  const EstimateReport report = estimate_delta(data, model, config);
  REQUIRE(report.estimate == 0.0);
}

TEST_CASE("reversing the contrast flips the sign exactly") {
  const ScenarioSpec spec = default_scenario(ScenarioId::fig1, 3000, 5);
  const Dataset data = generate(spec);
  const LatentClassModel model = scenario_model(spec);
  const SIConfig forward = contrast_config({0.8, 0.8, 0.8}, {0.2, 0.2, 0.2});
  const SIConfig backward = contrast_config({0.2, 0.2, 0.2}, {0.8, 0.8, 0.8});
  const double d1 = estimate_delta(data, model, forward).estimate;
  const double d2 = estimate_delta(data, model, backward).estimate;
  REQUIRE(d1 == -d2);
}

TEST_CASE("contrast chaining is additive with shared weights") {
  const ScenarioSpec spec = default_scenario(ScenarioId::fig1, 3000, 7);
  const Dataset data = generate(spec);
  const LatentClassModel model = scenario_model(spec);
  const SIConfig a_to_b = contrast_config({0.8, 0.8, 0.8}, {0.5, 0.5, 0.5});
  const SIConfig b_to_c = contrast_config({0.5, 0.5, 0.5}, {0.3, 0.3, 0.3});
  const SIConfig a_to_c = contrast_config({0.8, 0.8, 0.8}, {0.3, 0.3, 0.3});
  const double chained = estimate_delta(data, model, a_to_b).estimate +
                         estimate_delta(data, model, b_to_c).estimate;
  const double direct = estimate_delta(data, model, a_to_c).estimate;
  REQUIRE(std::abs(chained - direct) < 1e-10);
}

TEST_CASE("oracle weights hit the enumeration oracle at scale") {
  const ScenarioSpec spec = default_scenario(ScenarioId::fig1, 100000, 11);
  const Dataset data = generate(spec, 4);
  const LatentClassModel model = scenario_model(spec);
  SIConfig config = contrast_config({0.8, 0.8, 0.8}, {0.2, 0.2, 0.2});
  config.mode = WeightMode::oracle_latent;
  config.bootstrap = 200;
  config.seed = 17;
  config.threads = 4;
  const EstimateReport report = estimate_delta(data, model, config);
  const double truth = true_delta(spec, config.p1, config.p0);
  REQUIRE(truth == Catch::Approx(3.6).margin(1e-12));  // (1+2+3) * (0.8-0.2)
  REQUIRE(report.se > 0.0);
  REQUIRE(std::abs(report.estimate - truth) <= 3.0 * report.se);
}

TEST_CASE("constant outcome vanishes under self-normalization") {
  const ScenarioSpec spec = default_scenario(ScenarioId::fig1, 4000, 13);
  Dataset data = generate(spec);
  for (double& y : data.outcome) y = 1.0;
  const LatentClassModel model = scenario_model(spec);
  SIConfig config = contrast_config({0.8, 0.8, 0.8}, {0.2, 0.2, 0.2});
  const EstimateReport report = estimate_delta(data, model, config);
  REQUIRE(std::abs(report.estimate) < 1e-10);
  REQUIRE(notes_mention(report, "self-normalized"));
}

TEST_CASE("posterior-mixture weights track their population limit") {
  const ScenarioSpec spec = default_scenario(ScenarioId::fig1, 50000, 19);
  const Dataset data = generate(spec, 4);
  const LatentClassModel model = scenario_model(spec);
  SIConfig config = contrast_config({0.8, 0.8, 0.8}, {0.2, 0.2, 0.2});
  config.mode = WeightMode::posterior_mixture;
  config.bootstrap = 200;
  config.seed = 23;
  config.threads = 4;
  const EstimateReport report = estimate_delta(data, model, config);

  // population limit of the self-normalized estimator, enumerated over the
  // 8 patterns with the generator's own parameters
  long double side[2] = {0.0L, 0.0L};
  long double mass[2] = {0.0L, 0.0L};
  for (std::uint32_t bits = 0; bits < 8; ++bits) {
    long double class_prob[2];
    for (std::size_t z = 0; z < 2; ++z) {
      long double prod = 1.0L;
      for (std::size_t j = 0; j < 3; ++j) {
        const long double p = spec.cond[z][j];
        prod *= ((bits >> j) & 1u) ? p : (1.0L - p);
      }
      class_prob[z] = prod;
    }
    const long double marginal = 0.5L * (class_prob[0] + class_prob[1]);
    const long double post1 = 0.5L * class_prob[1] / marginal;
    const long double denom =
        class_prob[0] * (1.0L - post1) + class_prob[1] * post1;
    long double mean_y = spec.beta0 + spec.sigma * post1;
    for (std::size_t j = 0; j < 3; ++j) {
      if ((bits >> j) & 1u) mean_y += spec.beta[j];
    }
    const long double q[2] = {config.p1.prob_bits(bits), config.p0.prob_bits(bits)};
    for (int s = 0; s < 2; ++s) {
      side[s] += marginal * (q[s] / denom) * mean_y;
      mass[s] += marginal * (q[s] / denom);
    }
  }
  const double limit = static_cast<double>(side[0] / mass[0] - side[1] / mass[1]);
  REQUIRE(report.se > 0.0);
  REQUIRE(std::abs(report.estimate - limit) <= 3.0 * report.se);
}

TEST_CASE("oracle weights are unbiased over repeated draws") {
  const int replicates = 500;
  std::vector<double> estimates(replicates);
  ScenarioSpec spec = default_scenario(ScenarioId::fig1, 5000, 1);
  const LatentClassModel model = scenario_model(spec);
  SIConfig config = contrast_config({0.8, 0.8, 0.8}, {0.2, 0.2, 0.2});
  config.mode = WeightMode::oracle_latent;
  for (int r = 0; r < replicates; ++r) {
    spec.seed = derive_seed(29, static_cast<std::size_t>(r));
    estimates[static_cast<std::size_t>(r)] =
        estimate_delta(generate(spec), model, config).estimate;
  }
  const double truth = true_delta(spec, config.p1, config.p0);
  const double avg = mean(estimates);
  const double se = sample_sd(estimates) / std::sqrt(static_cast<double>(replicates));
  REQUIRE(std::abs(avg - truth) <= 3.0 * se);
}

TEST_CASE("support check passes for interior distributions") {
  LatentClassModel model;
  model.k = 2;
  model.m = 3;
  model.prior = {0.5, 0.5};
  model.cond = {{0.2, 0.2, 0.2}, {0.8, 0.8, 0.8}};
  const SIConfig config = contrast_config({0.8, 0.7, 0.6}, {0.2, 0.3, 0.4});
  const SupportReport report = support_check(config, model);
  REQUIRE(report.pass);
  REQUIRE(report.offending_p1.empty());
  REQUIRE(report.offending_p0.empty());
}

TEST_CASE("support failure lists the unreachable pattern") {
  LatentClassModel model;
  model.k = 2;
  model.m = 3;
  model.prior = {0.5, 0.5};
  // every class gives pattern 111 probability at most 1e-18, below threshold
  model.cond = {{1e-6, 1e-6, 1e-6}, {1e-6, 1e-6, 1e-6}};
  SIConfig config;
  const std::vector<int> ones = {1, 1, 1};
  config.p1 = TreatmentDistribution::point_mass(ones);
  config.p0 = TreatmentDistribution::product({0.5, 0.5, 0.5});
  config.bootstrap = 0;
  const SupportReport report = support_check(config, model);
  REQUIRE_FALSE(report.pass);
  REQUIRE_FALSE(report.offending_p1.empty());
  REQUIRE(report.offending_p1.front() == "111");
  // p0 spreads mass everywhere, so it also trips on patterns with ones
  REQUIRE_FALSE(report.offending_p0.empty());

  const ScenarioSpec spec = default_scenario(ScenarioId::fig1, 100, 31);
  const Dataset data = generate(spec);
  REQUIRE_THROWS_MATCHES(estimate_delta(data, model, config), identification_error,
                         Catch::Matchers::MessageMatches(ContainsSubstring("111")));
}

TEST_CASE("a point mass reduces to a pattern-restricted reweighted mean") {
  const ScenarioSpec spec = default_scenario(ScenarioId::fig1, 5000, 37);
  const Dataset data = generate(spec);
  const LatentClassModel model = scenario_model(spec);
  SIConfig config;
  const std::vector<int> pattern = {1, 0, 1};
  config.p1 = TreatmentDistribution::point_mass(pattern);
  config.p0 = TreatmentDistribution::product({0.5, 0.5, 0.5});
  config.bootstrap = 0;
  const EstimateReport report = estimate_delta(data, model, config);
  REQUIRE(notes_mention(report, "point mass"));

  // independent reconstruction: the p1 side is the reweighted outcome mean
  // over rows whose pattern matches the point mass
  auto denominator = [&](std::uint32_t bits) {
    const auto post = posterior_bits(model, bits);
    double d = 0.0;
    for (std::size_t z = 0; z < model.k; ++z) {
      double prod = 1.0;
      for (std::size_t j = 0; j < model.m; ++j) {
        const double p = model.cond[z][j];
        prod *= ((bits >> j) & 1u) ? p : (1.0 - p);
      }
      d += prod * post[z];
    }
    return d;
  };
  double num1 = 0.0, mass1 = 0.0, num0 = 0.0, mass0 = 0.0;
  for (std::size_t i = 0; i < data.n; ++i) {
    const std::uint32_t bits = data.pattern_bits(i);
    const double d = denominator(bits);
    const double w1 = config.p1.prob_bits(bits) / d;  // zero off the pattern
    const double w0 = config.p0.prob_bits(bits) / d;
    num1 += data.outcome[i] * w1;
    mass1 += w1;
    num0 += data.outcome[i] * w0;
    mass0 += w0;
  }
  const double expected = num1 / mass1 - num0 / mass0;
  REQUIRE(report.estimate == Catch::Approx(expected).margin(1e-12));
}

TEST_CASE("a single class makes the weight modes coincide") {
  const ScenarioSpec spec = default_scenario(ScenarioId::fig1, 1000, 41);
  Dataset data = generate(spec);
  for (double& z : data.oracle_latent) z = 0.0;
  LatentClassModel model;
  model.k = 1;
  model.m = 3;
  model.prior = {1.0};
  model.cond = {{0.3, 0.6, 0.7}};
  SIConfig config = contrast_config({0.8, 0.8, 0.8}, {0.2, 0.2, 0.2});
  config.mode = WeightMode::oracle_latent;
  const double oracle = estimate_delta(data, model, config).estimate;
  config.mode = WeightMode::posterior_mixture;
  const double mixture = estimate_delta(data, model, config).estimate;
  REQUIRE(oracle == mixture);
}

TEST_CASE("oracle mode requires an integer latent column") {
  const ScenarioSpec spec = default_scenario(ScenarioId::fig1, 200, 43);
  Dataset data = generate(spec);
  const LatentClassModel model = scenario_model(spec);
  SIConfig config = contrast_config({0.8, 0.8, 0.8}, {0.2, 0.2, 0.2});
  config.mode = WeightMode::oracle_latent;

  Dataset stripped = data;
  stripped.oracle_latent.clear();
  REQUIRE_THROWS_MATCHES(estimate_delta(stripped, model, config), config_error,
                         Catch::Matchers::MessageMatches(ContainsSubstring("latent")));

  Dataset fractional = data;
  fractional.oracle_latent[3] = 0.5;
  REQUIRE_THROWS_MATCHES(estimate_delta(fractional, model, config), config_error,
                         Catch::Matchers::MessageMatches(ContainsSubstring("row 4")));
}

TEST_CASE("a vanishing treatment-model probability names the row") {
  LatentClassModel model;
  model.k = 2;
  model.m = 3;
  model.prior = {0.5, 0.5};
  model.cond = {{1e-6, 1e-6, 1e-6}, {0.5, 0.5, 0.5}};
  Dataset data = Dataset::with_shape(3, 3);
  const double patterns[3][3] = {{0, 0, 0}, {1, 1, 1}, {0, 1, 0}};
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) data.set_a(i, j, patterns[i][j]);
    data.outcome[i] = static_cast<double>(i);
  }
  data.oracle_latent = {0.0, 0.0, 0.0};
  SIConfig config;
  const std::vector<int> zeros = {0, 0, 0};
  const std::vector<int> middle = {0, 1, 0};
  config.p1 = TreatmentDistribution::point_mass(zeros);
  config.p0 = TreatmentDistribution::point_mass(middle);
  config.mode = WeightMode::oracle_latent;
  config.bootstrap = 0;
  // row 2 has pattern 111 under class 0: probability 1e-18, far below 1e-12
  REQUIRE_THROWS_MATCHES(estimate_delta(data, model, config), identification_error,
                         Catch::Matchers::MessageMatches(ContainsSubstring("row 2")));
}

TEST_CASE("weight truncation changes the estimate and is reported") {
  const ScenarioSpec spec = default_scenario(ScenarioId::fig1, 2000, 47);
  const Dataset data = generate(spec);
  const LatentClassModel model = scenario_model(spec);
  SIConfig plain = contrast_config({0.8, 0.8, 0.8}, {0.2, 0.2, 0.2});
  SIConfig capped = plain;
  capped.truncation = 0.5;
  const EstimateReport base = estimate_delta(data, model, plain);
  const EstimateReport trunc = estimate_delta(data, model, capped);
  REQUIRE(base.estimate != trunc.estimate);
  REQUIRE(notes_mention(trunc, "truncated"));
  REQUIRE_FALSE(notes_mention(base, "truncated"));

  SIConfig bad = plain;
  bad.truncation = 0.0;
  REQUIRE_THROWS_AS(estimate_delta(data, model, bad), config_error);
}

TEST_CASE("distribution arity must match the data") {
  const ScenarioSpec spec = default_scenario(ScenarioId::fig1, 100, 53);
  const Dataset data = generate(spec);
  const LatentClassModel model = scenario_model(spec);
  SIConfig config;
  config.p1 = TreatmentDistribution::product({0.5, 0.5});
  config.p0 = TreatmentDistribution::product({0.5, 0.5});
  config.bootstrap = 0;
  REQUIRE_THROWS_MATCHES(estimate_delta(data, model, config), config_error,
                         Catch::Matchers::MessageMatches(ContainsSubstring("arity")));
}

TEST_CASE("bootstrap draws are deterministic and thread-invariant") {
  const ScenarioSpec spec = default_scenario(ScenarioId::fig1, 3000, 59);
  const Dataset data = generate(spec);
  const LatentClassModel model = scenario_model(spec);
  SIConfig config = contrast_config({0.8, 0.8, 0.8}, {0.2, 0.2, 0.2});
  config.bootstrap = 50;
  config.seed = 61;
  config.threads = 1;
  const EstimateReport first = estimate_delta(data, model, config);
  const EstimateReport second = estimate_delta(data, model, config);
  REQUIRE(first.estimate == second.estimate);
  REQUIRE(first.se == second.se);
  config.threads = 4;
  const EstimateReport parallel = estimate_delta(data, model, config);
  REQUIRE(first.se == parallel.se);
}

TEST_CASE("factorized and independence denominators agree when edges vanish") {
  ScenarioSpec spec = default_scenario(ScenarioId::fig3, 30000, 67);
  spec.edge_a1_a2 = 0.0;
  spec.edge_a1_a3 = 0.0;
  spec.validate();
  const Dataset data = generate(spec, 4);
  FitConfig fit_config;
  fit_config.restarts = 4;
  fit_config.seed = 5;
  const LatentClassModel flat = fit_em(data, 2, fit_config);
  const FactorizedTreatmentModel chained = fit_factorized_model(data, 2, fit_config);
  SIConfig config = contrast_config({0.8, 0.8, 0.8, 0.8}, {0.2, 0.2, 0.2, 0.2});
  config.bootstrap = 150;
  config.seed = 71;
  config.threads = 4;
  const EstimateReport independent = estimate_delta(data, flat, config);
  const EstimateReport factorized = delta_from_factorized(data, chained, config);
  REQUIRE(std::abs(independent.estimate - factorized.estimate) <=
          3.0 * (independent.se + factorized.se));
}

TEST_CASE("factorized oracle weights hit the extended enumeration oracle") {
  const ScenarioSpec spec = default_scenario(ScenarioId::fig3, 100000, 73);
  const Dataset data = generate(spec, 4);
  const FactorizedTreatmentModel model = scenario_factorized_model(spec);
  SIConfig config = contrast_config({0.8, 0.8, 0.8, 0.8}, {0.2, 0.2, 0.2, 0.2});
  config.mode = WeightMode::oracle_latent;
  config.bootstrap = 200;
  config.seed = 79;
  config.threads = 4;
  const EstimateReport report = delta_from_factorized(data, model, config);
  const double truth = true_delta(spec, config.p1, config.p0);
  REQUIRE(truth == Catch::Approx(6.0).margin(1e-12));  // (1+2+3+4) * (0.8-0.2)
  REQUIRE(report.se > 0.0);
  REQUIRE(std::abs(report.estimate - truth) <= 3.0 * report.se);
}

TEST_CASE("factorized contrast with identical sides is exactly zero") {
  const ScenarioSpec spec = default_scenario(ScenarioId::fig3, 2000, 83);
  const Dataset data = generate(spec);
  const FactorizedTreatmentModel model = scenario_factorized_model(spec);
  SIConfig config = contrast_config({0.6, 0.6, 0.6, 0.6}, {0.6, 0.6, 0.6, 0.6});
  const EstimateReport report = delta_from_factorized(data, model, config);
  REQUIRE(report.estimate == 0.0);
}
