#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include <multicause/deconfounder.hpp>
#include <multicause/errors.hpp>
#include <multicause/factor_model.hpp>
#include <multicause/scenarios.hpp>
#include <multicause/stats.hpp>

using namespace multicause;

namespace {

LatentClassModel fit_fig1(const Dataset& data, std::size_t k = 2) {
  FitConfig config;
  config.restarts = 6;
  config.seed = 3;
  return fit_em(data, k, config);
}

LatentClassModel permute_classes(const LatentClassModel& model,
                                 const std::vector<std::size_t>& perm) {
  LatentClassModel out = model;
  for (std::size_t z = 0; z < model.k; ++z) {
    out.prior[z] = model.prior[perm[z]];
    out.cond[z] = model.cond[perm[z]];
  }
  return out;
}

}  // namespace

TEST_CASE("identical contrast gives exactly zero") {
  const auto data = generate(default_scenario(ScenarioId::fig1, 3000, 5));
  const auto model = fit_fig1(data);
  AteOptions opt;
  opt.bootstrap = 20;
  const std::vector<int> a{1, 0, 1};
  const auto report = estimate_ate(data, model, a, a, opt);
  REQUIRE(report.estimate == 0.0);
  REQUIRE(report.se >= 0.0);
}

TEST_CASE("fig1 ate lands within three bootstrap ses of truth") {
  const auto spec = default_scenario(ScenarioId::fig1, 50000, 42);
  const auto data = generate(spec);
  const auto model = fit_fig1(data);
  AteOptions opt;
  opt.bootstrap = 200;
  opt.seed = 9;
  const std::vector<int> ones{1, 1, 1}, zeros{0, 0, 0};
  const auto report = estimate_ate(data, model, ones, zeros, opt);
  REQUIRE(report.bootstrap_replicates == 200);
  REQUIRE(report.se > 0.0);
  REQUIRE(std::abs(report.estimate - true_ate(spec, ones, zeros)) < 3.0 * report.se);
}

TEST_CASE("contrast antisymmetry is exact") {
  const auto data = generate(default_scenario(ScenarioId::fig1, 4000, 11));
  const auto model = fit_fig1(data);
  AteOptions opt;  // no bootstrap needed for the point estimate
  opt.bootstrap = 0;
  const std::vector<int> a{1, 1, 0}, b{0, 1, 1};
  const auto fwd = estimate_ate(data, model, a, b, opt);
  const auto rev = estimate_ate(data, model, b, a, opt);
  REQUIRE(fwd.estimate == -rev.estimate);
}

TEST_CASE("label permutation leaves the ate untouched") {
  const auto data = generate(default_scenario(ScenarioId::fig2a, 5000, 13));
  FitConfig config;
  config.restarts = 5;
  const auto model = fit_em(data, 3, config);
  AteOptions opt;
  opt.bootstrap = 0;
  const std::vector<int> ones{1, 1, 1}, zeros{0, 0, 0};
  const double base = estimate_ate(data, model, ones, zeros, opt).estimate;
  const double swapped =
      estimate_ate(data, permute_classes(model, {2, 0, 1}), ones, zeros, opt).estimate;
  REQUIRE(std::abs(base - swapped) < 1e-10);
}

TEST_CASE("constant substitute confounder is reported as collinear") {
  const auto data = generate(default_scenario(ScenarioId::fig1, 2000, 7));
  LatentClassModel model;
  model.k = 2;
  model.m = 3;
  model.prior = {0.5, 0.5};
  model.cond = {{0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}};  // posterior == prior for every row
  AteOptions opt;
  try {
    estimate_ate(data, model, std::vector<int>{1, 1, 1}, std::vector<int>{0, 0, 0}, opt);
    FAIL("expected identification_error");
  } catch (const identification_error& e) {
    REQUIRE(std::string(e.what()).find("Zpost") != std::string::npos);
  }
}

TEST_CASE("bootstrap se is deterministic and thread-count independent") {
  const auto data = generate(default_scenario(ScenarioId::fig1, 3000, 17));
  const auto model = fit_fig1(data);
  AteOptions opt;
  opt.bootstrap = 50;
  opt.seed = 23;
  const std::vector<int> ones{1, 1, 1}, zeros{0, 0, 0};
  const auto a = estimate_ate(data, model, ones, zeros, opt);
  opt.threads = 4;
  const auto b = estimate_ate(data, model, ones, zeros, opt);
  REQUIRE(a.se == b.se);
  REQUIRE(a.estimate == b.estimate);
}

TEST_CASE("degeneracy audit holds on fitted models") {
  const auto data = generate(default_scenario(ScenarioId::fig1, 20000, 19));
  const auto model = fit_fig1(data);
  const auto report = check_overlap_degeneracy(data, model);
  REQUIRE(report.degenerate);
  REQUIRE(report.distinct_patterns == 8);  // all 8 patterns show up at n=20000
  REQUIRE(report.distinct_values == 8);
  for (double v : report.within_variance) REQUIRE(v == 0.0);  // exact
}

TEST_CASE("single-class confounder collapses to one value") {
  const auto data = generate(default_scenario(ScenarioId::fig1, 5000, 21));
  FitConfig config;
  const auto model = fit_em(data, 1, config);
  const auto report = check_overlap_degeneracy(data, model);
  REQUIRE(report.distinct_values == 1);
  // the map is still deterministic per pattern, but a constant confounder
  // cannot be in one-to-one correspondence with the 8 observed patterns
  for (double v : report.within_variance) REQUIRE(v == 0.0);
  REQUIRE_FALSE(report.degenerate);
}

TEST_CASE("well-specified model passes the goodness-of-fit screen") {
  const auto data = generate(default_scenario(ScenarioId::fig1, 50000, 29));
  const auto model = fit_fig1(data);
  DiagnosticOptions opt;
  opt.bootstrap = 199;
  opt.seed = 31;
  opt.refit.restarts = 4;
  const auto report = diagnose_conditional_independence(data, model, opt);
  REQUIRE(report.gof_p > 0.01);
  REQUIRE(report.gof_bootstrap == 199);
  REQUIRE(report.treatment_p.size() == 3);
  for (double p : report.treatment_p) {
    REQUIRE(p >= 0.0);
    REQUIRE(p <= 1.0);
  }
  double total = 0.0;
  for (double c : report.class_counts) total += c;
  REQUIRE(total == 50000.0);
}

TEST_CASE("treatment-on-treatment structure is caught") {
  const auto data = generate(default_scenario(ScenarioId::fig3, 50000, 37));
  FitConfig config;
  config.restarts = 6;
  config.seed = 3;
  const auto model = fit_em(data, 2, config);
  DiagnosticOptions opt;
  opt.bootstrap = 199;
  opt.seed = 41;
  opt.refit.restarts = 4;
  const auto report = diagnose_conditional_independence(data, model, opt);
  REQUIRE(report.gof_p < 0.01);
  REQUIRE(report.gof_statistic > 0.0);
}

TEST_CASE("pairwise tests are calibrated under independence") {
  // single-class model on independent Bernoulli treatments: pairwise
  // p-values should reject at roughly the nominal rate
  auto spec = default_scenario(ScenarioId::fig1, 2000, 1);
  spec.cond = {{0.4, 0.4, 0.4}, {0.4, 0.4, 0.4}};  // treatments i.i.d. regardless of class
  int tests = 0;
  int rejections = 0;
  DiagnosticOptions opt;
  opt.bootstrap = 0;  // pairwise part only
  for (int rep = 0; rep < 500; ++rep) {
    spec.seed = derive_seed(101, static_cast<std::uint64_t>(rep));
    const auto data = generate(spec);
    FitConfig config;
    const auto model = fit_em(data, 1, config);
    const auto report = diagnose_conditional_independence(data, model, opt);
    for (const auto& pt : report.pair_tests) {
      if (!pt.valid) continue;
      ++tests;
      rejections += pt.p < 0.05 ? 1 : 0;
    }
  }
  REQUIRE(tests == 1500);  // 3 pairs per replicate, one class
  const double rate = static_cast<double>(rejections) / tests;
  REQUIRE(rate == Catch::Approx(0.05).margin(0.02));
}
