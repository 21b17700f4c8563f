#pragma once

// Two-step adjustment estimator, its fit diagnostics, and the degeneracy
// audit of the substitute confounder.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "multicause/dataset.hpp"
#include "multicause/errors.hpp"
#include "multicause/factor_model.hpp"
#include "multicause/linalg.hpp"
#include "multicause/parallel.hpp"
#include "multicause/report.hpp"
#include "multicause/rng.hpp"
#include "multicause/stats.hpp"

namespace multicause {

struct DegeneracyReport {
  std::vector<std::string> patterns;    // observed patterns, first-appearance order
  std::vector<double> within_variance;  // per-pattern variance of the scalar confounder
  std::size_t distinct_patterns = 0;
  std::size_t distinct_values = 0;      // distinct scalar confounder values overall
  bool degenerate = false;              // confounder is a function of the pattern
};

/// The substitute confounder is a deterministic map of the treatment
/// pattern, so its within-pattern variance must be exactly zero and it can
/// take at most one value per observed pattern. This audit asserts that
/// empirically rather than by construction.
inline DegeneracyReport check_overlap_degeneracy(const Dataset& data,
                                                 const LatentClassModel& model) {
  const SubstituteConfounder sc = substitute_confounder(model, data);
  DegeneracyReport report;
  std::unordered_map<std::uint32_t, std::size_t> index;
  std::vector<double> lo, hi, sum, sumsq, cnt;
  std::vector<std::uint32_t> bits;
  for (std::size_t i = 0; i < data.n; ++i) {
    const std::uint32_t b = data.pattern_bits(i);
    auto [it, inserted] = index.try_emplace(b, bits.size());
    const double v = sc.scalar[i];
    if (inserted) {
      bits.push_back(b);
      lo.push_back(v);
      hi.push_back(v);
      sum.push_back(0.0);
      sumsq.push_back(0.0);
      cnt.push_back(0.0);
    }
    const std::size_t g = it->second;
    lo[g] = std::min(lo[g], v);
    hi[g] = std::max(hi[g], v);
    sum[g] += v;
    sumsq[g] += v * v;
    cnt[g] += 1.0;
  }
  report.distinct_patterns = bits.size();
  std::set<double> values;
  bool all_zero = true;
  for (std::size_t g = 0; g < bits.size(); ++g) {
    report.patterns.push_back(bits_to_string(bits[g], data.m));
    // identical values in a group make the spread exactly 0; only then is a
    // variance of 0 reported, avoiding roundoff in the moment formula
    double var = 0.0;
    if (hi[g] != lo[g]) {
      const double mean = sum[g] / cnt[g];
      var = std::max(0.0, sumsq[g] / cnt[g] - mean * mean);
      all_zero = false;
    }
    report.within_variance.push_back(var);
    values.insert(lo[g]);
  }
  report.distinct_values = values.size();
  report.degenerate = all_zero && report.distinct_values == report.distinct_patterns;
  return report;
}

struct AteOptions {
  int bootstrap = 200;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

namespace detail {

/// Regression design row for a pattern: [1, A_1..A_m, posterior of classes
/// 1..k-1]. Class 0's coordinate is dropped; it is redundant given the
/// intercept.
inline std::vector<std::string> deconfounder_column_names(std::size_t m, std::size_t k) {
  std::vector<std::string> names;
  names.push_back("intercept");
  for (std::size_t j = 0; j < m; ++j) names.push_back("A" + std::to_string(j + 1));
  for (std::size_t z = 1; z < k; ++z) names.push_back("Zpost" + std::to_string(z));
  return names;
}

struct PatternDesign {
  std::vector<std::uint32_t> bits;          // distinct patterns
  std::vector<std::vector<double>> rows;    // design row per pattern
  std::vector<std::size_t> row_pattern;     // dataset row -> pattern slot
  std::size_t dim = 0;
};

inline PatternDesign build_pattern_design(const Dataset& data, const LatentClassModel& model) {
  PatternDesign d;
  d.dim = 1 + data.m + (model.k - 1);
  d.row_pattern.resize(data.n);
  std::unordered_map<std::uint32_t, std::size_t> index;
  for (std::size_t i = 0; i < data.n; ++i) {
    const std::uint32_t b = data.pattern_bits(i);
    auto [it, inserted] = index.try_emplace(b, d.bits.size());
    if (inserted) {
      d.bits.push_back(b);
      std::vector<double> row;
      row.reserve(d.dim);
      row.push_back(1.0);
      for (std::size_t j = 0; j < data.m; ++j) row.push_back(((b >> j) & 1u) ? 1.0 : 0.0);
      const auto post = posterior_bits(model, b);
      for (std::size_t z = 1; z < model.k; ++z) row.push_back(post[z]);
      d.rows.push_back(std::move(row));
    }
    d.row_pattern[i] = it->second;
  }
  return d;
}

/// Least-squares coefficients from pattern-level sufficient statistics
/// (count and outcome sum per pattern).
inline Eigen::VectorXd solve_pattern_regression(const PatternDesign& d,
                                                std::span<const double> count,
                                                std::span<const double> ysum) {
  NormalEquations eq(static_cast<int>(d.dim));
  std::vector<double> scaled(d.dim);
  for (std::size_t g = 0; g < d.rows.size(); ++g) {
    if (count[g] == 0.0) continue;
    const double w = std::sqrt(count[g]);
    for (std::size_t c = 0; c < d.dim; ++c) scaled[c] = w * d.rows[g][c];
    eq.add(scaled, ysum[g] / w);
  }
  return eq.solve();
}

}  // namespace detail

/// Outcome regression on (1, treatments, substitute confounder coordinates);
/// the contrast is the coefficient combination sum_j coef_j (a_j - a'_j).
/// Bootstrap resamples rows and refits the regression; the factor-model
/// parameters, and hence the per-pattern posteriors, are held fixed.
inline EstimateReport estimate_ate(const Dataset& data, const LatentClassModel& model,
                                   std::span<const int> a, std::span<const int> a_prime,
                                   const AteOptions& options = {}) {
  data.validate();
  model.validate();
  if (!data.treatments_binary()) throw config_error("estimator requires binary treatments");
  if (data.m != model.m) throw config_error("dataset/model arity mismatch");
  if (a.size() != data.m || a_prime.size() != data.m) {
    throw config_error("contrast pattern length != m");
  }
  if (options.bootstrap < 0) throw config_error("bootstrap count must be >= 0");

  const auto design = detail::build_pattern_design(data, model);
  const auto names = detail::deconfounder_column_names(data.m, model.k);

  // collinearity check on the sqrt(count)-weighted distinct-pattern design
  std::vector<double> count(design.rows.size(), 0.0);
  std::vector<double> ysum(design.rows.size(), 0.0);
  for (std::size_t i = 0; i < data.n; ++i) {
    count[design.row_pattern[i]] += 1.0;
    ysum[design.row_pattern[i]] += data.outcome[i];
  }
  Eigen::MatrixXd weighted(design.rows.size(), design.dim);
  for (std::size_t g = 0; g < design.rows.size(); ++g) {
    const double w = std::sqrt(count[g]);
    for (std::size_t c = 0; c < design.dim; ++c) {
      weighted(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(c)) =
          w * design.rows[g][c];
    }
  }
  const auto collinearity = check_collinearity(weighted, names);
  if (collinearity.collinear) {
    std::string msg =
        "regression design is rank deficient (the substitute confounder is a function of the "
        "treatments); implicated columns:";
    for (const auto& c : collinearity.columns) msg += " " + c;
    throw identification_error(msg);
  }

  const Eigen::VectorXd coef = detail::solve_pattern_regression(design, count, ysum);
  auto contrast_value = [&](const Eigen::VectorXd& c) {
    double tau = 0.0;
    for (std::size_t j = 0; j < data.m; ++j) {
      tau += c[static_cast<Eigen::Index>(1 + j)] *
             (static_cast<double>(a[j]) - static_cast<double>(a_prime[j]));
    }
    return tau;
  };

  EstimateReport report;
  report.estimand = "ate";
  report.contrast = pattern_to_string(a) + " vs " + pattern_to_string(a_prime);
  report.estimate = contrast_value(coef);
  report.seed = options.seed;
  report.bootstrap_replicates = options.bootstrap;

  if (options.bootstrap > 0) {
    std::vector<double> replicates(static_cast<std::size_t>(options.bootstrap));
    parallel_for(replicates.size(), options.threads, [&](std::size_t b) {
      Rng rng(derive_seed(options.seed, b));
      std::vector<double> bcount(design.rows.size(), 0.0);
      std::vector<double> bysum(design.rows.size(), 0.0);
      for (std::size_t i = 0; i < data.n; ++i) {
        const std::size_t pick = rng.uniform_index(data.n);
        const std::size_t g = design.row_pattern[pick];
        bcount[g] += 1.0;
        bysum[g] += data.outcome[pick];
      }
      replicates[b] = contrast_value(detail::solve_pattern_regression(design, bcount, bysum));
    });
    report.se = sample_sd(replicates);
  }

  const auto degeneracy = check_overlap_degeneracy(data, model);
  report.diagnostics["degenerate_given_treatments"] = degeneracy.degenerate ? 1.0 : 0.0;
  report.diagnostics["distinct_confounder_values"] =
      static_cast<double>(degeneracy.distinct_values);
  report.diagnostics["distinct_patterns"] = static_cast<double>(degeneracy.distinct_patterns);
  report.diagnostics["design_sv_ratio"] = collinearity.ratio;
  report.notes.push_back(
      "bootstrap holds factor-model parameters fixed; posteriors per pattern do not vary "
      "across resamples");
  DigestBuilder digest;
  digest.add("deconfounder.ate")
      .add(pattern_to_string(a))
      .add(pattern_to_string(a_prime))
      .add(options.bootstrap)
      .add(options.seed)
      .add(static_cast<std::uint64_t>(model.k))
      .add(static_cast<std::uint64_t>(data.n));
  report.config_digest = digest.hex();
  report.validate();
  return report;
}

struct DiagnosticOptions {
  double alpha = 0.05;
  int bootstrap = 199;   // parametric bootstrap datasets for the fit test
  std::uint64_t seed = 0;
  unsigned threads = 1;
  FitConfig refit;       // EM settings for bootstrap refits
};

struct PairwiseTest {
  std::size_t cls = 0;
  std::size_t j1 = 0;
  std::size_t j2 = 0;
  double p = 1.0;
  bool valid = false;  // false when a margin is empty
};

struct DiagnosticReport {
  std::vector<double> treatment_p;  // per-treatment Bonferroni-combined pairwise p
  std::vector<PairwiseTest> pair_tests;  // raw within-class pairwise results
  double gof_statistic = 0.0;       // 2 * (saturated loglik - model loglik)
  double gof_p = 1.0;
  int gof_bootstrap = 0;
  std::size_t total_cells = 0;
  std::size_t low_expected_cells = 0;
  bool sparse_cells_warning = false;
  std::vector<double> class_counts;
  double alpha = 0.05;
  std::vector<std::string> notes;
};

/// Within-class pairwise independence tests plus a parametric-bootstrap
/// goodness-of-fit test of the latent-class model against the saturated
/// pattern law. The pairwise tests condition on the hard-assigned class, a
/// surrogate: conditioning on the exact substitute confounder is ill-posed
/// because it is determined by the treatments themselves.
inline DiagnosticReport diagnose_conditional_independence(const Dataset& data,
                                                          const LatentClassModel& model,
                                                          const DiagnosticOptions& options = {}) {
  data.validate();
  model.validate();
  if (!data.treatments_binary()) throw config_error("diagnostic requires binary treatments");
  if (data.m != model.m) throw config_error("dataset/model arity mismatch");
  if (!(options.alpha > 0.0 && options.alpha < 1.0)) {
    throw config_error("alpha must lie in (0,1)");
  }
  if (options.bootstrap < 0) throw config_error("bootstrap count must be >= 0");

  DiagnosticReport report;
  report.alpha = options.alpha;
  const PatternCounts pc = count_patterns(data);
  const std::size_t m = data.m;
  const std::size_t k = model.k;

  // hard assignment per pattern: maximum-posterior class, ties to the lower index
  std::vector<std::size_t> assigned(pc.bits.size());
  for (std::size_t g = 0; g < pc.bits.size(); ++g) {
    const auto post = posterior_bits(model, pc.bits[g]);
    std::size_t best = 0;
    for (std::size_t z = 1; z < k; ++z) {
      if (post[z] > post[best]) best = z;
    }
    assigned[g] = best;
  }
  report.class_counts.assign(k, 0.0);
  for (std::size_t g = 0; g < pc.bits.size(); ++g) {
    report.class_counts[assigned[g]] += pc.count[g];
  }

  // pairwise 2x2 tests within each class
  std::vector<double> min_p(m, 1.0);
  std::vector<int> tests_involving(m, 0);
  for (std::size_t z = 0; z < k; ++z) {
    for (std::size_t j1 = 0; j1 < m; ++j1) {
      for (std::size_t j2 = j1 + 1; j2 < m; ++j2) {
        double cell[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
        for (std::size_t g = 0; g < pc.bits.size(); ++g) {
          if (assigned[g] != z) continue;
          const int b1 = (pc.bits[g] >> j1) & 1u;
          const int b2 = (pc.bits[g] >> j2) & 1u;
          cell[b1][b2] += pc.count[g];
        }
        const auto test =
            chi_squared_independence_2x2(cell[0][0], cell[0][1], cell[1][0], cell[1][1]);
        report.pair_tests.push_back({z, j1, j2, test.p_value, test.valid});
        report.total_cells += 4;
        if (test.valid) {
          for (int r = 0; r < 2; ++r) {
            for (int c = 0; c < 2; ++c) {
              if (test.expected[r][c] < 5.0) ++report.low_expected_cells;
            }
          }
          min_p[j1] = std::min(min_p[j1], test.p_value);
          min_p[j2] = std::min(min_p[j2], test.p_value);
          ++tests_involving[j1];
          ++tests_involving[j2];
        } else {
          report.low_expected_cells += 4;
        }
      }
    }
  }
  report.treatment_p.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    report.treatment_p[j] =
        tests_involving[j] > 0 ? std::min(1.0, min_p[j] * tests_involving[j]) : 1.0;
  }
  report.sparse_cells_warning =
      report.total_cells > 0 && 2 * report.low_expected_cells > report.total_cells;
  if (report.sparse_cells_warning) {
    report.notes.push_back("expected counts below 5 in more than half the cells; "
                           "pairwise p-values are unreliable");
  }

  // goodness of fit: likelihood ratio against the saturated pattern law,
  // calibrated by refitting on data simulated from the fitted model
  auto saturated_loglik = [](const PatternCounts& counts) {
    double ll = 0.0;
    for (std::size_t g = 0; g < counts.bits.size(); ++g) {
      if (counts.count[g] > 0.0) {
        ll += counts.count[g] * std::log(counts.count[g] / counts.total);
      }
    }
    return ll;
  };
  report.gof_statistic = 2.0 * (saturated_loglik(pc) - log_likelihood(model, pc));
  report.gof_bootstrap = options.bootstrap;
  if (options.bootstrap > 0) {
    const auto probs = model_pattern_probs(model);
    const std::size_t n = data.n;
    std::vector<double> lr(static_cast<std::size_t>(options.bootstrap));
    parallel_for(lr.size(), options.threads, [&](std::size_t b) {
      Rng rng(derive_seed(options.seed, b));
      std::vector<double> counts(probs.size(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        counts[static_cast<std::size_t>(rng.categorical(probs))] += 1.0;
      }
      PatternCounts sim;
      sim.m = m;
      sim.total = static_cast<double>(n);
      for (std::size_t cell = 0; cell < counts.size(); ++cell) {
        if (counts[cell] > 0.0) {
          sim.bits.push_back(static_cast<std::uint32_t>(cell));
          sim.count.push_back(counts[cell]);
        }
      }
      FitConfig refit = options.refit;
      refit.seed = derive_seed(derive_seed(options.seed, b), 1);
      refit.threads = 1;
      const LatentClassModel refitted = fit_em(sim, k, refit);
      lr[b] = 2.0 * (saturated_loglik(sim) - refitted.fit.loglik);
    });
    std::size_t at_least = 0;
    for (double v : lr) {
      if (v >= report.gof_statistic) ++at_least;
    }
    report.gof_p = static_cast<double>(1 + at_least) / static_cast<double>(options.bootstrap + 1);
  }
  report.notes.push_back(
      "fit test is a surrogate for checking independence given the substitute confounder, "
      "which is deterministic in the treatments");
  return report;
}

}  // namespace multicause
