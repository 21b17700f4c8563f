#pragma once

// Additive outcome model with identification by linear independence of the
// latent-summary column, plus the four-treatment factorized variant that
// allows a causal edge from the first treatment into the second and third.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
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

struct BasisSpec {
  // b_j(a): transform of treatment j entering the outcome model
  std::function<double(std::size_t, double)> treatment_basis =
      [](std::size_t, double a) { return a; };
  // g(z): summary of the latent class index entering the outcome model
  std::function<double(double)> latent_summary = [](double z) { return z; };
  bool sigma_known = false;
  double sigma_value = 0.0;
};

struct RankReport {
  bool full_rank = false;
  std::vector<double> singular_values;
  double ratio = 0.0;                 // smallest / largest singular value
  std::vector<std::string> columns;   // implicated columns when deficient
};

struct RegressionOptions {
  int bootstrap = 200;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

namespace detail {

/// E{g(Z) | A = bits} under the model posterior.
inline double posterior_latent_summary(const LatentClassModel& model, std::uint32_t bits,
                                       const BasisSpec& basis) {
  const auto post = posterior_bits(model, bits);
  double e = 0.0;
  for (std::size_t z = 0; z < model.k; ++z) {
    e += basis.latent_summary(static_cast<double>(z)) * post[z];
  }
  return e;
}

inline RankReport weighted_rank_report(std::size_t m, std::span<const double> pattern_probs,
                                       std::span<const double> latent_column,
                                       const BasisSpec& basis, bool include_latent) {
  const std::size_t cells = std::size_t{1} << m;
  const std::size_t dim = 1 + m + (include_latent ? 1 : 0);
  Eigen::MatrixXd design(cells, dim);
  for (std::size_t b = 0; b < cells; ++b) {
    const double w = std::sqrt(pattern_probs[b]);
    design(static_cast<Eigen::Index>(b), 0) = w;
    for (std::size_t j = 0; j < m; ++j) {
      const double a = ((b >> j) & 1u) ? 1.0 : 0.0;
      design(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(1 + j)) =
          w * basis.treatment_basis(j, a);
    }
    if (include_latent) {
      design(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(dim - 1)) =
          w * latent_column[b];
    }
  }
  std::vector<std::string> names;
  names.push_back("intercept");
  for (std::size_t j = 0; j < m; ++j) names.push_back("b(A" + std::to_string(j + 1) + ")");
  if (include_latent) names.push_back("E[g(Z)|A]");
  const auto check = check_collinearity(design, names);
  RankReport report;
  report.full_rank = !check.collinear;
  report.singular_values = check.singular_values;
  report.ratio = check.ratio;
  report.columns = check.columns;
  return report;
}

}  // namespace detail

/// Rank test on the design over all 2^m patterns, rows weighted by the
/// square root of the model-implied pattern probability. When sigma is
/// known the latent column drops out of the model and is omitted.
inline RankReport test_linear_independence(const LatentClassModel& model,
                                           const BasisSpec& basis = {}) {
  model.validate();
  // the latent summary g(class index) is not label-invariant, so labels are
  // fixed to the canonical order before the summary is formed
  const LatentClassModel canon = canonicalize(model);
  const auto probs = model_pattern_probs(canon);
  std::vector<double> latent;
  if (!basis.sigma_known) {
    latent.resize(probs.size());
    for (std::size_t b = 0; b < probs.size(); ++b) {
      latent[b] = detail::posterior_latent_summary(canon, static_cast<std::uint32_t>(b), basis);
    }
  }
  return detail::weighted_rank_report(canon.m, probs, latent, basis, !basis.sigma_known);
}

struct AdditiveFit {
  double beta0 = 0.0;
  double beta0_se = 0.0;
  std::vector<double> beta;     // per-treatment coefficients
  std::vector<double> beta_se;
  double sigma_hat = 0.0;       // coefficient on E{g(Z)|A}; the known value when fixed
  double sigma_se = 0.0;
  bool sigma_was_known = false;
  RankReport rank;
  int bootstrap_replicates = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> notes;

  /// ATE for the contrast: sum_j beta_j * (b_j(a_j) - b_j(a'_j)).
  double contrast(std::span<const int> a, std::span<const int> a_prime,
                  const BasisSpec& basis = {}) const {
    if (a.size() != beta.size() || a_prime.size() != beta.size()) {
      throw config_error("contrast pattern length != m");
    }
    double tau = 0.0;
    for (std::size_t j = 0; j < beta.size(); ++j) {
      tau += beta[j] * (basis.treatment_basis(j, static_cast<double>(a[j])) -
                        basis.treatment_basis(j, static_cast<double>(a_prime[j])));
    }
    return tau;
  }
};

namespace detail {

/// Shared pattern-level regression with row-resampling bootstrap. Design
/// rows are per distinct pattern; the response per pattern may shift by a
/// fixed per-pattern offset (used when sigma is known).
struct PatternRegressionResult {
  Eigen::VectorXd coef;
  std::vector<double> coef_se;
};

inline PatternRegressionResult pattern_regression(
    const Dataset& data, const std::vector<std::vector<double>>& rows,
    const std::vector<std::size_t>& row_pattern, std::span<const double> offset,
    const RegressionOptions& options) {
  const std::size_t dim = rows.empty() ? 0 : rows[0].size();
  const std::size_t groups = rows.size();
  auto solve = [&](std::span<const double> count, std::span<const double> ysum) {
    NormalEquations eq(static_cast<int>(dim));
    std::vector<double> scaled(dim);
    for (std::size_t g = 0; g < groups; ++g) {
      if (count[g] == 0.0) continue;
      const double w = std::sqrt(count[g]);
      for (std::size_t c = 0; c < dim; ++c) scaled[c] = w * rows[g][c];
      eq.add(scaled, (ysum[g] - count[g] * offset[g]) / w);
    }
    return eq.solve();
  };
  std::vector<double> count(groups, 0.0), ysum(groups, 0.0);
  for (std::size_t i = 0; i < data.n; ++i) {
    count[row_pattern[i]] += 1.0;
    ysum[row_pattern[i]] += data.outcome[i];
  }
  PatternRegressionResult result;
  result.coef = solve(count, ysum);
  result.coef_se.assign(dim, 0.0);
  if (options.bootstrap > 0) {
    std::vector<std::vector<double>> draws(static_cast<std::size_t>(options.bootstrap));
    parallel_for(draws.size(), options.threads, [&](std::size_t b) {
      Rng rng(derive_seed(options.seed, b));
      std::vector<double> bc(groups, 0.0), by(groups, 0.0);
      for (std::size_t i = 0; i < data.n; ++i) {
        const std::size_t pick = rng.uniform_index(data.n);
        bc[row_pattern[pick]] += 1.0;
        by[row_pattern[pick]] += data.outcome[pick];
      }
      const Eigen::VectorXd c = solve(bc, by);
      draws[b].assign(c.data(), c.data() + c.size());
    });
    for (std::size_t c = 0; c < dim; ++c) {
      std::vector<double> column(draws.size());
      for (std::size_t b = 0; b < draws.size(); ++b) column[b] = draws[b][c];
      result.coef_se[c] = sample_sd(column);
    }
  }
  return result;
}

}  // namespace detail

/// Least squares for Y = beta0 + sum_j beta_j b_j(A_j) + sigma * E{g(Z)|A}.
/// With sigma known, sigma * E{g(Z)|A} is subtracted from Y and the latent
/// column is dropped. Fails with an identification error when the rank test
/// on the model-implied design is below full rank.
inline AdditiveFit estimate_additive(const Dataset& data, const LatentClassModel& model,
                                     const BasisSpec& basis = {},
                                     const RegressionOptions& options = {}) {
  data.validate();
  model.validate();
  if (!data.treatments_binary()) throw config_error("estimator requires binary treatments");
  if (data.m != model.m) throw config_error("dataset/model arity mismatch");

  // fix labels so the latent summary does not depend on the caller's class order
  const LatentClassModel canon = canonicalize(model);

  AdditiveFit fit;
  fit.rank = test_linear_independence(canon, basis);
  if (!fit.rank.full_rank) {
    std::string msg = "additive outcome model not identified: latent summary column is linearly "
                      "dependent on the treatment basis; implicated columns:";
    for (const auto& c : fit.rank.columns) msg += " " + c;
    throw identification_error(msg);
  }

  const std::size_t m = data.m;
  const bool latent_col = !basis.sigma_known;
  const std::size_t dim = 1 + m + (latent_col ? 1 : 0);

  std::vector<std::vector<double>> rows;
  std::vector<double> offsets;
  std::vector<std::size_t> row_pattern(data.n);
  std::unordered_map<std::uint32_t, std::size_t> index;
  for (std::size_t i = 0; i < data.n; ++i) {
    const std::uint32_t bits = data.pattern_bits(i);
    auto [it, inserted] = index.try_emplace(bits, rows.size());
    if (inserted) {
      std::vector<double> row;
      row.reserve(dim);
      row.push_back(1.0);
      for (std::size_t j = 0; j < m; ++j) {
        row.push_back(basis.treatment_basis(j, ((bits >> j) & 1u) ? 1.0 : 0.0));
      }
      const double egz = detail::posterior_latent_summary(canon, bits, basis);
      if (latent_col) {
        row.push_back(egz);
        offsets.push_back(0.0);
      } else {
        offsets.push_back(basis.sigma_value * egz);
      }
      rows.push_back(std::move(row));
    }
    row_pattern[i] = it->second;
  }

  const auto reg = detail::pattern_regression(data, rows, row_pattern, offsets, options);
  fit.beta0 = reg.coef[0];
  fit.beta0_se = reg.coef_se[0];
  fit.beta.resize(m);
  fit.beta_se.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    fit.beta[j] = reg.coef[static_cast<Eigen::Index>(1 + j)];
    fit.beta_se[j] = reg.coef_se[1 + j];
  }
  if (latent_col) {
    fit.sigma_hat = reg.coef[static_cast<Eigen::Index>(dim - 1)];
    fit.sigma_se = reg.coef_se[dim - 1];
  } else {
    fit.sigma_hat = basis.sigma_value;
    fit.sigma_was_known = true;
    fit.notes.push_back("latent scale supplied, latent column omitted from the regression");
  }
  fit.bootstrap_replicates = options.bootstrap;
  fit.seed = options.seed;
  return fit;
}

/// Plain regression of Y on (1, b(A)): the no-adjustment reference point.
inline AdditiveFit naive_regression(const Dataset& data, const BasisSpec& basis = {},
                                    const RegressionOptions& options = {}) {
  data.validate();
  if (!data.treatments_binary()) throw config_error("estimator requires binary treatments");
  const std::size_t m = data.m;
  std::vector<std::vector<double>> rows;
  std::vector<double> offsets;
  std::vector<std::size_t> row_pattern(data.n);
  std::unordered_map<std::uint32_t, std::size_t> index;
  for (std::size_t i = 0; i < data.n; ++i) {
    const std::uint32_t bits = data.pattern_bits(i);
    auto [it, inserted] = index.try_emplace(bits, rows.size());
    if (inserted) {
      std::vector<double> row;
      row.reserve(1 + m);
      row.push_back(1.0);
      for (std::size_t j = 0; j < m; ++j) {
        row.push_back(basis.treatment_basis(j, ((bits >> j) & 1u) ? 1.0 : 0.0));
      }
      rows.push_back(std::move(row));
      offsets.push_back(0.0);
    }
    row_pattern[i] = it->second;
  }
  const auto reg = detail::pattern_regression(data, rows, row_pattern, offsets, options);
  AdditiveFit fit;
  fit.beta0 = reg.coef[0];
  fit.beta0_se = reg.coef_se[0];
  fit.beta.resize(m);
  fit.beta_se.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    fit.beta[j] = reg.coef[static_cast<Eigen::Index>(1 + j)];
    fit.beta_se[j] = reg.coef_se[1 + j];
  }
  fit.rank.full_rank = true;
  fit.bootstrap_replicates = options.bootstrap;
  fit.seed = options.seed;
  fit.notes.push_back("no latent adjustment; biased under confounding");
  return fit;
}

/// Treatment model for four binary treatments where A1 feeds A2 and A3:
/// p(Z) p(A1|Z) p(A2|A1,Z) p(A3|A1,Z) p(A4|Z).
struct FactorizedTreatmentModel {
  std::size_t k = 0;
  std::vector<double> prior;                 // k
  std::vector<double> p1;                    // k
  std::vector<std::array<double, 2>> p2;     // k x {a1}
  std::vector<std::array<double, 2>> p3;     // k x {a1}
  std::vector<double> p4;                    // k
  FitInfo fit;

  static constexpr std::size_t m = 4;

  void validate() const {
    if (k < 1) throw config_error("factorized model needs k >= 1");
    if (prior.size() != k || p1.size() != k || p2.size() != k || p3.size() != k ||
        p4.size() != k) {
      throw config_error("factorized model shape mismatch");
    }
    double total = 0.0;
    for (double p : prior) {
      if (p < 0.0) throw config_error("factorized prior entries must be nonnegative");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-12) throw config_error("factorized prior must sum to 1");
    auto check = [](double p) {
      if (!(p >= kParamClamp && p <= 1.0 - kParamClamp)) {
        throw config_error("factorized model probabilities must lie in [1e-6, 1-1e-6]");
      }
    };
    for (std::size_t z = 0; z < k; ++z) {
      check(p1[z]);
      check(p2[z][0]);
      check(p2[z][1]);
      check(p3[z][0]);
      check(p3[z][1]);
      check(p4[z]);
    }
  }

  /// p(pattern | Z=z) under the factorization.
  double class_pattern_prob(std::size_t z, std::uint32_t bits) const {
    const int a1 = bits & 1u;
    const int a2 = (bits >> 1) & 1u;
    const int a3 = (bits >> 2) & 1u;
    const int a4 = (bits >> 3) & 1u;
    auto bern = [](double p, int a) { return a ? p : 1.0 - p; };
    return bern(p1[z], a1) * bern(p2[z][a1], a2) * bern(p3[z][a1], a3) * bern(p4[z], a4);
  }

  double pattern_prob(std::uint32_t bits) const {
    std::vector<double> terms(k);
    for (std::size_t z = 0; z < k; ++z) terms[z] = prior[z] * class_pattern_prob(z, bits);
    return detail::ordered_sum(terms);
  }

  std::vector<double> posterior_bits(std::uint32_t bits) const {
    std::vector<double> post(k);
    for (std::size_t z = 0; z < k; ++z) post[z] = prior[z] * class_pattern_prob(z, bits);
    std::vector<double> terms = post;
    const double total = detail::ordered_sum(terms);
    for (double& p : post) p /= total;
    return post;
  }
};

/// Class labels sorted by the flattened probability row, ties by prior.
inline FactorizedTreatmentModel canonicalize(const FactorizedTreatmentModel& model) {
  auto key = [&](std::size_t z) {
    return std::array<double, 6>{model.p1[z],    model.p2[z][0], model.p2[z][1],
                                 model.p3[z][0], model.p3[z][1], model.p4[z]};
  };
  std::vector<std::size_t> order(model.k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto ka = key(a), kb = key(b);
    if (ka != kb) return ka < kb;
    return model.prior[a] < model.prior[b];
  });
  FactorizedTreatmentModel out = model;
  for (std::size_t z = 0; z < model.k; ++z) {
    out.prior[z] = model.prior[order[z]];
    out.p1[z] = model.p1[order[z]];
    out.p2[z] = model.p2[order[z]];
    out.p3[z] = model.p3[order[z]];
    out.p4[z] = model.p4[order[z]];
  }
  return out;
}

inline double log_likelihood(const FactorizedTreatmentModel& model, const PatternCounts& pc) {
  if (pc.m != FactorizedTreatmentModel::m) throw config_error("factorized model needs m = 4");
  double ll = 0.0;
  for (std::size_t g = 0; g < pc.bits.size(); ++g) {
    ll += pc.count[g] * std::log(model.pattern_prob(pc.bits[g]));
  }
  return ll;
}

namespace detail {

inline FactorizedTreatmentModel run_factorized_em(const PatternCounts& pc,
                                                  FactorizedTreatmentModel model,
                                                  int max_iterations, double tolerance) {
  const std::size_t k = model.k;
  const std::size_t np = pc.bits.size();
  auto loglik = [&](const FactorizedTreatmentModel& mo) { return log_likelihood(mo, pc); };
  double ll = loglik(model);
  model.fit.trace.push_back(ll);
  for (int iter = 1; iter <= max_iterations; ++iter) {
    // E-step responsibilities per pattern, then closed-form M-step on
    // weighted counts of each factor's parent configuration
    std::vector<double> weight(k, 0.0);
    std::vector<double> n_a1(k, 0.0), n_a4(k, 0.0);
    std::vector<std::array<double, 2>> n_par(k, {0.0, 0.0});   // rows with A1 = a1
    std::vector<std::array<double, 2>> n_a2(k, {0.0, 0.0});    // ... and A2 = 1
    std::vector<std::array<double, 2>> n_a3(k, {0.0, 0.0});    // ... and A3 = 1
    std::vector<double> terms(k);
    for (std::size_t g = 0; g < np; ++g) {
      const std::uint32_t bits = pc.bits[g];
      for (std::size_t z = 0; z < k; ++z) {
        terms[z] = model.prior[z] * model.class_pattern_prob(z, bits);
      }
      std::vector<double> sorted = terms;
      const double mix = ordered_sum(sorted);
      const int a1 = bits & 1u;
      const int a2 = (bits >> 1) & 1u;
      const int a3 = (bits >> 2) & 1u;
      const int a4 = (bits >> 3) & 1u;
      for (std::size_t z = 0; z < k; ++z) {
        const double wc = pc.count[g] * terms[z] / mix;
        weight[z] += wc;
        if (a1) n_a1[z] += wc;
        if (a4) n_a4[z] += wc;
        n_par[z][a1] += wc;
        if (a2) n_a2[z][a1] += wc;
        if (a3) n_a3[z][a1] += wc;
      }
    }
    auto clamp = [](double p) { return std::clamp(p, kParamClamp, 1.0 - kParamClamp); };
    for (std::size_t z = 0; z < k; ++z) {
      if (weight[z] > 0.0) {
        model.p1[z] = clamp(n_a1[z] / weight[z]);
        model.p4[z] = clamp(n_a4[z] / weight[z]);
        for (int a1 = 0; a1 < 2; ++a1) {
          if (n_par[z][a1] > 0.0) {
            model.p2[z][a1] = clamp(n_a2[z][a1] / n_par[z][a1]);
            model.p3[z][a1] = clamp(n_a3[z][a1] / n_par[z][a1]);
          }
        }
      }
      model.prior[z] = weight[z] / pc.total;
    }
    model.fit.iterations = iter;
    const double ll_new = loglik(model);
    model.fit.trace.push_back(ll_new);
    const double change = std::abs(ll_new - ll);
    ll = ll_new;
    if (change <= tolerance * (std::abs(ll) + 1.0)) break;
  }
  model.fit.loglik = ll;
  return model;
}

}  // namespace detail

inline FactorizedTreatmentModel fit_factorized_model(const Dataset& data, std::size_t k = 2,
                                                     const FitConfig& config = {}) {
  data.validate();
  config.validate();
  if (data.m != FactorizedTreatmentModel::m) {
    throw config_error("factorized treatment model requires exactly 4 treatments");
  }
  if (!data.treatments_binary()) throw config_error("factorized model requires binary treatments");
  if (k < 1) throw config_error("k must be >= 1");
  if (data.n < k) throw config_error("need n >= k rows");
  const PatternCounts pc = count_patterns(data);

  std::vector<FactorizedTreatmentModel> runs(static_cast<std::size_t>(config.restarts));
  parallel_for(runs.size(), config.threads, [&](std::size_t r) {
    Rng rng(derive_seed(config.seed, r));
    FactorizedTreatmentModel init;
    init.k = k;
    init.prior.resize(k);
    init.p1.resize(k);
    init.p2.resize(k);
    init.p3.resize(k);
    init.p4.resize(k);
    for (std::size_t z = 0; z < k; ++z) {
      init.p1[z] = rng.uniform(0.05, 0.95);
      init.p2[z][0] = rng.uniform(0.05, 0.95);
      init.p2[z][1] = rng.uniform(0.05, 0.95);
      init.p3[z][0] = rng.uniform(0.05, 0.95);
      init.p3[z][1] = rng.uniform(0.05, 0.95);
      init.p4[z] = rng.uniform(0.05, 0.95);
    }
    init.prior = rng.flat_simplex(static_cast<int>(k));
    runs[r] = detail::run_factorized_em(pc, std::move(init), config.max_iterations,
                                        config.tolerance);
  });
  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r) {
    if (runs[r].fit.loglik > runs[best].fit.loglik) best = r;
  }
  FactorizedTreatmentModel model = runs[best];
  model.fit.best_restart = static_cast<int>(best);
  model.fit.restarts_used = config.restarts;
  for (double p : model.prior) {
    if (p < 1e-8) model.fit.degenerate_prior = true;
  }
  auto on_bound = [](double p) { return p == kParamClamp || p == 1.0 - kParamClamp; };
  for (std::size_t z = 0; z < k; ++z) {
    if (on_bound(model.p1[z]) || on_bound(model.p2[z][0]) || on_bound(model.p2[z][1]) ||
        on_bound(model.p3[z][0]) || on_bound(model.p3[z][1]) || on_bound(model.p4[z])) {
      model.fit.clamped = true;
    }
  }
  if (k >= 2) {
    // likelihood-ratio screen against the closed-form single-class fit; a
    // mixture fitted to one-class data lands on a flat ridge, so the extra
    // classes can look distinct while adding no explanatory power
    FactorizedTreatmentModel one;
    one.k = 1;
    one.prior = {1.0};
    one.p1.resize(1);
    one.p2.resize(1);
    one.p3.resize(1);
    one.p4.resize(1);
    double n1 = 0, on1 = 0, n4 = 0, on4 = 0;
    double n2[2] = {0, 0}, on2[2] = {0, 0}, n3[2] = {0, 0}, on3[2] = {0, 0};
    for (std::size_t g = 0; g < pc.bits.size(); ++g) {
      const double c = pc.count[g];
      const std::size_t a1 = pc.bits[g] & 1u;
      n1 += c;
      if (a1) on1 += c;
      n2[a1] += c;
      if ((pc.bits[g] >> 1) & 1u) on2[a1] += c;
      n3[a1] += c;
      if ((pc.bits[g] >> 2) & 1u) on3[a1] += c;
      n4 += c;
      if ((pc.bits[g] >> 3) & 1u) on4 += c;
    }
    auto rate = [](double on, double n) {
      return std::clamp(n > 0.0 ? on / n : 0.5, kParamClamp, 1.0 - kParamClamp);
    };
    one.p1[0] = rate(on1, n1);
    one.p2[0] = {rate(on2[0], n2[0]), rate(on2[1], n2[1])};
    one.p3[0] = {rate(on3[0], n3[0]), rate(on3[1], n3[1])};
    one.p4[0] = rate(on4, n4);
    const double lr = std::max(0.0, 2.0 * (model.fit.loglik - log_likelihood(one, pc)));
    const double df = 7.0 * static_cast<double>(k - 1);  // (k-1) prior + 6(k-1) table cells
    model.fit.single_class_adequate = chi_squared_sf(lr, df) > 1e-3;
  }
  FactorizedTreatmentModel canonical = canonicalize(model);
  canonical.validate();
  return canonical;
}

struct ConditionalEffectsFit {
  double beta0 = 0.0;
  double beta0_se = 0.0;
  std::vector<double> beta;     // coefficients on A1..A4; beta[0] is not causal
  std::vector<double> beta_se;
  double latent_coef = 0.0;
  double latent_coef_se = 0.0;
  RankReport rank;
  int bootstrap_replicates = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> notes;
};

/// Regression of Y on (1, A1..A4, E[Z|A]) with the posterior mean taken from
/// the factorized treatment model. The coefficients on A2, A3, A4 are the
/// effects of interest; the one on A1 mixes its direct effect with paths
/// through A2 and A3 and is reported with that caveat.
inline ConditionalEffectsFit estimate_conditional_effects(const Dataset& data,
                                                          const FactorizedTreatmentModel& model,
                                                          const RegressionOptions& options = {}) {
  data.validate();
  model.validate();
  if (data.m != FactorizedTreatmentModel::m) {
    throw config_error("conditional-effects path requires exactly 4 treatments");
  }
  if (!data.treatments_binary()) throw config_error("estimator requires binary treatments");

  // fix labels so the posterior-mean column does not depend on class order
  const FactorizedTreatmentModel canon = canonicalize(model);

  const std::size_t m = data.m;
  const std::size_t cells = std::size_t{1} << m;
  std::vector<double> probs(cells), latent(cells);
  for (std::size_t b = 0; b < cells; ++b) {
    const auto bits = static_cast<std::uint32_t>(b);
    probs[b] = canon.pattern_prob(bits);
    const auto post = canon.posterior_bits(bits);
    double e = 0.0;
    for (std::size_t z = 0; z < canon.k; ++z) e += static_cast<double>(z) * post[z];
    latent[b] = e;
  }
  ConditionalEffectsFit fit;
  fit.rank = detail::weighted_rank_report(m, probs, latent, BasisSpec{}, true);
  if (!fit.rank.full_rank) {
    std::string msg = "conditional effects not identified: posterior latent mean is linearly "
                      "dependent on the treatments; implicated columns:";
    for (const auto& c : fit.rank.columns) msg += " " + c;
    throw identification_error(msg);
  }

  std::vector<std::vector<double>> rows;
  std::vector<double> offsets;
  std::vector<std::size_t> row_pattern(data.n);
  std::unordered_map<std::uint32_t, std::size_t> index;
  for (std::size_t i = 0; i < data.n; ++i) {
    const std::uint32_t bits = data.pattern_bits(i);
    auto [it, inserted] = index.try_emplace(bits, rows.size());
    if (inserted) {
      std::vector<double> row;
      row.reserve(2 + m);
      row.push_back(1.0);
      for (std::size_t j = 0; j < m; ++j) row.push_back(((bits >> j) & 1u) ? 1.0 : 0.0);
      row.push_back(latent[bits]);
      rows.push_back(std::move(row));
      offsets.push_back(0.0);
    }
    row_pattern[i] = it->second;
  }
  const auto reg = detail::pattern_regression(data, rows, row_pattern, offsets, options);
  fit.beta0 = reg.coef[0];
  fit.beta0_se = reg.coef_se[0];
  fit.beta.resize(m);
  fit.beta_se.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    fit.beta[j] = reg.coef[static_cast<Eigen::Index>(1 + j)];
    fit.beta_se[j] = reg.coef_se[1 + j];
  }
  fit.latent_coef = reg.coef[static_cast<Eigen::Index>(1 + m)];
  fit.latent_coef_se = reg.coef_se[1 + m];
  fit.bootstrap_replicates = options.bootstrap;
  fit.seed = options.seed;
  fit.notes.push_back("coefficient on A1 is a total association, not a causal effect; "
                      "the targets are A2, A3, A4 given A1");
  return fit;
}

}  // namespace multicause
