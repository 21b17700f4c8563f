#pragma once

// Latent-class factor model for binary treatments.
//
// All fitting works on pattern counts (at most 2^m distinct rows), so EM,
// log-likelihoods and posteriors cost O(2^m * k) per pass regardless of n.
// Mixture sums are accumulated in ascending value order, which makes the
// log-likelihood exactly invariant under class-label permutation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "multicause/dataset.hpp"
#include "multicause/dataset_io.hpp"
#include "multicause/errors.hpp"
#include "multicause/parallel.hpp"
#include "multicause/rng.hpp"
#include "multicause/stats.hpp"

namespace multicause {

/// Bernoulli parameters are clamped into [kParamClamp, 1 - kParamClamp]
/// after every M-step.
inline constexpr double kParamClamp = 1e-6;

struct FitConfig {
  int max_iterations = 500;
  double tolerance = 1e-8;  // relative log-likelihood change
  int restarts = 10;
  std::uint64_t seed = 0;
  unsigned threads = 1;  // restarts run concurrently; result is thread-count independent

  void validate() const {
    if (max_iterations < 1) throw config_error("max_iterations must be >= 1");
    if (!(tolerance > 0.0)) throw config_error("tolerance must be positive");
    if (restarts < 1) throw config_error("restarts must be >= 1");
    if (threads < 1) throw config_error("threads must be >= 1");
  }
};

struct FitInfo {
  double loglik = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  int restarts_used = 0;
  int best_restart = -1;
  bool clamped = false;          // some cond entry sits on the clamp bound
  bool degenerate_prior = false; // some class has prior below 1e-8
  // a closed-form single-class refit explains the data nearly as well
  // (likelihood-ratio not significant at the 0.1% level), so the extra
  // classes carry no observable signal
  bool single_class_adequate = false;
  std::vector<double> trace;     // log-likelihood before/after each update
};

struct LatentClassModel {
  std::size_t k = 0;
  std::size_t m = 0;
  std::vector<double> prior;              // k
  std::vector<std::vector<double>> cond;  // k x m, p(A_j=1 | Z=z)
  FitInfo fit;

  void validate() const {
    if (k < 1) throw config_error("model must have k >= 1 classes");
    if (m < 1) throw config_error("model must have m >= 1 treatments");
    if (prior.size() != k || cond.size() != k) throw config_error("model shape mismatch");
    double total = 0.0;
    for (double p : prior) {
      if (p < 0.0) throw config_error("model prior entries must be nonnegative");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-12) throw config_error("model prior must sum to 1");
    for (const auto& row : cond) {
      if (row.size() != m) throw config_error("model cond row length mismatch");
      for (double p : row) {
        if (!(p >= kParamClamp && p <= 1.0 - kParamClamp)) {
          throw config_error("model cond entries must lie in [1e-6, 1-1e-6]");
        }
      }
    }
  }
};

namespace detail {

/// Sum of values accumulated in ascending order; permutation-invariant.
inline double ordered_sum(std::span<double> values) {
  std::sort(values.begin(), values.end());
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

/// Per-class pattern likelihoods L[z*n_patterns + b] = prod_j p or 1-p.
inline std::vector<double> class_pattern_likelihoods(const std::vector<double>& prior,
                                                     const std::vector<std::vector<double>>& cond,
                                                     const PatternCounts& pc) {
  const std::size_t k = prior.size();
  const std::size_t np = pc.bits.size();
  std::vector<double> lik(k * np);
  for (std::size_t z = 0; z < k; ++z) {
    for (std::size_t b = 0; b < np; ++b) {
      double prod = 1.0;
      for (std::size_t j = 0; j < pc.m; ++j) {
        const double p = cond[z][j];
        prod *= ((pc.bits[b] >> j) & 1u) ? p : (1.0 - p);
      }
      lik[z * np + b] = prod;
    }
  }
  return lik;
}

/// Mixture probability per pattern and total log-likelihood.
inline double mixture_loglik(const std::vector<double>& prior, const std::vector<double>& lik,
                             const PatternCounts& pc, std::vector<double>& mix_out) {
  const std::size_t k = prior.size();
  const std::size_t np = pc.bits.size();
  mix_out.assign(np, 0.0);
  std::vector<double> terms(k);
  double ll = 0.0;
  for (std::size_t b = 0; b < np; ++b) {
    for (std::size_t z = 0; z < k; ++z) terms[z] = prior[z] * lik[z * np + b];
    const double mix = ordered_sum(terms);
    mix_out[b] = mix;
    ll += pc.count[b] * std::log(mix);
  }
  return ll;
}

struct EmRun {
  std::vector<double> prior;
  std::vector<std::vector<double>> cond;
  std::vector<double> trace;
  int iterations = 0;
};

inline EmRun run_em(const PatternCounts& pc, std::vector<double> prior,
                    std::vector<std::vector<double>> cond, int max_iterations,
                    double tolerance) {
  const std::size_t k = prior.size();
  const std::size_t np = pc.bits.size();
  EmRun run;
  std::vector<double> mix;
  std::vector<double> lik = class_pattern_likelihoods(prior, cond, pc);
  double ll = mixture_loglik(prior, lik, pc, mix);
  run.trace.push_back(ll);
  std::vector<double> weight(k);
  std::vector<double> on(pc.m);
  for (int iter = 1; iter <= max_iterations; ++iter) {
    // M-step inputs: responsibilities resp[z][b] = prior[z]*lik[z][b]/mix[b].
    for (std::size_t z = 0; z < k; ++z) {
      weight[z] = 0.0;
      on.assign(pc.m, 0.0);
      std::vector<double>& row = cond[z];
      for (std::size_t b = 0; b < np; ++b) {
        const double resp = prior[z] * lik[z * np + b] / mix[b];
        const double wc = pc.count[b] * resp;
        weight[z] += wc;
        for (std::size_t j = 0; j < pc.m; ++j) {
          if ((pc.bits[b] >> j) & 1u) on[j] += wc;
        }
      }
      if (weight[z] > 0.0) {
        for (std::size_t j = 0; j < pc.m; ++j) {
          row[j] = std::clamp(on[j] / weight[z], kParamClamp, 1.0 - kParamClamp);
        }
      }
    }
    for (std::size_t z = 0; z < k; ++z) prior[z] = weight[z] / pc.total;
    run.iterations = iter;
    lik = class_pattern_likelihoods(prior, cond, pc);
    const double ll_new = mixture_loglik(prior, lik, pc, mix);
    run.trace.push_back(ll_new);
    const double change = std::abs(ll_new - ll);
    ll = ll_new;
    if (change <= tolerance * (std::abs(ll) + 1.0)) break;
  }
  run.prior = std::move(prior);
  run.cond = std::move(cond);
  return run;
}

}  // namespace detail

/// Reorders class labels so cond rows are lexicographically ascending, ties
/// broken by prior; stable for fully tied classes. Idempotent.
inline LatentClassModel canonicalize(const LatentClassModel& model) {
  std::vector<std::size_t> order(model.k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (model.cond[a] != model.cond[b]) return model.cond[a] < model.cond[b];
    return model.prior[a] < model.prior[b];
  });
  LatentClassModel out = model;
  for (std::size_t z = 0; z < model.k; ++z) {
    out.prior[z] = model.prior[order[z]];
    out.cond[z] = model.cond[order[z]];
  }
  return out;
}

inline double log_likelihood(const LatentClassModel& model, const PatternCounts& pc) {
  if (model.m != pc.m) throw config_error("model/treatment arity mismatch");
  std::vector<double> mix;
  const auto lik = detail::class_pattern_likelihoods(model.prior, model.cond, pc);
  return detail::mixture_loglik(model.prior, lik, pc, mix);
}

inline double log_likelihood(const LatentClassModel& model, const Dataset& data) {
  return log_likelihood(model, count_patterns(data));
}

inline LatentClassModel fit_em(const PatternCounts& pc, std::size_t k, const FitConfig& config) {
  config.validate();
  if (k < 1) throw config_error("k must be >= 1");
  if (pc.m < 1) throw config_error("dataset has no treatments");
  if (pc.total < static_cast<double>(k)) throw config_error("need n >= k rows");
  if (pc.m < 32 && k > (std::size_t{1} << pc.m)) {
    throw config_error("k = " + std::to_string(k) + " exceeds 2^m = " +
                       std::to_string(std::size_t{1} << pc.m) + " distinct patterns");
  }

  LatentClassModel model;
  model.k = k;
  model.m = pc.m;

  if (k == 1) {
    model.prior = {1.0};
    model.cond.assign(1, std::vector<double>(pc.m, 0.0));
    for (std::size_t j = 0; j < pc.m; ++j) {
      double on = 0.0;
      for (std::size_t b = 0; b < pc.bits.size(); ++b) {
        if ((pc.bits[b] >> j) & 1u) on += pc.count[b];
      }
      model.cond[0][j] = std::clamp(on / pc.total, kParamClamp, 1.0 - kParamClamp);
    }
    model.fit.loglik = log_likelihood(model, pc);
    model.fit.trace = {model.fit.loglik};
  } else {
    std::vector<detail::EmRun> runs(static_cast<std::size_t>(config.restarts));
    parallel_for(runs.size(), config.threads, [&](std::size_t r) {
      Rng rng(derive_seed(config.seed, r));
      std::vector<std::vector<double>> cond(k, std::vector<double>(pc.m));
      for (std::size_t z = 0; z < k; ++z) {
        for (std::size_t j = 0; j < pc.m; ++j) cond[z][j] = rng.uniform(0.05, 0.95);
      }
      std::vector<double> prior = rng.flat_simplex(static_cast<int>(k));
      runs[r] = detail::run_em(pc, std::move(prior), std::move(cond), config.max_iterations,
                               config.tolerance);
    });
    std::size_t best = 0;
    for (std::size_t r = 1; r < runs.size(); ++r) {
      if (runs[r].trace.back() > runs[best].trace.back()) best = r;
    }
    model.prior = runs[best].prior;
    model.cond = runs[best].cond;
    model.fit.loglik = runs[best].trace.back();
    model.fit.iterations = runs[best].iterations;
    model.fit.trace = runs[best].trace;
    model.fit.best_restart = static_cast<int>(best);
    model.fit.restarts_used = config.restarts;
  }

  for (const auto& row : model.cond) {
    for (double p : row) {
      if (p == kParamClamp || p == 1.0 - kParamClamp) model.fit.clamped = true;
    }
  }
  for (double p : model.prior) {
    if (p < 1e-8) model.fit.degenerate_prior = true;
  }
  if (k >= 2) {
    // likelihood-ratio screen against the closed-form single-class fit; EM
    // on one-class data often parks on a flat ridge of superficially
    // distinct classes, so parameter inspection alone cannot detect collapse
    FitConfig one;
    const LatentClassModel m1 = fit_em(pc, 1, one);
    const double lr = std::max(0.0, 2.0 * (model.fit.loglik - m1.fit.loglik));
    const double df = static_cast<double>((k - 1) * (pc.m + 1));
    model.fit.single_class_adequate = chi_squared_sf(lr, df) > 1e-3;
  }
  const LatentClassModel canonical = canonicalize(model);
  canonical.validate();
  return canonical;
}

inline LatentClassModel fit_em(const Dataset& data, std::size_t k, const FitConfig& config) {
  if (!data.treatments_binary()) {
    throw config_error("factor model requires binary {0,1} treatments");
  }
  return fit_em(count_patterns(data), k, config);
}

/// Model-implied probabilities of all 2^m treatment patterns.
inline std::vector<double> model_pattern_probs(const LatentClassModel& model) {
  if (model.m > 20) throw config_error("pattern enumeration guard: m <= 20");
  const std::size_t cells = std::size_t{1} << model.m;
  std::vector<double> probs(cells);
  std::vector<double> terms(model.k);
  for (std::size_t b = 0; b < cells; ++b) {
    for (std::size_t z = 0; z < model.k; ++z) {
      double prod = model.prior[z];
      for (std::size_t j = 0; j < model.m; ++j) {
        const double p = model.cond[z][j];
        prod *= ((b >> j) & 1u) ? p : (1.0 - p);
      }
      terms[z] = prod;
    }
    probs[b] = detail::ordered_sum(terms);
  }
  return probs;
}

inline std::vector<double> posterior_bits(const LatentClassModel& model, std::uint32_t bits) {
  std::vector<double> post(model.k);
  for (std::size_t z = 0; z < model.k; ++z) {
    double prod = model.prior[z];
    for (std::size_t j = 0; j < model.m; ++j) {
      const double p = model.cond[z][j];
      prod *= ((bits >> j) & 1u) ? p : (1.0 - p);
    }
    post[z] = prod;
  }
  std::vector<double> terms = post;
  const double total = detail::ordered_sum(terms);
  for (double& p : post) p /= total;
  return post;
}

inline std::vector<double> posterior(const LatentClassModel& model, std::span<const int> pattern) {
  if (pattern.size() != model.m) throw config_error("pattern length != model m");
  return posterior_bits(model, pattern_to_bits(pattern));
}

/// Per-row posterior simplices plus the posterior-mean class index (the
/// scalar substitute confounder; for k=2 this is P(Z=1|A)). Rows sharing a
/// treatment pattern get bit-identical values: posteriors are computed once
/// per distinct pattern and copied.
struct SubstituteConfounder {
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<double> posteriors;  // row-major n x k
  std::vector<double> scalar;      // n, sum_z z * posterior(z)

  std::span<const double> row(std::size_t i) const {
    return {posteriors.data() + i * k, k};
  }
};

inline SubstituteConfounder substitute_confounder(const LatentClassModel& model,
                                                  const Dataset& data) {
  if (data.m != model.m) throw config_error("dataset/model arity mismatch");
  SubstituteConfounder sc;
  sc.n = data.n;
  sc.k = model.k;
  sc.posteriors.resize(data.n * model.k);
  sc.scalar.resize(data.n);
  std::unordered_map<std::uint32_t, std::size_t> cache_index;
  std::vector<std::vector<double>> cache_post;
  std::vector<double> cache_scalar;
  for (std::size_t i = 0; i < data.n; ++i) {
    const std::uint32_t bits = data.pattern_bits(i);
    auto [it, inserted] = cache_index.try_emplace(bits, cache_post.size());
    if (inserted) {
      cache_post.push_back(posterior_bits(model, bits));
      double mean = 0.0;
      for (std::size_t z = 0; z < model.k; ++z) {
        mean += static_cast<double>(z) * cache_post.back()[z];
      }
      cache_scalar.push_back(mean);
    }
    const auto& post = cache_post[it->second];
    std::copy(post.begin(), post.end(), sc.posteriors.begin() + i * model.k);
    sc.scalar[i] = cache_scalar[it->second];
  }
  return sc;
}

struct PrecheckReport {
  bool pass = true;
  std::vector<std::string> failures;
  std::string note;
};

/// Structural screen, not a proof: counting plus (when a model is given)
/// informativeness and class distinctness. The informativeness threshold is
/// this library's stand-in for faithfulness-type assumptions.
inline PrecheckReport identifiability_precheck(std::size_t k, std::size_t m,
                                               const LatentClassModel* model = nullptr,
                                               double threshold = 0.01) {
  PrecheckReport report;
  report.note =
      "informativeness threshold " + format_double(threshold) +
      " is a heuristic stand-in for faithfulness; passing is necessary, not sufficient";
  if (m < 3) {
    report.pass = false;
    report.failures.push_back("too few treatments: m = " + std::to_string(m) +
                              " < 3 (with m = 2, a k = 2 model has 5 free parameters but the "
                              "joint law of two binary treatments has only 3)");
  }
  if (m < 32 && k * m + (k - 1) > (std::size_t{1} << m) - 1) {
    report.pass = false;
    report.failures.push_back("parameter count " + std::to_string(k * m + k - 1) +
                              " exceeds the " + std::to_string((std::size_t{1} << m) - 1) +
                              " free cells of the treatment-pattern law");
  }
  if (model != nullptr) {
    for (std::size_t j = 0; j < model->m; ++j) {
      double lo = 1.0, hi = 0.0;
      for (std::size_t z = 0; z < model->k; ++z) {
        lo = std::min(lo, model->cond[z][j]);
        hi = std::max(hi, model->cond[z][j]);
      }
      if (hi - lo <= threshold) {
        report.pass = false;
        report.failures.push_back("treatment " + std::to_string(j + 1) +
                                  " uninformative: cond column spread " +
                                  format_double(hi - lo) + " <= " + format_double(threshold));
      }
    }
    for (std::size_t za = 0; za < model->k; ++za) {
      for (std::size_t zb = za + 1; zb < model->k; ++zb) {
        double gap = 0.0;
        for (std::size_t j = 0; j < model->m; ++j) {
          gap = std::max(gap, std::abs(model->cond[za][j] - model->cond[zb][j]));
        }
        if (gap <= threshold) {
          report.pass = false;
          report.failures.push_back("classes " + std::to_string(za) + " and " +
                                    std::to_string(zb) + " indistinguishable: max cond gap " +
                                    format_double(gap) + " <= " + format_double(threshold));
        }
      }
    }
  }
  return report;
}

inline nlohmann::json model_to_json(const LatentClassModel& model) {
  nlohmann::json j;
  j["k"] = model.k;
  j["prior"] = model.prior;
  j["cond"] = model.cond;
  j["loglik"] = model.fit.loglik;
  j["iters"] = model.fit.iterations;
  return j;
}

inline LatentClassModel model_from_json(const nlohmann::json& j) {
  LatentClassModel model;
  model.k = j.at("k").get<std::size_t>();
  model.prior = j.at("prior").get<std::vector<double>>();
  model.cond = j.at("cond").get<std::vector<std::vector<double>>>();
  model.m = model.cond.empty() ? 0 : model.cond[0].size();
  model.fit.loglik = j.at("loglik").get<double>();
  model.fit.iterations = j.at("iters").get<int>();
  model.validate();
  return model;
}

}  // namespace multicause
