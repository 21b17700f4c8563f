#pragma once

// Instrumental-variable solver for the causal mean response q over binary
// treatment patterns, and the control-function two-stage estimator for a
// single continuous treatment.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "multicause/dataset.hpp"
#include "multicause/dataset_io.hpp"
#include "multicause/errors.hpp"
#include "multicause/linalg.hpp"
#include "multicause/parallel.hpp"
#include "multicause/rng.hpp"
#include "multicause/stats.hpp"

namespace multicause {

/// Empirical system E(Y|W=l) = sum_a q(a) * P[a,l] with P[a,l] = p(A=a|W=l).
struct IVSystem {
  std::size_t m = 0;
  int levels = 0;                    // L
  std::vector<double> response;      // L, E(Y | W = l)
  Eigen::MatrixXd transition;        // 2^m x L, columns sum to 1
  std::vector<double> level_counts;  // L

  void validate() const {
    if (levels < 1) throw config_error("IV system needs at least one instrument level");
    if (transition.rows() != static_cast<Eigen::Index>(std::size_t{1} << m) ||
        transition.cols() != levels) {
      throw config_error("IV system shape mismatch");
    }
    for (int l = 0; l < levels; ++l) {
      if (std::abs(transition.col(l).sum() - 1.0) > 1e-12) {
        throw config_error("IV transition column " + std::to_string(l) + " does not sum to 1");
      }
    }
  }
};

inline IVSystem build_iv_system(const Dataset& data) {
  data.validate();
  if (!data.has_instrument()) throw config_error("dataset has no instrument column");
  if (!data.treatments_binary()) throw config_error("IV solver requires binary treatments");
  if (data.m > 12) throw config_error("IV solver supports at most 12 treatments (2^m guard)");
  IVSystem sys;
  sys.m = data.m;
  sys.levels = data.instrument_levels;
  const std::size_t cells = std::size_t{1} << data.m;
  sys.level_counts.assign(static_cast<std::size_t>(sys.levels), 0.0);
  sys.response.assign(static_cast<std::size_t>(sys.levels), 0.0);
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cells), sys.levels);
  for (std::size_t i = 0; i < data.n; ++i) {
    const int l = data.instrument[i];
    sys.level_counts[static_cast<std::size_t>(l)] += 1.0;
    sys.response[static_cast<std::size_t>(l)] += data.outcome[i];
    counts(static_cast<Eigen::Index>(data.pattern_bits(i)), l) += 1.0;
  }
  for (int l = 0; l < sys.levels; ++l) {
    const double c = sys.level_counts[static_cast<std::size_t>(l)];
    if (c == 0.0) {
      throw config_error("instrument level " + std::to_string(l) + " has no rows");
    }
    sys.response[static_cast<std::size_t>(l)] /= c;
  }
  sys.transition.resize(static_cast<Eigen::Index>(cells), sys.levels);
  for (int l = 0; l < sys.levels; ++l) {
    sys.transition.col(l) = counts.col(l) / sys.level_counts[static_cast<std::size_t>(l)];
  }
  sys.validate();
  return sys;
}

struct IVRankReport {
  bool full_rank = false;
  bool under_determined = false;  // L < 2^m
  std::vector<double> singular_values;
  double ratio = 0.0;  // smallest / largest singular value
  std::string verdict;
};

/// Full rank needs L >= 2^m instrument levels and a well-conditioned
/// transition matrix; identification requires one independent equation per
/// treatment pattern.
inline IVRankReport rank_check(const IVSystem& sys) {
  IVRankReport report;
  const std::size_t cells = std::size_t{1} << sys.m;
  report.singular_values = singular_values(sys.transition);
  if (!report.singular_values.empty() && report.singular_values.front() > 0.0) {
    report.ratio = report.singular_values.back() / report.singular_values.front();
  }
  if (static_cast<std::size_t>(sys.levels) < cells) {
    report.under_determined = true;
    report.verdict = "under-determined: " + std::to_string(sys.levels) +
                     " instrument levels cannot pin down " + std::to_string(cells) +
                     " pattern responses; at least 2^m levels are needed";
    return report;
  }
  if (report.ratio <= 1e-8) {
    report.verdict = "rank deficient: instrument levels barely move the treatment "
                     "distribution (singular value ratio " +
                     format_double(report.ratio) + ")";
    return report;
  }
  report.full_rank = true;
  report.verdict = "full rank";
  return report;
}

/// Count-weighted least squares for q; reduces to the exact solve when the
/// system is square. Throws an identification error when the rank check
/// fails.
inline std::vector<double> solve_q(const IVSystem& sys) {
  const IVRankReport rank = rank_check(sys);
  if (!rank.full_rank) throw identification_error("IV system not solvable: " + rank.verdict);
  const std::size_t cells = std::size_t{1} << sys.m;
  Eigen::MatrixXd x(sys.levels, static_cast<Eigen::Index>(cells));
  Eigen::VectorXd y(sys.levels);
  Eigen::VectorXd w(sys.levels);
  for (int l = 0; l < sys.levels; ++l) {
    x.row(l) = sys.transition.col(l).transpose();
    y[l] = sys.response[static_cast<std::size_t>(l)];
    w[l] = sys.level_counts[static_cast<std::size_t>(l)];
  }
  const Eigen::VectorXd q = weighted_least_squares(x, y, w);
  return std::vector<double>(q.data(), q.data() + q.size());
}

struct IVOptions {
  int bootstrap = 200;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct QSolution {
  std::size_t m = 0;
  std::vector<double> q;   // indexed by pattern bits
  std::vector<double> se;  // bootstrap; zeros when bootstrap = 0
  IVRankReport rank;
  int bootstrap_replicates = 0;
  std::uint64_t seed = 0;
};

/// Build, rank-check, solve, and attach bootstrap standard errors from row
/// resampling.
inline QSolution estimate_iv(const Dataset& data, const IVOptions& options = {}) {
  const IVSystem sys = build_iv_system(data);
  QSolution sol;
  sol.m = sys.m;
  sol.rank = rank_check(sys);
  sol.q = solve_q(sys);
  sol.seed = options.seed;
  sol.bootstrap_replicates = options.bootstrap;
  sol.se.assign(sol.q.size(), 0.0);
  if (options.bootstrap > 0) {
    const std::size_t cells = sol.q.size();
    std::vector<std::vector<double>> draws(static_cast<std::size_t>(options.bootstrap));
    parallel_for(draws.size(), options.threads, [&](std::size_t b) {
      Rng rng(derive_seed(options.seed, b));
      Dataset resampled = Dataset::with_shape(data.n, data.m);
      resampled.instrument.assign(data.n, 0);
      resampled.instrument_levels = data.instrument_levels;
      for (std::size_t i = 0; i < data.n; ++i) {
        const std::size_t pick = rng.uniform_index(data.n);
        for (std::size_t j = 0; j < data.m; ++j) resampled.set_a(i, j, data.a(pick, j));
        resampled.outcome[i] = data.outcome[pick];
        resampled.instrument[i] = data.instrument[pick];
      }
      draws[b] = solve_q(build_iv_system(resampled));
    });
    for (std::size_t c = 0; c < cells; ++c) {
      std::vector<double> column(draws.size());
      for (std::size_t b = 0; b < draws.size(); ++b) column[b] = draws[b][c];
      sol.se[c] = sample_sd(column);
    }
  }
  return sol;
}

struct CFOptions {
  int bootstrap = 200;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Second stage uses the fixed basis [1, A, A^2, C, C^2, A*C].
struct ControlFunctionFit {
  std::vector<double> control;             // n, C_i in [0,1]
  std::vector<double> coef;                // 6 second-stage coefficients
  std::vector<std::string> coef_names;
  std::vector<std::size_t> stratum_sizes;  // per instrument level
  double mean_control = 0.0;
  bool small_stratum_warning = false;      // some stratum has fewer than 10 rows
  int bootstrap_replicates = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> notes;
  // per-bootstrap-replicate (coef, mean control), for contrast SEs
  std::vector<std::vector<double>> boot_coef;
  std::vector<double> boot_mean_control;

  /// Average effect of moving A from a0 to a1, averaging the fitted surface
  /// over the empirical control distribution.
  double ate(double a1, double a0) const {
    return ate_from(coef, mean_control, a1, a0);
  }

  double ate_se(double a1, double a0) const {
    if (boot_coef.empty()) return 0.0;
    std::vector<double> draws(boot_coef.size());
    for (std::size_t b = 0; b < boot_coef.size(); ++b) {
      draws[b] = ate_from(boot_coef[b], boot_mean_control[b], a1, a0);
    }
    return sample_sd(draws);
  }

  static double ate_from(const std::vector<double>& c, double cbar, double a1, double a0) {
    // f(a, C) = c0 + c1 a + c2 a^2 + c3 C + c4 C^2 + c5 aC; C terms cancel in
    // the contrast except through the interaction
    return c[1] * (a1 - a0) + c[2] * (a1 * a1 - a0 * a0) + c[5] * (a1 - a0) * cbar;
  }
};

namespace detail {

/// Midrank control values: within each instrument stratum, row with the
/// i-th smallest treatment value gets (i - 0.5) / n_stratum. Ties broken by
/// row order, so the multiset per stratum is exactly {(i-0.5)/n_s}.
inline std::vector<double> midrank_control(std::span<const double> a,
                                           std::span<const int> w, int levels,
                                           std::vector<std::size_t>* sizes_out) {
  const std::size_t n = a.size();
  std::vector<std::vector<std::size_t>> strata(static_cast<std::size_t>(levels));
  for (std::size_t i = 0; i < n; ++i) {
    strata[static_cast<std::size_t>(w[i])].push_back(i);
  }
  std::vector<double> control(n, 0.0);
  if (sizes_out) sizes_out->assign(static_cast<std::size_t>(levels), 0);
  for (std::size_t l = 0; l < strata.size(); ++l) {
    auto& rows = strata[l];
    if (sizes_out) (*sizes_out)[l] = rows.size();
    if (rows.empty()) continue;
    std::stable_sort(rows.begin(), rows.end(),
                     [&](std::size_t x, std::size_t y) { return a[x] < a[y]; });
    const double ns = static_cast<double>(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      control[rows[r]] = (static_cast<double>(r) + 0.5) / ns;
    }
  }
  return control;
}

inline Eigen::VectorXd cf_second_stage(std::span<const double> a, std::span<const double> c,
                                       std::span<const double> y) {
  NormalEquations eq(6);
  double row[6];
  for (std::size_t i = 0; i < a.size(); ++i) {
    row[0] = 1.0;
    row[1] = a[i];
    row[2] = a[i] * a[i];
    row[3] = c[i];
    row[4] = c[i] * c[i];
    row[5] = a[i] * c[i];
    eq.add(row, y[i]);
  }
  return eq.solve();
}

}  // namespace detail

inline ControlFunctionFit control_function_fit(const Dataset& data,
                                               const CFOptions& options = {}) {
  data.validate();
  if (data.m != 1) throw config_error("control function requires a single treatment column");
  if (!data.has_instrument()) throw config_error("dataset has no instrument column");

  ControlFunctionFit fit;
  fit.coef_names = {"intercept", "A", "A^2", "C", "C^2", "A*C"};
  fit.control = detail::midrank_control(data.treatments, data.instrument,
                                        data.instrument_levels, &fit.stratum_sizes);
  for (std::size_t l = 0; l < fit.stratum_sizes.size(); ++l) {
    if (fit.stratum_sizes[l] < 2) {
      throw config_error("instrument stratum " + std::to_string(l) + " has " +
                         std::to_string(fit.stratum_sizes[l]) +
                         " rows; at least 2 are needed for a control value");
    }
    if (fit.stratum_sizes[l] < 10) fit.small_stratum_warning = true;
  }
  if (fit.small_stratum_warning) {
    fit.notes.push_back("some instrument stratum has fewer than 10 rows; control values are "
                        "coarse there");
  }
  const Eigen::VectorXd coef =
      detail::cf_second_stage(data.treatments, fit.control, data.outcome);
  fit.coef.assign(coef.data(), coef.data() + coef.size());
  fit.mean_control = mean(fit.control);
  fit.seed = options.seed;
  fit.bootstrap_replicates = options.bootstrap;
  if (options.bootstrap > 0) {
    fit.boot_coef.resize(static_cast<std::size_t>(options.bootstrap));
    fit.boot_mean_control.assign(static_cast<std::size_t>(options.bootstrap), 0.0);
    parallel_for(fit.boot_coef.size(), options.threads, [&](std::size_t b) {
      Rng rng(derive_seed(options.seed, b));
      std::vector<double> a(data.n), y(data.n);
      std::vector<int> w(data.n);
      for (std::size_t i = 0; i < data.n; ++i) {
        const std::size_t pick = rng.uniform_index(data.n);
        a[i] = data.treatments[pick];
        y[i] = data.outcome[pick];
        w[i] = data.instrument[pick];
      }
      // control values are recomputed inside each resample so the SE
      // reflects first-stage estimation error too
      const auto c = detail::midrank_control(a, w, data.instrument_levels, nullptr);
      const Eigen::VectorXd bc = detail::cf_second_stage(a, c, y);
      fit.boot_coef[b].assign(bc.data(), bc.data() + bc.size());
      fit.boot_mean_control[b] = mean(c);
    });
  }
  return fit;
}

struct CFOverlapReport {
  int bins = 10;
  std::vector<int> bin_index;      // nonempty bin ids, ascending
  std::vector<double> coverage;    // per nonempty bin: fraction of marginal C
                                   // decile intervals its C-range intersects
  std::vector<double> spread;      // per nonempty bin: C-range width
  std::vector<double> null_width;  // per nonempty bin: the bin's sample share,
                                   // which is the C-range a control that is a
                                   // deterministic function of A would have
  std::vector<int> flagged;        // degenerate bins
  bool pass = true;
  std::vector<std::string> notes;
};

/// Flags treatment-value bins whose control values concentrate on a narrow
/// slice of the marginal control distribution. A constant (or irrelevant)
/// instrument makes C a deterministic function of A, so within any bin the
/// C-range shrinks to the bin's own quantile width and gets flagged. A bin is
/// flagged only when its C-range is narrow in absolute terms (covers < 80% of
/// the marginal C deciles) AND no wider than that deterministic-in-A width;
/// extreme treatment values force extreme controls even under a strong
/// instrument, so an absolute criterion alone would flag healthy tails.
inline CFOverlapReport cf_overlap_check(const ControlFunctionFit& fit, const Dataset& data,
                                        int bins = 10) {
  if (bins < 1) throw config_error("cf_overlap_check needs bins >= 1");
  if (fit.control.size() != data.n) throw config_error("fit/dataset size mismatch");
  CFOverlapReport report;
  report.bins = bins;

  std::vector<double> sorted_c = fit.control;
  std::sort(sorted_c.begin(), sorted_c.end());
  const std::size_t n = sorted_c.size();
  std::vector<double> boundary(11);
  for (int q = 0; q <= 10; ++q) {
    const std::size_t idx =
        std::min(n - 1, static_cast<std::size_t>(q) * n / 10);
    boundary[static_cast<std::size_t>(q)] = sorted_c[idx];
  }
  boundary[10] = sorted_c[n - 1];

  const auto [amin_it, amax_it] =
      std::minmax_element(data.treatments.begin(), data.treatments.end());
  const double amin = *amin_it, amax = *amax_it;
  const double width = amax - amin;
  std::vector<double> lo(static_cast<std::size_t>(bins), 1.0);
  std::vector<double> hi(static_cast<std::size_t>(bins), 0.0);
  std::vector<std::size_t> count(static_cast<std::size_t>(bins), 0);
  for (std::size_t i = 0; i < n; ++i) {
    int b = width == 0.0 ? 0
                         : static_cast<int>(static_cast<double>(bins) *
                                            (data.treatments[i] - amin) / width);
    b = std::clamp(b, 0, bins - 1);
    const auto bi = static_cast<std::size_t>(b);
    lo[bi] = std::min(lo[bi], fit.control[i]);
    hi[bi] = std::max(hi[bi], fit.control[i]);
    ++count[bi];
  }
  for (int b = 0; b < bins; ++b) {
    const auto bi = static_cast<std::size_t>(b);
    if (count[bi] == 0) continue;
    int covered = 0;
    for (int q = 0; q < 10; ++q) {
      const double qlo = boundary[static_cast<std::size_t>(q)];
      const double qhi = boundary[static_cast<std::size_t>(q + 1)];
      if (lo[bi] <= qhi && hi[bi] >= qlo && qlo < qhi) ++covered;
      if (qlo == qhi && lo[bi] <= qlo && hi[bi] >= qhi) ++covered;  // degenerate decile
    }
    const double cov = covered / 10.0;
    const double width_c = hi[bi] - lo[bi];
    const double share = static_cast<double>(count[bi]) / static_cast<double>(n);
    report.bin_index.push_back(b);
    report.coverage.push_back(cov);
    report.spread.push_back(width_c);
    report.null_width.push_back(share);
    if (count[bi] < 3) {
      report.notes.push_back("treatment bin " + std::to_string(b) +
                             " has fewer than 3 rows; spread not assessed");
      continue;
    }
    if (cov < 0.8 && width_c < 2.0 * share) {
      report.flagged.push_back(b);
      report.pass = false;
    }
  }
  if (report.bin_index.size() < static_cast<std::size_t>(bins)) {
    report.notes.push_back("some treatment bins are empty and were skipped");
  }
  return report;
}

}  // namespace multicause
