#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace multicause {

inline double mean(std::span<const double> xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

/// Population variance (divide by n).
inline double variance(std::span<const double> xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double mu = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - mu) * (x - mu);
  return s / static_cast<double>(xs.size());
}

/// Sample standard deviation (divide by n-1); 0 for n < 2.
inline double sample_sd(std::span<const double> xs) {
  const std::size_t n = xs.size();
  if (n < 2) return 0.0;
  const double mu = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - mu) * (x - mu);
  return std::sqrt(s / static_cast<double>(n - 1));
}

namespace detail {

// Regularized upper incomplete gamma Q(a, x). Series for x < a+1,
// modified Lentz continued fraction otherwise.
inline double gamma_q_impl(double a, double x) {
  if (a <= 0.0 || x < 0.0) throw std::domain_error("gamma_q: a > 0 and x >= 0 required");
  if (x == 0.0) return 1.0;
  const double gln = std::lgamma(a);
  if (x < a + 1.0) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int i = 0; i < 1000; ++i) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::fabs(del) < std::fabs(sum) * 1e-16) break;
    }
    const double p = sum * std::exp(-x + a * std::log(x) - gln);
    return 1.0 - p;
  }
  double b = x + 1.0 - a;
  double c = 1.0 / 1e-300;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 1000; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::fabs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - gln) * h;
}

}  // namespace detail

/// P(X > x) for X ~ chi-squared with `df` degrees of freedom.
inline double chi_squared_sf(double x, double df) {
  if (x <= 0.0) return 1.0;
  return detail::gamma_q_impl(df / 2.0, x / 2.0);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Pearson chi-squared test of independence on a 2x2 table (1 df, no
/// continuity correction). `valid` is false when a margin is empty.
struct IndependenceTest {
  double statistic = 0.0;
  double p_value = 1.0;
  double min_expected = 0.0;
  std::array<std::array<double, 2>, 2> counts{};
  std::array<std::array<double, 2>, 2> expected{};
  bool valid = false;
};

inline IndependenceTest chi_squared_independence_2x2(double n00, double n01, double n10,
                                                     double n11) {
  IndependenceTest t;
  t.counts = {{{n00, n01}, {n10, n11}}};
  const double total = n00 + n01 + n10 + n11;
  const double r0 = n00 + n01, r1 = n10 + n11;
  const double c0 = n00 + n10, c1 = n01 + n11;
  if (total <= 0.0 || r0 <= 0.0 || r1 <= 0.0 || c0 <= 0.0 || c1 <= 0.0) return t;
  t.valid = true;
  t.min_expected = std::numeric_limits<double>::infinity();
  const double rows[2] = {r0, r1};
  const double cols[2] = {c0, c1};
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const double e = rows[i] * cols[j] / total;
      const double o = t.counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      t.expected[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = e;
      t.statistic += (o - e) * (o - e) / e;
      t.min_expected = std::min(t.min_expected, e);
    }
  }
  t.p_value = chi_squared_sf(t.statistic, 1.0);
  return t;
}

}  // namespace multicause
