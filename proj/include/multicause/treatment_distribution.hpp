#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "multicause/dataset.hpp"
#include "multicause/dataset_io.hpp"
#include "multicause/errors.hpp"

namespace multicause {

/// Distribution over binary treatment patterns. Either a product of
/// independent Bernoulli marginals or an explicit table over all 2^m
/// patterns (indexed by pattern bits).
class TreatmentDistribution {
 public:
  static TreatmentDistribution product(std::vector<double> marginals) {
    if (marginals.empty()) throw config_error("product distribution needs at least one marginal");
    for (double p : marginals) {
      if (!(p >= 0.0 && p <= 1.0)) {
        throw config_error("product marginal " + format_double(p) + " outside [0,1]");
      }
    }
    TreatmentDistribution d;
    d.m_ = marginals.size();
    d.marginals_ = std::move(marginals);
    return d;
  }

  static TreatmentDistribution table(std::size_t m, std::vector<double> probs) {
    if (m < 1 || m > 20) throw config_error("table distribution supports 1 <= m <= 20");
    if (probs.size() != (std::size_t{1} << m)) {
      throw config_error("table distribution needs exactly 2^m probabilities");
    }
    double total = 0.0;
    for (double p : probs) {
      if (!(p >= 0.0)) throw config_error("table probability " + format_double(p) + " negative");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-12) {
      throw config_error("table probabilities sum to " + format_double(total) + ", expected 1");
    }
    TreatmentDistribution d;
    d.m_ = m;
    d.table_ = std::move(probs);
    return d;
  }

  static TreatmentDistribution point_mass(std::span<const int> pattern) {
    const std::size_t m = pattern.size();
    if (m < 1 || m > 20) throw config_error("point mass supports 1 <= m <= 20");
    std::vector<double> probs(std::size_t{1} << m, 0.0);
    probs[pattern_to_bits(pattern)] = 1.0;
    return table(m, std::move(probs));
  }

  std::size_t m() const { return m_; }
  bool is_product() const { return !marginals_.empty(); }

  /// Probability of the pattern encoded as bits (bit j = A_j).
  double prob_bits(std::uint32_t bits) const {
    if (is_product()) {
      double p = 1.0;
      for (std::size_t j = 0; j < m_; ++j) {
        const double pj = marginals_[j];
        p *= ((bits >> j) & 1u) ? pj : (1.0 - pj);
      }
      return p;
    }
    return table_[bits];
  }

  double prob(std::span<const int> pattern) const {
    if (pattern.size() != m_) throw config_error("pattern length does not match distribution");
    return prob_bits(pattern_to_bits(pattern));
  }

  /// The single supported pattern, when the distribution is a point mass.
  std::optional<std::uint32_t> point_mass_bits() const {
    if (is_product()) {
      std::uint32_t bits = 0;
      for (std::size_t j = 0; j < m_; ++j) {
        if (marginals_[j] == 1.0) {
          bits |= (1u << j);
        } else if (marginals_[j] != 0.0) {
          return std::nullopt;
        }
      }
      return bits;
    }
    std::optional<std::uint32_t> hit;
    for (std::size_t b = 0; b < table_.size(); ++b) {
      if (table_[b] > 0.0) {
        if (hit) return std::nullopt;
        hit = static_cast<std::uint32_t>(b);
      }
    }
    return hit;
  }

  std::string describe() const {
    if (is_product()) {
      std::string s = "prod:";
      for (std::size_t j = 0; j < m_; ++j) {
        if (j > 0) s += ',';
        s += format_double(marginals_[j]);
      }
      return s;
    }
    if (const auto bits = point_mass_bits()) {
      return "point:" + bits_to_string(*bits, m_);
    }
    return "table[m=" + std::to_string(m_) + "]";
  }

  bool operator==(const TreatmentDistribution&) const = default;

 private:
  std::size_t m_ = 0;
  std::vector<double> marginals_;  // product form
  std::vector<double> table_;      // table form, size 2^m
};

/// Table file format: header "pattern,prob", one row per pattern ("101",p).
/// All 2^m patterns must appear exactly once.
inline TreatmentDistribution load_distribution_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open distribution table '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != "pattern,prob") {
    throw parse_error(path + " line 1: expected header 'pattern,prob'");
  }
  std::size_t m = 0;
  std::vector<double> probs;
  std::vector<bool> seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto trimmed = detail::trim(line);
    if (trimmed.empty()) continue;
    auto fields = detail::split_csv_line(trimmed);
    if (fields.size() != 2) {
      throw parse_error(path + " line " + std::to_string(line_no) + ": expected 2 fields");
    }
    const auto pattern = parse_pattern(std::string(detail::trim(fields[0])));
    if (m == 0) {
      m = pattern.size();
      if (m > 20) throw parse_error(path + ": patterns longer than 20 bits unsupported");
      probs.assign(std::size_t{1} << m, 0.0);
      seen.assign(std::size_t{1} << m, false);
    } else if (pattern.size() != m) {
      throw parse_error(path + " line " + std::to_string(line_no) + ": inconsistent pattern length");
    }
    const std::uint32_t bits = pattern_to_bits(pattern);
    if (seen[bits]) {
      throw parse_error(path + " line " + std::to_string(line_no) + ": duplicate pattern '" +
                        pattern_to_string(pattern) + "'");
    }
    seen[bits] = true;
    probs[bits] = parse_double_field(detail::trim(fields[1]), line_no);
  }
  if (m == 0) throw parse_error(path + ": no pattern rows");
  for (std::size_t b = 0; b < seen.size(); ++b) {
    if (!seen[b]) {
      throw parse_error(path + ": missing pattern '" +
                        bits_to_string(static_cast<std::uint32_t>(b), m) + "'");
    }
  }
  return TreatmentDistribution::table(m, std::move(probs));
}

/// Accepts "prod:p1,...,pm" or "table:path.csv".
inline TreatmentDistribution parse_distribution(const std::string& literal) {
  if (literal.rfind("prod:", 0) == 0) {
    std::vector<double> marginals;
    const std::string body = literal.substr(5);
    std::size_t start = 0;
    std::size_t line_no = 0;  // not file-based; reuse numeric parser
    while (start <= body.size()) {
      const std::size_t comma = body.find(',', start);
      const std::string field =
          body.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      marginals.push_back(parse_double_field(field, line_no));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return TreatmentDistribution::product(std::move(marginals));
  }
  if (literal.rfind("table:", 0) == 0) {
    return load_distribution_table(literal.substr(6));
  }
  throw config_error("distribution literal must start with 'prod:' or 'table:', got '" + literal +
                     "'");
}

}  // namespace multicause
