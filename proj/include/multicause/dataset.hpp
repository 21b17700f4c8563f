#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "multicause/errors.hpp"

namespace multicause {

/// Observed sample: n x m treatment matrix, outcome vector, optional discrete
/// instrument W in [0, L), optional oracle latent Z (class index or real).
/// Treatments are binary {0,1} for m >= 2; a single treatment column may be
/// real-valued (control-function scenarios).
struct Dataset {
  std::size_t n = 0;
  std::size_t m = 0;
  std::vector<double> treatments;  // row-major, n*m
  std::vector<double> outcome;     // n
  std::vector<int> instrument;     // empty or n
  int instrument_levels = 0;       // L; 0 when no instrument
  std::vector<double> oracle_latent;  // empty or n
  std::vector<std::string> treatment_labels;

  static Dataset with_shape(std::size_t n_rows, std::size_t n_treatments) {
    Dataset d;
    d.n = n_rows;
    d.m = n_treatments;
    d.treatments.assign(n_rows * n_treatments, 0.0);
    d.outcome.assign(n_rows, 0.0);
    d.treatment_labels.reserve(n_treatments);
    for (std::size_t j = 0; j < n_treatments; ++j) {
      d.treatment_labels.push_back("A" + std::to_string(j + 1));
    }
    return d;
  }

  double a(std::size_t i, std::size_t j) const { return treatments[i * m + j]; }
  void set_a(std::size_t i, std::size_t j, double v) { treatments[i * m + j] = v; }

  bool has_instrument() const { return !instrument.empty(); }
  bool has_oracle_latent() const { return !oracle_latent.empty(); }

  bool treatments_binary() const {
    for (double v : treatments) {
      if (v != 0.0 && v != 1.0) return false;
    }
    return true;
  }

  /// Treatment pattern of row i packed into bits (bit j = A_{i,j}).
  std::uint32_t pattern_bits(std::size_t i) const {
    std::uint32_t bits = 0;
    for (std::size_t j = 0; j < m; ++j) {
      const double v = a(i, j);
      if (v == 1.0) {
        bits |= (1u << j);
      } else if (v != 0.0) {
        throw config_error("non-binary treatment value " + std::to_string(v) + " at row " +
                           std::to_string(i + 1));
      }
    }
    return bits;
  }

  void validate() const {
    if (n < 1) throw config_error("dataset must have at least one row");
    if (m < 1) throw config_error("dataset must have at least one treatment column");
    if (treatments.size() != n * m) throw config_error("treatment matrix shape mismatch");
    if (outcome.size() != n) throw config_error("outcome length mismatch");
    if (!instrument.empty()) {
      if (instrument.size() != n) throw config_error("instrument length mismatch");
      for (std::size_t i = 0; i < n; ++i) {
        if (instrument[i] < 0 || instrument[i] >= instrument_levels) {
          throw config_error("instrument value out of [0, L) at row " + std::to_string(i + 1));
        }
      }
    }
    if (!oracle_latent.empty() && oracle_latent.size() != n) {
      throw config_error("oracle latent length mismatch");
    }
    if (m >= 2) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
          const double v = a(i, j);
          if (v != 0.0 && v != 1.0) {
            throw config_error("non-binary treatment value " + std::to_string(v) + " at row " +
                               std::to_string(i + 1) + " (multi-treatment data must be {0,1})");
          }
        }
      }
    }
    if (treatment_labels.size() != m) throw config_error("treatment label count mismatch");
  }

  bool operator==(const Dataset&) const = default;
};

inline std::uint32_t pattern_to_bits(std::span<const int> pattern) {
  std::uint32_t bits = 0;
  for (std::size_t j = 0; j < pattern.size(); ++j) {
    const int v = pattern[j];
    if (v != 0 && v != 1) throw config_error("treatment pattern entries must be 0 or 1");
    if (v == 1) bits |= (1u << j);
  }
  return bits;
}

inline std::vector<int> bits_to_pattern(std::uint32_t bits, std::size_t m) {
  std::vector<int> p(m);
  for (std::size_t j = 0; j < m; ++j) p[j] = static_cast<int>((bits >> j) & 1u);
  return p;
}

inline std::string pattern_to_string(std::span<const int> pattern) {
  std::string s;
  s.reserve(pattern.size());
  for (int v : pattern) s += (v == 1 ? '1' : '0');
  return s;
}

inline std::string bits_to_string(std::uint32_t bits, std::size_t m) {
  std::string s;
  s.reserve(m);
  for (std::size_t j = 0; j < m; ++j) s += ((bits >> j) & 1u) ? '1' : '0';
  return s;
}

/// Parses "101" into a pattern vector (A1=1, A2=0, A3=1).
inline std::vector<int> parse_pattern(const std::string& text) {
  std::vector<int> p;
  p.reserve(text.size());
  for (char c : text) {
    if (c == '0') {
      p.push_back(0);
    } else if (c == '1') {
      p.push_back(1);
    } else {
      throw config_error("treatment pattern must consist of 0/1 digits, got '" + text + "'");
    }
  }
  if (p.empty()) throw config_error("empty treatment pattern");
  return p;
}

/// Distinct binary treatment patterns with multiplicities; order of first
/// appearance. Requires binary treatments and m <= 32.
struct PatternCounts {
  std::size_t m = 0;
  double total = 0.0;
  std::vector<std::uint32_t> bits;
  std::vector<double> count;
};

inline PatternCounts count_patterns(const Dataset& data) {
  if (data.m > 32) throw config_error("pattern counting supports at most 32 treatments");
  PatternCounts pc;
  pc.m = data.m;
  pc.total = static_cast<double>(data.n);
  std::unordered_map<std::uint32_t, std::size_t> index;
  index.reserve(data.n);
  for (std::size_t i = 0; i < data.n; ++i) {
    const std::uint32_t b = data.pattern_bits(i);
    auto [it, inserted] = index.try_emplace(b, pc.bits.size());
    if (inserted) {
      pc.bits.push_back(b);
      pc.count.push_back(0.0);
    }
    pc.count[it->second] += 1.0;
  }
  return pc;
}

}  // namespace multicause
