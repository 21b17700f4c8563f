#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "multicause/errors.hpp"

namespace multicause {

/// FNV-1a over whatever settings an estimator feeds in; hex digest goes into
/// report provenance so two reports from identical configurations match.
class DigestBuilder {
 public:
  DigestBuilder& add_bytes(const void* data, std::size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
      hash_ ^= bytes[i];
      hash_ *= 0x100000001B3ULL;
    }
    return *this;
  }
  DigestBuilder& add(std::string_view s) {
    add_bytes(s.data(), s.size());
    const unsigned char sep = 0xFF;
    return add_bytes(&sep, 1);
  }
  DigestBuilder& add(std::uint64_t v) { return add_bytes(&v, sizeof(v)); }
  DigestBuilder& add(std::int64_t v) { return add_bytes(&v, sizeof(v)); }
  DigestBuilder& add(int v) { return add(static_cast<std::int64_t>(v)); }
  DigestBuilder& add(double v) { return add_bytes(&v, sizeof(v)); }
  DigestBuilder& add(bool v) {
    const unsigned char b = v ? 1 : 0;
    return add_bytes(&b, 1);
  }

  std::string hex() const {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    std::uint64_t h = hash_;
    for (int i = 15; i >= 0; --i) {
      out[static_cast<std::size_t>(i)] = digits[h & 0xF];
      h >>= 4;
    }
    return out;
  }

 private:
  std::uint64_t hash_ = 0xCBF29CE484222325ULL;
};

struct EstimateReport {
  std::string estimand;  // "ate", "additive_coefficient", "iv_response", "cf_slope", "delta", ...
  std::string contrast;  // human-readable contrast, e.g. "111 vs 000"
  double estimate = std::numeric_limits<double>::quiet_NaN();
  double se = 0.0;
  int bootstrap_replicates = 0;
  std::map<std::string, double> diagnostics;
  std::vector<std::string> notes;
  std::uint64_t seed = 0;
  std::string config_digest;

  void validate() const {
    if (!(se >= 0.0)) throw config_error("report SE must be >= 0");
    if (bootstrap_replicates < 0) throw config_error("bootstrap replicate count must be >= 0");
  }
};

inline nlohmann::json report_to_json(const EstimateReport& report) {
  nlohmann::json j;
  j["estimand"] = report.estimand;
  j["contrast"] = report.contrast;
  j["estimate"] = report.estimate;
  j["se"] = report.se;
  j["bootstrap_replicates"] = report.bootstrap_replicates;
  j["diagnostics"] = report.diagnostics;
  j["notes"] = report.notes;
  j["seed"] = report.seed;
  j["config_digest"] = report.config_digest;
  return j;
}

}  // namespace multicause
