#pragma once

#include <stdexcept>
#include <string>

namespace multicause {

/// Invalid parameters, malformed configuration, shape mismatches. CLI exit code 1.
class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input files (CSV, TOML, JSON). CLI exit code 1.
class parse_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The requested estimand is not identified from the data at hand:
/// rank failures, collinear designs, support violations. CLI exit code 2.
class identification_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace multicause
