#pragma once

#include <stdexcept>
#include <string>

namespace clustmix {

// Base for all library errors. Subclasses partition failures the way the
// CLI maps them to exit codes: bad config, bad data, infeasible privacy
// configuration, numerical breakdown.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed configuration: unknown JSON keys, out-of-range parameters,
// contradictory flags.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

// Dataset problems: missing files, parse failures, schema mismatches.
// Messages name the offending location (row, column, path).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(what) {}
};

// No (sigma, l) within the search bounds satisfies the privacy target, or a
// clustering constraint cannot be met (k * l_min exceeds the row count).
class InfeasibleError : public Error {
 public:
  explicit InfeasibleError(const std::string& what) : Error(what) {}
};

// Numerical breakdown that survived retries, e.g. a kernel matrix that is
// not positive definite after ridge escalation.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(what) {}
};

}  // namespace clustmix
