#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace hiertrade {

class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed or inconsistent configuration (bad keys, out-of-range values,
// incompatible option combinations).  CLI exit code 2.
class ConfigError : public Error {
public:
  using Error::Error;
};

// Unusable input data: schema violations, incoherent aggregates, gaps too
// long to fill, non-physical values.  CLI exit code 3.
class DataError : public Error {
public:
  using Error::Error;
};

// A vector that should satisfy the aggregation constraints does not.
class CoherenceError : public Error {
public:
  using Error::Error;
};

// Optimization failed (diverged, produced non-finite parameters, or did not
// converge).  Carries the per-epoch loss trace for post-mortems.
class TrainingError : public Error {
public:
  TrainingError(const std::string& what, std::vector<double> loss_trace = {})
      : Error(what), trace(std::move(loss_trace)) {}

  std::vector<double> trace;
};

}  // namespace hiertrade
