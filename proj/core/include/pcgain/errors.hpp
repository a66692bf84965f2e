#pragma once

#include <stdexcept>
#include <string>

namespace pcgain {

// Invalid hyperparameters, malformed config files, contract violations on call arguments.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Unreadable/ragged/degenerate input data.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// A training loop hit a non-finite loss or gradient. Carries the iteration
// index so the caller can correlate with the emitted loss traces.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(long iteration, const std::string& what)
      : std::runtime_error(what), iteration_(iteration) {}
  long iteration() const { return iteration_; }

 private:
  long iteration_;
};

}  // namespace pcgain
