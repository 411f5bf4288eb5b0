#pragma once

#include <stdexcept>
#include <string>

namespace mixvi {

// Raised when a recorded forward operation produces NaN/Inf; the fitting
// loop catches it to abort the current step.
class NonFiniteError : public std::runtime_error {
 public:
  explicit NonFiniteError(const std::string& what) : std::runtime_error(what) {}
};

// Raised when a fit diverges (non-finite objective on consecutive steps).
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::string what, std::vector<double> trace)
      : std::runtime_error(std::move(what)), elbo_trace(std::move(trace)) {}
  std::vector<double> elbo_trace;
};

// Malformed input data (dataset rows, config files, weight files).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mixvi
