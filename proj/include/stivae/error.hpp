#pragma once

#include <stdexcept>
#include <string>

namespace stivae {

enum class ErrorKind {
  config,     // bad arguments / configuration
  dimension,  // shape mismatch
  state,      // call sequence violated (e.g. backward without tape)
  data,       // input data unusable (degenerate axis, coverage, empty bins)
  numeric,    // non-finite values, singular systems, divergence
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorKind::config, w) {}
};
struct DimensionError : Error {
  explicit DimensionError(const std::string& w) : Error(ErrorKind::dimension, w) {}
};
struct StateError : Error {
  explicit StateError(const std::string& w) : Error(ErrorKind::state, w) {}
};
struct DataError : Error {
  explicit DataError(const std::string& w) : Error(ErrorKind::data, w) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error(ErrorKind::numeric, w) {}
};

/// Training produced non-finite ELBO values repeatedly.
struct DivergenceError : NumericError {
  DivergenceError(const std::string& w, int epoch, int batch)
      : NumericError(w), epoch(epoch), batch(batch) {}
  int epoch;
  int batch;
};

/// CLI exit code for an error: 1 usage, 2 data, 3 numeric/divergence.
inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
      return 1;
    case ErrorKind::dimension:
    case ErrorKind::data:
    case ErrorKind::state:
      return 2;
    case ErrorKind::numeric:
      return 3;
  }
  return 2;
}

}  // namespace stivae
