#pragma once

#include <stdexcept>
#include <string>

namespace vpp {

// Malformed input data (corpus lines, checkpoints). Carries a 1-based line
// number when the source is line-oriented, 0 otherwise.
struct ParseError : std::runtime_error {
  int line;
  explicit ParseError(const std::string& msg, int line_number = 0)
      : std::runtime_error(line_number > 0
                               ? "line " + std::to_string(line_number) + ": " + msg
                               : msg),
        line(line_number) {}
};

// Semantically invalid data (missing symbols, out-of-range fold counts, ...).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid model/run configuration (bad family string, r != k where required).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure (non-finite objective, degenerate geometry).
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace vpp
