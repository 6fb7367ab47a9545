#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lfoica {

// Bad shapes, out-of-range scalars, malformed requests.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite loss or gradient. `where` names the Param (or "loss").
class NumericalDivergence : public std::runtime_error {
 public:
  NumericalDivergence(std::string where, long iteration = -1)
      : std::runtime_error(format(where, iteration)), where_(std::move(where)), iteration_(iteration) {}

  const std::string& where() const noexcept { return where_; }
  long iteration() const noexcept { return iteration_; }

 private:
  static std::string format(const std::string& where, long iteration) {
    std::string msg = "numerical divergence: non-finite value in " + where;
    if (iteration >= 0) msg += " at iteration " + std::to_string(iteration);
    return msg;
  }
  std::string where_;
  long iteration_;
};

class SingularMatrix : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateMatrix : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// VAR transition matrix with spectral radius >= 1.
class StabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file; line is 1-based, 0 when not applicable.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Invalid experiment configuration; field is the dotted key at fault.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::runtime_error("config field '" + field + "': " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace lfoica
