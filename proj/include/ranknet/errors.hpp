#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ranknet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of a function (e.g. sigma <= 0).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed input text. `line()` is 1-based, 0 when not applicable.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Input parsed but violates a data invariant (rank permutation, gaps, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, unsigned long long batch_seed)
      : Error(what + " (batch seed " + std::to_string(batch_seed) + ")"), batch_seed_(batch_seed) {}
  unsigned long long batch_seed() const { return batch_seed_; }

 private:
  unsigned long long batch_seed_;
};

/// Not enough history to condition a forecast.
class ContextError : public Error {
 public:
  using Error::Error;
};

/// Requested forecast mode cannot run with the given inputs.
class ModeError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint schema version differs from the one this build understands.
class MigrationError : public Error {
 public:
  using Error::Error;
};

/// A metric is undefined for its inputs (empty set, zero normalizer, ...).
class MetricError : public Error {
 public:
  using Error::Error;
};

/// A requested lap or horizon lies outside the available range.
class RangeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ranknet
