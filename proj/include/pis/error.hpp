#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pis {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value violates a construction invariant (bad dimensions, bounds, splits).
class ConstructionError : public Error {
 public:
  using Error::Error;
};

/// An operation was called with arguments that break its precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Location of a token inside expression source text (1-based).
struct SourceSpan {
  std::size_t line = 1;
  std::size_t column = 1;
  std::size_t length = 0;

  std::string to_string() const {
    return std::to_string(line) + ":" + std::to_string(column);
  }
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, SourceSpan span)
      : Error(span.to_string() + ": " + what), span_(span) {}

  const SourceSpan& span() const noexcept { return span_; }

 private:
  SourceSpan span_;
};

/// Raised when a field cannot be evaluated at a point (division by zero,
/// square root of a negative number).
class EvalError : public Error {
 public:
  EvalError(const std::string& what, SourceSpan span)
      : Error(span.to_string() + ": " + what), span_(span) {}
  explicit EvalError(const std::string& what) : Error(what) {}

  const SourceSpan& span() const noexcept { return span_; }

 private:
  SourceSpan span_;
};

class IntegrationError : public Error {
 public:
  enum class Kind { domain_exit, step_limit, step_underflow };

  IntegrationError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace pis
