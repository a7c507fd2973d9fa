#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sohkit {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text (CSV/JSON). Carries the 1-based line when known.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  explicit ParseError(const std::string& what) : Error(what) {}

  std::size_t line() const { return line_; }

  // Same error with `path: ` prepended, line number preserved.
  ParseError in_file(const std::string& path) const {
    ParseError e(path + ": " + what());
    e.line_ = line_;
    return e;
  }

 private:
  std::size_t line_ = 0;
};

// Well-formed input that violates a data invariant (non-monotone time,
// missing capacity, unpaired cycle, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Caller-supplied arguments outside an operation's domain.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Normal equations without a unique solution.
class SingularSystemError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace sohkit
