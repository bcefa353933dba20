#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace connkit {

// Base for every error the library throws. `locus` names the field, edge,
// step or span the problem was found at (may be empty).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& message, std::string locus = {})
      : std::runtime_error(locus.empty() ? message : locus + ": " + message),
        locus_(std::move(locus)) {}

  const std::string& locus() const noexcept { return locus_; }

 private:
  std::string locus_;
};

// Malformed bytes. `line` is 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::string locus, std::size_t line = 0)
      : Error(line ? message + " (line " + std::to_string(line) + ")" : message, std::move(locus)),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Well-formed JSON that violates the file schema (unknown enum value,
// unsupported format_version, wrong field type).
class SchemaError : public Error {
 public:
  using Error::Error;
};

class InvalidGraph : public Error {
 public:
  using Error::Error;
};

class DegenerateInput : public Error {
 public:
  using Error::Error;
};

class LengthMismatch : public Error {
 public:
  using Error::Error;
};

class StepMismatch : public Error {
 public:
  using Error::Error;
};

class InsufficientCandidates : public Error {
 public:
  using Error::Error;
};

class MissingAsset : public Error {
 public:
  using Error::Error;
};

// `locus` holds the offending span of the model response.
class UnparseableResponse : public Error {
 public:
  using Error::Error;
};

class UnsolvedPose : public Error {
 public:
  using Error::Error;
};

// Remote model transport failure (HTTP status, connection refused, ...).
class TransportError : public Error {
 public:
  using Error::Error;
};

}  // namespace connkit
