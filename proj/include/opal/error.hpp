#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace opal {

// Base class for all recoverable library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Document cannot be canonicalized (non-finite number, unsupported node).
class CanonicalError : public Error {
 public:
  using Error::Error;
};

// Key handling or signing failure. Distinct from a signature that merely
// fails to verify, which is reported as a boolean.
class CryptoError : public Error {
 public:
  using Error::Error;
};

// An envelope names a signature scheme this build does not implement.
// Verification must surface this as an error, never as "false".
class SchemeError : public Error {
 public:
  using Error::Error;
};

// Malformed wire document (missing field, wrong JSON type, bad enum value).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// DSL source rejected. Carries the 1-based source position.
class DslParseError : public Error {
 public:
  DslParseError(const std::string& what, int line, int column)
      : Error(what + " (line " + std::to_string(line) + ", column " + std::to_string(column) + ")"),
        line(line),
        column(column) {}
  int line;
  int column;
};

// Algorithm evaluation failed (arithmetic overflow, missing binding).
class EvalError : public Error {
 public:
  using Error::Error;
};

// Dataset ingestion rejected. Positions are reported, cell contents are not:
// raw values must not travel through error text.
class IngestError : public Error {
 public:
  IngestError(const std::string& what, std::int64_t row, const std::string& column)
      : Error(what + " (row " + std::to_string(row) + ", column " + (column.empty() ? "?" : column) + ")"),
        row(row),
        column(column) {}
  std::int64_t row;
  std::string column;
};

// Audit storage failure. Callers fail closed: no response may be released
// when its audit record could not be made durable.
class AuditError : public Error {
 public:
  using Error::Error;
};

// Configuration file or keystore problem.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace opal
