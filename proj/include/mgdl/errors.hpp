#pragma once

#include <stdexcept>
#include <string>

namespace mgdl {

/// Shape disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside an operation's mathematical domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A computation produced NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reference to an id outside a table.
class LookupError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// API misuse, e.g. calling backward on a non-scalar.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed input files or inconsistent dataset/checkpoint schema.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public SchemaError {
 public:
  using SchemaError::SchemaError;
};

/// Invalid training / generation configuration. `field` names the culprit.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace mgdl
