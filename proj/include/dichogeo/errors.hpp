#ifndef DICHOGEO_ERRORS_HPP
#define DICHOGEO_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace dichogeo {

/// Parameter outside its admissible domain (non-positive variance, non-finite scale, ...).
class ParameterDomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// A covariance matrix could not be factorized, even after jitter.
class ConditioningError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Iterative or quadrature routine produced a non-finite or unconverged answer.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Dataset shape or content does not match what an operation needs.
class SchemaError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class UnsupportedSizeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed input file. Row numbers are 1-based and count the header as row 1.
class IngestionError : public SchemaError {
public:
  IngestionError(const std::string& what, long row = -1, std::string column = {})
      : SchemaError(format(what, row, column)), row_(row), column_(std::move(column)) {}

  /// Same error with `prefix` in front of the message, e.g. a file name.
  IngestionError prefixed(const std::string& prefix) const {
    IngestionError e(*this);
    static_cast<SchemaError&>(e) = SchemaError(prefix + what());
    return e;
  }

  long row() const noexcept { return row_; }
  const std::string& column() const noexcept { return column_; }

private:
  static std::string format(const std::string& what, long row, const std::string& column) {
    std::string out = what;
    if (row >= 0) out += " (row " + std::to_string(row);
    if (!column.empty()) out += (row >= 0 ? ", column '" : " (column '") + column + "'";
    if (row >= 0 || !column.empty()) out += ")";
    return out;
  }

  long row_;
  std::string column_;
};

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace dichogeo

#endif  // DICHOGEO_ERRORS_HPP
