#pragma once

#include <stdexcept>
#include <string>

namespace fedeeg {

// Base for every error the library raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes or lengths that do not line up (param layout vs input width, etc).
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value. `field()` names the offending field.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// Violation of the round/message protocol: wrong version, stale round,
// duplicate or missing party, mismatched fixed-point header.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Federation-wide signal has no variance; standardization is undefined.
class ZeroVarianceError : public Error {
 public:
  using Error::Error;
};

// Fixed-point encoding would leave the representable range.
class OverflowError : public Error {
 public:
  using Error::Error;
};

// Metric undefined on the given input (empty set, single-class AUROC).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace fedeeg
