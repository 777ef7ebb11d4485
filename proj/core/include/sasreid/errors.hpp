#pragma once

#include <stdexcept>
#include <string>

namespace sasreid {

/// Filesystem or serialized-data problem (unreadable file, malformed record).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration key or value.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite loss or failed gradient verification.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sasreid
