#pragma once

#include <stdexcept>
#include <string>

namespace confact {

// Invalid parameters or configuration (bad alpha, unknown preset, ...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (records, artifacts, reports).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace confact
