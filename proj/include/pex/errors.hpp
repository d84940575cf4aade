#pragma once

#include <stdexcept>
#include <string>

namespace pex {

// Error taxonomy shared by all modules. The CLI maps these onto exit codes
// (config -> 2, transport -> 3, data/domain -> 4).
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid values or violated preconditions (bad label, zero probability, ...).
struct DomainError : Error {
  using Error::Error;
};

// Malformed input files, schema violations, failed validation.
struct DataError : Error {
  using Error::Error;
};

// Bad or missing configuration.
struct ConfigError : Error {
  using Error::Error;
};

// Remote backend unreachable or protocol failure.
struct TransportError : Error {
  using Error::Error;
};

}  // namespace pex
