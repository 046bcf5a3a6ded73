#pragma once

#include <stdexcept>
#include <string>

namespace iconpeft {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor extents do not line up (matmul inner dims, conv batch/channel, ...).
struct ShapeError : Error {
  using Error::Error;
};

// Invalid configuration: bad recipe fields, unknown keys, preset misuse.
struct ConfigError : Error {
  using Error::Error;
};

// Problems with dataset contents (labels out of range, empty splits, ...).
struct DataError : Error {
  using Error::Error;
};

// Non-finite values or a failed numerical verification.
struct NumericError : Error {
  using Error::Error;
};

}  // namespace iconpeft
