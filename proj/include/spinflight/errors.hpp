#pragma once

#include <stdexcept>
#include <string>

namespace spinflight {

/// Base class for all faults raised by this library.
struct error : std::runtime_error {
  explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed configuration (unknown keys, bad values). CLI exit code 2.
struct config_error : error {
  using error::error;
};

/// Bad input data (files, trajectories, settings). CLI exit code 3.
struct data_error : error {
  using error::error;
};

/// A caller violated an operation's precondition.
struct contract_error : data_error {
  using data_error::data_error;
};

/// Numerical failure: singular systems, runaway simulation, non-finite
/// values. CLI exit code 4.
struct numeric_error : error {
  using error::error;
};

}  // namespace spinflight
