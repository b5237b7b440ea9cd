#pragma once

#include <stdexcept>
#include <string>

namespace protofed {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shape or size disagreement.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value (bad rate, ratio, enum, preset, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Operation attempted in an invalid state (missing gradient, absent
/// prototype class, degenerate batch, zero-norm vector, ...).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Dataset-level problem: parse failure, schema mismatch, bad split,
/// unsatisfiable size request.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Malformed, truncated or oversized frame; unknown message type.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// Transport session failure (peer closed, socket error, injected fault).
class SessionError : public Error {
 public:
  using Error::Error;
};

/// Metric undefined for the given counts.
class MetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace protofed
