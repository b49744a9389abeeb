#pragma once

#include <stdexcept>
#include <string>

namespace coln {

/// Bad argument to a library call (empty host list, dimension mismatch, ...).
class ArgumentError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid configuration (unknown keys, missing files, inconsistent options).
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Numeric failure: training diverged, non-finite values where finite required.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Round-protocol violation (architecture mismatch, stale round, session full).
class ProtocolError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Dataset ingestion failure.
class IngestError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace coln
