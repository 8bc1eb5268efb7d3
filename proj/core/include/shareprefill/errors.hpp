#pragma once

#include <stdexcept>
#include <string>

namespace shareprefill
{
/// Base class for all errors raised by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Shape mismatch, non-finite entries, out-of-range parameters.
class InvalidInput : public Error
{
public:
  using Error::Error;
};

/// A block mask that leaves some query row with no computed key block.
class DegenerateMask : public Error
{
public:
  using Error::Error;
};

/// Missing (layer, head) in a head dictionary.
class LookupError : public Error
{
public:
  using Error::Error;
};

/// A caller broke a documented precondition between components.
class ContractViolation : public Error
{
public:
  using Error::Error;
};

/// Malformed file contents.
class FormatError : public Error
{
public:
  using Error::Error;
};

/// File carries a schema version this build does not understand.
class VersionError : public FormatError
{
public:
  using FormatError::FormatError;
};

class IoError : public Error
{
public:
  using Error::Error;
};

/// Configuration value out of range or malformed configuration file.
class ConfigError : public InvalidInput
{
public:
  using InvalidInput::InvalidInput;
};

/// Distribution with zero total mass where a normalized one is required.
class EmptyDistribution : public InvalidInput
{
public:
  using InvalidInput::InvalidInput;
};
}  // namespace shareprefill
