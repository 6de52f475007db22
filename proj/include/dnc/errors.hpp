#pragma once

#include <stdexcept>
#include <string>

namespace dnc {

/// Base class for every contract violation raised by the library. The CLI
/// maps these to exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on an argument does not hold (bad dimension, M <= 0, ...).
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// A file on disk does not match its declared layout.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Partitioning produced no usable class.
class EmptyPartition : public Error {
public:
    using Error::Error;
};

/// A pipeline was requested without the components it needs.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A metric or statistic cannot be computed for the given input.
class UndefinedMetric : public Error {
public:
    using Error::Error;
};

}  // namespace dnc
