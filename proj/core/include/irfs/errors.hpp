#pragma once

#include <stdexcept>
#include <string>

namespace irfs {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor/array shape contract violated. Carries the offending field in the message.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Pixel or parameter value outside its documented range.
class RangeError : public Error {
public:
    using Error::Error;
};

/// Dataset layout, decode, or manifest problems.
class DataError : public Error {
public:
    using Error::Error;
};

/// Checkpoint archive corrupt or incompatible with the requested config.
class CheckpointError : public Error {
public:
    using Error::Error;
};

/// Config file malformed, unknown keys, or invalid values.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Non-finite loss or other numerical failure during optimization.
class NumericError : public Error {
public:
    using Error::Error;
};

} // namespace irfs
