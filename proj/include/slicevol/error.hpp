#pragma once

#include <stdexcept>
#include <string>

namespace slicevol {

/// Base for all library errors. The message is the short, stable reason
/// string ("grid overflow", "empty segmentation", ...) that callers and
/// tests match on.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Invalid, missing or unreadable input data.
class DataError : public Error {
public:
    using Error::Error;
};

/// Failure while optimizing a model (non-finite loss, shape mismatch at run time).
class TrainingError : public Error {
public:
    using Error::Error;
};

} // namespace slicevol
