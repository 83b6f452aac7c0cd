#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace coa {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad hyperparameter or malformed run configuration.
class InvalidConfigError : public Error {
public:
    using Error::Error;
};

// Array shapes/dimensions do not line up.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Caller passed an unusable input value (empty text, empty pool, ...).
class InputError : public Error {
public:
    using Error::Error;
};

// A model backend failed; `attempts` records how many tries were made.
class BackendError : public Error {
public:
    BackendError(const std::string& what, int attempts = 1)
        : Error(what), attempts_(attempts) {}
    int attempts() const { return attempts_; }

private:
    int attempts_;
};

// Backend lacks a required capability (e.g. no gradient access).
class CapabilityError : public Error {
public:
    using Error::Error;
};

// Fused embedding collapsed to the zero vector.
class DegenerateFusionError : public Error {
public:
    using Error::Error;
};

// Judge response could not be parsed even after retries.
class JudgeParseError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Config validation error carrying every offending key path.
class ValidationError : public Error {
public:
    ValidationError(const std::string& what, std::vector<std::string> keys)
        : Error(what), keys_(std::move(keys)) {}
    const std::vector<std::string>& keys() const { return keys_; }

private:
    std::vector<std::string> keys_;
};

}  // namespace coa
