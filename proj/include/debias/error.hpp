#pragma once

#include <stdexcept>
#include <string>

namespace debias {

// Every failure the library raises derives from Error. The CLI maps the
// subclasses onto process exit codes (see src/cli.cpp).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    ConfigError(const std::string& field, const std::string& what)
        : Error("invalid config field '" + field + "': " + what), field_(field) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class DataError : public Error {
public:
    using Error::Error;
};

class EmptyInputError : public DataError {
public:
    using DataError::DataError;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class ParseError : public DataError {
public:
    ParseError(const std::string& what, std::string raw) : DataError(what), raw_(std::move(raw)) {}
    const std::string& raw() const noexcept { return raw_; }

private:
    std::string raw_;
};

class SingularDesignError : public DataError {
public:
    using DataError::DataError;
};

class InferenceError : public Error {
public:
    using Error::Error;
};

class TrainingError : public Error {
public:
    using Error::Error;
};

class SplitViolationError : public DataError {
public:
    using DataError::DataError;
};

// Raised by a Forecaster that could not produce a forecast for one round.
class AgentFailure : public Error {
public:
    using Error::Error;
};

class TransportError : public InferenceError {
public:
    using InferenceError::InferenceError;
};

class ProtocolError : public InferenceError {
public:
    using InferenceError::InferenceError;
};

}  // namespace debias
