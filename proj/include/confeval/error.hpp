#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace confeval {

// Base of every error raised by the library. The CLI maps ConfigError to
// exit code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class IntegrityError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class TrainingError : public Error {
public:
    using Error::Error;
};

class CalibrationError : public Error {
public:
    using Error::Error;
};

class LookupError : public Error {
public:
    using Error::Error;
};

class StateError : public Error {
public:
    using Error::Error;
};

// Grid search refuses to enumerate more than the configured number of trials.
class SearchRefusedError : public Error {
public:
    SearchRefusedError(double trials, double cap)
        : Error("grid search would need " + std::to_string(static_cast<long double>(trials)) +
                " trials, above the cap of " + std::to_string(static_cast<long double>(cap))),
          trials_(trials) {}

    double trials() const noexcept { return trials_; }

private:
    double trials_;
};

}  // namespace confeval
