#pragma once

#include <stdexcept>
#include <string>

namespace ratchet {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid input or configuration. Maps to CLI exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

// A control path violating the ratcheting (nondecreasing) constraint.
class AdmissibilityError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

// Enumeration would exceed the combinatorial budget.
class BudgetError : public ConfigError {
public:
    BudgetError(const std::string& what, double count)
        : ConfigError(what), count_(count) {}
    double count() const noexcept { return count_; }

private:
    double count_;
};

// CFL violation, linear solve failure, non-finite values. Exit code 3.
class NumericalError : public Error {
public:
    using Error::Error;
};

// A coefficient evaluated to a non-finite number.
class ModelError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

// File system and serialization failures. Exit code 4.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace ratchet
