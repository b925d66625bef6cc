#pragma once

#include <stdexcept>
#include <string>

namespace csd {

// Base of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A caller broke a documented precondition (shape mismatch, empty input, ...).
class ContractViolation : public Error {
public:
    using Error::Error;
};

// Non-finite value or undefined statistic encountered during computation.
class NumericError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class DivergenceError : public NumericError {
public:
    DivergenceError(const std::string& what, int epoch) : NumericError(what), epoch_(epoch) {}
    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

class ArchitectureError : public ContractViolation {
public:
    using ContractViolation::ContractViolation;
};

class DegenerateTrainingError : public ContractViolation {
public:
    using ContractViolation::ContractViolation;
};

class DuplicateKeyError : public ContractViolation {
public:
    using ContractViolation::ContractViolation;
};

// ---- I/O and schema family (CLI exit code 2) ----

class IoError : public Error {
public:
    using Error::Error;
};

class SchemaError : public IoError {
public:
    using IoError::IoError;
};

class ParseError : public IoError {
public:
    ParseError(const std::string& what, std::size_t row) : IoError(what), row_(row) {}
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

class OrderingError : public IoError {
public:
    using IoError::IoError;
};

class InsufficientDataError : public ContractViolation {
public:
    using ContractViolation::ContractViolation;
};

class VersionMismatchError : public IoError {
public:
    using IoError::IoError;
};

class TruncatedFileError : public IoError {
public:
    using IoError::IoError;
};

class ChecksumError : public IoError {
public:
    using IoError::IoError;
};

}  // namespace csd
