#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pdml {

// Root of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Caller violated a precondition (dimension mismatch, bad argument).
class ContractError : public Error {
public:
    using Error::Error;
};

// Input table is missing a required column or is structurally malformed.
class SchemaError : public Error {
public:
    using Error::Error;
};

// A cell could not be read as a finite number.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t row)
        : Error(what), row_(row) {}
    // 1-based data row (the header is row 0).
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

// Inconsistent options, e.g. more folds than observations allow.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Degenerate data: zero treatment residuals, zero-variance noise, ...
class DegenerateError : public Error {
public:
    using Error::Error;
};

// Factorization or solver breakdown.
class NumericalError : public Error {
public:
    using Error::Error;
};

// A nuisance learner failed to fit or predict.
class LearnerError : public Error {
public:
    using Error::Error;
};

// Too many perturbations (or replications) failed.
class SweepError : public Error {
public:
    using Error::Error;
};

// A filtering rule retained no perturbation.
class EmptyFilterError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace pdml
