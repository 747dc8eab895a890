#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fsqkd {

// Process exit codes used by the command-line front end.
enum class ExitCode : int {
    kOk = 0,
    kConfig = 1,
    kData = 2,
    kBoundFailure = 3,
};

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual ExitCode exit_code() const noexcept = 0;
};

/// Invalid or inconsistent configuration (probabilities, intensities, unknown keys).
class ConfigError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::kConfig; }
};

/// Malformed or inconsistent input data (CSV/JSON parse errors, out-of-range indices).
class DataError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::kData; }
};

/// A statistic is undefined for the given samples (zero counts, zero mean).
class StatisticError : public DataError {
public:
    using DataError::DataError;
};

/// Fried parameter requested for a turbulence-free path (C_n^2 = 0).
class InfiniteResolution : public StatisticError {
public:
    InfiniteResolution() : StatisticError("C_n^2 = 0: Fried parameter is unbounded (infinite resolution)") {}
};

/// The tracking controller was fed a non-finite reading.
class ControllerFault : public DataError {
public:
    using DataError::DataError;
};

/// An error re-raised with the name of the pipeline stage it came from; keeps the exit code.
class StageError : public Error {
public:
    StageError(std::string_view stage, std::string_view message, ExitCode code)
        : Error(std::string(stage) + ": " + std::string(message)), code_(code) {}
    ExitCode exit_code() const noexcept override { return code_; }

private:
    ExitCode code_;
};

/// Caller violated a documented precondition.
class ContractViolation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace fsqkd
