#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace iontherm {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Bad user input: malformed config file, unknown key, violated invariant.
/// Maps to CLI exit code 2.
struct ConfigError : Error {
    using Error::Error;
};

/// One or more type invariants failed; carries every violation by field name.
struct ValidationError : ConfigError {
    std::vector<std::string> violations;

    explicit ValidationError(std::vector<std::string> v)
        : ConfigError(join(v)), violations(std::move(v)) {}

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string msg = "invalid configuration:";
        for (const auto& s : v) msg += "\n  - " + s;
        return msg;
    }
};

/// Math-domain violation on an operation argument.
struct DomainError : Error {
    using Error::Error;
};

/// Runtime failure inside a pipeline stage. Maps to CLI exit code 1.
struct PipelineError : Error {
    using Error::Error;
};

/// Trajectory amplitude exceeded the configured escape bound.
struct IntegrationError : PipelineError {
    using PipelineError::PipelineError;
};

struct FitError : PipelineError {
    using PipelineError::PipelineError;
};

/// Normal equations singular beyond recovery by damping.
struct RankDeficiencyError : FitError {
    using FitError::FitError;
};

/// Input data too small or degenerate for the requested operation.
struct InsufficientDataError : PipelineError {
    using PipelineError::PipelineError;
};

struct IoError : PipelineError {
    using PipelineError::PipelineError;
};

} // namespace iontherm
