#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace spdelab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid parameter value or parameter combination.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Vector or grid dimensions do not match.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Mode or grid index out of range.
class IndexError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf produced or consumed during evaluation.
class NumericalDomainError : public Error {
public:
    NumericalDomainError(const std::string& what, long index)
        : Error(what + " (index " + std::to_string(index) + ")"), index_(index) {}
    long index() const noexcept { return index_; }

private:
    long index_;
};

/// Noise operator numerically singular, so B(y) cannot be inverted.
class DegeneracyError : public Error {
public:
    using Error::Error;
};

/// Diagnostics attached to a failed implicit step.
struct StepDiagnostics {
    double dt = 0.0;
    double residual = 0.0;
    int iterations = 0;
    int halvings = 0;
};

class StepFailure : public Error {
public:
    StepFailure(const std::string& what, StepDiagnostics diag)
        : Error(what + " (dt=" + std::to_string(diag.dt) +
                ", residual=" + std::to_string(diag.residual) +
                ", iterations=" + std::to_string(diag.iterations) + ")"),
          diag_(diag) {}
    const StepDiagnostics& diagnostics() const noexcept { return diag_; }

private:
    StepDiagnostics diag_;
};

/// Too few usable data points for a regression or estimate.
class InsufficientDataError : public Error {
public:
    using Error::Error;
};

/// Configuration rejected; carries every violation found.
class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<std::string> violations)
        : Error(join(violations)), violations_(std::move(violations)) {}
    const std::vector<std::string>& violations() const noexcept { return violations_; }

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string out = "invalid configuration:";
        for (const auto& s : v) out += "\n  - " + s;
        return out;
    }
    std::vector<std::string> violations_;
};

}  // namespace spdelab
