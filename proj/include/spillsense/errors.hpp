#pragma once

#include <stdexcept>
#include <string>

namespace spillsense {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct OutOfDomainError : Error {
    using Error::Error;
};

struct GridMismatchError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct EmptySpillError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// Step rejected because the advective CFL limit was exceeded. Carries the
// sub-step count that would bring the step back under the limit.
struct CflViolation : Error {
    int suggested_substeps;
    CflViolation(const std::string& what, int substeps)
        : Error(what), suggested_substeps(substeps) {}
};

// Iterative solver failed to reach its tolerance. Carries the last residual.
struct SolverError : Error {
    double residual;
    SolverError(const std::string& what, double res)
        : Error(what), residual(res) {}
};

struct NumericalError : Error {
    using Error::Error;
};

}  // namespace spillsense
