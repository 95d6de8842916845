#pragma once

#include <stdexcept>
#include <string>

namespace gridjac {

//! Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConnectivityError : Error { using Error::Error; };
struct ParseError        : Error { using Error::Error; };
struct LookupError       : Error { using Error::Error; };
struct DimensionError    : Error { using Error::Error; };
struct RangeError        : Error { using Error::Error; };
struct NumericalError    : Error { using Error::Error; };
struct InsufficientData  : Error { using Error::Error; };
struct NoTLSSolution     : Error { using Error::Error; };
struct DegenerateSeries  : Error { using Error::Error; };
struct MetricError       : Error { using Error::Error; };
struct TIFailure         : Error { using Error::Error; };

struct SingularJacobian : Error { using Error::Error; };

//! Carries the per-grid-point failure of the spectral root search.
struct RootSelectionError : Error {
    double lambda;
    explicit RootSelectionError(double lam, const std::string& what)
        : Error(what), lambda(lam) {}
};

} // namespace gridjac
