#pragma once

#include <stdexcept>
#include <string>

namespace deepvol {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A price lies outside (or numerically on) the no-arbitrage band, so no
// implied volatility exists for it.
struct PriceOutOfBounds : Error {
    using Error::Error;
};

// An iterative solver hit its iteration cap without meeting its tolerance.
struct NoConvergence : Error {
    using Error::Error;
};

// Adaptive quadrature failed to reach the requested tolerance within its
// refinement budget.
struct QuadratureNotConverged : Error {
    using Error::Error;
};

// A covariance matrix failed to factorize even after jitter.
struct CovarianceNotPD : Error {
    using Error::Error;
};

// A serialized file is malformed, truncated, or fails its checksum.
struct FileFormatError : Error {
    using Error::Error;
};

// A text input (CSV/JSON) could not be parsed; the message carries the
// offending line number.
struct ParseError : Error {
    using Error::Error;
};

// Every quote was removed by the liquidity filter.
struct EmptyAfterFilter : Error {
    using Error::Error;
};

// Rejection sampling failed to land inside the requested bounds.
struct RejectionStall : Error {
    using Error::Error;
};

// A training loss became NaN or infinite; the message carries the epoch and
// batch where it happened.
struct NonFiniteLoss : Error {
    using Error::Error;
};

// A serialized file declares a format version this build cannot read.
struct UnsupportedVersion : Error {
    using Error::Error;
};

// An undamped normal-equation system is rank deficient.
struct SingularSystem : Error {
    using Error::Error;
};

// A residual evaluation produced NaN or infinity.
struct NonFiniteResidual : Error {
    using Error::Error;
};

// The MCMC ensemble stopped moving: acceptance fell below 1% over a
// 100-step window.
struct AllWalkersStuck : Error {
    using Error::Error;
};

}  // namespace deepvol
