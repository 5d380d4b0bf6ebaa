#ifndef DMN_ERRORS_HPP
#define DMN_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace dmn {

// Base class for all library errors. Everything recoverable is reported
// through one of the concrete types below so callers can map failures to
// exit codes without string matching.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid user input: bad material constants, malformed files, mismatched
// array lengths, out-of-range fractions.
struct InputError : Error {
    using Error::Error;
};

// Both children of a building block carry zero weight; the block must be
// pruned, not evaluated.
struct ZeroBlockError : Error {
    using Error::Error;
};

// Root weight is zero, or one phase parity is entirely inactive.
struct DegenerateNetworkError : Error {
    using Error::Error;
};

// Trained phase-2 volume fraction is 0 or 1; rescaling is undefined.
struct DegeneratePhaseError : Error {
    using Error::Error;
};

// Two parameter sets of different depth were combined.
struct DepthMismatchError : Error {
    using Error::Error;
};

// The 3x3 interface block C_hat_345 is numerically singular
// (condition estimate above 1e12).
struct SingularInterfaceBlockError : Error {
    using Error::Error;
};

// The 3x3 in-plane compliance block of the residual homogenization is
// numerically singular.
struct SingularInPlaneBlockError : Error {
    using Error::Error;
};

// The mask-reduced macroscopic system has no unique solution.
struct SingularRootSystemError : Error {
    using Error::Error;
};

// Loss or gradient became non-finite during training.
struct NonFiniteError : Error {
    using Error::Error;
};

// The online fixed-point loop exhausted max_iter.
struct NoConvergenceError : Error {
    using Error::Error;
};

// Reserved for material laws without a closed-form return mapping; the
// linear-hardening J2 law never throws it.
struct NonConvergedReturnError : Error {
    using Error::Error;
};

} // namespace dmn

#endif
