#pragma once

#include <stdexcept>
#include <string>

namespace qbm {

// Error taxonomy, mapped to process exit codes by the CLI:
//   0 ok, 2 usage, 3 numerical, 4 I/O.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid parameter or state handed to an operation.
struct DomainError : NumericalError {
    using NumericalError::NumericalError;
};

// Grid cannot represent the requested state.
struct ResolutionError : NumericalError {
    using NumericalError::NumericalError;
};

// Integrator step produced an out-of-tolerance result.
struct StepSizeError : NumericalError {
    using NumericalError::NumericalError;
};

// Inputs to a comparison do not live on the same grid / time lattice.
struct AlignmentError : NumericalError {
    using NumericalError::NumericalError;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace qbm
