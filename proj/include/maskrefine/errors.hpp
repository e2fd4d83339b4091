#pragma once

#include <stdexcept>

namespace maskrefine {

// Base class for every toolkit error.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor/image shape violations.
struct DimError : Error {
    using Error::Error;
};

// Invalid values: non-binary masks, out-of-range parameters.
struct ValueError : Error {
    using Error::Error;
};

// Malformed bytes: PGM headers, checkpoints.
struct ParseError : Error {
    using Error::Error;
};

// Dataset directory problems: missing or mismatched files.
struct IngestError : Error {
    using Error::Error;
};

// Training contract violations: divergence, no improvement.
struct TrainError : Error {
    using Error::Error;
};

} // namespace maskrefine
