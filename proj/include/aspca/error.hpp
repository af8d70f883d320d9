#pragma once

#include <stdexcept>
#include <string>

namespace aspca {

// Numerical failure: solver divergence or non-convergence, degenerate
// rank-1 rounding, over-deflated projector. The CLI maps these to exit 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad input: dimension mismatch, schema violation, malformed file.
// The CLI maps these to exit 2.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

} // namespace aspca
