#pragma once

#include "aspca/matrix.hpp"

#include <cstdint>
#include <vector>

namespace aspca {

enum class Sense { Maximize, Minimize };

// One deflation step's relaxed problem:
//   Maximize:  max  Tr(A X) - lambda*|X|_{1,1}
//   Minimize:  min  Tr(A X) + lambda*|X|_{1,1}
// subject to X PSD, Tr(X) = 1, Tr(R X) = 0, where R projects onto the span
// of previously extracted components.
struct SdpProblem {
    Matrix a;             // p x p symmetric
    Matrix r;             // p x p projector (R = V_{i-1} V_{i-1}^T), may be zero
    double lambda = 0.0;  // sparsity weight, >= 0
    Sense sense = Sense::Maximize;
};

struct SolverConfig {
    double rho = 1.0;          // ADMM penalty (relative to the unit-scaled A)
    std::size_t max_iter = 5000;
    double tol = 1e-6;
    std::uint64_t seed = 0;    // reserved for randomized restarts; default path is deterministic
};

struct ConstraintViolation {
    double trace_err = 0.0;  // |Tr(X) - 1|
    double orth_err = 0.0;   // |Tr(R X)|
    double min_eig = 0.0;    // smallest eigenvalue of X
};

struct SdpSolution {
    Matrix x;
    double objective = 0.0;        // problem objective at x (original scale)
    double primal_residual = 0.0;  // max_k |Z_k - x|_F consensus disagreement
    ConstraintViolation constraint_violation;
    std::size_t iterations = 0;
    bool converged = false;
    // Max constraint violation of the consensus iterate, one entry per
    // iteration; used to monitor the tail behaviour of the solve.
    std::vector<double> violation_trace;
};

// Orthogonal projection onto {P : Tr(P) = 1, Tr(R P) = 0}. Writes the
// correction as a*I + b*R and solves the 2x2 Gram system. R must be a
// projector with Tr(R) < p; Tr(R) = p means every direction is deflated and
// is reported as an over-deflation error.
Matrix affine_project(const Matrix& s, const Matrix& r);

// Consensus three-block ADMM: Z1 = PSD cone, Z2 = affine trace constraints,
// Z3 = prox of the linear-plus-L1 objective. Deterministic (zero start).
SdpSolution solve(const SdpProblem& problem, const SolverConfig& cfg);

// Rank-1 rounding: dominant eigenvector of X, re-orthogonalized against the
// deflated span (u <- (I-R)u), hard-thresholded at 1e-4, renormalized, then
// re-orthogonalized once more. Throws NumericalError when the dominant
// direction lies (numerically) inside the deflated span.
std::vector<double> extract_leading_vector(const Matrix& x, const Matrix& r);

} // namespace aspca
