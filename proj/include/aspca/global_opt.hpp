#pragma once

#include "aspca/matrix.hpp"

#include <vector>

namespace aspca {

struct GlobalOptConfig {
    std::size_t max_iter = 200;
    double mu_decay = 0.9;
    double mu_min = 1e-6;
    double tol = 1e-8;
};

struct GlobalOptResult {
    Matrix basis;       // p x d orthonormal, same span as the input
    bool improved = false;    // false: gate failed or no L1 gain; basis == input
    bool degenerate = false;  // rank-deficient candidate at the polar step
    std::size_t iterations = 0;
    // Surrogate objective |V - C X^T|_F^2 + 2 mu |C|_{1,1} after each
    // alternation (evaluated at that iteration's mu).
    std::vector<double> objective_trace;
};

// Sparsest-basis search over the fixed span of V (orthonormal p x d):
// alternate soft-thresholding (c_step) and orthogonal Procrustes (x_step)
// with annealed mu, then descend the L1 norm directly with pairwise column
// rotations, and orthonormalize via the polar factor. The result is accepted
// only if it spans the same subspace (|BB^T - VV^T|_F <= 1e-4) without
// increasing |.|_{1,1}; otherwise V is returned unchanged.
GlobalOptResult optimize(const Matrix& v, const GlobalOptConfig& cfg);

// argmin_C |V - C X^T|_F^2 + 2 mu |C|_{1,1} = soft_threshold(V X, mu)
// (X orthogonal makes the fit term equal |V X - C|_F^2 entrywise).
Matrix c_step(const Matrix& v, const Matrix& x, double mu);

// argmin_{X orthogonal} |V - C X^T|_F via the orthogonal Procrustes solution
// X = P Q^T from the SVD V^T C = P S Q^T. Rank-deficient directions are
// completed arbitrarily (objective unaffected).
Matrix x_step(const Matrix& v, const Matrix& c);

} // namespace aspca
