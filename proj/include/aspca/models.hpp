#pragma once

#include "aspca/global_opt.hpp"
#include "aspca/matrix.hpp"
#include "aspca/sdp.hpp"

#include <vector>

namespace aspca {

enum class Variant { PCA, AspcaF, AspcaB, AspcaFG, AspcaBG };

struct FitConfig {
    Variant variant = Variant::AspcaB;
    std::size_t d = 1;        // abnormal component count
    double lambda = 0.0;      // sparsity weight (ignored by PCA)
    SolverConfig solver;
    GlobalOptConfig global_opt; // used by FG/BG only
};

// Per-extraction-step solver health, kept for reporting.
struct ComponentDiagnostics {
    std::size_t step = 0; // 1-based extraction index
    std::size_t iterations = 0;
    bool converged = true;
    double primal_residual = 0.0;
    double trace_err = 0.0;
    double orth_err = 0.0;
    double min_eig = 0.0;
    // Objective at the PSD iterate minus at the rounded rank-1 point (same
    // sense); large values mean the relaxation was far from rank one.
    double rounding_gap = 0.0;
};

struct SubspaceModel {
    Matrix v_normal;    // p x (p-d)
    Matrix v_abnormal;  // p x d
    double variance_abnormal = 0.0; // sum of v^T A v over abnormal columns
    std::vector<ComponentDiagnostics> fit_diagnostics;
    bool global_opt_applied = false;   // FG/BG: sparser rotation accepted
    bool global_opt_degenerate = false;
};

// Exact eigendecomposition baseline: abnormal = bottom-d eigenvectors
// (ascending variance), normal = the rest (descending variance).
SubspaceModel fit_pca(const Matrix& a, std::size_t d);

// Extract all p components most-significant-first (maximize with deflation),
// then keep the last d as the abnormal basis. lambda/solver from cfg.
SubspaceModel fit_aspca_forward(const Matrix& a, const FitConfig& cfg);

// Extract d components least-significant-first (minimize with deflation);
// the normal basis is recovered from the complement projector's
// eigendecomposition rather than fitted.
SubspaceModel fit_aspca_backward(const Matrix& a, const FitConfig& cfg);

// Dispatch on cfg.variant, applying global sparsity optimization for the
// FG/BG variants. Enforces 1 <= d <= p-1 (the fit_* functions themselves
// also accept d = p, which is occasionally useful for diagnostics).
SubspaceModel fit(const Matrix& a, const FitConfig& cfg);

} // namespace aspca
