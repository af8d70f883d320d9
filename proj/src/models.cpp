#include "aspca/models.hpp"

#include "aspca/error.hpp"

#include <cmath>
#include <string>

namespace aspca {

static void validate_input(const Matrix& a, std::size_t d, std::size_t d_max) {
    if (a.rows() == 0 || a.rows() != a.cols()) throw InputError("fit: A must be square");
    if (d < 1 || d > d_max)
        throw InputError("fit: d out of range (have d=" + std::to_string(d) +
                         ", need 1 <= d <= " + std::to_string(d_max) + ")");
}

static double rayleigh(const Matrix& a, const std::vector<double>& v) {
    const std::vector<double> av = times(a, v);
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += v[i] * av[i];
    return s;
}

static double abnormal_variance(const Matrix& a, const Matrix& v2) {
    double total = 0.0;
    for (std::size_t j = 0; j < v2.cols(); ++j) {
        std::vector<double> col(v2.rows());
        for (std::size_t i = 0; i < v2.rows(); ++i) col[i] = v2(i, j);
        total += rayleigh(a, col);
    }
    return total;
}

SubspaceModel fit_pca(const Matrix& a, std::size_t d) {
    validate_input(a, d, a.rows());
    const std::size_t p = a.rows();
    const SymEigen eig = sym_eigen(a); // ascending

    SubspaceModel m;
    m.v_abnormal = Matrix(p, d);
    m.v_normal = Matrix(p, p - d);
    // Abnormal: bottom d, ascending variance (least-significant first) to
    // match the backward extraction order. Normal: the rest, descending.
    for (std::size_t k = 0; k < d; ++k)
        for (std::size_t i = 0; i < p; ++i) m.v_abnormal(i, k) = eig.eigenvectors(i, k);
    for (std::size_t k = 0; k < p - d; ++k)
        for (std::size_t i = 0; i < p; ++i) m.v_normal(i, k) = eig.eigenvectors(i, p - 1 - k);
    m.variance_abnormal = abnormal_variance(a, m.v_abnormal);
    return m;
}

// Shared deflation loop: extract `steps` components of the given sense,
// recording solver diagnostics per step.
static Matrix extract_components(const Matrix& a, std::size_t steps, double lambda, Sense sense,
                                 const SolverConfig& solver,
                                 std::vector<ComponentDiagnostics>& diags) {
    const std::size_t p = a.rows();
    Matrix v(p, 0);
    Matrix r(p, p); // zero: nothing deflated yet

    for (std::size_t i = 1; i <= steps; ++i) {
        SdpProblem pb;
        pb.a = a;
        pb.r = r;
        pb.lambda = lambda;
        pb.sense = sense;

        SdpSolution sol;
        try {
            sol = solve(pb, solver);
        } catch (const NumericalError& e) {
            throw NumericalError("component " + std::to_string(i) + ": " + e.what());
        }

        std::vector<double> u;
        try {
            u = extract_leading_vector(sol.x, r);
        } catch (const NumericalError& e) {
            throw NumericalError("component " + std::to_string(i) + " rounding: " + e.what());
        }

        ComponentDiagnostics cd;
        cd.step = i;
        cd.iterations = sol.iterations;
        cd.converged = sol.converged;
        cd.primal_residual = sol.primal_residual;
        cd.trace_err = sol.constraint_violation.trace_err;
        cd.orth_err = sol.constraint_violation.orth_err;
        cd.min_eig = sol.constraint_violation.min_eig;
        // Gap between the relaxed objective and the rounded rank-1 point.
        double l11_uut = 0.0;
        for (double ui : u)
            for (double uj : u) l11_uut += std::fabs(ui * uj);
        const double rounded = (sense == Sense::Maximize) ? rayleigh(a, u) - lambda * l11_uut
                                                          : rayleigh(a, u) + lambda * l11_uut;
        cd.rounding_gap = (sense == Sense::Maximize) ? sol.objective - rounded
                                                     : rounded - sol.objective;
        diags.push_back(cd);

        // Grow the loading matrix and the deflation projector R = V V^T.
        Matrix grown(p, v.cols() + 1);
        for (std::size_t c = 0; c < v.cols(); ++c)
            for (std::size_t row = 0; row < p; ++row) grown(row, c) = v(row, c);
        for (std::size_t row = 0; row < p; ++row) grown(row, v.cols()) = u[row];
        v = grown;
        for (std::size_t row = 0; row < p; ++row)
            for (std::size_t col = 0; col < p; ++col) r(row, col) += u[row] * u[col];
        r = symmetrize(r);
    }
    return v;
}

SubspaceModel fit_aspca_forward(const Matrix& a, const FitConfig& cfg) {
    validate_input(a, cfg.d, a.rows());
    const std::size_t p = a.rows();
    const std::size_t d = cfg.d;

    SubspaceModel m;
    // All p components must be extracted: the abnormal ones are defined as
    // the last d in most-significant-first order.
    const Matrix all =
        extract_components(a, p, cfg.lambda, Sense::Maximize, cfg.solver, m.fit_diagnostics);

    m.v_normal = Matrix(p, p - d);
    m.v_abnormal = Matrix(p, d);
    for (std::size_t c = 0; c < p - d; ++c)
        for (std::size_t i = 0; i < p; ++i) m.v_normal(i, c) = all(i, c);
    for (std::size_t c = 0; c < d; ++c)
        for (std::size_t i = 0; i < p; ++i) m.v_abnormal(i, c) = all(i, p - d + c);
    m.variance_abnormal = abnormal_variance(a, m.v_abnormal);
    return m;
}

SubspaceModel fit_aspca_backward(const Matrix& a, const FitConfig& cfg) {
    validate_input(a, cfg.d, a.rows());
    const std::size_t p = a.rows();
    const std::size_t d = cfg.d;

    SubspaceModel m;
    m.v_abnormal =
        extract_components(a, d, cfg.lambda, Sense::Minimize, cfg.solver, m.fit_diagnostics);

    // Normal basis: eigenvectors of the complement projector I - V2 V2^T
    // with eigenvalue 1 (the abnormal span shows up as eigenvalue 0).
    Matrix complement = Matrix::identity(p) - m.v_abnormal * transpose(m.v_abnormal);
    const SymEigen eig = sym_eigen(symmetrize(complement));
    m.v_normal = Matrix(p, p - d);
    std::size_t col = 0;
    for (std::size_t k = 0; k < p && col < p - d; ++k) {
        // ascending eigenvalues: the last p-d are the ~1 ones
        const std::size_t idx = p - 1 - k;
        if (eig.eigenvalues[idx] < 0.5) break;
        for (std::size_t i = 0; i < p; ++i) m.v_normal(i, col) = eig.eigenvectors(i, idx);
        ++col;
    }
    if (col != p - d)
        throw NumericalError("backward fit: complement projector rank mismatch");
    m.variance_abnormal = abnormal_variance(a, m.v_abnormal);
    return m;
}

SubspaceModel fit(const Matrix& a, const FitConfig& cfg) {
    if (a.rows() < 2) throw InputError("fit: need at least 2 features");
    validate_input(a, cfg.d, a.rows() - 1);
    if (!(cfg.lambda >= 0.0)) throw InputError("fit: lambda must be >= 0");

    SubspaceModel m;
    switch (cfg.variant) {
        case Variant::PCA: m = fit_pca(a, cfg.d); break;
        case Variant::AspcaF:
        case Variant::AspcaFG: m = fit_aspca_forward(a, cfg); break;
        case Variant::AspcaB:
        case Variant::AspcaBG: m = fit_aspca_backward(a, cfg); break;
    }

    if (cfg.variant == Variant::AspcaFG || cfg.variant == Variant::AspcaBG) {
        const GlobalOptResult go = optimize(m.v_abnormal, cfg.global_opt);
        m.v_abnormal = go.basis;
        m.global_opt_applied = go.improved;
        m.global_opt_degenerate = go.degenerate;
        m.variance_abnormal = abnormal_variance(a, m.v_abnormal);
    }
    return m;
}

} // namespace aspca
