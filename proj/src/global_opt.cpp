#include "aspca/global_opt.hpp"

#include "aspca/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace aspca {

Matrix c_step(const Matrix& v, const Matrix& x, double mu) {
    if (x.rows() != v.cols() || x.cols() != v.cols()) throw InputError("c_step: shape mismatch");
    if (mu < 0.0) throw InputError("c_step: mu must be >= 0");
    return soft_threshold(v * x, mu);
}

// Orthonormalize the zero columns of p against its nonzero ones (and each
// other) starting from coordinate seeds; used only when the SVD factor is
// rank-deficient, where any completion leaves the Procrustes objective
// unchanged.
static void complete_orthonormal(Matrix& p, const std::vector<bool>& have) {
    const std::size_t n = p.rows();
    std::vector<bool> done = have;
    for (std::size_t col = 0; col < p.cols(); ++col) {
        if (done[col]) continue;
        for (std::size_t seed = 0; seed < n; ++seed) {
            std::vector<double> cand(n, 0.0);
            cand[seed] = 1.0;
            for (std::size_t k = 0; k < p.cols(); ++k) {
                if (!done[k]) continue;
                double dot = 0.0;
                for (std::size_t i = 0; i < n; ++i) dot += cand[i] * p(i, k);
                for (std::size_t i = 0; i < n; ++i) cand[i] -= dot * p(i, k);
            }
            double len = 0.0;
            for (double e : cand) len += e * e;
            len = std::sqrt(len);
            if (len > 1e-6) {
                for (std::size_t i = 0; i < n; ++i) p(i, col) = cand[i] / len;
                done[col] = true;
                break;
            }
        }
        if (!done[col]) throw NumericalError("x_step: failed to complete orthogonal factor");
    }
}

Matrix x_step(const Matrix& v, const Matrix& c) {
    if (c.rows() != v.rows() || c.cols() != v.cols()) throw InputError("x_step: shape mismatch");
    const std::size_t d = v.cols();
    const Matrix g = transpose(v) * c; // d x d

    // SVD of g via the spectral decomposition of g^T g: g = P S Q^T with
    // Q, S^2 from sym_eigen and P = g Q S^{-1} on the nonzero part.
    const SymEigen qs = sym_eigen(transpose(g) * g);
    double smax = 0.0;
    for (double ev : qs.eigenvalues) smax = std::max(smax, ev);
    const double cutoff = std::max(smax, 1.0) * 1e-24; // squared singular values

    Matrix pmat(d, d);
    std::vector<bool> have(d, false);
    for (std::size_t k = 0; k < d; ++k) {
        const double ev = qs.eigenvalues[k];
        if (ev <= cutoff) continue;
        const double sigma = std::sqrt(ev);
        std::vector<double> q(d);
        for (std::size_t i = 0; i < d; ++i) q[i] = qs.eigenvectors(i, k);
        const std::vector<double> gq = times(g, q);
        for (std::size_t i = 0; i < d; ++i) pmat(i, k) = gq[i] / sigma;
        have[k] = true;
    }
    complete_orthonormal(pmat, have);

    Matrix x(d, d);
    // X = P Q^T maximizes Tr(X g^T), i.e. minimizes |V - C X^T|_F.
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) s += pmat(i, k) * qs.eigenvectors(j, k);
            x(i, j) = s;
        }
    return x;
}

static double surrogate(const Matrix& v, const Matrix& c, const Matrix& x, double mu) {
    const Matrix fit = v - c * transpose(x);
    const double f = frobenius(fit);
    return f * f + 2.0 * mu * l11_norm(c);
}

// Polar factor C (C^T C)^{-1/2}: the closest orthonormal matrix to C.
// Returns false when C is numerically rank-deficient.
static bool polar_factor(const Matrix& c, Matrix& out) {
    const SymEigen eig = sym_eigen(transpose(c) * c);
    const std::size_t d = c.cols();
    double lmax = 0.0;
    for (double ev : eig.eigenvalues) lmax = std::max(lmax, ev);
    if (lmax <= 0.0 || eig.eigenvalues.front() <= 1e-12 * lmax) return false;

    Matrix inv_sqrt(d, d);
    for (std::size_t k = 0; k < d; ++k) {
        const double w = 1.0 / std::sqrt(eig.eigenvalues[k]);
        for (std::size_t i = 0; i < d; ++i) {
            const double wik = w * eig.eigenvectors(i, k);
            for (std::size_t j = 0; j < d; ++j) {
                inv_sqrt(i, j) += wik * eig.eigenvectors(j, k);
            }
        }
    }
    out = c * inv_sqrt;
    return true;
}

// Exact minimization of the L1 norm of two columns over a plane rotation.
// Between zero crossings the objective is a single sinusoid, so its minimum
// over [-pi/4, pi/4] sits at a crossing or an endpoint; collect and test them.
static double best_pair_angle(const Matrix& b, std::size_t ci, std::size_t cj, double& f_best) {
    const std::size_t p = b.rows();
    std::vector<double> cand;
    cand.push_back(-0.25 * std::numbers::pi);
    cand.push_back(0.25 * std::numbers::pi);
    for (std::size_t k = 0; k < p; ++k) {
        const double a = b(k, ci);
        const double w = b(k, cj);
        // Zeros of cos(t)*a - sin(t)*w and sin(t)*a + cos(t)*w inside the range.
        if (w != 0.0 && std::fabs(a) <= std::fabs(w)) cand.push_back(std::atan(a / w));
        if (a != 0.0 && std::fabs(w) <= std::fabs(a)) cand.push_back(std::atan(-w / a));
    }
    double theta_best = 0.0;
    f_best = 0.0;
    for (std::size_t k = 0; k < p; ++k) f_best += std::fabs(b(k, ci)) + std::fabs(b(k, cj));
    for (double t : cand) {
        const double ct = std::cos(t);
        const double st = std::sin(t);
        double f = 0.0;
        for (std::size_t k = 0; k < p; ++k) {
            const double a = b(k, ci);
            const double w = b(k, cj);
            f += std::fabs(ct * a - st * w) + std::fabs(st * a + ct * w);
        }
        if (f < f_best) {
            f_best = f;
            theta_best = t;
        }
    }
    return theta_best;
}

// Coordinate descent on SO(d): sweep column pairs, applying the exact best
// plane rotation whenever it lowers the L1 norm. Orthonormality and span are
// preserved exactly by construction.
static void rotation_polish(Matrix& b) {
    const std::size_t d = b.cols();
    const std::size_t p = b.rows();
    const int max_sweeps = 60;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool any = false;
        for (std::size_t i = 0; i + 1 < d; ++i) {
            for (std::size_t j = i + 1; j < d; ++j) {
                double f_best;
                double f0 = 0.0;
                for (std::size_t k = 0; k < p; ++k) f0 += std::fabs(b(k, i)) + std::fabs(b(k, j));
                const double theta = best_pair_angle(b, i, j, f_best);
                if (f_best < f0 - 1e-12 * std::max(1.0, f0)) {
                    const double ct = std::cos(theta);
                    const double st = std::sin(theta);
                    for (std::size_t k = 0; k < p; ++k) {
                        const double a = b(k, i);
                        const double w = b(k, j);
                        b(k, i) = ct * a - st * w;
                        b(k, j) = st * a + ct * w;
                    }
                    any = true;
                }
            }
        }
        if (!any) break;
    }
}

static void fix_column_signs(Matrix& b) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < b.rows(); ++i) {
            const double m = std::fabs(b(i, j));
            if (m > best) {
                best = m;
                arg = i;
            }
        }
        if (b(arg, j) < 0.0) {
            for (std::size_t i = 0; i < b.rows(); ++i) b(i, j) = -b(i, j);
        }
    }
}

GlobalOptResult optimize(const Matrix& v, const GlobalOptConfig& cfg) {
    const std::size_t p = v.rows();
    const std::size_t d = v.cols();
    if (d == 0 || p < d) throw InputError("global opt: need p >= d >= 1");
    if (cfg.max_iter < 1) throw InputError("global opt: max_iter must be >= 1");
    if (!(cfg.mu_decay > 0.0 && cfg.mu_decay < 1.0))
        throw InputError("global opt: mu_decay must be in (0,1)");
    if (!(cfg.mu_min > 0.0)) throw InputError("global opt: mu_min must be > 0");

    // Input must already be orthonormal.
    const Matrix gram = transpose(v) * v;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            if (std::fabs(gram(i, j) - (i == j ? 1.0 : 0.0)) > 1e-6)
                throw InputError("global opt: input basis not orthonormal");

    GlobalOptResult res;
    res.basis = v;

    const double l11_v = l11_norm(v);
    double mu = frobenius(v) / l11_v; // |VX|_{1,1} = |V|_{1,1} at X = I
    Matrix x = Matrix::identity(d);
    Matrix c = v;

    for (std::size_t it = 1; it <= cfg.max_iter; ++it) {
        res.iterations = it;
        const double before = surrogate(v, c, x, mu);
        const Matrix c_new = c_step(v, x, mu);
        const Matrix x_new = x_step(v, c_new);
        const double after = surrogate(v, c_new, x_new, mu);
        if (after > before + 1e-9 * std::max(1.0, std::fabs(before))) {
            throw NumericalError("global opt: alternation increased the surrogate objective");
        }
        res.objective_trace.push_back(after);

        const double dc = frobenius(c_new - c);
        const double dx = frobenius(x_new - x);
        c = c_new;
        x = x_new;
        const bool mu_floored = mu <= cfg.mu_min * (1.0 + 1e-12);
        mu = std::max(mu * cfg.mu_decay, cfg.mu_min);
        if (mu_floored && dc <= cfg.tol * std::max(1.0, frobenius(c)) && dx <= cfg.tol) break;
    }

    Matrix b;
    if (!polar_factor(c, b)) {
        res.degenerate = true;
        return res; // basis stays V
    }
    rotation_polish(b);

    // Accept only if the span is preserved and the L1 norm did not grow.
    const Matrix span_err = b * transpose(b) - v * transpose(v);
    if (frobenius(span_err) > 1e-4 || l11_norm(b) > l11_v + 1e-6) {
        return res; // basis stays V, improved stays false
    }
    fix_column_signs(b);
    res.improved = l11_norm(b) < l11_v - 1e-9;
    res.basis = b;
    return res;
}

} // namespace aspca
