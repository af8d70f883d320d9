#include "aspca/matrix.hpp"

#include "aspca/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace aspca {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

void Matrix::require_finite(const char* what) const {
    for (double v : data_) {
        if (!std::isfinite(v)) {
            throw NumericalError(std::string(what) + ": non-finite entry");
        }
    }
}

static void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw InputError(std::string(op) + ": shape mismatch");
    }
}

Matrix operator+(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "matrix add");
    Matrix r = a;
    for (std::size_t k = 0; k < r.data().size(); ++k) r.data()[k] += b.data()[k];
    return r;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "matrix subtract");
    Matrix r = a;
    for (std::size_t k = 0; k < r.data().size(); ++k) r.data()[k] -= b.data()[k];
    return r;
}

Matrix operator*(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw InputError("matrix multiply: shape mismatch");
    Matrix r(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) {
                r(i, j) += aik * b(k, j);
            }
        }
    }
    return r;
}

Matrix operator*(double s, const Matrix& a) {
    Matrix r = a;
    for (double& v : r.data()) v *= s;
    return r;
}

Matrix transpose(const Matrix& a) {
    Matrix r(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) r(j, i) = a(i, j);
    return r;
}

std::vector<double> times(const Matrix& a, const std::vector<double>& x) {
    if (a.cols() != x.size()) throw InputError("matrix-vector multiply: shape mismatch");
    std::vector<double> y(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * x[j];
        y[i] = s;
    }
    return y;
}

std::vector<double> transpose_times(const Matrix& a, const std::vector<double>& x) {
    if (a.rows() != x.size()) throw InputError("transposed matrix-vector multiply: shape mismatch");
    std::vector<double> y(a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        for (std::size_t j = 0; j < a.cols(); ++j) y[j] += a(i, j) * xi;
    }
    return y;
}

double trace(const Matrix& a) {
    if (a.rows() != a.cols()) throw InputError("trace: matrix not square");
    double t = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) t += a(i, i);
    return t;
}

double max_abs(const Matrix& a) {
    double m = 0.0;
    for (double v : a.data()) m = std::max(m, std::fabs(v));
    return m;
}

double inner(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "frobenius inner product");
    double s = 0.0;
    for (std::size_t k = 0; k < a.data().size(); ++k) s += a.data()[k] * b.data()[k];
    return s;
}

double l11_norm(const Matrix& a) {
    double s = 0.0;
    for (double v : a.data()) s += std::fabs(v);
    return s;
}

std::size_t card_above(const Matrix& a, double threshold) {
    std::size_t n = 0;
    for (double v : a.data())
        if (std::fabs(v) > threshold) ++n;
    return n;
}

double frobenius(const Matrix& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return std::sqrt(s);
}

Matrix symmetrize(const Matrix& a) {
    if (a.rows() != a.cols()) throw InputError("symmetrize: matrix not square");
    Matrix r(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) r(i, j) = 0.5 * (a(i, j) + a(j, i));
    return r;
}

Matrix soft_threshold(const Matrix& a, double t) {
    Matrix r = a;
    for (double& v : r.data()) {
        if (v > t) v -= t;
        else if (v < -t) v += t;
        else v = 0.0;
    }
    return r;
}

Matrix covariance(const Matrix& d) {
    Matrix c(d.cols(), d.cols());
    // D^T D accumulated column-pair-wise; symmetric by construction.
    for (std::size_t j = 0; j < d.cols(); ++j) {
        for (std::size_t k = j; k < d.cols(); ++k) {
            double s = 0.0;
            for (std::size_t i = 0; i < d.rows(); ++i) s += d(i, j) * d(i, k);
            c(j, k) = s;
            c(k, j) = s;
        }
    }
    return c;
}

// One cyclic Jacobi sweep: annihilate each off-diagonal pair (p,q) in row
// order with a plane rotation, accumulating the rotations into v.
static void jacobi_sweep(Matrix& a, Matrix& v) {
    const std::size_t n = a.rows();
    for (std::size_t p = 0; p + 1 < n; ++p) {
        for (std::size_t q = p + 1; q < n; ++q) {
            const double apq = a(p, q);
            if (apq == 0.0) continue;
            // Rotation angle from the standard stable formulas
            // (Golub & Van Loan, sec. 8.5): t = tan(theta) solves
            // t^2 + 2t*tau - 1 = 0 with tau = (aqq - app) / (2 apq).
            const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
            double t;
            if (tau >= 0.0) t = 1.0 / (tau + std::sqrt(1.0 + tau * tau));
            else t = -1.0 / (-tau + std::sqrt(1.0 + tau * tau));
            const double c = 1.0 / std::sqrt(1.0 + t * t);
            const double s = t * c;

            // Update rows/columns p and q of the symmetric work matrix.
            for (std::size_t k = 0; k < n; ++k) {
                if (k == p || k == q) continue;
                const double akp = a(k, p);
                const double akq = a(k, q);
                a(k, p) = a(p, k) = c * akp - s * akq;
                a(k, q) = a(q, k) = s * akp + c * akq;
            }
            const double app = a(p, p);
            const double aqq = a(q, q);
            a(p, p) = app - t * apq;
            a(q, q) = aqq + t * apq;
            a(p, q) = a(q, p) = 0.0;

            // Accumulate eigenvectors: V <- V * J(p,q,theta).
            for (std::size_t k = 0; k < n; ++k) {
                const double vkp = v(k, p);
                const double vkq = v(k, q);
                v(k, p) = c * vkp - s * vkq;
                v(k, q) = s * vkp + c * vkq;
            }
        }
    }
}

static double off_diagonal_norm(const Matrix& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
}

SymEigen sym_eigen(const Matrix& input) {
    if (input.rows() != input.cols()) throw InputError("sym_eigen: matrix not square");
    const std::size_t n = input.rows();
    input.require_finite("sym_eigen");

    // Reject inputs that are not symmetric beyond roundoff.
    const double scale = std::max(1.0, max_abs(input));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (std::fabs(input(i, j) - input(j, i)) > 1e-9 * scale) {
                throw InputError("sym_eigen: matrix not symmetric");
            }
        }
    }

    Matrix a = symmetrize(input); // kill roundoff asymmetry before rotating
    Matrix v = Matrix::identity(n);

    const double tol = 1e-14 * std::max(1.0, frobenius(a));
    const int max_sweeps = 50;
    bool converged = (n <= 1);
    for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
        if (off_diagonal_norm(a) <= tol) {
            converged = true;
            break;
        }
        jacobi_sweep(a, v);
    }
    if (!converged && off_diagonal_norm(a) > tol) {
        // Jacobi converges quadratically once sweeps get going; hitting the
        // cap means something is badly wrong with the input.
        throw NumericalError("sym_eigen: Jacobi sweeps failed to converge");
    }

    // Sort ascending by eigenvalue, permuting columns alongside.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });

    SymEigen out;
    out.eigenvalues.resize(n);
    out.eigenvectors = Matrix(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t src = order[k];
        out.eigenvalues[k] = a(src, src);
        // Fix signs: largest-magnitude entry positive, earliest index on ties.
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double m = std::fabs(v(i, src));
            if (m > best) {
                best = m;
                arg = i;
            }
        }
        const double flip = (v(arg, src) < 0.0) ? -1.0 : 1.0;
        for (std::size_t i = 0; i < n; ++i) out.eigenvectors(i, k) = flip * v(i, src);
    }
    return out;
}

Matrix psd_project(const Matrix& a) {
    const SymEigen eig = sym_eigen(a);
    const std::size_t n = a.rows();
    Matrix r(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        const double lam = eig.eigenvalues[k];
        if (lam <= 0.0) continue;
        for (std::size_t i = 0; i < n; ++i) {
            const double w = lam * eig.eigenvectors(i, k);
            if (w == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) {
                r(i, j) += w * eig.eigenvectors(j, k);
            }
        }
    }
    return symmetrize(r); // exact symmetry for downstream consumers
}

} // namespace aspca
