#pragma once

#include <cstddef>
#include <vector>

namespace aspca {

// Dense row-major matrix of doubles. Small sizes only (p is the feature
// count, typically < 100), so no blocking or expression tricks; clarity and
// determinism win over speed here.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);

    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    // Throws NumericalError if any entry is NaN or infinite.
    void require_finite(const char* what) const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);

Matrix transpose(const Matrix& a);

// y = A x and y = A^T x.
std::vector<double> times(const Matrix& a, const std::vector<double>& x);
std::vector<double> transpose_times(const Matrix& a, const std::vector<double>& x);

double trace(const Matrix& a);
double max_abs(const Matrix& a);

// Frobenius inner product <A,B> = sum_ij a_ij b_ij.
double inner(const Matrix& a, const Matrix& b);

// Entrywise L1 norm |A|_{1,1} = sum_ij |a_ij|.
double l11_norm(const Matrix& a);

// Number of entries with |a_ij| > threshold (strict).
std::size_t card_above(const Matrix& a, double threshold);

double frobenius(const Matrix& a);

// (A + A^T) / 2.
Matrix symmetrize(const Matrix& a);

// Entrywise soft threshold: sign(a_ij) * max(|a_ij| - t, 0).
Matrix soft_threshold(const Matrix& a, double t);

// Uncentered scatter D^T D of an n x p data matrix (rows are instances).
// Callers are expected to have centered D already when a covariance-like
// matrix is wanted.
Matrix covariance(const Matrix& d);

// Eigendecomposition of a symmetric matrix, eigenvalues ascending.
// eigenvectors.col(k) pairs with eigenvalues[k].
struct SymEigen {
    std::vector<double> eigenvalues;
    Matrix eigenvectors; // columns are unit eigenvectors
};

// Cyclic Jacobi rotations. Deterministic: fixed sweep order, no pivoting on
// values. Sign convention: each eigenvector's largest-magnitude entry is
// positive (smallest index wins ties). Throws InputError if the input is not
// symmetric to relative tolerance 1e-9, NumericalError if rotations fail to
// reduce the off-diagonal norm within the sweep budget.
SymEigen sym_eigen(const Matrix& a);

// Nearest (Frobenius) positive semidefinite matrix: eigendecompose and clip
// negative eigenvalues to zero.
Matrix psd_project(const Matrix& a);

} // namespace aspca
