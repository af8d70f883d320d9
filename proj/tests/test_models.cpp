#include "aspca/data_io.hpp"
#include "aspca/error.hpp"
#include "aspca/matrix.hpp"
#include "aspca/models.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

using namespace aspca;
using namespace testutil;

namespace {

Matrix diag(const std::vector<double>& entries) {
    Matrix m(entries.size(), entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) m(i, i) = entries[i];
    return m;
}

Matrix projector(const Matrix& v) { return v * transpose(v); }

// Covariance of the synthetic training block (the leading normal rows),
// centered on its own column means.
Matrix synthetic_train_cov() {
    const DataTable t = gen_synthetic(0);
    const std::size_t n = 500;
    const std::size_t p = t.matrix.cols();
    std::vector<double> mean(p, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < p; ++j) mean[j] += t.matrix(r, j);
    for (double& m : mean) m /= static_cast<double>(n);
    Matrix centered(n, p);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < p; ++j) centered(r, j) = t.matrix(r, j) - mean[j];
    return covariance(centered);
}

// Random positive definite matrix with the prescribed (distinct) spectrum,
// rotated by the eigenvectors of an unrelated random symmetric matrix.
Matrix psd_with_spectrum(const std::vector<double>& spectrum, unsigned seed) {
    const std::size_t p = spectrum.size();
    const SymEigen basis = sym_eigen(random_symmetric(p, seed));
    Matrix a(p, p);
    for (std::size_t k = 0; k < p; ++k)
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < p; ++j)
                a(i, j) += spectrum[k] * basis.eigenvectors(i, k) * basis.eigenvectors(j, k);
    return symmetrize(a);
}

double max_cross(const Matrix& v1, const Matrix& v2) {
    return max_abs(transpose(v1) * v2);
}

void check_basis_health(const SubspaceModel& m) {
    CHECK(orthonormality_error(m.v_abnormal) <= 1e-6);
    CHECK(orthonormality_error(m.v_normal) <= 1e-6);
    CHECK(max_cross(m.v_normal, m.v_abnormal) <= 1e-6);
}

} // namespace

TEST_CASE("fit_pca: smallest-variance axis becomes the abnormal component") {
    const SubspaceModel m = fit_pca(diag({5.0, 3.0, 1.0}), 1);
    REQUIRE(m.v_abnormal.cols() == 1);
    CHECK(std::fabs(m.v_abnormal(2, 0)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::fabs(m.v_abnormal(0, 0)) <= 1e-12);
    CHECK(std::fabs(m.v_abnormal(1, 0)) <= 1e-12);
    CHECK(m.variance_abnormal == doctest::Approx(1.0).epsilon(1e-12));
    // Normal basis is most-significant first.
    CHECK(std::fabs(m.v_normal(0, 0)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::fabs(m.v_normal(1, 1)) == doctest::Approx(1.0).epsilon(1e-12));
    check_basis_health(m);
}

TEST_CASE("fit_pca: degenerate identity covariance still yields a rank-d projector") {
    const SubspaceModel m = fit_pca(Matrix::identity(4), 2);
    const Matrix proj = projector(m.v_abnormal);
    CHECK(trace(proj) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(m.variance_abnormal == doctest::Approx(2.0).epsilon(1e-12));
    check_basis_health(m);
}

TEST_CASE("fit_pca: abnormal projector equals the bottom eigenspace of a real covariance") {
    const Matrix a = synthetic_train_cov();
    const SubspaceModel m = fit_pca(a, 4);

    // Oracle: accumulate the bottom-4 eigenvector outer products directly.
    const SymEigen eig = sym_eigen(a);
    Matrix oracle(a.rows(), a.cols());
    for (std::size_t k = 0; k < 4; ++k) {
        std::vector<double> v(a.rows());
        for (std::size_t i = 0; i < a.rows(); ++i) v[i] = eig.eigenvectors(i, k);
        oracle = oracle + outer(v);
    }
    CHECK(frob_diff(projector(m.v_abnormal), oracle) <= 1e-8);
    check_basis_health(m);
}

TEST_CASE("fit_pca: rejects out-of-range component counts") {
    CHECK_THROWS_AS(fit_pca(Matrix::identity(3), 0), InputError);
    CHECK_THROWS_AS(fit_pca(Matrix::identity(3), 4), InputError);
    CHECK_THROWS_AS(fit_pca(Matrix(2, 3), 1), InputError);
}

TEST_CASE("forward extraction at zero sparsity matches the dense baseline projector") {
    const Matrix a = psd_with_spectrum({1.0, 2.0, 3.5, 5.0, 7.0, 9.0}, 11);
    FitConfig cfg;
    cfg.d = 2;
    cfg.lambda = 0.0;
    const SubspaceModel got = fit_aspca_forward(a, cfg);
    const SubspaceModel want = fit_pca(a, 2);
    CHECK(frob_diff(projector(got.v_abnormal), projector(want.v_abnormal)) <= 1e-4);
    CHECK(got.variance_abnormal == doctest::Approx(want.variance_abnormal).epsilon(1e-4));
    check_basis_health(got);
}

TEST_CASE("forward extraction keeps the tied low-variance pair as the abnormal basis") {
    FitConfig cfg;
    cfg.d = 2;
    cfg.lambda = 0.01;
    const SubspaceModel m = fit_aspca_forward(diag({4.0, 2.0, 1.0, 1.0}), cfg);
    const Matrix proj = projector(m.v_abnormal);
    Matrix want(4, 4);
    want(2, 2) = 1.0;
    want(3, 3) = 1.0;
    CHECK(frob_diff(proj, want) <= 1e-4);
    check_basis_health(m);
}

TEST_CASE("backward extraction at zero sparsity: variances are non-decreasing and match "
          "the bottom eigenvalues") {
    for (unsigned seed = 1; seed <= 5; ++seed) {
        const std::size_t p = 4 + seed; // 5..9
        const Matrix a = random_psd(p, seed);
        FitConfig cfg;
        cfg.d = 2 + seed % 3;
        cfg.lambda = 0.0;
        const SubspaceModel m = fit_aspca_backward(a, cfg);
        check_basis_health(m);

        const SymEigen eig = sym_eigen(a);
        double prev = -1e100;
        for (std::size_t k = 0; k < cfg.d; ++k) {
            std::vector<double> v(p);
            for (std::size_t i = 0; i < p; ++i) v[i] = m.v_abnormal(i, k);
            const std::vector<double> av = times(a, v);
            const double quad = dot(v, av);
            CHECK(quad >= prev - 1e-6);
            prev = quad;
            const double want = eig.eigenvalues[k];
            CHECK(std::fabs(quad - want) <= 1e-4 * std::max(1.0, std::fabs(want)));
        }
    }
}

TEST_CASE("backward extraction with d = p recovers the full trace") {
    const Matrix a = random_psd(5, 21);
    FitConfig cfg;
    cfg.d = 5;
    cfg.lambda = 0.0;
    const SubspaceModel m = fit_aspca_backward(a, cfg);
    CHECK(orthonormality_error(m.v_abnormal) <= 1e-6);
    CHECK(m.v_normal.cols() == 0);
    CHECK(m.variance_abnormal == doctest::Approx(trace(a)).epsilon(1e-6));
}

TEST_CASE("forward and backward agree on the abnormal projector when the spectrum has a gap") {
    const Matrix a = psd_with_spectrum({0.5, 1.0, 4.0, 6.0, 9.0}, 33);
    FitConfig cfg;
    cfg.d = 2;
    cfg.lambda = 0.0;
    const SubspaceModel fwd = fit_aspca_forward(a, cfg);
    const SubspaceModel bwd = fit_aspca_backward(a, cfg);
    CHECK(frob_diff(projector(fwd.v_abnormal), projector(bwd.v_abnormal)) <= 1e-4);
}

TEST_CASE("every variant returns orthonormal bases with orthogonal complements") {
    const Matrix a = synthetic_train_cov();
    const Variant variants[] = {Variant::PCA, Variant::AspcaF, Variant::AspcaB,
                                Variant::AspcaFG, Variant::AspcaBG};
    for (Variant var : variants) {
        FitConfig cfg;
        cfg.variant = var;
        cfg.d = 2;
        cfg.lambda = 1.0;
        const SubspaceModel m = fit(a, cfg);
        REQUIRE(m.v_abnormal.cols() == 2);
        REQUIRE(m.v_normal.cols() == a.rows() - 2);
        check_basis_health(m);
    }
}

TEST_CASE("global rotation never increases the L1 norm and leaves scores unchanged") {
    const Matrix a = synthetic_train_cov();
    FitConfig cfg;
    cfg.d = 4;
    cfg.lambda = 5.0;

    cfg.variant = Variant::AspcaB;
    const SubspaceModel plain = fit(a, cfg);
    cfg.variant = Variant::AspcaBG;
    const SubspaceModel rotated = fit(a, cfg);

    CHECK(l11_norm(rotated.v_abnormal) <= l11_norm(plain.v_abnormal) + 1e-9);
    CHECK(frob_diff(projector(rotated.v_abnormal), projector(plain.v_abnormal)) <= 1e-4);
    CHECK_FALSE(rotated.global_opt_degenerate);

    // Same span means the SPE of any vector is unchanged.
    auto spe_of = [](const Matrix& v, const std::vector<double>& y) {
        const std::vector<double> s = transpose_times(v, y);
        double total = 0.0;
        for (double si : s) total += si * si;
        return total;
    };
    auto gen = rng(77);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> y(a.rows());
        for (double& yi : y) yi = u(gen);
        const double yn = norm2(y);
        CHECK(std::fabs(spe_of(plain.v_abnormal, y) - spe_of(rotated.v_abnormal, y)) <=
              1e-6 * yn * yn);
    }
}

TEST_CASE("sparsity penalty shrinks the loading L1 norm below the dense baseline") {
    const Matrix a = synthetic_train_cov();
    FitConfig cfg;
    cfg.variant = Variant::AspcaB;
    cfg.d = 4;
    cfg.lambda = 5.0;
    const SubspaceModel sparse = fit(a, cfg);
    const SubspaceModel dense = fit_pca(a, 4);
    CHECK(l11_norm(sparse.v_abnormal) < l11_norm(dense.v_abnormal));
}

TEST_CASE("fit: dispatch rejects component counts outside 1..p-1 and negative sparsity") {
    const Matrix a = random_psd(4, 3);
    FitConfig cfg;
    cfg.d = 0;
    CHECK_THROWS_AS(fit(a, cfg), InputError);
    cfg.d = 4; // fit() reserves at least one normal direction
    CHECK_THROWS_AS(fit(a, cfg), InputError);
    cfg.d = 2;
    cfg.lambda = -1.0;
    CHECK_THROWS_AS(fit(a, cfg), InputError);
}
