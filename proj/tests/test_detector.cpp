#include "aspca/data_io.hpp"
#include "aspca/detector.hpp"
#include "aspca/error.hpp"
#include "aspca/matrix.hpp"
#include "aspca/models.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace aspca;
using namespace testutil;

namespace {

// Fit the backward variant on the synthetic training block (first 500 normal
// rows, centered on training means) and wrap it as a detection model.
struct FittedSynthetic {
    DetectionModel model;
    SubspaceModel subspace;
    Matrix centered_all; // all 515 rows in training coordinates
    std::vector<bool> labels;
    std::vector<std::string> category;
};

FittedSynthetic fit_synthetic_backward(double lambda, std::size_t d, double threshold) {
    const DataTable t = gen_synthetic(0);
    const std::size_t n_train = 500;
    const std::size_t p = t.matrix.cols();

    std::vector<double> mean(p, 0.0);
    for (std::size_t r = 0; r < n_train; ++r)
        for (std::size_t j = 0; j < p; ++j) mean[j] += t.matrix(r, j);
    for (double& m : mean) m /= static_cast<double>(n_train);

    Matrix train(n_train, p);
    for (std::size_t r = 0; r < n_train; ++r)
        for (std::size_t j = 0; j < p; ++j) train(r, j) = t.matrix(r, j) - mean[j];

    FittedSynthetic out;
    out.centered_all = Matrix(t.matrix.rows(), p);
    for (std::size_t r = 0; r < t.matrix.rows(); ++r)
        for (std::size_t j = 0; j < p; ++j) out.centered_all(r, j) = t.matrix(r, j) - mean[j];

    FitConfig cfg;
    cfg.variant = Variant::AspcaB;
    cfg.d = d;
    cfg.lambda = lambda;
    out.subspace = fit(covariance(train), cfg);

    out.model.v_abnormal = out.subspace.v_abnormal;
    out.model.threshold = threshold;
    out.model.feature_names = t.feature_names;
    out.labels = t.labels;
    out.category = t.category;
    return out;
}

DetectionModel model_from_basis(const Matrix& v, double threshold = 0.0) {
    DetectionModel m;
    m.v_abnormal = v;
    m.threshold = threshold;
    for (std::size_t i = 0; i < v.rows(); ++i)
        m.feature_names.push_back("f" + std::to_string(i + 1));
    return m;
}

} // namespace

TEST_CASE("spe: vectors in the normal span score exactly zero") {
    Matrix v(4, 1);
    v(3, 0) = 1.0; // abnormal basis = e4
    const DetectionModel m = model_from_basis(v);
    const ScoredInstance s = spe(m, {1.0, -2.0, 0.5, 0.0});
    CHECK(s.spe == 0.0);
    CHECK_FALSE(s.is_anomaly);
}

TEST_CASE("spe: an abnormal component itself scores one with a unit projection") {
    const Matrix v = sym_eigen(random_symmetric(5, 3)).eigenvectors; // orthonormal 5x5
    Matrix v2(5, 2);
    for (std::size_t i = 0; i < 5; ++i) {
        v2(i, 0) = v(i, 0);
        v2(i, 1) = v(i, 1);
    }
    const DetectionModel m = model_from_basis(v2);
    std::vector<double> y(5);
    for (std::size_t i = 0; i < 5; ++i) y[i] = v2(i, 0);

    const ScoredInstance s = spe(m, y);
    CHECK(s.spe == doctest::Approx(1.0).epsilon(1e-12));
    REQUIRE(s.projections.size() == 2);
    CHECK(s.projections[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::fabs(s.projections[1]) <= 1e-12);
}

TEST_CASE("spe: projection form equals the residual form on random data") {
    auto gen = rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (unsigned seed = 1; seed <= 3; ++seed) {
        const std::size_t p = 4 + 3 * seed;
        const SubspaceModel sub = fit_pca(random_psd(p, seed), 2);
        const DetectionModel m = model_from_basis(sub.v_abnormal);
        for (int t = 0; t < 300; ++t) {
            std::vector<double> y(p);
            for (double& yi : y) yi = u(gen);

            // Residual oracle: |y - V1 V1^T y|^2 computed from the normal basis.
            const std::vector<double> coeff = transpose_times(sub.v_normal, y);
            std::vector<double> recon(p, 0.0);
            for (std::size_t j = 0; j < sub.v_normal.cols(); ++j)
                for (std::size_t i = 0; i < p; ++i) recon[i] += sub.v_normal(i, j) * coeff[j];
            double residual = 0.0;
            for (std::size_t i = 0; i < p; ++i)
                residual += (y[i] - recon[i]) * (y[i] - recon[i]);

            const double yn = norm2(y);
            CHECK(std::fabs(spe(m, y).spe - residual) <= 1e-8 * std::max(1.0, yn * yn));
        }
    }
}

TEST_CASE("spe: rejects wrong length and non-finite input") {
    Matrix v(3, 1);
    v(0, 0) = 1.0;
    const DetectionModel m = model_from_basis(v);
    CHECK_THROWS_AS(spe(m, {1.0, 2.0}), InputError);
    CHECK_THROWS_AS(spe(m, {1.0, std::nan(""), 0.0}), InputError);
}

TEST_CASE("spe: a broken-correlation anomaly projects onto the matching component") {
    const FittedSynthetic fs = fit_synthetic_backward(5.0, 4, 0.25);

    // Find the paired component contrasting the first two features.
    std::size_t pair_col = 4;
    for (std::size_t k = 0; k < 4; ++k) {
        if (std::fabs(fs.model.v_abnormal(0, k)) > 0.6 &&
            std::fabs(fs.model.v_abnormal(1, k)) > 0.6)
            pair_col = k;
    }
    REQUIRE(pair_col < 4);

    // Rows 500..504 break the A=B rule with a known offset on feature A.
    for (std::size_t j = 0; j < 5; ++j) {
        const std::size_t row = 500 + j;
        std::vector<double> y(7);
        for (std::size_t i = 0; i < 7; ++i) y[i] = fs.centered_all(row, i);
        const ScoredInstance s = spe(fs.model, y);
        CHECK(s.is_anomaly);
        // The projection magnitude tracks the planted offset: |v_A| * delta
        // up to the generator noise and centering jitter.
        const double delta = synthetic_offset(j);
        const double expected = std::fabs(fs.model.v_abnormal(0, pair_col)) * delta;
        CHECK(std::fabs(s.projections[pair_col]) ==
              doctest::Approx(expected).epsilon(0.1));
    }
}

TEST_CASE("score_all: flags exactly the planted anomalies at the reference threshold") {
    const FittedSynthetic fs = fit_synthetic_backward(5.0, 4, 0.25);
    const std::vector<ScoredInstance> scored = score_all(fs.model, fs.centered_all);
    REQUIRE(scored.size() == 515);
    for (std::size_t r = 0; r < scored.size(); ++r)
        CHECK(scored[r].is_anomaly == fs.labels[r]);
}

TEST_CASE("choose_threshold: linear-interpolation quantile on 1..100") {
    std::vector<double> scores;
    for (int i = 1; i <= 100; ++i) scores.push_back(static_cast<double>(i));
    // Shuffle deterministically; the quantile must not depend on order.
    std::shuffle(scores.begin(), scores.end(), rng(9));
    CHECK(choose_threshold(scores, 0.95) == doctest::Approx(95.05).epsilon(1e-12));
    CHECK(choose_threshold(scores, 0.5) == doctest::Approx(50.5).epsilon(1e-12));
}

TEST_CASE("choose_threshold: rejects empty input and out-of-range quantiles") {
    CHECK_THROWS_AS(choose_threshold({}, 0.5), InputError);
    CHECK_THROWS_AS(choose_threshold({1.0}, 0.0), InputError);
    CHECK_THROWS_AS(choose_threshold({1.0}, 1.0), InputError);
}

TEST_CASE("choose_threshold_for_tpr: picks the largest cutoff reaching the target") {
    const std::vector<double> scores = {1.0, 2.0, 3.0, 4.0};
    const std::vector<bool> labels = {false, false, true, true};

    // Full recall: the cutoff sits between the top negative and the bottom
    // positive, so both positives stay flagged and both negatives do not.
    const double tau = choose_threshold_for_tpr(scores, labels, 1.0);
    CHECK(tau == doctest::Approx(2.5).epsilon(1e-12));

    // Half recall allows a higher cutoff that keeps only the top positive.
    CHECK(choose_threshold_for_tpr(scores, labels, 0.5) ==
          doctest::Approx(3.5).epsilon(1e-12));

    CHECK_THROWS_AS(choose_threshold_for_tpr(scores, {true, true, true, true}, 1.0), InputError);
    CHECK_THROWS_AS(choose_threshold_for_tpr(scores, {false, false, true}, 1.0), InputError);
    CHECK_THROWS_AS(choose_threshold_for_tpr(scores, labels, 0.0), InputError);
}

TEST_CASE("roc_auc: separated classes give 1.0, identical scores give 0.5") {
    const std::vector<double> sep = {0.1, 0.2, 0.3, 5.0, 6.0};
    const std::vector<bool> lab = {false, false, false, true, true};
    CHECK(roc_auc(sep, lab).auc == doctest::Approx(1.0).epsilon(1e-12));

    const std::vector<double> same = {2.0, 2.0, 2.0, 2.0, 2.0};
    CHECK(roc_auc(same, lab).auc == doctest::Approx(0.5).epsilon(1e-12));

    CHECK_THROWS_AS(roc_auc(sep, {true, true, true, true, true}), InputError);
    CHECK_THROWS_AS(roc_auc(sep, {false, true}), InputError);
}

TEST_CASE("roc_auc: invariant under strictly increasing score transforms") {
    auto gen = rng(13);
    std::uniform_real_distribution<double> u(0.0, 4.0);
    std::bernoulli_distribution coin(0.3);
    std::vector<double> scores;
    std::vector<bool> labels;
    for (int i = 0; i < 200; ++i) {
        const bool anomaly = coin(gen);
        scores.push_back(u(gen) + (anomaly ? 1.0 : 0.0));
        labels.push_back(anomaly);
    }
    const double base = roc_auc(scores, labels).auc;

    std::vector<double> warped = scores;
    for (double& s : warped) s = std::exp(0.7 * s) - 3.0;
    CHECK(roc_auc(warped, labels).auc == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("roc_auc: curve runs from (0,0) to (1,1) and is monotone") {
    auto gen = rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::bernoulli_distribution coin(0.4);
    std::vector<double> scores;
    std::vector<bool> labels;
    for (int i = 0; i < 120; ++i) {
        scores.push_back(u(gen));
        labels.push_back(coin(gen));
    }
    const RocResult res = roc_auc(scores, labels);
    REQUIRE(res.curve.size() >= 2);
    CHECK(res.curve.front().fpr == 0.0);
    CHECK(res.curve.front().tpr == 0.0);
    CHECK(res.curve.back().fpr == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(res.curve.back().tpr == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t i = 1; i < res.curve.size(); ++i) {
        CHECK(res.curve[i].fpr >= res.curve[i - 1].fpr - 1e-15);
        CHECK(res.curve[i].tpr >= res.curve[i - 1].tpr - 1e-15);
    }
}

TEST_CASE("raising the threshold never flags more rows") {
    const FittedSynthetic fs = fit_synthetic_backward(5.0, 4, 0.0);
    const std::vector<ScoredInstance> scored = score_all(fs.model, fs.centered_all);

    std::size_t prev = scored.size() + 1;
    for (double tau : {0.0, 0.1, 0.25, 0.5, 1.0, 2.0}) {
        std::size_t flagged = 0;
        for (const ScoredInstance& s : scored)
            if (s.spe > tau) ++flagged;
        CHECK(flagged <= prev);
        prev = flagged;
    }
}

TEST_CASE("scores are invariant under rotations of the abnormal basis") {
    const FittedSynthetic fs = fit_synthetic_backward(5.0, 4, 0.25);
    const std::vector<ScoredInstance> base = score_all(fs.model, fs.centered_all);

    // Rotate by a random orthogonal d x d factor; the SPE must not move.
    const Matrix q = sym_eigen(random_symmetric(4, 29)).eigenvectors;
    DetectionModel rotated = fs.model;
    rotated.v_abnormal = fs.model.v_abnormal * q;
    const std::vector<ScoredInstance> turned = score_all(rotated, fs.centered_all);

    for (std::size_t r = 0; r < base.size(); ++r)
        CHECK(std::fabs(base[r].spe - turned[r].spe) <= 1e-9);
}

TEST_CASE("write_scores_csv: header carries one projection column per component") {
    Matrix v(3, 2);
    v(0, 0) = 1.0;
    v(1, 1) = 1.0;
    const DetectionModel m = model_from_basis(v, 0.5);
    const std::vector<ScoredInstance> scored = score_all(m, Matrix::identity(3));

    std::ostringstream out;
    write_scores_csv(out, scored);
    const std::string text = out.str();
    CHECK(text.rfind("row_id,spe,is_anomaly,proj_1,proj_2\n", 0) == 0);

    // Three data rows: e1 and e2 score 1 (flagged), e3 scores 0.
    std::istringstream lines(text);
    std::string line;
    std::getline(lines, line);
    std::getline(lines, line);
    CHECK(line == "0,1,1,1,0");
    std::getline(lines, line);
    CHECK(line == "1,1,1,0,1");
    std::getline(lines, line);
    CHECK(line == "2,0,0,0,0");
}
