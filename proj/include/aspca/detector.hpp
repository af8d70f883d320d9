#pragma once

#include "aspca/data_io.hpp"
#include "aspca/matrix.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace aspca {

// Everything needed to score new data: the abnormal basis, the SPE cutoff,
// and the preprocessing that maps raw rows into the model's coordinates.
struct DetectionModel {
    Matrix v_abnormal; // p x d, orthonormal columns
    double threshold = 0.0;
    std::vector<std::string> feature_names;
    PreprocessSpec preprocessing;
    std::string threshold_rule = "unset"; // "explicit" | "quantile" | "target-tpr"
};

struct ScoredInstance {
    double spe = 0.0;
    std::vector<double> projections; // s_i = v_i^T y
    bool is_anomaly = false;         // spe > threshold
};

// Score one preprocessed row: projections onto the abnormal components and
// their squared sum. Matches the residual form |y - V1 V1^T y|^2 without
// needing V1.
ScoredInstance spe(const DetectionModel& model, const std::vector<double>& y);

std::vector<ScoredInstance> score_all(const DetectionModel& model, const Matrix& rows);

// Linear-interpolation empirical quantile (the common "type 7" rule).
double choose_threshold(const std::vector<double>& scores, double target_quantile);

// Largest threshold achieving at least the target true-positive rate;
// candidates are midpoints between adjacent distinct scores, so the chosen
// cutoff is robust to score jitter. Requires both classes.
double choose_threshold_for_tpr(const std::vector<double>& scores,
                                const std::vector<bool>& labels, double target_tpr);

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
};

struct RocResult {
    std::vector<RocPoint> curve; // (0,0) .. (1,1), one step per distinct score
    double auc = 0.0;            // trapezoidal; ties rank-averaged
};

RocResult roc_auc(const std::vector<double>& scores, const std::vector<bool>& labels);

// CSV export: row_id,spe,is_anomaly,proj_1..proj_d.
void write_scores_csv(std::ostream& out, const std::vector<ScoredInstance>& scored);

} // namespace aspca
