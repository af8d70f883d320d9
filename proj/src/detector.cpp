#include "aspca/detector.hpp"

#include "aspca/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

namespace aspca {

ScoredInstance spe(const DetectionModel& model, const std::vector<double>& y) {
    if (y.size() != model.v_abnormal.rows())
        throw InputError("spe: vector length does not match model dimension");
    for (double v : y)
        if (!std::isfinite(v)) throw InputError("spe: non-finite input");

    ScoredInstance s;
    s.projections = transpose_times(model.v_abnormal, y);
    for (double proj : s.projections) s.spe += proj * proj;
    s.is_anomaly = s.spe > model.threshold;
    return s;
}

std::vector<ScoredInstance> score_all(const DetectionModel& model, const Matrix& rows) {
    std::vector<ScoredInstance> out;
    out.reserve(rows.rows());
    std::vector<double> y(rows.cols());
    for (std::size_t r = 0; r < rows.rows(); ++r) {
        for (std::size_t j = 0; j < rows.cols(); ++j) y[j] = rows(r, j);
        out.push_back(spe(model, y));
    }
    return out;
}

double choose_threshold(const std::vector<double>& scores, double target_quantile) {
    if (scores.empty()) throw InputError("choose_threshold: no scores");
    if (!(target_quantile > 0.0 && target_quantile < 1.0))
        throw InputError("choose_threshold: quantile must be in (0,1)");
    std::vector<double> s = scores;
    std::sort(s.begin(), s.end());
    const double h = (static_cast<double>(s.size()) - 1.0) * target_quantile;
    const std::size_t lo = static_cast<std::size_t>(h);
    if (lo + 1 >= s.size()) return s.back();
    const double frac = h - static_cast<double>(lo);
    return s[lo] + frac * (s[lo + 1] - s[lo]);
}

double choose_threshold_for_tpr(const std::vector<double>& scores,
                                const std::vector<bool>& labels, double target_tpr) {
    if (scores.size() != labels.size()) throw InputError("choose_threshold_for_tpr: size mismatch");
    if (scores.empty()) throw InputError("choose_threshold_for_tpr: no scores");
    if (!(target_tpr > 0.0 && target_tpr <= 1.0))
        throw InputError("choose_threshold_for_tpr: target must be in (0,1]");
    const std::size_t npos =
        static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
    if (npos == 0 || npos == labels.size())
        throw InputError("choose_threshold_for_tpr: need both classes");

    std::vector<double> uniq = scores;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());

    // Candidate cutoffs between adjacent distinct scores plus one below all
    // scores (flag everything) — detection uses strict spe > tau.
    std::vector<double> cands;
    cands.push_back(uniq.front() - 1.0);
    for (std::size_t i = 0; i + 1 < uniq.size(); ++i)
        cands.push_back(0.5 * (uniq[i] + uniq[i + 1]));

    double best = cands.front();
    for (double tau : cands) {
        std::size_t tp = 0;
        for (std::size_t i = 0; i < scores.size(); ++i)
            if (labels[i] && scores[i] > tau) ++tp;
        const double tpr = static_cast<double>(tp) / static_cast<double>(npos);
        if (tpr >= target_tpr && tau > best) best = tau;
    }
    return best;
}

RocResult roc_auc(const std::vector<double>& scores, const std::vector<bool>& labels) {
    if (scores.size() != labels.size()) throw InputError("roc_auc: size mismatch");
    const std::size_t n = scores.size();
    std::size_t npos = 0;
    for (bool b : labels) npos += b ? 1 : 0;
    const std::size_t nneg = n - npos;
    if (npos == 0 || nneg == 0) throw InputError("roc_auc: need both classes");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocResult res;
    res.curve.push_back({0.0, 0.0});
    double tp = 0.0, fp = 0.0, auc = 0.0;
    std::size_t i = 0;
    while (i < n) {
        // Consume the whole tie group at once; the diagonal segment this
        // produces is exactly the rank-averaged (Mann-Whitney) tie handling.
        std::size_t j = i;
        double dtp = 0.0, dfp = 0.0;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            if (labels[order[j]]) dtp += 1.0;
            else dfp += 1.0;
            ++j;
        }
        auc += (dfp / static_cast<double>(nneg)) *
               (tp + 0.5 * dtp) / static_cast<double>(npos);
        tp += dtp;
        fp += dfp;
        res.curve.push_back({fp / static_cast<double>(nneg), tp / static_cast<double>(npos)});
        i = j;
    }
    res.auc = auc;
    return res;
}

void write_scores_csv(std::ostream& out, const std::vector<ScoredInstance>& scored) {
    const std::size_t d = scored.empty() ? 0 : scored.front().projections.size();
    out << "row_id,spe,is_anomaly";
    for (std::size_t k = 1; k <= d; ++k) out << ",proj_" << k;
    out << '\n';
    char buf[32];
    for (std::size_t r = 0; r < scored.size(); ++r) {
        out << r << ',';
        std::snprintf(buf, sizeof(buf), "%.17g", scored[r].spe);
        out << buf << ',' << (scored[r].is_anomaly ? '1' : '0');
        for (double proj : scored[r].projections) {
            std::snprintf(buf, sizeof(buf), "%.17g", proj);
            out << ',' << buf;
        }
        out << '\n';
    }
}

} // namespace aspca
