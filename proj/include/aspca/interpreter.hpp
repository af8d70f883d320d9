#pragma once

#include "aspca/detector.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace aspca {

enum class Polarity { High, Low };

// Which abnormal components an instance projects strongly onto, and in
// which direction: component i is marked High when s_i >= sqrt(tau/2), Low
// when s_i <= -sqrt(tau/2). Component indices are 1-based.
struct Signature {
    std::vector<std::pair<std::size_t, Polarity>> marks; // indices strictly increasing

    bool operator==(const Signature& other) const { return marks == other.marks; }
};

// "1H,3L" style rendering; empty signature renders as "".
std::string to_string(const Signature& sig);

struct Contribution {
    std::size_t component = 0; // 1-based
    double projection = 0.0;
    double squared_share = 0.0; // s_i^2 / spe
};

struct InterpretationReport {
    double spe = 0.0;
    std::vector<Contribution> ranked_contributions; // descending share
    Signature signature;
    std::vector<std::string> rendered_components; // aligned with contributions
};

InterpretationReport interpret(const DetectionModel& model, const std::vector<double>& y,
                               double render_cutoff = 0.1);

Signature signature_of(const std::vector<double>& projections, double tau);

struct SignatureGroup {
    Signature signature;
    std::vector<std::size_t> member_ids; // indices into the report list
};

// Exact-match grouping on the full signature, largest group first (ties by
// first appearance).
std::vector<SignatureGroup> group_by_signature(const std::vector<InterpretationReport>& reports);

// Signed linear-combination string: coefficients with |c| >= cutoff, four
// decimals, descending magnitude, e.g. "0.7095 A - 0.7047 B". All below
// cutoff renders "(no dominant features)".
std::string render_component(const std::vector<double>& v, const std::vector<std::string>& names,
                             double cutoff);

// JSON report for a batch of interpreted anomalies. row_ids maps report
// positions to data row indices; groups must come from the same report list.
void write_interpretation_json(std::ostream& out,
                               const std::vector<InterpretationReport>& reports,
                               const std::vector<std::size_t>& row_ids,
                               const std::vector<SignatureGroup>& groups,
                               const DetectionModel& model, double render_cutoff);

// Anomaly x component projection heatmap, as CSV and as a standalone SVG
// grid with a blue-white-red diverging palette.
void write_heatmap_csv(std::ostream& out, const std::vector<InterpretationReport>& reports,
                       const std::vector<std::size_t>& row_ids);
void write_heatmap_svg(std::ostream& out, const std::vector<InterpretationReport>& reports,
                       const std::vector<std::size_t>& row_ids);

} // namespace aspca
