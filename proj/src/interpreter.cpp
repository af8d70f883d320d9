#include "aspca/interpreter.hpp"

#include "aspca/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

namespace aspca {

std::string to_string(const Signature& sig) {
    std::string s;
    for (const auto& [idx, pol] : sig.marks) {
        if (!s.empty()) s += ',';
        s += std::to_string(idx);
        s += (pol == Polarity::High) ? 'H' : 'L';
    }
    return s;
}

Signature signature_of(const std::vector<double>& projections, double tau) {
    if (!(tau > 0.0)) throw InputError("signature_of: tau must be > 0");
    const double cut = std::sqrt(tau / 2.0);
    Signature sig;
    for (std::size_t i = 0; i < projections.size(); ++i) {
        if (projections[i] >= cut) sig.marks.emplace_back(i + 1, Polarity::High);
        else if (projections[i] <= -cut) sig.marks.emplace_back(i + 1, Polarity::Low);
    }
    return sig;
}

std::string render_component(const std::vector<double>& v, const std::vector<std::string>& names,
                             double cutoff) {
    if (v.size() != names.size()) throw InputError("render_component: name count mismatch");
    if (cutoff < 0.0) throw InputError("render_component: cutoff must be >= 0");

    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < v.size(); ++i)
        if (std::fabs(v[i]) >= cutoff) keep.push_back(i);
    if (keep.empty()) return "(no dominant features)";
    std::stable_sort(keep.begin(), keep.end(), [&](std::size_t a, std::size_t b) {
        return std::fabs(v[a]) > std::fabs(v[b]);
    });

    std::string out;
    char buf[32];
    for (std::size_t k = 0; k < keep.size(); ++k) {
        const double c = v[keep[k]];
        if (k == 0) {
            if (c < 0.0) out += '-';
        } else {
            out += (c < 0.0) ? " - " : " + ";
        }
        std::snprintf(buf, sizeof(buf), "%.4f", std::fabs(c));
        out += buf;
        out += ' ';
        out += names[keep[k]];
    }
    return out;
}

InterpretationReport interpret(const DetectionModel& model, const std::vector<double>& y,
                               double render_cutoff) {
    const ScoredInstance scored = spe(model, y);

    InterpretationReport rep;
    rep.spe = scored.spe;
    if (scored.spe == 0.0) return rep; // nothing projects anywhere: empty report

    const std::size_t d = scored.projections.size();
    rep.ranked_contributions.reserve(d);
    for (std::size_t i = 0; i < d; ++i) {
        Contribution c;
        c.component = i + 1;
        c.projection = scored.projections[i];
        c.squared_share = (c.projection * c.projection) / scored.spe;
        rep.ranked_contributions.push_back(c);
    }
    std::stable_sort(rep.ranked_contributions.begin(), rep.ranked_contributions.end(),
                     [](const Contribution& a, const Contribution& b) {
                         return a.squared_share > b.squared_share;
                     });

    if (model.threshold > 0.0) rep.signature = signature_of(scored.projections, model.threshold);

    const std::size_t p = model.v_abnormal.rows();
    std::vector<double> col(p);
    for (const Contribution& c : rep.ranked_contributions) {
        for (std::size_t i = 0; i < p; ++i) col[i] = model.v_abnormal(i, c.component - 1);
        rep.rendered_components.push_back(render_component(col, model.feature_names, render_cutoff));
    }
    return rep;
}

std::vector<SignatureGroup> group_by_signature(const std::vector<InterpretationReport>& reports) {
    std::vector<SignatureGroup> groups;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        auto it = std::find_if(groups.begin(), groups.end(), [&](const SignatureGroup& g) {
            return g.signature == reports[i].signature;
        });
        if (it == groups.end()) {
            groups.push_back({reports[i].signature, {i}});
        } else {
            it->member_ids.push_back(i);
        }
    }
    std::stable_sort(groups.begin(), groups.end(),
                     [](const SignatureGroup& a, const SignatureGroup& b) {
                         return a.member_ids.size() > b.member_ids.size();
                     });
    return groups;
}

void write_interpretation_json(std::ostream& out,
                               const std::vector<InterpretationReport>& reports,
                               const std::vector<std::size_t>& row_ids,
                               const std::vector<SignatureGroup>& groups,
                               const DetectionModel& model, double render_cutoff) {
    if (row_ids.size() != reports.size())
        throw InputError("write_interpretation_json: row_ids/report mismatch");

    nlohmann::json j;
    j["threshold"] = model.threshold;
    j["anomaly_count"] = reports.size();

    // Model components, in component order, rendered once.
    const std::size_t p = model.v_abnormal.rows();
    const std::size_t d = model.v_abnormal.cols();
    nlohmann::json comps = nlohmann::json::array();
    std::vector<double> col(p);
    for (std::size_t k = 0; k < d; ++k) {
        for (std::size_t i = 0; i < p; ++i) col[i] = model.v_abnormal(i, k);
        comps.push_back(render_component(col, model.feature_names, render_cutoff));
    }
    j["components"] = comps;

    nlohmann::json anomalies = nlohmann::json::array();
    for (std::size_t r = 0; r < reports.size(); ++r) {
        const InterpretationReport& rep = reports[r];
        nlohmann::json a;
        a["row_id"] = row_ids[r];
        a["spe"] = rep.spe;
        a["signature"] = to_string(rep.signature);
        nlohmann::json contribs = nlohmann::json::array();
        for (std::size_t k = 0; k < rep.ranked_contributions.size(); ++k) {
            const Contribution& c = rep.ranked_contributions[k];
            contribs.push_back({{"component", c.component},
                                {"projection", c.projection},
                                {"squared_share", c.squared_share},
                                {"rendered", rep.rendered_components[k]}});
        }
        a["contributions"] = contribs;
        anomalies.push_back(a);
    }
    j["anomalies"] = anomalies;

    nlohmann::json jgroups = nlohmann::json::array();
    for (const SignatureGroup& g : groups) {
        nlohmann::json jg;
        jg["signature"] = to_string(g.signature);
        jg["count"] = g.member_ids.size();
        nlohmann::json members = nlohmann::json::array();
        for (std::size_t m : g.member_ids) members.push_back(row_ids[m]);
        jg["members"] = members;
        // With exact-match grouping every member carries every mark; kept as
        // an explicit table so looser grouping rules stay drop-in.
        nlohmann::json freq = nlohmann::json::object();
        for (const auto& [idx, pol] : g.signature.marks) {
            std::string key = std::to_string(idx);
            key += (pol == Polarity::High) ? 'H' : 'L';
            freq[key] = 1.0;
        }
        jg["mark_frequency"] = freq;
        jgroups.push_back(jg);
    }
    j["groups"] = jgroups;

    out << j.dump(2) << '\n';
}

// Natural-order projections of one report (contributions are stored ranked).
static std::vector<double> natural_projections(const InterpretationReport& rep, std::size_t d) {
    std::vector<double> proj(d, 0.0);
    for (const Contribution& c : rep.ranked_contributions) {
        if (c.component >= 1 && c.component <= d) proj[c.component - 1] = c.projection;
    }
    return proj;
}

static std::size_t component_count(const std::vector<InterpretationReport>& reports) {
    std::size_t d = 0;
    for (const auto& r : reports) d = std::max(d, r.ranked_contributions.size());
    return d;
}

void write_heatmap_csv(std::ostream& out, const std::vector<InterpretationReport>& reports,
                       const std::vector<std::size_t>& row_ids) {
    if (row_ids.size() != reports.size()) throw InputError("write_heatmap_csv: size mismatch");
    const std::size_t d = component_count(reports);
    out << "row_id";
    for (std::size_t k = 1; k <= d; ++k) out << ",proj_" << k;
    out << '\n';
    char buf[32];
    for (std::size_t r = 0; r < reports.size(); ++r) {
        out << row_ids[r];
        for (double v : natural_projections(reports[r], d)) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            out << ',' << buf;
        }
        out << '\n';
    }
}

// Blue-white-red diverging map on t in [-1,1].
static void diverging_rgb(double t, int& red, int& green, int& blue) {
    t = std::clamp(t, -1.0, 1.0);
    if (t < 0.0) {
        const double w = 1.0 + t; // 0 at -1 (blue), 1 at 0 (white)
        red = static_cast<int>(std::lround(255.0 * w));
        green = static_cast<int>(std::lround(255.0 * w));
        blue = 255;
    } else {
        const double w = 1.0 - t;
        red = 255;
        green = static_cast<int>(std::lround(255.0 * w));
        blue = static_cast<int>(std::lround(255.0 * w));
    }
}

void write_heatmap_svg(std::ostream& out, const std::vector<InterpretationReport>& reports,
                       const std::vector<std::size_t>& row_ids) {
    if (row_ids.size() != reports.size()) throw InputError("write_heatmap_svg: size mismatch");
    const std::size_t d = component_count(reports);
    const std::size_t n = reports.size();

    const int cell = 22;
    const int left = 64;  // row labels
    const int top = 28;   // column labels
    const int width = left + cell * static_cast<int>(d) + 8;
    const int height = top + cell * static_cast<int>(n) + 8;

    double vmax = 0.0;
    for (const auto& rep : reports)
        for (const Contribution& c : rep.ranked_contributions)
            vmax = std::max(vmax, std::fabs(c.projection));
    if (vmax == 0.0) vmax = 1.0;

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    out << "  <rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    for (std::size_t k = 0; k < d; ++k) {
        out << "  <text x=\"" << left + cell * static_cast<int>(k) + cell / 2 << "\" y=\""
            << top - 8 << "\" text-anchor=\"middle\">" << (k + 1) << "</text>\n";
    }
    for (std::size_t r = 0; r < n; ++r) {
        out << "  <text x=\"" << left - 6 << "\" y=\""
            << top + cell * static_cast<int>(r) + cell / 2 + 4
            << "\" text-anchor=\"end\">row " << row_ids[r] << "</text>\n";
        const std::vector<double> proj = natural_projections(reports[r], d);
        for (std::size_t k = 0; k < d; ++k) {
            int red, green, blue;
            diverging_rgb(proj[k] / vmax, red, green, blue);
            out << "  <rect x=\"" << left + cell * static_cast<int>(k) << "\" y=\""
                << top + cell * static_cast<int>(r) << "\" width=\"" << cell << "\" height=\""
                << cell << "\" fill=\"rgb(" << red << ',' << green << ',' << blue
                << ")\" stroke=\"#ccc\"/>\n";
        }
    }
    out << "</svg>\n";
}

} // namespace aspca
