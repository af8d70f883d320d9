#include "aspca/error.hpp"
#include "aspca/interpreter.hpp"
#include "aspca/matrix.hpp"
#include "test_util.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <cstddef>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace aspca;
using namespace testutil;

namespace {

DetectionModel toy_model(double threshold) {
    // Abnormal basis = {e1, e2} in R^3 with named features.
    Matrix v(3, 2);
    v(0, 0) = 1.0;
    v(1, 1) = 1.0;
    DetectionModel m;
    m.v_abnormal = v;
    m.threshold = threshold;
    m.feature_names = {"A", "B", "C"};
    return m;
}

} // namespace

TEST_CASE("signature_of: marks components past the split threshold with their polarity") {
    const Signature sig = signature_of({0.6, -0.6, 0.1}, 0.5);
    REQUIRE(sig.marks.size() == 2);
    CHECK(sig.marks[0].first == 1);
    CHECK(sig.marks[0].second == Polarity::High);
    CHECK(sig.marks[1].first == 2);
    CHECK(sig.marks[1].second == Polarity::Low);
    CHECK(to_string(sig) == "1H,2L");
}

TEST_CASE("signature_of: boundary projections exactly at the cut are marked") {
    const double cut = std::sqrt(0.5 / 2.0);
    const Signature sig = signature_of({cut, -cut}, 0.5);
    REQUIRE(sig.marks.size() == 2);
    CHECK(to_string(sig) == "1H,2L");
}

TEST_CASE("signature_of: all-small projections yield the empty signature") {
    const Signature sig = signature_of({0.1, -0.2, 0.0}, 0.5);
    CHECK(sig.marks.empty());
    CHECK(to_string(sig).empty());
    CHECK_THROWS_AS(signature_of({0.1}, 0.0), InputError);
}

TEST_CASE("signature_of: component indices are strictly increasing") {
    auto gen = rng(4);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> proj(6);
        for (double& x : proj) x = u(gen);
        const Signature sig = signature_of(proj, 0.3);
        for (std::size_t i = 1; i < sig.marks.size(); ++i)
            CHECK(sig.marks[i].first > sig.marks[i - 1].first);
    }
}

TEST_CASE("signature_of: flipping a component sign swaps high and low on it alone") {
    const std::vector<double> proj = {0.8, -0.7, 0.05, 0.9};
    const Signature base = signature_of(proj, 0.5);

    std::vector<double> flipped = proj;
    flipped[0] = -flipped[0];
    const Signature after = signature_of(flipped, 0.5);

    REQUIRE(base.marks.size() == after.marks.size());
    for (std::size_t i = 0; i < base.marks.size(); ++i) {
        CHECK(base.marks[i].first == after.marks[i].first);
        if (base.marks[i].first == 1) {
            CHECK(base.marks[i].second == Polarity::High);
            CHECK(after.marks[i].second == Polarity::Low);
        } else {
            CHECK(base.marks[i].second == after.marks[i].second);
        }
    }
}

TEST_CASE("pigeonhole: any above-threshold instance has a projection past sqrt(tau/d)") {
    auto gen = rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double tau = 0.4;
    for (int t = 0; t < 200; ++t) {
        const std::size_t d = 1 + static_cast<std::size_t>(t % 5);
        std::vector<double> proj(d);
        double spe_val = 0.0;
        for (double& x : proj) {
            x = u(gen);
            spe_val += x * x;
        }
        if (spe_val <= tau) continue;
        double top = 0.0;
        for (double x : proj) top = std::max(top, std::fabs(x));
        CHECK(top > std::sqrt(tau / static_cast<double>(d)));
    }
}

TEST_CASE("interpret: the zero vector yields an empty report") {
    const InterpretationReport rep = interpret(toy_model(0.5), {0.0, 0.0, 0.0});
    CHECK(rep.spe == 0.0);
    CHECK(rep.ranked_contributions.empty());
    CHECK(rep.rendered_components.empty());
    CHECK(rep.signature.marks.empty());
}

TEST_CASE("interpret: a pure second-component deviation gets the full squared share") {
    const InterpretationReport rep = interpret(toy_model(0.5), {0.0, 3.0, 1.0});
    CHECK(rep.spe == doctest::Approx(9.0).epsilon(1e-12));
    REQUIRE(rep.ranked_contributions.size() == 2);
    CHECK(rep.ranked_contributions[0].component == 2);
    CHECK(rep.ranked_contributions[0].squared_share == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.ranked_contributions[0].projection == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(rep.ranked_contributions[1].squared_share == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(to_string(rep.signature) == "2H");
    // The dominant rendered component names the matching feature.
    CHECK(rep.rendered_components[0] == "1.0000 B");
}

TEST_CASE("interpret: squared shares sum to one and come ranked descending") {
    auto gen = rng(23);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    const DetectionModel m = toy_model(0.5);
    for (int t = 0; t < 100; ++t) {
        const std::vector<double> y = {u(gen), u(gen), u(gen)};
        const InterpretationReport rep = interpret(m, y);
        if (rep.spe == 0.0) continue;
        double total = 0.0;
        double prev = 1e300;
        for (const Contribution& c : rep.ranked_contributions) {
            CHECK(c.squared_share <= prev + 1e-12);
            prev = c.squared_share;
            total += c.squared_share;
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("render_component: magnitude-ordered terms with signed separators") {
    const std::vector<std::string> names = {"A", "B", "C", "D", "E", "F", "G"};
    CHECK(render_component({0.7095, -0.7047, 0.0, 0.0, 0.0, 0.0, 0.0}, names, 0.1) ==
          "0.7095 A - 0.7047 B");
    CHECK(render_component({0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0}, names, 0.1) == "1.0000 F");
    CHECK(render_component({0.05, -0.08, 0.0, 0.0, 0.0, 0.0, 0.09}, names, 0.1) ==
          "(no dominant features)");
    // A dominant negative coefficient leads with a bare minus.
    CHECK(render_component({-0.9, 0.3, 0.0, 0.0, 0.0, 0.0, 0.0}, names, 0.1) ==
          "-0.9000 A + 0.3000 B");
    CHECK_THROWS_AS(render_component({1.0, 0.0}, names, 0.1), InputError);
    CHECK_THROWS_AS(render_component({1.0}, {"A"}, -0.5), InputError);
}

TEST_CASE("render_component: output is byte-stable across calls") {
    const std::vector<std::string> names = {"A", "B", "C"};
    const std::vector<double> v = {0.30501, -0.63170, 0.64443};
    const std::string first = render_component(v, names, 0.1);
    CHECK(first == render_component(v, names, 0.1));
    CHECK(first == "0.6444 C - 0.6317 B + 0.3050 A");
}

TEST_CASE("group_by_signature: groups sort by size with first-appearance tie-break") {
    const DetectionModel m = toy_model(0.5);
    std::vector<InterpretationReport> reports;
    // Two rows of signature 2H, three of 1H, one empty.
    reports.push_back(interpret(m, {0.0, 2.0, 0.0}));
    reports.push_back(interpret(m, {2.0, 0.0, 0.0}));
    reports.push_back(interpret(m, {0.0, 3.0, 0.0}));
    reports.push_back(interpret(m, {1.5, 0.0, 0.0}));
    reports.push_back(interpret(m, {0.0, 0.0, 0.0}));
    reports.push_back(interpret(m, {2.5, 0.1, 0.0}));

    const std::vector<SignatureGroup> groups = group_by_signature(reports);
    REQUIRE(groups.size() == 3);
    CHECK(to_string(groups[0].signature) == "1H");
    CHECK(groups[0].member_ids == std::vector<std::size_t>{1, 3, 5});
    CHECK(to_string(groups[1].signature) == "2H");
    CHECK(groups[1].member_ids == std::vector<std::size_t>{0, 2});
    CHECK(groups[2].signature.marks.empty());
    CHECK(groups[2].member_ids == std::vector<std::size_t>{4});

    // Equal-size groups keep first-appearance order.
    std::vector<InterpretationReport> tied = {reports[0], reports[1]};
    const std::vector<SignatureGroup> tg = group_by_signature(tied);
    REQUIRE(tg.size() == 2);
    CHECK(to_string(tg[0].signature) == "2H");
    CHECK(to_string(tg[1].signature) == "1H");

    CHECK(group_by_signature({}).empty());
}

TEST_CASE("write_interpretation_json: valid document with groups and contributions") {
    const DetectionModel m = toy_model(0.5);
    std::vector<InterpretationReport> reports;
    reports.push_back(interpret(m, {0.0, 2.0, 0.0}));
    reports.push_back(interpret(m, {1.5, 0.0, 0.0}));
    const std::vector<std::size_t> row_ids = {7, 12};
    const std::vector<SignatureGroup> groups = group_by_signature(reports);

    std::ostringstream out;
    write_interpretation_json(out, reports, row_ids, groups, m, 0.1);
    const nlohmann::json j = nlohmann::json::parse(out.str());

    CHECK(j.at("threshold").get<double>() == doctest::Approx(0.5));
    CHECK(j.at("anomaly_count").get<std::size_t>() == 2);
    REQUIRE(j.at("components").size() == 2);
    CHECK(j.at("components")[0].get<std::string>() == "1.0000 A");
    REQUIRE(j.at("anomalies").size() == 2);
    CHECK(j.at("anomalies")[0].at("row_id").get<std::size_t>() == 7);
    CHECK(j.at("anomalies")[0].at("signature").get<std::string>() == "2H");
    REQUIRE(j.at("groups").size() == 2);
    CHECK(j.at("groups")[0].at("count").get<std::size_t>() == 1);

    CHECK_THROWS_AS(write_interpretation_json(out, reports, {1}, groups, m, 0.1), InputError);
}

TEST_CASE("write_heatmap_csv: one row per anomaly, projections in natural order") {
    const DetectionModel m = toy_model(0.5);
    std::vector<InterpretationReport> reports;
    reports.push_back(interpret(m, {0.5, 2.0, 0.0})); // ranked order differs from natural
    const std::vector<std::size_t> row_ids = {3};

    std::ostringstream out;
    write_heatmap_csv(out, reports, row_ids);
    std::istringstream lines(out.str());
    std::string line;
    std::getline(lines, line);
    CHECK(line == "row_id,proj_1,proj_2");
    std::getline(lines, line);
    CHECK(line == "3,0.5,2");
    CHECK_FALSE(std::getline(lines, line));
}

TEST_CASE("write_heatmap_svg: well-formed with one cell per report and component") {
    const DetectionModel m = toy_model(0.5);
    std::vector<InterpretationReport> reports;
    reports.push_back(interpret(m, {0.5, 2.0, 0.0}));
    reports.push_back(interpret(m, {-1.0, 0.0, 0.0}));

    std::ostringstream out;
    write_heatmap_svg(out, reports, {0, 1});
    const std::string svg = out.str();
    CHECK(svg.rfind("<svg ", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);

    std::size_t cells = 0;
    for (std::size_t pos = svg.find("<rect"); pos != std::string::npos;
         pos = svg.find("<rect", pos + 1))
        ++cells;
    CHECK(cells == 1 + 2 * 2); // background + 2 rows x 2 components
}
