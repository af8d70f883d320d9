#include "aspca/model_io.hpp"

#include "aspca/error.hpp"
#include "aspca/version.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

namespace aspca {

using nlohmann::json;

static json matrix_to_json(const Matrix& m) {
    json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    j["data"] = m.data(); // row-major, shortest round-trip decimal
    return j;
}

static Matrix matrix_from_json(const json& j) {
    const std::size_t rows = j.at("rows").get<std::size_t>();
    const std::size_t cols = j.at("cols").get<std::size_t>();
    const std::vector<double> data = j.at("data").get<std::vector<double>>();
    if (data.size() != rows * cols) throw InputError("model: matrix entry count mismatch");
    Matrix m(rows, cols);
    m.data() = data;
    return m;
}

void save_model(const DetectionModel& model, std::ostream& out) {
    json j;
    j["format"] = kModelFormat;
    j["tool_version"] = kVersion;
    j["feature_names"] = model.feature_names;
    j["threshold"] = model.threshold;
    j["threshold_rule"] = model.threshold_rule;
    j["v_abnormal"] = matrix_to_json(model.v_abnormal);

    const PreprocessSpec& pp = model.preprocessing;
    json jp;
    jp["fitted"] = pp.fitted;
    jp["feature_names"] = pp.feature_names;
    jp["means"] = pp.means;
    jp["scales"] = pp.scales;
    jp["constant_columns"] = pp.constant_columns;
    jp["log_columns"] = pp.config.log;
    json jcats = json::array();
    for (const auto& enc : pp.categoricals)
        jcats.push_back({{"column", enc.column}, {"values", enc.values}});
    jp["categoricals"] = jcats;
    json jcfg;
    jcfg["categorical"] = pp.config.categorical;
    jcfg["log"] = pp.config.log;
    jcfg["drop"] = pp.config.drop;
    jcfg["label_column"] = pp.config.label_column;
    jcfg["category_column"] = pp.config.category_column;
    jcfg["anomaly_values"] = pp.config.anomaly_values;
    jcfg["normal_values"] = pp.config.normal_values;
    jcfg["scaling"] = pp.config.center_only ? "none" : "maxabs";
    jp["config"] = jcfg;
    j["preprocessing"] = jp;

    out << j.dump(2) << '\n';
}

void save_model_file(const DetectionModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write model: " + path);
    save_model(model, out);
    if (!out) throw InputError("model write failed: " + path);
}

DetectionModel load_model(std::istream& in) {
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        // e.what() carries the byte offset of the failure
        throw InputError(std::string("model parse error: ") + e.what());
    }

    DetectionModel m;
    try {
        const std::string format = j.at("format").get<std::string>();
        if (format != kModelFormat)
            throw InputError("model: unsupported format \"" + format + "\" (expected " +
                             kModelFormat + ")");
        m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        m.threshold = j.at("threshold").get<double>();
        if (j.contains("threshold_rule")) m.threshold_rule = j.at("threshold_rule").get<std::string>();
        m.v_abnormal = matrix_from_json(j.at("v_abnormal"));

        const json& jp = j.at("preprocessing");
        PreprocessSpec& pp = m.preprocessing;
        pp.fitted = jp.at("fitted").get<bool>();
        pp.feature_names = jp.at("feature_names").get<std::vector<std::string>>();
        pp.means = jp.at("means").get<std::vector<double>>();
        pp.scales = jp.at("scales").get<std::vector<double>>();
        pp.constant_columns = jp.at("constant_columns").get<std::vector<bool>>();
        jp.at("log_columns").get<std::vector<std::string>>(); // retained for readability; config.log is authoritative
        for (const auto& jc : jp.at("categoricals")) {
            CategoricalEncoding enc;
            enc.column = jc.at("column").get<std::string>();
            enc.values = jc.at("values").get<std::vector<std::string>>();
            pp.categoricals.push_back(std::move(enc));
        }
        const json& jcfg = jp.at("config");
        pp.config.categorical = jcfg.at("categorical").get<std::vector<std::string>>();
        pp.config.log = jcfg.at("log").get<std::vector<std::string>>();
        pp.config.drop = jcfg.at("drop").get<std::vector<std::string>>();
        pp.config.label_column = jcfg.at("label_column").get<std::string>();
        pp.config.category_column = jcfg.at("category_column").get<std::string>();
        pp.config.anomaly_values = jcfg.at("anomaly_values").get<std::vector<std::string>>();
        pp.config.normal_values = jcfg.at("normal_values").get<std::vector<std::string>>();
        pp.config.center_only = jcfg.at("scaling").get<std::string>() == "none";
    } catch (const json::exception& e) {
        throw InputError(std::string("model: malformed document: ") + e.what());
    }

    // Structural checks.
    const std::size_t p = m.v_abnormal.rows();
    const std::size_t d = m.v_abnormal.cols();
    if (p == 0 || d == 0) throw InputError("model: empty abnormal basis");
    if (m.feature_names.size() != p) throw InputError("model: feature name count mismatch");
    if (!(m.threshold >= 0.0)) throw InputError("model: negative threshold");
    if (m.preprocessing.fitted) {
        if (m.preprocessing.means.size() != p || m.preprocessing.scales.size() != p)
            throw InputError("model: preprocessing dimension mismatch");
        for (double s : m.preprocessing.scales)
            if (!(s > 0.0)) throw InputError("model: non-positive scale");
    }
    m.v_abnormal.require_finite("model: v_abnormal");

    // The scoring math assumes an orthonormal abnormal basis; refuse models
    // whose loadings drifted (or were edited) beyond tolerance.
    const Matrix gram = transpose(m.v_abnormal) * m.v_abnormal;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t k = 0; k < d; ++k)
            if (std::fabs(gram(i, k) - (i == k ? 1.0 : 0.0)) > 1e-4)
                throw InputError("model: abnormal basis is not orthonormal");

    return m;
}

DetectionModel load_model_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open model: " + path);
    return load_model(in);
}

} // namespace aspca
