#include "aspca/data_io.hpp"

#include "aspca/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <unordered_map>

namespace aspca {

std::size_t RawTable::column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return i;
    throw InputError("column not found: " + name);
}

bool RawTable::has_column(const std::string& name) const {
    return std::find(columns.begin(), columns.end(), name) != columns.end();
}

// Split one CSV line. Supports double-quoted fields with "" escapes; no
// multi-line fields.
static std::vector<std::string> split_csv_line(const std::string& line, std::size_t lineno) {
    std::vector<std::string> out;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cell += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cell += ch;
            }
        } else if (ch == '"' && cell.empty()) {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(cell);
            cell.clear();
        } else {
            cell += ch;
        }
    }
    if (quoted) throw InputError("csv line " + std::to_string(lineno) + ": unterminated quote");
    out.push_back(cell);
    return out;
}

RawTable read_csv(std::istream& in) {
    RawTable t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells = split_csv_line(line, lineno);
        if (t.columns.empty()) {
            t.columns = std::move(cells);
        } else {
            if (cells.size() != t.columns.size()) {
                throw InputError("csv line " + std::to_string(lineno) + ": expected " +
                                 std::to_string(t.columns.size()) + " fields, got " +
                                 std::to_string(cells.size()));
            }
            t.rows.push_back(std::move(cells));
        }
    }
    if (t.columns.empty()) throw InputError("csv: missing header row");
    return t;
}

RawTable read_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open file: " + path);
    return read_csv(in);
}

static std::vector<std::string> string_list(const nlohmann::json& j, const char* key) {
    std::vector<std::string> out;
    if (!j.contains(key)) return out;
    if (!j.at(key).is_array()) throw InputError(std::string("config: ") + key + " must be an array");
    for (const auto& v : j.at(key)) {
        if (!v.is_string()) throw InputError(std::string("config: ") + key + " entries must be strings");
        out.push_back(v.get<std::string>());
    }
    return out;
}

ColumnConfig load_column_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config: " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError("config " + path + ": " + e.what());
    }
    ColumnConfig cfg;
    cfg.categorical = string_list(j, "categorical");
    cfg.log = string_list(j, "log");
    cfg.drop = string_list(j, "drop");
    cfg.anomaly_values = string_list(j, "anomaly_values");
    cfg.normal_values = string_list(j, "normal_values");
    if (j.contains("label_column")) cfg.label_column = j.at("label_column").get<std::string>();
    if (j.contains("category_column")) cfg.category_column = j.at("category_column").get<std::string>();
    if (j.contains("scaling")) {
        const std::string s = j.at("scaling").get<std::string>();
        if (s == "none") cfg.center_only = true;
        else if (s == "maxabs") cfg.center_only = false;
        else throw InputError("config: scaling must be \"maxabs\" or \"none\"");
    }
    if (!cfg.anomaly_values.empty() && !cfg.normal_values.empty())
        throw InputError("config: give anomaly_values or normal_values, not both");
    return cfg;
}

static bool contains(const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
}

static double parse_double(const std::string& cell, std::size_t row, const std::string& col) {
    double value = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    // tolerate surrounding spaces
    while (first < last && *first == ' ') ++first;
    while (last > first && *(last - 1) == ' ') --last;
    const auto res = std::from_chars(first, last, value);
    if (res.ec != std::errc{} || res.ptr != last) {
        throw InputError("row " + std::to_string(row + 1) + ", column " + col +
                         ": not a number: \"" + cell + "\"");
    }
    return value;
}

// Feature columns in table order, minus label/category/dropped ones.
static std::vector<std::string> feature_order(const RawTable& table, const ColumnConfig& cfg) {
    std::vector<std::string> names;
    for (const std::string& c : table.columns) {
        if (c == cfg.label_column || c == cfg.category_column) continue;
        if (contains(cfg.drop, c)) continue;
        names.push_back(c);
    }
    if (names.empty()) throw InputError("preprocess: no feature columns left");
    return names;
}

PreprocessSpec fit_preprocess(const RawTable& table, const ColumnConfig& cfg) {
    if (table.rows.empty()) throw InputError("preprocess: no data rows");
    for (const std::string& c : cfg.categorical) {
        if (!table.has_column(c)) throw InputError("categorical column missing: " + c);
        if (contains(cfg.log, c)) throw InputError("column both categorical and log: " + c);
    }
    for (const std::string& c : cfg.log)
        if (!table.has_column(c)) throw InputError("log column missing: " + c);
    if (!cfg.label_column.empty() && !table.has_column(cfg.label_column))
        throw InputError("label column missing: " + cfg.label_column);

    PreprocessSpec spec;
    spec.config = cfg;
    spec.feature_names = feature_order(table, cfg);
    const std::size_t p = spec.feature_names.size();
    const std::size_t n = table.rows.size();

    // First-appearance categorical codes.
    for (const std::string& c : cfg.categorical) {
        if (c == cfg.label_column || c == cfg.category_column || contains(cfg.drop, c)) continue;
        CategoricalEncoding enc;
        enc.column = c;
        const std::size_t ci = table.column_index(c);
        std::unordered_map<std::string, std::size_t> seen;
        for (const auto& row : table.rows) {
            const std::string& v = row[ci];
            if (seen.emplace(v, enc.values.size()).second) enc.values.push_back(v);
        }
        spec.categoricals.push_back(std::move(enc));
    }

    std::vector<std::size_t> col_of(p);
    std::vector<const CategoricalEncoding*> enc_of(p, nullptr);
    std::vector<bool> log_of(p, false);
    for (std::size_t f = 0; f < p; ++f) {
        col_of[f] = table.column_index(spec.feature_names[f]);
        for (const auto& enc : spec.categoricals)
            if (enc.column == spec.feature_names[f]) enc_of[f] = &enc;
        log_of[f] = contains(cfg.log, spec.feature_names[f]);
    }

    // Transform pass: encode/log, then accumulate means and max-abs deviations.
    auto transformed = [&](std::size_t r, std::size_t f) -> double {
        const std::string& cell = table.rows[r][col_of[f]];
        if (enc_of[f] != nullptr) {
            const auto& vals = enc_of[f]->values;
            const auto it = std::find(vals.begin(), vals.end(), cell);
            return static_cast<double>(it - vals.begin()); // fit set: always found
        }
        double v = parse_double(cell, r, spec.feature_names[f]);
        if (log_of[f]) {
            if (v < 0.0)
                throw InputError("row " + std::to_string(r + 1) + ", column " +
                                 spec.feature_names[f] + ": negative value in log column");
            v = std::log1p(v);
        }
        return v;
    };

    spec.means.assign(p, 0.0);
    spec.scales.assign(p, 1.0);
    spec.constant_columns.assign(p, false);
    

    Matrix values(n, p);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t f = 0; f < p; ++f) values(r, f) = transformed(r, f);
    for (std::size_t f = 0; f < p; ++f) {
        double sum = 0.0;
        for (std::size_t r = 0; r < n; ++r) sum += values(r, f);
        spec.means[f] = sum / static_cast<double>(n);
    }
    for (std::size_t f = 0; f < p; ++f) {
        double mx = 0.0;
        for (std::size_t r = 0; r < n; ++r)
            mx = std::max(mx, std::fabs(values(r, f) - spec.means[f]));
        if (mx == 0.0) {
            spec.constant_columns[f] = true;
            spec.scales[f] = 1.0;
        } else {
            spec.scales[f] = cfg.center_only ? 1.0 : mx;
        }
    }
    spec.fitted = true;
    return spec;
}

DataTable apply_preprocess(const PreprocessSpec& spec, const RawTable& table) {
    if (!spec.fitted) throw InputError("apply_preprocess: spec not fitted");
    const std::size_t p = spec.feature_names.size();
    const std::size_t n = table.rows.size();

    DataTable out;
    out.feature_names = spec.feature_names;
    out.matrix = Matrix(n, p);

    std::vector<std::size_t> col_of(p);
    for (std::size_t f = 0; f < p; ++f) col_of[f] = table.column_index(spec.feature_names[f]);

    std::vector<const CategoricalEncoding*> enc_of(p, nullptr);
    for (std::size_t f = 0; f < p; ++f)
        for (const auto& enc : spec.categoricals)
            if (enc.column == spec.feature_names[f]) enc_of[f] = &enc;

    std::vector<std::size_t> unknown_count(p, 0);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t f = 0; f < p; ++f) {
            const std::string& cell = table.rows[r][col_of[f]];
            double v;
            if (enc_of[f] != nullptr) {
                const auto& vals = enc_of[f]->values;
                const auto it = std::find(vals.begin(), vals.end(), cell);
                if (it == vals.end()) {
                    v = static_cast<double>(vals.size()); // reserved unknown code
                    ++unknown_count[f];
                } else {
                    v = static_cast<double>(it - vals.begin());
                }
            } else {
                v = parse_double(cell, r, spec.feature_names[f]);
                if (contains(spec.config.log, spec.feature_names[f])) {
                    if (v < 0.0)
                        throw InputError("row " + std::to_string(r + 1) + ", column " +
                                         spec.feature_names[f] + ": negative value in log column");
                    v = std::log1p(v);
                }
            }
            out.matrix(r, f) = (v - spec.means[f]) / spec.scales[f];
        }
    }
    for (std::size_t f = 0; f < p; ++f) {
        if (unknown_count[f] > 0) {
            out.warnings.push_back("column " + spec.feature_names[f] + ": " +
                                   std::to_string(unknown_count[f]) +
                                   " unknown categorical value(s) mapped to reserved code");
        }
    }

    // Labels / categories when the columns are present.
    const ColumnConfig& cfg = spec.config;
    if (!cfg.label_column.empty() && table.has_column(cfg.label_column)) {
        const std::size_t li = table.column_index(cfg.label_column);
        out.labels.reserve(n);
        for (std::size_t r = 0; r < n; ++r) {
            const std::string& v = table.rows[r][li];
            bool anomaly;
            if (!cfg.anomaly_values.empty()) anomaly = contains(cfg.anomaly_values, v);
            else if (!cfg.normal_values.empty()) anomaly = !contains(cfg.normal_values, v);
            else anomaly = (v == "1" || v == "true" || v == "yes");
            out.labels.push_back(anomaly);
        }
    }
    if (!cfg.category_column.empty() && table.has_column(cfg.category_column)) {
        const std::size_t ci = table.column_index(cfg.category_column);
        for (std::size_t r = 0; r < n; ++r) out.category.push_back(table.rows[r][ci]);
    }
    return out;
}

// --- synthetic generator ------------------------------------------------

namespace {

// Deterministic uniform/gaussian stream. Box-Muller consumes two uniforms
// per gaussian (no pair caching) so the draw sequence is easy to reason
// about and stable across refactors.
class SyntheticRng {
public:
    explicit SyntheticRng(std::uint64_t seed) : eng_(seed) {}

    double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
    double uniform_pm1() { return 2.0 * uniform01() - 1.0; }
    double gauss(double sigma) {
        const double u1 = 1.0 - uniform01(); // (0, 1]
        const double u2 = uniform01();
        return sigma * std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::mt19937_64 eng_;
};

} // namespace

double synthetic_offset(std::size_t index_in_category) {
    // Separable but not wildly so: SPE ~ delta^2/2 >= 0.845 vs tau = 0.25.
    return 1.3 + 0.05 * static_cast<double>(index_in_category % 5);
}

DataTable gen_synthetic(std::uint64_t seed) {
    constexpr std::size_t kNormal = 500;
    constexpr std::size_t kPerCategory = 5;
    constexpr double kSigma = 0.01;

    SyntheticRng rng(seed);
    DataTable t;
    t.feature_names = {"A", "B", "C", "D", "E", "F", "G"};
    t.matrix = Matrix(kNormal + 3 * kPerCategory, 7);

    auto fill_row = [&](std::size_t r) {
        const double lt = rng.uniform_pm1();
        const double lu = rng.uniform_pm1();
        const double a = lt + rng.gauss(kSigma);
        const double b = lt + rng.gauss(kSigma);
        const double c = lu + rng.gauss(kSigma);
        const double d = c + a + rng.gauss(kSigma);
        const double e = rng.uniform_pm1();
        const double f = rng.gauss(kSigma);
        const double g = rng.gauss(kSigma);
        t.matrix(r, 0) = a;
        t.matrix(r, 1) = b;
        t.matrix(r, 2) = c;
        t.matrix(r, 3) = d;
        t.matrix(r, 4) = e;
        t.matrix(r, 5) = f;
        t.matrix(r, 6) = g;
    };

    for (std::size_t r = 0; r < kNormal; ++r) {
        fill_row(r);
        t.labels.push_back(false);
        t.category.push_back("normal");
    }

    // Three anomaly categories, one broken rule each: A=B, D=C+A, F=0.
    const struct {
        std::size_t feature;
        const char* name;
    } kCategories[] = {{0, "break-AB"}, {3, "break-DCA"}, {5, "break-F"}};
    std::size_t r = kNormal;
    for (const auto& cat : kCategories) {
        for (std::size_t j = 0; j < kPerCategory; ++j, ++r) {
            fill_row(r);
            t.matrix(r, cat.feature) += synthetic_offset(j);
            t.labels.push_back(true);
            t.category.push_back(cat.name);
        }
    }
    return t;
}

// --- CSV output ----------------------------------------------------------

static void write_double(std::ostream& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf;
}

void write_csv(std::ostream& out, const DataTable& table) {
    const std::size_t n = table.matrix.rows();
    const std::size_t p = table.matrix.cols();
    if (table.feature_names.size() != p) throw InputError("write_csv: name/width mismatch");

    for (std::size_t f = 0; f < p; ++f) {
        if (f) out << ',';
        out << table.feature_names[f];
    }
    if (table.has_labels()) out << ",label";
    if (!table.category.empty()) out << ",category";
    out << '\n';

    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t f = 0; f < p; ++f) {
            if (f) out << ',';
            write_double(out, table.matrix(r, f));
        }
        if (table.has_labels()) out << ',' << (table.labels[r] ? '1' : '0');
        if (!table.category.empty()) out << ',' << table.category[r];
        out << '\n';
    }
}

void write_csv_file(const std::string& path, const DataTable& table) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write file: " + path);
    write_csv(out, table);
    if (!out) throw InputError("write failed: " + path);
}

} // namespace aspca
