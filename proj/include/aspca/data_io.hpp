#pragma once

#include "aspca/matrix.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace aspca {

// CSV contents as strings, header included. Cells are unparsed.
struct RawTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    std::size_t column_index(const std::string& name) const; // throws InputError if missing
    bool has_column(const std::string& name) const;
};

RawTable read_csv(std::istream& in);
RawTable read_csv_file(const std::string& path);

// Numeric dataset after preprocessing, plus optional ground truth.
struct DataTable {
    Matrix matrix; // n x p
    std::vector<std::string> feature_names;
    std::vector<bool> labels;            // empty when unlabeled
    std::vector<std::string> category;   // empty when absent
    std::vector<std::string> warnings;   // non-fatal anomalies (unknown categories, ...)

    bool has_labels() const { return !labels.empty(); }
};

// Declarative description of how to read a dataset (the JSON config file).
struct ColumnConfig {
    std::vector<std::string> categorical;
    std::vector<std::string> log;
    std::vector<std::string> drop;          // columns to ignore entirely
    std::string label_column;               // empty: unlabeled
    std::string category_column;            // empty: none
    std::vector<std::string> anomaly_values; // label values meaning anomaly, or
    std::vector<std::string> normal_values;  // label values meaning normal (rest anomalous)
    bool center_only = false;                // "scaling": "none" keeps raw units, centered
};

ColumnConfig load_column_config(const std::string& path);

struct CategoricalEncoding {
    std::string column;
    std::vector<std::string> values; // code = index (first appearance order)
};

// Fitted preprocessing: categorical codes, log transforms, centering and
// max-abs scaling. Applying the same spec to its fit set lands in [-1,1].
struct PreprocessSpec {
    ColumnConfig config;                      // the declaration this was fitted from
    std::vector<std::string> feature_names;   // final feature order
    std::vector<CategoricalEncoding> categoricals;
    std::vector<double> means;
    std::vector<double> scales;               // 1 for constant columns
    std::vector<bool> constant_columns;       // warning flags
    bool fitted = false;
};

PreprocessSpec fit_preprocess(const RawTable& table, const ColumnConfig& cfg);
DataTable apply_preprocess(const PreprocessSpec& spec, const RawTable& table);

// Synthetic benchmark: 500 normal rows driven by two latent uniforms with
// three built-in linear rules (A=B, D=C+A, F=0, G=0 up to N(0, 0.01) noise),
// plus 15 anomalies (5 per category) each breaking exactly one rule with an
// offset in [1.3, 1.5]. Pure function of the seed.
DataTable gen_synthetic(std::uint64_t seed);

// Offsets used by gen_synthetic's anomaly categories, exposed for tests.
double synthetic_offset(std::size_t index_in_category);

// Write features (+ label/category when present) with full double precision.
void write_csv(std::ostream& out, const DataTable& table);
void write_csv_file(const std::string& path, const DataTable& table);

} // namespace aspca
