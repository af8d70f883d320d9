// Command-line front end: synth / fit / detect / interpret / eval.
// Exit codes: 0 success, 2 usage or input error, 3 numerical failure.

#include "aspca/data_io.hpp"
#include "aspca/detector.hpp"
#include "aspca/error.hpp"
#include "aspca/interpreter.hpp"
#include "aspca/matrix.hpp"
#include "aspca/model_io.hpp"
#include "aspca/models.hpp"
#include "aspca/version.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace {

using aspca::InputError;
using aspca::NumericalError;
using nlohmann::json;

// FNV-1a over the raw bytes of a file; cheap, stable input fingerprint.
std::string fnv1a_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open file: " + path);
    std::uint64_t h = 1469598103934665603ULL;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ULL;
        }
        if (got < static_cast<std::streamsize>(sizeof(buf))) break;
    }
    char out[32];
    std::snprintf(out, sizeof(out), "fnv1a:%016llx", static_cast<unsigned long long>(h));
    return out;
}

// Every run drops a manifest next to its primary output: what ran, with
// which settings, on which inputs (hashed), producing which files.
struct RunManifest {
    std::string command;
    json config = json::object();
    std::map<std::string, std::string> input_hashes;
    std::vector<std::string> outputs;
    std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

    void add_input(const std::string& path) { input_hashes[path] = fnv1a_file(path); }

    void write(const std::string& primary_output) const {
        json j;
        j["command"] = command;
        j["tool_version"] = aspca::kVersion;
        j["config"] = config;
        j["inputs"] = input_hashes;
        j["outputs"] = outputs;
        j["timing_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - started)
                             .count();
        const std::string path = primary_output + ".manifest.json";
        std::ofstream out(path);
        if (!out) throw InputError("cannot write manifest: " + path);
        out << j.dump(2) << '\n';
    }
};

aspca::Variant parse_variant(const std::string& s) {
    if (s == "pca") return aspca::Variant::PCA;
    if (s == "f") return aspca::Variant::AspcaF;
    if (s == "b") return aspca::Variant::AspcaB;
    if (s == "fg") return aspca::Variant::AspcaFG;
    if (s == "bg") return aspca::Variant::AspcaBG;
    throw InputError("unknown variant: " + s + " (expected pca|f|b|fg|bg)");
}

// Shared fit/solver knobs for `fit` and `eval --sweep-*`.
struct FitFlags {
    std::string data;
    std::string config; // column config JSON; optional
    std::string variant = "bg";
    std::size_t d = 1;
    double lambda = 0.0;
    double rho = 1.0;
    double tol = 1e-6;
    std::size_t max_iter = 5000;
    std::uint64_t seed = 0;
};

void add_fit_flags(CLI::App* cmd, FitFlags& f, bool require_model_shape) {
    cmd->add_option("--data", f.data, "input CSV with header row")->required();
    cmd->add_option("--config", f.config, "column config JSON");
    cmd->add_option("--variant", f.variant, "pca|f|b|fg|bg (default bg)");
    if (require_model_shape) {
        cmd->add_option("--d", f.d, "abnormal component count")->required();
        cmd->add_option("--lambda", f.lambda, "sparsity weight (default 0)");
    }
    cmd->add_option("--rho", f.rho, "ADMM penalty (default 1.0)");
    cmd->add_option("--tol", f.tol, "solver tolerance (default 1e-6)");
    cmd->add_option("--max-iter", f.max_iter, "solver iteration cap (default 5000)");
    cmd->add_option("--seed", f.seed, "solver seed (reserved; runs are deterministic)");
}

struct LoadedData {
    aspca::RawTable raw;
    aspca::PreprocessSpec spec;
    aspca::DataTable table;
};

LoadedData load_and_preprocess(const std::string& data_path, const std::string& config_path) {
    LoadedData ld;
    ld.raw = aspca::read_csv_file(data_path);
    aspca::ColumnConfig cols;
    if (!config_path.empty()) cols = aspca::load_column_config(config_path);
    ld.spec = aspca::fit_preprocess(ld.raw, cols);
    ld.table = aspca::apply_preprocess(ld.spec, ld.raw);
    for (const std::string& w : ld.table.warnings) std::cerr << "warning: " << w << '\n';
    return ld;
}

aspca::FitConfig to_fit_config(const FitFlags& f) {
    aspca::FitConfig cfg;
    cfg.variant = parse_variant(f.variant);
    cfg.d = f.d;
    cfg.lambda = f.lambda;
    cfg.solver.rho = f.rho;
    cfg.solver.tol = f.tol;
    cfg.solver.max_iter = f.max_iter;
    cfg.solver.seed = f.seed;
    return cfg;
}

// cmd_fit surfaces solver non-convergence as a numerical failure (exit 3);
// the per-component diagnostics go to stderr first.
void require_converged(const aspca::SubspaceModel& m) {
    std::string bad;
    for (const auto& cd : m.fit_diagnostics) {
        if (!cd.converged) {
            if (!bad.empty()) bad += ", ";
            bad += "component " + std::to_string(cd.step) + " (" +
                   std::to_string(cd.iterations) + " iters, trace_err " +
                   std::to_string(cd.trace_err) + ", orth_err " + std::to_string(cd.orth_err) +
                   ", min_eig " + std::to_string(cd.min_eig) + ")";
        }
    }
    if (!bad.empty()) throw NumericalError("solver did not converge: " + bad);
}

json diagnostics_json(const aspca::SubspaceModel& m) {
    json arr = json::array();
    for (const auto& cd : m.fit_diagnostics) {
        arr.push_back({{"step", cd.step},
                       {"iterations", cd.iterations},
                       {"converged", cd.converged},
                       {"primal_residual", cd.primal_residual},
                       {"trace_err", cd.trace_err},
                       {"orth_err", cd.orth_err},
                       {"min_eig", cd.min_eig},
                       {"rounding_gap", cd.rounding_gap}});
    }
    return arr;
}

int cmd_synth(std::uint64_t seed, const std::string& out) {
    RunManifest mf;
    mf.command = "synth";
    mf.config["seed"] = seed;
    const aspca::DataTable t = aspca::gen_synthetic(seed);
    aspca::write_csv_file(out, t);
    mf.outputs.push_back(out);
    mf.write(out);
    std::cout << "wrote " << t.matrix.rows() << " rows x " << t.matrix.cols() << " features to "
              << out << '\n';
    return 0;
}

int cmd_fit(const FitFlags& flags, const std::string& out_model,
            std::optional<double> threshold, std::optional<double> quantile,
            std::optional<double> target_tpr) {
    RunManifest mf;
    mf.command = "fit";
    mf.add_input(flags.data);
    if (!flags.config.empty()) mf.add_input(flags.config);

    const LoadedData ld = load_and_preprocess(flags.data, flags.config);
    const aspca::Matrix a = aspca::covariance(ld.table.matrix);
    const aspca::FitConfig cfg = to_fit_config(flags);
    const aspca::SubspaceModel sm = aspca::fit(a, cfg);
    require_converged(sm);

    aspca::DetectionModel dm;
    dm.v_abnormal = sm.v_abnormal;
    dm.feature_names = ld.table.feature_names;
    dm.preprocessing = ld.spec;

    const std::vector<aspca::ScoredInstance> scored = aspca::score_all(dm, ld.table.matrix);
    std::vector<double> spes;
    spes.reserve(scored.size());
    for (const auto& s : scored) spes.push_back(s.spe);

    if (threshold) {
        dm.threshold = *threshold;
        dm.threshold_rule = "explicit";
    } else if (target_tpr) {
        if (!ld.table.has_labels())
            throw InputError("--target-tpr needs a label column in the data/config");
        dm.threshold = aspca::choose_threshold_for_tpr(spes, ld.table.labels, *target_tpr);
        dm.threshold_rule = "target-tpr";
    } else {
        const double q = quantile.value_or(0.99);
        dm.threshold = aspca::choose_threshold(spes, q);
        dm.threshold_rule = "quantile";
    }

    aspca::save_model_file(dm, out_model);

    mf.config = {{"variant", flags.variant},
                 {"d", flags.d},
                 {"lambda", flags.lambda},
                 {"rho", flags.rho},
                 {"tol", flags.tol},
                 {"max_iter", flags.max_iter},
                 {"seed", flags.seed},
                 {"threshold", dm.threshold},
                 {"threshold_rule", dm.threshold_rule},
                 {"global_opt_applied", sm.global_opt_applied},
                 {"abnormal_l11", aspca::l11_norm(sm.v_abnormal)},
                 {"abnormal_variance", sm.variance_abnormal}};
    mf.config["diagnostics"] = diagnostics_json(sm);
    mf.outputs.push_back(out_model);
    mf.write(out_model);

    std::cout << "fitted " << flags.variant << " model: p=" << sm.v_abnormal.rows()
              << " d=" << sm.v_abnormal.cols() << " |V2|_1,1=" << aspca::l11_norm(sm.v_abnormal)
              << " threshold=" << dm.threshold << " (" << dm.threshold_rule << ")\n";
    return 0;
}

int cmd_detect(const std::string& model_path, const std::string& data_path,
               std::optional<double> threshold, std::optional<double> quantile,
               const std::string& out_scores) {
    RunManifest mf;
    mf.command = "detect";
    mf.add_input(model_path);
    mf.add_input(data_path);

    aspca::DetectionModel dm = aspca::load_model_file(model_path);
    const aspca::RawTable raw = aspca::read_csv_file(data_path);
    const aspca::DataTable table = aspca::apply_preprocess(dm.preprocessing, raw);
    for (const std::string& w : table.warnings) std::cerr << "warning: " << w << '\n';

    std::string rule = "model";
    if (threshold) {
        dm.threshold = *threshold;
        rule = "explicit";
    } else if (quantile) {
        std::vector<double> spes;
        const std::vector<aspca::ScoredInstance> pre = aspca::score_all(dm, table.matrix);
        spes.reserve(pre.size());
        for (const auto& s : pre) spes.push_back(s.spe);
        dm.threshold = aspca::choose_threshold(spes, *quantile);
        rule = "quantile";
    }

    const std::vector<aspca::ScoredInstance> scored = aspca::score_all(dm, table.matrix);
    std::ofstream out(out_scores);
    if (!out) throw InputError("cannot write scores: " + out_scores);
    aspca::write_scores_csv(out, scored);
    if (!out) throw InputError("score write failed: " + out_scores);

    std::size_t flagged = 0;
    for (const auto& s : scored) flagged += s.is_anomaly ? 1 : 0;

    mf.config = {{"threshold", dm.threshold}, {"threshold_rule", rule}};
    mf.outputs.push_back(out_scores);
    mf.write(out_scores);
    std::cout << "flagged " << flagged << " of " << scored.size() << " rows (threshold "
              << dm.threshold << ")\n";
    return 0;
}

int cmd_interpret(const std::string& model_path, const std::string& data_path,
                  std::optional<double> threshold, double cutoff, const std::string& out_report,
                  const std::string& svg_path, const std::string& csv_path) {
    RunManifest mf;
    mf.command = "interpret";
    mf.add_input(model_path);
    mf.add_input(data_path);

    aspca::DetectionModel dm = aspca::load_model_file(model_path);
    if (threshold) dm.threshold = *threshold;
    if (!(dm.threshold > 0.0))
        throw InputError("interpret: need a positive threshold (model or --threshold)");

    const aspca::RawTable raw = aspca::read_csv_file(data_path);
    const aspca::DataTable table = aspca::apply_preprocess(dm.preprocessing, raw);
    for (const std::string& w : table.warnings) std::cerr << "warning: " << w << '\n';

    std::vector<aspca::InterpretationReport> reports;
    std::vector<std::size_t> row_ids;
    std::vector<double> y(table.matrix.cols());
    for (std::size_t r = 0; r < table.matrix.rows(); ++r) {
        for (std::size_t j = 0; j < table.matrix.cols(); ++j) y[j] = table.matrix(r, j);
        const aspca::ScoredInstance s = aspca::spe(dm, y);
        if (s.is_anomaly) {
            reports.push_back(aspca::interpret(dm, y, cutoff));
            row_ids.push_back(r);
        }
    }
    const std::vector<aspca::SignatureGroup> groups = aspca::group_by_signature(reports);

    {
        std::ofstream out(out_report);
        if (!out) throw InputError("cannot write report: " + out_report);
        aspca::write_interpretation_json(out, reports, row_ids, groups, dm, cutoff);
    }
    mf.outputs.push_back(out_report);
    if (!csv_path.empty()) {
        std::ofstream out(csv_path);
        if (!out) throw InputError("cannot write heatmap CSV: " + csv_path);
        aspca::write_heatmap_csv(out, reports, row_ids);
        mf.outputs.push_back(csv_path);
    }
    if (!svg_path.empty()) {
        std::ofstream out(svg_path);
        if (!out) throw InputError("cannot write heatmap SVG: " + svg_path);
        aspca::write_heatmap_svg(out, reports, row_ids);
        mf.outputs.push_back(svg_path);
    }

    mf.config = {{"threshold", dm.threshold}, {"cutoff", cutoff}};
    mf.write(out_report);
    std::cout << "interpreted " << reports.size() << " anomalies in " << groups.size()
              << " signature group(s)\n";
    return 0;
}

std::vector<std::size_t> parse_range(const std::string& s) {
    const auto dots = s.find("..");
    if (dots == std::string::npos) {
        return {static_cast<std::size_t>(std::stoul(s))};
    }
    const std::size_t a = std::stoul(s.substr(0, dots));
    const std::size_t b = std::stoul(s.substr(dots + 2));
    if (a > b) throw InputError("bad range: " + s);
    std::vector<std::size_t> out;
    for (std::size_t v = a; v <= b; ++v) out.push_back(v);
    return out;
}

std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        const std::size_t comma = s.find(',', pos);
        const std::string tok =
            s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        if (tok.empty()) throw InputError("bad number list: " + s);
        out.push_back(std::stod(tok));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

int cmd_eval(const std::string& model_path, FitFlags flags, const std::string& sweep_d,
             const std::string& sweep_lambda, const std::string& out) {
    RunManifest mf;
    mf.command = "eval";
    const bool sweeping = !sweep_d.empty() || !sweep_lambda.empty();

    char buf[32];
    if (!sweeping) {
        if (model_path.empty()) throw InputError("eval: need --model (or --sweep-d/--sweep-lambda)");
        mf.add_input(model_path);
        mf.add_input(flags.data);
        if (!flags.config.empty()) mf.add_input(flags.config);

        aspca::DetectionModel dm = aspca::load_model_file(model_path);
        const aspca::RawTable raw = aspca::read_csv_file(flags.data);
        const aspca::DataTable table = aspca::apply_preprocess(dm.preprocessing, raw);
        if (!table.has_labels()) throw InputError("eval: data has no label column");

        std::vector<double> spes;
        for (const auto& s : aspca::score_all(dm, table.matrix)) spes.push_back(s.spe);
        const aspca::RocResult roc = aspca::roc_auc(spes, table.labels);

        std::ofstream o(out);
        if (!o) throw InputError("cannot write: " + out);
        o << "fpr,tpr\n";
        for (const auto& pt : roc.curve) {
            std::snprintf(buf, sizeof(buf), "%.17g", pt.fpr);
            o << buf << ',';
            std::snprintf(buf, sizeof(buf), "%.17g", pt.tpr);
            o << buf << '\n';
        }
        mf.config = {{"auc", roc.auc}};
        mf.outputs.push_back(out);
        mf.write(out);
        std::cout << "auc " << roc.auc << " (" << roc.curve.size() << " curve points)\n";
        return 0;
    }

    // Sweep mode: refit per grid cell, score on the same (labeled) data.
    mf.add_input(flags.data);
    if (!flags.config.empty()) mf.add_input(flags.config);
    const LoadedData ld = load_and_preprocess(flags.data, flags.config);
    if (!ld.table.has_labels()) throw InputError("eval: data has no label column");
    const aspca::Matrix a = aspca::covariance(ld.table.matrix);

    const std::vector<std::size_t> ds =
        sweep_d.empty() ? std::vector<std::size_t>{flags.d} : parse_range(sweep_d);
    const std::vector<double> lambdas =
        sweep_lambda.empty() ? std::vector<double>{flags.lambda} : parse_double_list(sweep_lambda);

    std::ofstream o(out);
    if (!o) throw InputError("cannot write: " + out);
    o << "lambda,d,l11,abnormal_variance,auc\n";
    for (const double lam : lambdas) {
        for (const std::size_t d : ds) {
            FitFlags cell = flags;
            cell.d = d;
            cell.lambda = lam;
            const aspca::FitConfig cfg = to_fit_config(cell);
            const aspca::SubspaceModel sm = aspca::fit(a, cfg);

            aspca::DetectionModel dm;
            dm.v_abnormal = sm.v_abnormal;
            dm.feature_names = ld.table.feature_names;
            dm.preprocessing = ld.spec;
            std::vector<double> spes;
            for (const auto& s : aspca::score_all(dm, ld.table.matrix)) spes.push_back(s.spe);
            const aspca::RocResult roc = aspca::roc_auc(spes, ld.table.labels);

            std::snprintf(buf, sizeof(buf), "%.17g", lam);
            o << buf << ',' << d << ',';
            std::snprintf(buf, sizeof(buf), "%.17g", aspca::l11_norm(sm.v_abnormal));
            o << buf << ',';
            std::snprintf(buf, sizeof(buf), "%.17g", sm.variance_abnormal);
            o << buf << ',';
            std::snprintf(buf, sizeof(buf), "%.17g", roc.auc);
            o << buf << '\n';
        }
    }
    mf.config = {{"variant", flags.variant},
                 {"sweep_d", sweep_d},
                 {"sweep_lambda", sweep_lambda},
                 {"rows", ds.size() * lambdas.size()}};
    mf.outputs.push_back(out);
    mf.write(out);
    std::cout << "wrote " << ds.size() * lambdas.size() << " sweep rows to " << out << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse-subspace anomaly detection pipeline"};
    app.require_subcommand(1);

    // synth
    std::uint64_t synth_seed = 0;
    std::string synth_out;
    CLI::App* synth = app.add_subcommand("synth", "generate the synthetic benchmark CSV");
    synth->add_option("--seed", synth_seed, "generator seed (default 0)");
    synth->add_option("--out", synth_out, "output CSV path")->required();

    // fit
    FitFlags fit_flags;
    std::string fit_out;
    std::optional<double> fit_threshold, fit_quantile, fit_target_tpr;
    CLI::App* fit = app.add_subcommand("fit", "fit preprocessing + subspace model");
    add_fit_flags(fit, fit_flags, true);
    fit->add_option("--out-model", fit_out, "output model JSON")->required();
    fit->add_option("--threshold", fit_threshold, "explicit SPE threshold");
    fit->add_option("--quantile", fit_quantile, "training-score quantile for the threshold (default 0.99)");
    fit->add_option("--target-tpr", fit_target_tpr, "labeled threshold selection: target TPR");

    // detect
    std::string det_model, det_data, det_out;
    std::optional<double> det_threshold, det_quantile;
    CLI::App* detect = app.add_subcommand("detect", "score data and flag anomalies");
    detect->add_option("--model", det_model, "model JSON from fit")->required();
    detect->add_option("--data", det_data, "input CSV")->required();
    detect->add_option("--threshold", det_threshold, "override the model threshold");
    detect->add_option("--quantile", det_quantile, "re-derive the threshold from these scores");
    detect->add_option("--out-scores", det_out, "output scores CSV")->required();

    // interpret
    std::string int_model, int_data, int_out, int_svg, int_csv;
    std::optional<double> int_threshold;
    double int_cutoff = 0.1;
    CLI::App* interpret = app.add_subcommand("interpret", "explain flagged anomalies");
    interpret->add_option("--model", int_model, "model JSON from fit")->required();
    interpret->add_option("--data", int_data, "input CSV")->required();
    interpret->add_option("--threshold", int_threshold, "override the model threshold");
    interpret->add_option("--cutoff", int_cutoff, "rendered-coefficient cutoff (default 0.1)");
    interpret->add_option("--out-report", int_out, "output report JSON")->required();
    interpret->add_option("--svg-heatmap", int_svg, "optional heatmap SVG path");
    interpret->add_option("--csv-heatmap", int_csv, "optional heatmap CSV path");

    // eval
    FitFlags eval_flags;
    std::string eval_model, eval_sweep_d, eval_sweep_lambda, eval_out;
    CLI::App* eval = app.add_subcommand("eval", "ROC/AUC evaluation and parameter sweeps");
    eval->add_option("--model", eval_model, "model JSON (plain evaluation mode)");
    add_fit_flags(eval, eval_flags, false);
    eval->add_option("--d", eval_flags.d, "abnormal component count (sweep base)");
    eval->add_option("--lambda", eval_flags.lambda, "sparsity weight (sweep base)");
    eval->add_option("--sweep-d", eval_sweep_d, "sweep d over a..b");
    eval->add_option("--sweep-lambda", eval_sweep_lambda, "sweep lambda over v1,v2,...");
    eval->add_option("--out", eval_out, "output CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand(synth)) return cmd_synth(synth_seed, synth_out);
        if (app.got_subcommand(fit))
            return cmd_fit(fit_flags, fit_out, fit_threshold, fit_quantile, fit_target_tpr);
        if (app.got_subcommand(detect))
            return cmd_detect(det_model, det_data, det_threshold, det_quantile, det_out);
        if (app.got_subcommand(interpret))
            return cmd_interpret(int_model, int_data, int_threshold, int_cutoff, int_out, int_svg,
                                 int_csv);
        if (app.got_subcommand(eval))
            return cmd_eval(eval_model, eval_flags, eval_sweep_d, eval_sweep_lambda, eval_out);
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
