#include "confeval/cli.hpp"

#include "confeval/error.hpp"
#include "confeval/metrics.hpp"
#include "confeval/pvalue.hpp"
#include "confeval/random.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace confeval::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

template <typename T>
T get_field(const json& obj, const char* key, const std::string& where) {
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + ": missing or has the wrong type");
    }
}

template <typename T>
void read_opt(const json& obj, const char* key, const std::string& where, T& target) {
    if (obj.contains(key) && !obj.at(key).is_null()) target = get_field<T>(obj, key, where);
}

template <typename T>
void read_opt(const json& obj, const char* key, const std::string& where, std::optional<T>& target) {
    if (obj.contains(key) && !obj.at(key).is_null()) target = get_field<T>(obj, key, where);
}

const json& section(const json& j, const char* key) {
    static const json empty = json::object();
    if (!j.contains(key)) return empty;
    const auto& s = j.at(key);
    if (!s.is_object()) throw ConfigError(std::string(key) + ": expected an object");
    return s;
}

fs::path resolve(const fs::path& base, const fs::path& p) { return p.is_absolute() || base.empty() ? p : base / p; }

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IntegrityError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw IntegrityError("failed writing '" + path.string() + "'");
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IntegrityError("cannot create output directory '" + dir.string() + "': " + ec.message());
}

const std::vector<std::string>& classifier_names() {
    static const std::vector<std::string> names = {"nearest-centroid", "knn", "linear-svm", "external"};
    return names;
}

std::uint64_t require_seed(const RunConfig& cfg) {
    if (!cfg.seed) throw ConfigError("seed: missing (set it in the config or pass --seed)");
    return *cfg.seed;
}

}  // namespace

RunConfig parse_run_config(const json& j, const fs::path& base_dir) {
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    RunConfig cfg;
    cfg.base_dir = base_dir;
    read_opt(j, "seed", "config", cfg.seed);
    read_opt(j, "threads", "config", cfg.threads);

    const auto& data = section(j, "data");
    if (data.contains("path")) cfg.data_path = resolve(base_dir, get_field<std::string>(data, "path", "data"));
    read_opt(data, "format", "data", cfg.data_format);
    if (cfg.data_format != "dense-csv" && cfg.data_format != "sparse") {
        throw ConfigError("data.format: unknown format '" + cfg.data_format + "' (expected dense-csv or sparse)");
    }

    const auto& split = section(j, "split");
    read_opt(split, "train_end", "split", cfg.train_end);
    read_opt(split, "period_length", "split", cfg.period_length);

    const auto& clf = section(j, "classifier");
    read_opt(clf, "name", "classifier", cfg.classifier);
    if (std::find(classifier_names().begin(), classifier_names().end(), cfg.classifier) == classifier_names().end()) {
        throw ConfigError("classifier.name: unknown classifier '" + cfg.classifier +
                          "' (expected nearest-centroid, knn, linear-svm or external)");
    }
    read_opt(clf, "k", "classifier", cfg.knn_k);
    read_opt(clf, "lambda", "classifier", cfg.svm.lambda);
    read_opt(clf, "epochs", "classifier", cfg.svm.epochs);
    if (clf.contains("scores")) cfg.scores_path = resolve(base_dir, get_field<std::string>(clf, "scores", "classifier"));
    if (clf.contains("votes")) cfg.votes_path = resolve(base_dir, get_field<std::string>(clf, "votes", "classifier"));
    if (cfg.classifier == "knn" && cfg.knn_k == 0) throw ConfigError("classifier.k must be at least 1");
    if (cfg.classifier == "linear-svm" && !(cfg.svm.lambda > 0.0)) throw ConfigError("classifier.lambda must be > 0");
    if (cfg.classifier == "external" && !cfg.scores_path) throw ConfigError("classifier.scores: required for external");

    const auto& ncm = section(j, "ncm");
    if (cfg.classifier == "linear-svm" || cfg.classifier == "external") cfg.ncm = "signed-score";
    if (cfg.classifier == "knn") cfg.ncm = "knn-disagreement";
    read_opt(ncm, "name", "ncm", cfg.ncm);
    read_opt(ncm, "k", "ncm", cfg.ncm_options.k);
    make_ncm(cfg.ncm, cfg.ncm_options);

    const auto& ev = section(j, "evaluator");
    if (ev.contains("kind")) cfg.kind = evaluator_kind_from_name(get_field<std::string>(ev, "kind", "evaluator"));
    read_opt(ev, "k", "evaluator", cfg.folds);
    read_opt(ev, "calibration_fraction", "evaluator", cfg.calibration_fraction);
    read_opt(ev, "quorum", "evaluator", cfg.quorum);
    read_opt(ev, "temporal", "evaluator", cfg.temporal_split);
    read_opt(ev, "grid_step", "evaluator", cfg.grid_step);
    if (cfg.kind == EvaluatorKind::Ice && !(cfg.calibration_fraction > 0.0 && cfg.calibration_fraction < 1.0)) {
        throw ConfigError("evaluator.calibration_fraction must lie strictly between 0 and 1");
    }
    if ((cfg.kind == EvaluatorKind::Cce || cfg.kind == EvaluatorKind::ApproxTce) && cfg.folds < 2) {
        throw ConfigError("evaluator.k must be at least 2");
    }
    if (cfg.kind == EvaluatorKind::Cce && cfg.quorum > cfg.folds) {
        throw ConfigError("evaluator.quorum must lie in [1, k]");
    }
    if (cfg.grid_step && !(*cfg.grid_step > 0.0 && *cfg.grid_step <= 1.0)) {
        throw ConfigError("evaluator.grid_step must lie in (0, 1]");
    }

    if (j.contains("search")) cfg.search = search_spec_from_json(j.at("search"));
    cfg.search.threads = cfg.threads;

    if (j.contains("simulate")) cfg.simulate = drift_config_from_json(j.at("simulate"));
    return cfg;
}

RunConfig load_run_config(const fs::path& path) {
    json j;
    try {
        j = json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return parse_run_config(j, path.parent_path());
}

std::uint64_t partition_seed(const RunConfig& cfg) { return derive_seed(require_seed(cfg), "partition"); }
std::uint64_t training_seed(const RunConfig& cfg) { return derive_seed(require_seed(cfg), "training"); }
std::uint64_t search_seed(const RunConfig& cfg) { return derive_seed(require_seed(cfg), "search"); }

ModelFactory make_factory(const RunConfig& cfg, const LabelSpace& labels) {
    if (cfg.classifier == "nearest-centroid") {
        return [](const Dataset& d) -> ModelPtr { return fit_nearest_centroid(d); };
    }
    if (cfg.classifier == "knn") {
        const auto k = cfg.knn_k;
        return [k](const Dataset& d) -> ModelPtr { return fit_knn(d, k); };
    }
    if (cfg.classifier == "linear-svm") {
        auto params = cfg.svm;
        params.seed = training_seed(cfg);
        return [params](const Dataset& d) -> ModelPtr { return fit_linear_svm(d, params); };
    }
    auto table = load_external_scores(*cfg.scores_path);
    if (cfg.votes_path) load_external_votes(table, *cfg.votes_path);
    auto model = wrap_external_scores(table.aligned_to(labels));
    return [model](const Dataset&) -> ModelPtr { return model; };
}

Dataset load_data(const RunConfig& cfg) {
    if (!cfg.data_path) throw ConfigError("data.path: missing");
    if (!fs::exists(*cfg.data_path)) throw ConfigError("data.path: '" + cfg.data_path->string() + "' does not exist");
    return cfg.data_format == "sparse" ? load_sparse(*cfg.data_path) : load_dense_csv(*cfg.data_path);
}

TemporalSplit split_data(const RunConfig& cfg, const Dataset& d) {
    if (!cfg.train_end) throw ConfigError("split.train_end: missing");
    if (!cfg.period_length) throw ConfigError("split.period_length: missing");
    return temporal_split(d, *cfg.train_end, *cfg.period_length);
}

CalibratedEvaluator calibrate(const RunConfig& cfg, const Dataset& train) {
    CalibrationOptions opt;
    opt.seed = partition_seed(cfg);
    opt.threads = cfg.threads;
    opt.temporal_split = cfg.temporal_split;
    opt.grid_step = cfg.grid_step;
    opt.search = cfg.search;
    opt.search.seed = search_seed(cfg);
    const auto ncm = make_ncm(cfg.ncm, cfg.ncm_options);
    const auto factory = make_factory(cfg, train.labels());
    switch (cfg.kind) {
        case EvaluatorKind::Tce: return calibrate_tce(train, ncm, factory, train.size(), opt);
        case EvaluatorKind::ApproxTce: return calibrate_tce(train, ncm, factory, cfg.folds, opt);
        case EvaluatorKind::Ice: return calibrate_ice(train, ncm, factory, cfg.calibration_fraction, opt);
        case EvaluatorKind::Cce: return calibrate_cce(train, ncm, factory, cfg.folds, cfg.quorum, opt);
    }
    throw ConfigError("evaluator.kind: unsupported");
}

void cmd_calibrate(const RunConfig& cfg, const fs::path& out_dir) {
    require_seed(cfg);
    const auto data = load_data(cfg);
    const Dataset train = cfg.train_end ? split_data(cfg, data).train : data;
    const auto ev = calibrate(cfg, train);
    const auto& labels = ev.labels();

    ensure_dir(out_dir);
    ev.save(out_dir / "evaluator.json");

    json thresholds;
    json summary = {{"kind", evaluator_kind_name(ev.kind())},
                    {"classifier", cfg.classifier},
                    {"ncm", ev.ncm_name()},
                    {"train_examples", train.size()},
                    {"calibration_records", ev.records().size()},
                    {"search", search_spec_to_json(cfg.search)}};
    if (ev.kind() == EvaluatorKind::Cce) {
        json folds = json::array();
        json fold_results = json::array();
        for (const auto& f : ev.folds()) {
            folds.push_back(thresholds_to_json(*f.thresholds, labels));
            fold_results.push_back(f.search ? search_result_to_json(*f.search, cfg.search, labels) : json(nullptr));
        }
        thresholds = {{"quorum", ev.quorum()}, {"folds", folds}};
        summary["quorum"] = ev.quorum();
        summary["folds"] = fold_results;
    } else {
        thresholds = thresholds_to_json(*ev.thresholds(), labels);
        summary["result"] = ev.search() ? search_result_to_json(*ev.search(), cfg.search, labels) : json(nullptr);
    }
    write_text(out_dir / "thresholds.json", thresholds.dump(2) + "\n");
    write_text(out_dir / "calibration_summary.json", summary.dump(2) + "\n");
    write_text(out_dir / "calibration_records.csv", format_records_csv(ev.records(), labels));
    const auto groups = alpha_assessment(ev.records(), labels.size(), true);
    write_text(out_dir / "alpha_assessment.csv", format_alpha_csv(groups, labels));
}

bool cmd_evaluate(const RunConfig& cfg, const fs::path& state_path, const fs::path& out_dir, std::ostream& warn) {
    const auto ev = CalibratedEvaluator::load(state_path);
    const auto data = load_data(cfg);
    const auto split = split_data(cfg, data);
    if (split.test_periods.empty()) throw ConfigError("split: no test periods after split.train_end");

    std::vector<std::vector<Decision>> decisions;
    std::vector<Decision> flat;
    bool labeled = true;
    for (const auto& period : split.test_periods) {
        decisions.push_back(ev.decide_all(period, cfg.threads));
        flat.insert(flat.end(), decisions.back().begin(), decisions.back().end());
        labeled = labeled && period.fully_labeled();
    }
    ensure_dir(out_dir);
    write_text(out_dir / "decisions.csv", format_decisions_csv(flat, ev.labels()));
    if (!labeled) {
        warn << "warning: test data has unlabeled examples; decisions written, metrics skipped\n";
        return false;
    }
    const auto report = report_from_decisions(decisions, split.test_periods, split.period_starts, ev.labels(),
                                              positive_label(cfg.search, ev.labels()));
    write_text(out_dir / "report.json", report_to_json(report).dump(2) + "\n");
    write_text(out_dir / "report.csv", format_report_csv(report));
    return true;
}

void cmd_simulate(const RunConfig& cfg, const fs::path& out_dir) {
    if (!cfg.simulate) throw ConfigError("simulate: missing drift configuration block");
    const auto stream = generate_drift_stream(*cfg.simulate, derive_seed(require_seed(cfg), "simulate"));
    ensure_dir(out_dir);
    save_dense_csv(stream, out_dir / "stream.csv");
}

void cmd_assess(const fs::path& records_path, const fs::path& out_dir, bool label_conditional) {
    LabelSpace labels;
    std::vector<PValueRecord> records;
    try {
        records = parse_records_csv(read_text(records_path), labels);
    } catch (const ParseError& e) {
        throw IntegrityError("records '" + records_path.string() + "': " + e.what());
    }
    for (const auto& r : records) {
        if (!r.truth) throw ConfigError("records: '" + r.id + "' has no ground truth; alpha assessment needs labels");
    }
    ensure_dir(out_dir);
    write_text(out_dir / "alpha_assessment.csv",
               format_alpha_csv(alpha_assessment(records, labels.size(), label_conditional), labels));
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Conformal evaluation of classifiers under concept drift"};
    app.require_subcommand(1);

    std::string config_path, out_dir = ".", state_path, records_path;
    std::optional<std::uint64_t> seed;
    bool non_conditional = false;

    auto add_common = [&](CLI::App* sub, bool needs_config) {
        auto* opt = sub->add_option("--config", config_path, "Run configuration (JSON)");
        if (needs_config) opt->required();
        sub->add_option("--out", out_dir, "Output directory");
        sub->add_option("--seed", seed, "Override the configured seed");
    };
    auto* calibrate_cmd = app.add_subcommand("calibrate", "Calibrate an evaluator and search thresholds");
    add_common(calibrate_cmd, true);
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Decide test periods with a calibrated evaluator");
    add_common(evaluate_cmd, true);
    evaluate_cmd->add_option("--state", state_path, "Evaluator state written by calibrate")->required();
    auto* simulate_cmd = app.add_subcommand("simulate", "Generate a synthetic drifting stream");
    add_common(simulate_cmd, true);
    auto* assess_cmd = app.add_subcommand("assess", "Alpha assessment of calibration records");
    assess_cmd->add_option("--records", records_path, "Records CSV written by calibrate")->required();
    assess_cmd->add_option("--out", out_dir, "Output directory");
    assess_cmd->add_flag("--all-classes", non_conditional, "Include p-values of every class");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    try {
        if (assess_cmd->parsed()) {
            cmd_assess(records_path, out_dir, !non_conditional);
            return 0;
        }
        auto cfg = load_run_config(config_path);
        if (seed) cfg.seed = seed;
        if (calibrate_cmd->parsed()) {
            cmd_calibrate(cfg, out_dir);
        } else if (evaluate_cmd->parsed()) {
            cmd_evaluate(cfg, state_path, out_dir, err);
        } else if (simulate_cmd->parsed()) {
            cmd_simulate(cfg, out_dir);
        }
        return 0;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace confeval::cli
