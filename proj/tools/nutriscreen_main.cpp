#include <filesystem>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "nutriscreen/feature_select.hpp"
#include "nutriscreen/harness.hpp"
#include "nutriscreen/synth.hpp"

using namespace nutriscreen;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitPartialFailures = 3;

std::string sidecar_path(const std::string& csv_path) {
    const auto dot = csv_path.rfind('.');
    return (dot == std::string::npos ? csv_path : csv_path.substr(0, dot)) + ".meta.json";
}

Dataset load_dataset(const std::string& csv_path) {
    const std::string sidecar = sidecar_path(csv_path);
    return Dataset::load(csv_path, fs::exists(sidecar) ? sidecar : "");
}

std::set<std::string> parse_list(const std::string& joined) {
    std::set<std::string> out;
    std::stringstream ss(joined);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.insert(item);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"survey-tabular malnutrition screening toolkit"};
    app.require_subcommand(1);

    std::uint64_t seed = 42;
    std::string out_dir = "runs/latest";
    std::string config_path;
    app.add_option("--seed", seed, "global RNG seed");
    app.add_option("--out-dir", out_dir, "artifact directory for benchmark runs");
    app.add_option("--config", config_path, "benchmark config JSON");

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic survey table");
    std::size_t synth_n = 6416;
    std::string synth_mode = "marginal";
    std::string synth_out = "synth.csv";
    synth_cmd->add_option("--n", synth_n, "rows to generate");
    synth_cmd->add_option("--mode", synth_mode, "marginal | planted")->check(CLI::IsMember({"marginal", "planted"}));
    synth_cmd->add_option("--out", synth_out, "output CSV path");

    // prepare
    auto* prepare_cmd = app.add_subcommand("prepare", "encode a raw survey CSV into a model-ready dataset");
    std::string prepare_input, prepare_schema, prepare_out = "dataset.csv";
    prepare_cmd->add_option("--input", prepare_input, "raw CSV")->required();
    prepare_cmd->add_option("--schema", prepare_schema, "schema bundle JSON (default: builtin 16-feature schema)");
    prepare_cmd->add_option("--out", prepare_out, "encoded dataset CSV (sidecar written alongside)");

    // select
    auto* select_cmd = app.add_subcommand("select", "run the feature-selection ensemble");
    std::string select_dataset, select_out = "features.json", select_overrides, select_methods;
    SelectOptions select_options;
    select_cmd->add_option("--dataset", select_dataset, "encoded dataset CSV")->required();
    select_cmd->add_option("--boruta-iters", select_options.boruta_iterations, "Boruta iterations");
    select_cmd->add_option("--alpha", select_options.alpha, "Boruta significance level");
    select_cmd->add_option("--rank-threshold", select_options.rank_threshold, "consensus rank threshold");
    select_cmd->add_option("--overrides", select_overrides, "comma-separated domain-override features");
    select_cmd->add_option("--methods", select_methods, "comma-separated method list (default: the 10-method ensemble)");
    select_cmd->add_option("--out", select_out, "feature report JSON");

    // train
    auto* train_cmd = app.add_subcommand("train", "fit one model on a dataset");
    std::string train_dataset, train_model = "logistic_regression", train_out = "model.json", train_hyper = "{}";
    train_cmd->add_option("--dataset", train_dataset, "encoded dataset CSV")->required();
    train_cmd->add_option("--model", train_model, "model name (see README for the roster)");
    train_cmd->add_option("--hyper", train_hyper, "hyperparameter overrides as inline JSON");
    train_cmd->add_option("--out", train_out, "model artifact JSON");

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "score a saved model on a dataset");
    std::string eval_model, eval_dataset, eval_out;
    double eval_threshold = 0.5;
    eval_cmd->add_option("--model", eval_model, "model artifact JSON")->required();
    eval_cmd->add_option("--dataset", eval_dataset, "encoded dataset CSV")->required();
    eval_cmd->add_option("--threshold", eval_threshold, "decision threshold (ties predict positive)");
    eval_cmd->add_option("--out", eval_out, "write the EvalReport JSON here");

    // benchmark
    auto* bench_cmd = app.add_subcommand("benchmark", "run the 16-model benchmark");
    std::string bench_dataset;
    double bench_ratio = 0.8;
    int bench_kfold = 0;
    int bench_workers = 0;
    std::string bench_threshold_policy = "train_f1";
    bench_cmd->add_option("--dataset", bench_dataset, "encoded dataset CSV")->required();
    bench_cmd->add_option("--ratio", bench_ratio, "holdout train ratio");
    bench_cmd->add_option("--kfold", bench_kfold, "use stratified k-fold CV instead of a holdout");
    bench_cmd->add_option("--workers", bench_workers, "concurrent model training budget");
    bench_cmd->add_option("--threshold-policy", bench_threshold_policy, "train_f1 | fixed")
        ->check(CLI::IsMember({"train_f1", "fixed"}));

    // report
    auto* report_cmd = app.add_subcommand("report", "rebuild report.md from run artifacts");
    std::string report_dir;
    report_cmd->add_option("--run-dir", report_dir, "benchmark artifact directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth_cmd->parsed()) {
            const MarginalSpec marginals = builtin_marginals();
            std::optional<SignalSpec> signal;
            if (synth_mode == "planted") signal = SignalSpec::builtin_strong();
            const RawTable table = generate(marginals, signal, synth_n, seed);
            write_csv(synth_out, table);
            std::cout << "wrote " << table.n_rows() << " rows to " << synth_out << "\n";
            return kExitOk;
        }

        if (prepare_cmd->parsed()) {
            const SchemaBundle bundle =
                prepare_schema.empty() ? default_schema_bundle() : SchemaBundle::load(prepare_schema);
            const RawTable raw = read_csv(prepare_input);
            const EncodeResult encoded = encode(raw, bundle.schema, bundle.encoding);
            encoded.dataset.save(prepare_out, sidecar_path(prepare_out));
            std::cout << "encoded " << encoded.dataset.n_rows() << " rows x " << encoded.dataset.n_cols()
                      << " features (" << encoded.dataset.positives() << " positive)";
            if (encoded.plausibility_warnings > 0)
                std::cout << "; " << encoded.plausibility_warnings << " z-score plausibility warnings";
            std::cout << "\n";
            return kExitOk;
        }

        if (select_cmd->parsed()) {
            const Dataset ds = load_dataset(select_dataset);
            select_options.seed = seed;
            select_options.overrides = parse_list(select_overrides);
            if (!select_methods.empty()) {
                select_options.methods.clear();
                for (const auto& m : parse_list(select_methods)) select_options.methods.push_back(m);
            }
            const FeatureReport report = run_selection_ensemble(ds, select_options);
            write_text_file(select_out, report.to_json().dump(2) + "\n");
            std::size_t n_selected = 0;
            for (bool s : report.consensus.selected) n_selected += s ? 1 : 0;
            std::cout << "selected " << n_selected << "/" << ds.n_cols() << " features -> " << select_out << "\n";
            return kExitOk;
        }

        if (train_cmd->parsed()) {
            const Dataset ds = load_dataset(train_dataset);
            const auto hyper = nlohmann::json::parse(train_hyper);
            FittedPipeline pipeline = fit_named_model(train_model, hyper, ds, seed, train_dataset);
            const auto scores = pipeline.score(ds);
            pipeline.threshold = choose_threshold_max_f1(ds.labels, scores);
            write_text_file(train_out, pipeline.to_json().dump(2) + "\n");
            std::cout << "trained " << train_model << " on " << ds.n_rows() << " rows -> " << train_out << "\n";
            return kExitOk;
        }

        if (eval_cmd->parsed()) {
            const Dataset ds = load_dataset(eval_dataset);
            const FittedPipeline pipeline =
                FittedPipeline::from_json(nlohmann::json::parse(read_text_file(eval_model)));
            const auto scores = pipeline.score(ds);
            std::vector<int> preds(scores.size());
            for (std::size_t i = 0; i < scores.size(); ++i) preds[i] = scores[i] >= eval_threshold ? 1 : 0;

            EvalReport report;
            report.model_name = pipeline.model->family();
            report.family = "-";
            report.threshold = eval_threshold;
            report.seed = seed;
            report.cm = confusion(ds.labels, preds);
            report.metrics = threshold_metrics(report.cm);
            report.metrics.roc_auc = roc_auc(ds.labels, scores);
            report.metrics.average_precision = average_precision(ds.labels, scores);
            report.metrics.brier = brier(ds.labels, scores);
            report.calibration = calibration_curve(ds.labels, scores, 10);
            if (!eval_out.empty()) write_text_file(eval_out, report.to_json().dump(2) + "\n");
            for (const auto& name : MetricSet::names())
                std::cout << name << " = " << format_double(report.metrics.by_name(name)) << "\n";
            return kExitOk;
        }

        if (bench_cmd->parsed()) {
            const Dataset ds = load_dataset(bench_dataset);
            BenchmarkConfig cfg = config_path.empty()
                                      ? BenchmarkConfig::defaults()
                                      : BenchmarkConfig::from_json(nlohmann::json::parse(read_text_file(config_path)));
            cfg.seed = seed;
            cfg.holdout_ratio = bench_ratio;
            cfg.k_folds = bench_kfold;
            cfg.workers = bench_workers;
            cfg.threshold_policy = bench_threshold_policy;
            const BenchmarkResult result = run_benchmark(cfg, ds, out_dir);
            std::size_t failures = 0;
            for (const auto& row : result.leaderboard.rows)
                if (row.status != "ok") ++failures;
            std::cout << result.leaderboard.to_csv();
            std::cout << "artifacts in " << out_dir << "\n";
            return failures == 0 ? kExitOk : kExitPartialFailures;
        }

        if (report_cmd->parsed()) {
            const std::string md = emit_report(report_dir);
            write_text_file(report_dir + "/report.md", md);
            std::cout << "wrote " << report_dir << "/report.md\n";
            return kExitOk;
        }
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitOk;
}
