#include "nutriscreen/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "nutriscreen/csv.hpp"
#include "nutriscreen/models_boosting.hpp"
#include "nutriscreen/models_classic.hpp"
#include "nutriscreen/nn.hpp"

namespace nutriscreen {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

BenchmarkConfig BenchmarkConfig::defaults() {
    BenchmarkConfig cfg;
    const auto deep = [](const char* n) { return RosterEntry{n, "deep_learning", json::object()}; };
    const auto boost = [](const char* n) { return RosterEntry{n, "gradient_boosting", json::object()}; };
    const auto trad = [](const char* n) { return RosterEntry{n, "traditional", json::object()}; };
    cfg.roster = {deep("dnn"),         deep("wide_deep"),     deep("resnet"),        deep("tabnet"),
                  boost("adaboost"),   boost("catboost"),     boost("hist_gb"),      boost("lightgbm"),
                  boost("xgboost"),    trad("svm"),           trad("lda"),           trad("extra_trees"),
                  trad("random_forest"), trad("decision_tree"), trad("knn"),         trad("logistic_regression")};
    return cfg;
}

void BenchmarkConfig::validate() const {
    if (roster.empty()) throw ValidationError("benchmark roster is empty");
    std::set<std::string> names;
    for (const auto& entry : roster) {
        if (!names.insert(entry.name).second) throw ValidationError("duplicate roster model: " + entry.name);
        if (entry.family != "deep_learning" && entry.family != "gradient_boosting" && entry.family != "traditional")
            throw ValidationError("unknown family tag: " + entry.family);
    }
    if (k_folds == 0) {
        if (!(holdout_ratio > 0.0 && holdout_ratio < 1.0)) throw RatioOutOfRange("holdout ratio outside (0,1)");
    } else if (k_folds < 2) {
        throw ValidationError("k_folds must be 0 (holdout) or >= 2");
    }
    if (threshold_policy != "train_f1" && threshold_policy != "fixed")
        throw ValidationError("threshold_policy must be train_f1 or fixed");
}

json BenchmarkConfig::to_json() const {
    json roster_json = json::array();
    for (const auto& entry : roster)
        roster_json.push_back({{"name", entry.name}, {"family", entry.family}, {"hyper", entry.hyper}});
    return json{{"roster", roster_json},
                {"holdout_ratio", holdout_ratio},
                {"k_folds", k_folds},
                {"seed", seed},
                {"threshold_policy", threshold_policy},
                {"fixed_threshold", fixed_threshold},
                {"workers", workers}};
}

BenchmarkConfig BenchmarkConfig::from_json(const json& doc) {
    BenchmarkConfig cfg;
    cfg.roster.clear();
    for (const auto& entry : doc.at("roster"))
        cfg.roster.push_back({entry.at("name").get<std::string>(), entry.at("family").get<std::string>(),
                              entry.value("hyper", json::object())});
    cfg.holdout_ratio = doc.value("holdout_ratio", 0.8);
    cfg.k_folds = doc.value("k_folds", 0);
    cfg.seed = doc.value("seed", std::uint64_t{42});
    cfg.threshold_policy = doc.value("threshold_policy", std::string("train_f1"));
    cfg.fixed_threshold = doc.value("fixed_threshold", 0.5);
    cfg.workers = doc.value("workers", 0);
    cfg.validate();
    return cfg;
}

std::string BenchmarkConfig::config_hash() const { return hex64(fnv1a(to_json().dump())); }

// ---------------------------------------------------------------------------
// Pipelines
// ---------------------------------------------------------------------------

std::vector<double> FittedPipeline::score(const Dataset& ds) const {
    if (!scaler.has_value()) return model->score_matrix(ds.features);
    std::optional<ScalerStats> stats = scaler;
    const Dataset scaled = standardize(ds, stats);
    return model->score_matrix(scaled.features);
}

json FittedPipeline::to_json() const {
    json scaler_json;
    if (scaler.has_value()) scaler_json = json{{"mean", scaler->mean}, {"sd", scaler->sd}};
    return json{{"scaler", scaler_json}, {"threshold", threshold}, {"model", model->to_json()}};
}

FittedPipeline FittedPipeline::from_json(const json& doc) {
    FittedPipeline p;
    if (!doc.at("scaler").is_null()) {
        ScalerStats stats;
        stats.mean = doc.at("scaler").at("mean").get<std::vector<double>>();
        stats.sd = doc.at("scaler").at("sd").get<std::vector<double>>();
        p.scaler = std::move(stats);
    }
    p.threshold = doc.at("threshold").get<double>();
    p.model = model_from_json(doc.at("model"));
    return p;
}

bool needs_standardization(const std::string& model_name) {
    return model_name == "knn" || model_name == "svm" || model_name == "dnn" || model_name == "resnet" ||
           model_name == "wide_deep" || model_name == "tabnet";
}

FittedPipeline fit_named_model(const std::string& name, const json& hyper, const Dataset& train, std::uint64_t seed,
                               const std::string& dataset_path) {
    FittedPipeline pipeline;
    const Dataset* fit_data = &train;
    Dataset scaled;
    if (needs_standardization(name)) {
        std::optional<ScalerStats> stats;
        scaled = standardize(train, stats);
        pipeline.scaler = std::move(stats);
        fit_data = &scaled;
    }

    auto gbdt_with = [&](GbdtConfig cfg) {
        cfg.n_rounds = hyper.value("n_rounds", cfg.n_rounds);
        cfg.learning_rate = hyper.value("learning_rate", cfg.learning_rate);
        cfg.max_depth = hyper.value("max_depth", cfg.max_depth);
        cfg.max_leaves = hyper.value("max_leaves", cfg.max_leaves);
        cfg.n_bins = hyper.value("n_bins", cfg.n_bins);
        cfg.l2_leaf = hyper.value("l2_leaf", cfg.l2_leaf);
        return fit_gbdt(*fit_data, cfg, seed);
    };
    auto nn_with = [&](NnArch arch) {
        NnSpec spec;
        if (arch == NnArch::wide_deep) spec.freeze_deep = hyper.value("freeze_deep", false);
        spec.dropout = hyper.value("dropout", spec.dropout);
        spec.n_steps = hyper.value("n_steps", spec.n_steps);
        spec.feature_dim = hyper.value("feature_dim", spec.feature_dim);
        spec.gamma_relax = hyper.value("gamma_relax", spec.gamma_relax);
        spec.sparsity_weight = hyper.value("sparsity_weight", spec.sparsity_weight);
        spec.pos_weight = hyper.value("pos_weight", spec.pos_weight);
        if (hyper.contains("hidden")) spec.hidden = hyper.at("hidden").get<std::vector<int>>();
        NnTrainConfig train_cfg;
        train_cfg.epochs = hyper.value("epochs", train_cfg.epochs);
        train_cfg.batch_size = hyper.value("batch_size", train_cfg.batch_size);
        train_cfg.lr = hyper.value("lr", train_cfg.lr);
        return fit_nn(*fit_data, arch, spec, train_cfg, seed);
    };

    if (name == "logistic_regression") {
        LogregConfig cfg;
        cfg.l2 = hyper.value("l2", cfg.l2);
        cfg.max_iter = hyper.value("max_iter", cfg.max_iter);
        pipeline.model = fit_logreg(*fit_data, cfg, seed);
    } else if (name == "lda") {
        pipeline.model = fit_lda(*fit_data);
    } else if (name == "knn") {
        pipeline.model = fit_knn(*fit_data, hyper.value("k", 5), dataset_path);
    } else if (name == "decision_tree") {
        TreeConfig cfg;
        cfg.max_depth = hyper.value("max_depth", 8);
        cfg.min_leaf = hyper.value("min_leaf", 5);
        pipeline.model = fit_tree(*fit_data, cfg, seed);
    } else if (name == "random_forest" || name == "extra_trees") {
        ForestConfig cfg;
        cfg.n_trees = hyper.value("n_trees", 200);
        cfg.max_depth = hyper.value("max_depth", 12);
        cfg.min_leaf = hyper.value("min_leaf", 2);
        cfg.bootstrap = name == "random_forest";
        cfg.random_splits = name == "extra_trees";
        pipeline.model = fit_forest(*fit_data, cfg, seed);
    } else if (name == "svm") {
        SvmConfig cfg;
        cfg.kernel = hyper.value("kernel", std::string("rbf_rff")) == "linear" ? SvmConfig::Kernel::linear
                                                                               : SvmConfig::Kernel::rbf_rff;
        cfg.C = hyper.value("C", cfg.C);
        cfg.gamma = hyper.value("gamma", cfg.gamma);
        cfg.rff_dim = hyper.value("rff_dim", cfg.rff_dim);
        cfg.epochs = hyper.value("epochs", cfg.epochs);
        pipeline.model = fit_svm(*fit_data, cfg, seed);
    } else if (name == "adaboost") {
        pipeline.model = fit_adaboost(*fit_data, hyper.value("n_rounds", 200), seed);
    } else if (name == "xgboost") {
        pipeline.model = gbdt_with(GbdtConfig::xgb_like());
    } else if (name == "lightgbm") {
        pipeline.model = gbdt_with(GbdtConfig::lgbm_like());
    } else if (name == "hist_gb") {
        pipeline.model = gbdt_with(GbdtConfig::histgb_like());
    } else if (name == "catboost") {
        pipeline.model = gbdt_with(GbdtConfig::cat_like());
    } else if (name == "dnn") {
        pipeline.model = nn_with(NnArch::dnn);
    } else if (name == "resnet") {
        pipeline.model = nn_with(NnArch::resnet_mlp);
    } else if (name == "wide_deep") {
        pipeline.model = nn_with(NnArch::wide_deep);
    } else if (name == "tabnet") {
        pipeline.model = nn_with(NnArch::tabnet_lite);
    } else {
        throw ValidationError("unknown model name: " + name);
    }
    return pipeline;
}

double choose_threshold_max_f1(std::span<const int> y_true, std::span<const double> scores) {
    std::vector<double> unique(scores.begin(), scores.end());
    std::sort(unique.begin(), unique.end());
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());

    std::vector<double> candidates = {0.0};
    const std::size_t max_candidates = 512;
    const std::size_t stride = std::max<std::size_t>(1, unique.size() / max_candidates);
    for (std::size_t i = 0; i < unique.size(); ++i) {
        if (i % stride != 0) continue;
        candidates.push_back(i == 0 ? unique[i] : 0.5 * (unique[i - 1] + unique[i]));
    }

    double best_threshold = 0.0, best_f1 = -1.0;
    std::vector<int> preds(y_true.size());
    for (const double threshold : candidates) {
        for (std::size_t i = 0; i < scores.size(); ++i) preds[i] = scores[i] >= threshold ? 1 : 0;
        const double f1 = threshold_metrics(confusion(y_true, preds)).f1;
        if (f1 > best_f1 + 1e-12) {
            best_f1 = f1;
            best_threshold = threshold;
        }
    }
    return best_threshold;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

json EvalReport::to_json() const {
    return json{{"model", model_name},
                {"family", family},
                {"status", status},
                {"error", error},
                {"metrics", metrics.to_json()},
                {"confusion", {{"tp", cm.tp}, {"tn", cm.tn}, {"fp", cm.fp}, {"fn", cm.fn}}},
                {"calibration", calibration.to_json()},
                {"threshold", threshold},
                {"seed", seed},
                {"config_hash", config_hash},
                {"train_seconds", train_seconds}};
}

EvalReport EvalReport::from_json(const json& doc) {
    EvalReport r;
    r.model_name = doc.at("model").get<std::string>();
    r.family = doc.at("family").get<std::string>();
    r.status = doc.at("status").get<std::string>();
    r.error = doc.at("error").get<std::string>();
    r.metrics = MetricSet::from_json(doc.at("metrics"));
    r.cm.tp = doc.at("confusion").at("tp").get<std::size_t>();
    r.cm.tn = doc.at("confusion").at("tn").get<std::size_t>();
    r.cm.fp = doc.at("confusion").at("fp").get<std::size_t>();
    r.cm.fn = doc.at("confusion").at("fn").get<std::size_t>();
    r.threshold = doc.at("threshold").get<double>();
    r.seed = doc.at("seed").get<std::uint64_t>();
    r.config_hash = doc.at("config_hash").get<std::string>();
    r.train_seconds = doc.at("train_seconds").get<double>();
    const auto& cal = doc.at("calibration");
    r.calibration.n_bins = cal.at("n_bins").get<int>();
    for (const auto& bj : cal.at("bins")) {
        CalibrationBin bin;
        bin.low = bj.at("low").get<double>();
        bin.high = bj.at("high").get<double>();
        bin.mean_pred = bj.at("mean_pred").get<double>();
        bin.frac_pos = bj.at("frac_pos").get<double>();
        bin.count = bj.at("count").get<std::size_t>();
        bin.undefined = bj.at("undefined").get<bool>();
        r.calibration.bins.push_back(bin);
    }
    return r;
}

namespace {

std::string join_undefined(const std::vector<std::string>& undefined) {
    std::string out;
    for (const auto& name : undefined) {
        if (!out.empty()) out += ';';
        out += name;
    }
    return out;
}

}  // namespace

std::string Leaderboard::to_csv() const {
    std::ostringstream out;
    out << "model,family,threshold";
    for (const auto& name : MetricSet::names()) out << ',' << name;
    out << ",undefined,status\n";
    for (const auto& row : rows) {
        out << row.model << ',' << row.family << ',' << format_double(row.threshold);
        for (const auto& name : MetricSet::names()) out << ',' << format_double(row.metrics.by_name(name));
        out << ',' << join_undefined(row.metrics.undefined) << ',' << row.status << '\n';
    }
    return out.str();
}

std::string Leaderboard::timings_csv() const {
    std::ostringstream out;
    out << "model,train_seconds\n";
    for (const auto& row : rows) out << row.model << ',' << format_double(row.train_seconds) << '\n';
    return out.str();
}

Leaderboard Leaderboard::from_csv(const std::string& text) {
    const RawTable table = parse_csv(text);
    Leaderboard lb;
    for (const auto& raw : table.rows) {
        Row row;
        row.model = raw[0];
        row.family = raw[1];
        row.threshold = std::strtod(raw[2].c_str(), nullptr);
        const auto& names = MetricSet::names();
        for (std::size_t m = 0; m < names.size(); ++m) {
            const double v = std::strtod(raw[3 + m].c_str(), nullptr);
            auto& ms = row.metrics;
            if (names[m] == "accuracy") ms.accuracy = v;
            else if (names[m] == "precision") ms.precision = v;
            else if (names[m] == "recall") ms.recall = v;
            else if (names[m] == "f1") ms.f1 = v;
            else if (names[m] == "roc_auc") ms.roc_auc = v;
            else if (names[m] == "average_precision") ms.average_precision = v;
            else if (names[m] == "balanced_accuracy") ms.balanced_accuracy = v;
            else if (names[m] == "cohens_kappa") ms.cohens_kappa = v;
            else if (names[m] == "mcc") ms.mcc = v;
            else if (names[m] == "brier") ms.brier = v;
        }
        row.status = raw.back();
        lb.rows.push_back(std::move(row));
    }
    return lb;
}

// ---------------------------------------------------------------------------
// run_benchmark
// ---------------------------------------------------------------------------

namespace {

struct ModelOutcome {
    EvalReport report;
};

void sort_leaderboard(Leaderboard& lb) {
    std::sort(lb.rows.begin(), lb.rows.end(), [](const Leaderboard::Row& a, const Leaderboard::Row& b) {
        if (a.metrics.f1 != b.metrics.f1) return a.metrics.f1 > b.metrics.f1;
        if (a.metrics.recall != b.metrics.recall) return a.metrics.recall > b.metrics.recall;
        return a.model < b.model;
    });
}

std::string now_timestamp() {
    const std::time_t t = std::time(nullptr);
    char buf[64];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

std::string consensus_csv(const std::vector<ConsensusEntry>& entries) {
    std::ostringstream out;
    out << "feature,mutual_info,gbdt_gain,rf_importance,l1_coef,consensus,rank\n";
    std::vector<const ConsensusEntry*> sorted;
    sorted.reserve(entries.size());
    for (const auto& e : entries) sorted.push_back(&e);
    std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->rank < b->rank; });
    for (const auto* e : sorted)
        out << e->feature << ',' << format_double(e->mutual_info) << ',' << format_double(e->gbdt_gain) << ','
            << format_double(e->rf_importance) << ',' << format_double(e->l1_coef) << ','
            << format_double(e->consensus) << ',' << e->rank << '\n';
    return out.str();
}

}  // namespace

BenchmarkResult run_benchmark(const BenchmarkConfig& cfg, const Dataset& ds, const std::string& out_dir) {
    cfg.validate();
    ds.validate();
    const std::string config_hash = cfg.config_hash();

    // Pre-compute the split/folds once; shared across models.
    SplitPlan split;
    FoldPlan folds;
    Dataset train, test;
    if (cfg.k_folds == 0) {
        split = split_stratified(ds, cfg.holdout_ratio, cfg.seed);
        train = ds.subset(split.train_indices);
        test = ds.subset(split.test_indices);
    } else {
        folds = kfold_stratified(ds, cfg.k_folds, cfg.seed);
    }

    std::vector<ModelOutcome> outcomes(cfg.roster.size());
    const std::size_t workers = cfg.workers > 0 ? static_cast<std::size_t>(cfg.workers)
                                                : std::max<std::size_t>(1, std::thread::hardware_concurrency());

    parallel_for(cfg.roster.size(), workers, [&](std::size_t mi) {
        const auto& entry = cfg.roster[mi];
        EvalReport report;
        report.model_name = entry.name;
        report.family = entry.family;
        report.seed = cfg.seed;
        report.config_hash = config_hash;
        const std::uint64_t model_seed = Rng(cfg.seed).fork(1000 + mi).seed();

        const auto t0 = std::chrono::steady_clock::now();
        try {
            std::vector<int> y_eval;
            std::vector<double> scores;
            std::vector<int> preds;
            double threshold_used = cfg.fixed_threshold;

            if (cfg.k_folds == 0) {
                FittedPipeline pipeline = fit_named_model(entry.name, entry.hyper, train, model_seed);
                const auto train_scores = pipeline.score(train);
                threshold_used = cfg.threshold_policy == "train_f1"
                                     ? choose_threshold_max_f1(train.labels, train_scores)
                                     : cfg.fixed_threshold;
                scores = pipeline.score(test);
                y_eval = test.labels;
                preds.resize(scores.size());
                for (std::size_t i = 0; i < scores.size(); ++i) preds[i] = scores[i] >= threshold_used ? 1 : 0;
            } else {
                // Pooled out-of-fold evaluation; thresholds chosen per fold on
                // that fold's training side.
                y_eval.reserve(ds.n_rows());
                double threshold_sum = 0.0;
                for (int fold = 0; fold < cfg.k_folds; ++fold) {
                    const Dataset fold_train = ds.subset(folds.complement_rows(fold));
                    const Dataset fold_test = ds.subset(folds.fold_rows(fold));
                    FittedPipeline pipeline =
                        fit_named_model(entry.name, entry.hyper, fold_train, Rng(model_seed).fork(fold).seed());
                    const auto fold_train_scores = pipeline.score(fold_train);
                    const double fold_threshold = cfg.threshold_policy == "train_f1"
                                                      ? choose_threshold_max_f1(fold_train.labels, fold_train_scores)
                                                      : cfg.fixed_threshold;
                    threshold_sum += fold_threshold;
                    const auto fold_scores = pipeline.score(fold_test);
                    for (std::size_t i = 0; i < fold_scores.size(); ++i) {
                        scores.push_back(fold_scores[i]);
                        y_eval.push_back(fold_test.labels[i]);
                        preds.push_back(fold_scores[i] >= fold_threshold ? 1 : 0);
                    }
                }
                threshold_used = threshold_sum / cfg.k_folds;
            }

            report.cm = confusion(y_eval, preds);
            report.metrics = threshold_metrics(report.cm);
            try {
                report.metrics.roc_auc = roc_auc(y_eval, scores);
            } catch (const SingleClassEvaluation&) {
                report.metrics.undefined.push_back("roc_auc");
            }
            try {
                report.metrics.average_precision = average_precision(y_eval, scores);
            } catch (const NoPositives&) {
                report.metrics.undefined.push_back("average_precision");
            }
            report.metrics.brier = brier(y_eval, scores);
            report.calibration = calibration_curve(y_eval, scores, 10);
            report.threshold = threshold_used;
        } catch (const std::exception& e) {
            report.status = "failed";
            report.error = e.what();
        }
        report.train_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        outcomes[mi].report = std::move(report);
    });

    BenchmarkResult result;
    for (std::size_t mi = 0; mi < outcomes.size(); ++mi) {
        auto& report = outcomes[mi].report;
        Leaderboard::Row row;
        row.model = report.model_name;
        row.family = report.family;
        row.metrics = report.metrics;
        row.threshold = report.threshold;
        row.status = report.status;
        row.train_seconds = report.train_seconds;
        result.leaderboard.rows.push_back(std::move(row));
        result.reports.push_back(std::move(report));
    }
    sort_leaderboard(result.leaderboard);

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_text_file(out_dir + "/config.json", cfg.to_json().dump(2) + "\n");
        write_text_file(out_dir + "/leaderboard.csv", result.leaderboard.to_csv());
        write_text_file(out_dir + "/timings.csv", result.leaderboard.timings_csv());
        write_text_file(out_dir + "/family_summary.csv", family_summary_csv(family_summary(result.leaderboard)));
        write_text_file(out_dir + "/agreement.csv", agreement_table_csv(result.leaderboard));
        for (const auto& report : result.reports) {
            write_text_file(out_dir + "/eval_" + report.model_name + ".json", report.to_json().dump(2) + "\n");
            write_text_file(out_dir + "/calibration_" + report.model_name + ".csv", report.calibration.to_csv());
        }
        // Consensus importances come from the train side (full data under CV).
        const Dataset& importance_data = cfg.k_folds == 0 ? train : ds;
        write_text_file(out_dir + "/consensus_importance.csv",
                        consensus_csv(consensus_importance(importance_data, cfg.seed)));
        write_text_file(out_dir + "/report.md", emit_report(out_dir));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

namespace {

double quantile_linear(std::vector<double> sorted, double q) {
    if (sorted.empty()) return 0.0;
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

std::vector<FamilySummaryRow> family_summary(const Leaderboard& lb) {
    if (lb.rows.empty()) throw ValidationError("family_summary on empty leaderboard");
    const std::vector<std::string> metrics = {"accuracy", "precision", "recall", "f1"};
    std::vector<std::string> families;
    for (const auto& row : lb.rows)
        if (std::find(families.begin(), families.end(), row.family) == families.end()) families.push_back(row.family);
    std::sort(families.begin(), families.end());

    std::vector<FamilySummaryRow> out;
    for (const auto& family : families) {
        for (const auto& metric : metrics) {
            std::vector<double> values;
            for (const auto& row : lb.rows)
                if (row.family == family && row.status == "ok") values.push_back(row.metrics.by_name(metric));
            if (values.empty()) continue;
            std::sort(values.begin(), values.end());
            FamilySummaryRow row;
            row.family = family;
            row.metric = metric;
            row.min = values.front();
            row.q1 = quantile_linear(values, 0.25);
            row.median = quantile_linear(values, 0.5);
            row.q3 = quantile_linear(values, 0.75);
            row.max = values.back();
            out.push_back(std::move(row));
        }
    }
    return out;
}

std::string family_summary_csv(const std::vector<FamilySummaryRow>& rows) {
    std::ostringstream out;
    out << "family,metric,min,q1,median,q3,max\n";
    for (const auto& row : rows)
        out << row.family << ',' << row.metric << ',' << format_double(row.min) << ',' << format_double(row.q1) << ','
            << format_double(row.median) << ',' << format_double(row.q3) << ',' << format_double(row.max) << '\n';
    return out.str();
}

std::string agreement_table_csv(const Leaderboard& lb) {
    std::ostringstream out;
    out << "model,family,cohens_kappa,mcc,kappa_mcc_gap,precision,recall\n";
    for (const auto& row : lb.rows) {
        out << row.model << ',' << row.family << ',' << format_double(row.metrics.cohens_kappa) << ','
            << format_double(row.metrics.mcc) << ','
            << format_double(std::abs(row.metrics.cohens_kappa - row.metrics.mcc)) << ','
            << format_double(row.metrics.precision) << ',' << format_double(row.metrics.recall) << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// report.md
// ---------------------------------------------------------------------------

namespace {

std::string require_file(const std::string& path) {
    if (!fs::exists(path)) throw MissingArtifacts("missing artifact: " + path);
    return read_text_file(path);
}

std::string md_table_from_csv(const std::string& csv) {
    const RawTable table = parse_csv(csv);
    std::ostringstream out;
    out << '|';
    for (const auto& name : table.column_names) out << ' ' << name << " |";
    out << "\n|";
    for (std::size_t j = 0; j < table.n_cols(); ++j) out << " --- |";
    out << '\n';
    for (const auto& row : table.rows) {
        out << '|';
        for (const auto& cell : row) out << ' ' << (cell.empty() ? "-" : cell) << " |";
        out << '\n';
    }
    return out.str();
}

std::string round_csv_numbers(const std::string& csv, int decimals) {
    const RawTable table = parse_csv(csv);
    RawTable rounded = table;
    char buf[64];
    for (auto& row : rounded.rows)
        for (auto& cell : row) {
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end != cell.c_str() && *end == '\0' && cell.find_first_not_of("0123456789+-.eE") == std::string::npos &&
                cell.find('.') != std::string::npos) {
                std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
                cell = buf;
            }
        }
    std::ostringstream out;
    for (std::size_t j = 0; j < rounded.column_names.size(); ++j) {
        if (j) out << ',';
        out << rounded.column_names[j];
    }
    out << '\n';
    for (const auto& row : rounded.rows) {
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (j) out << ',';
            out << row[j];
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace

std::string emit_report(const std::string& run_dir) {
    const json config = json::parse(require_file(run_dir + "/config.json"));
    const std::string leaderboard_csv = require_file(run_dir + "/leaderboard.csv");
    const std::string family_csv = require_file(run_dir + "/family_summary.csv");
    const std::string consensus = require_file(run_dir + "/consensus_importance.csv");
    const Leaderboard lb = Leaderboard::from_csv(leaderboard_csv);

    BenchmarkConfig cfg = BenchmarkConfig::from_json(config);

    std::ostringstream md;
    md << "# Malnutrition screening benchmark report\n\n";
    md << "timestamp: " << now_timestamp() << "\n\n";
    md << "- config hash: `" << cfg.config_hash() << "`\n";
    md << "- seed: " << cfg.seed << "\n";
    md << "- protocol: "
       << (cfg.k_folds == 0 ? "stratified holdout " + format_double(cfg.holdout_ratio)
                            : "stratified " + std::to_string(cfg.k_folds) + "-fold CV")
       << "\n";
    md << "- threshold policy: " << cfg.threshold_policy << "\n\n";

    md << "## Leaderboard\n\n";
    md << "Sorted by (F1 desc, recall desc, name). Wall-clock timings live in `timings.csv`.\n\n";
    md << md_table_from_csv(round_csv_numbers(leaderboard_csv, 4)) << "\n";

    md << "## Within-family summary\n\n" << md_table_from_csv(round_csv_numbers(family_csv, 4)) << "\n";

    md << "## Calibration of the best model per family\n\n";
    std::vector<std::string> failures;
    std::set<std::string> family_seen;
    for (const auto& row : lb.rows) {
        if (row.status != "ok") {
            failures.push_back(row.model);
            continue;
        }
        if (!family_seen.insert(row.family).second) continue;
        const std::string cal_path = run_dir + "/calibration_" + row.model + ".csv";
        md << "### " << row.model << " (" << row.family << ")\n\n";
        md << md_table_from_csv(round_csv_numbers(require_file(cal_path), 4)) << "\n";
    }

    md << "## Consensus feature importance\n\n" << md_table_from_csv(round_csv_numbers(consensus, 4)) << "\n";

    if (!failures.empty()) {
        md << "## Failures\n\n";
        for (const auto& name : failures) md << "- " << name << "\n";
        md << "\n";
    }
    return md.str();
}

}  // namespace nutriscreen
