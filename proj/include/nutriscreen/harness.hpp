#pragma once

#include <optional>

#include "nutriscreen/metrics.hpp"
#include "nutriscreen/models.hpp"
#include "nutriscreen/preprocess.hpp"

namespace nutriscreen {

struct MissingArtifacts : ValidationError {
    using ValidationError::ValidationError;
};

// ---------------------------------------------------------------------------
// Benchmark configuration
// ---------------------------------------------------------------------------
struct RosterEntry {
    std::string name;    // model id, e.g. "tabnet", "xgboost"
    std::string family;  // deep_learning | gradient_boosting | traditional
    nlohmann::json hyper = nlohmann::json::object();
};

struct BenchmarkConfig {
    std::vector<RosterEntry> roster;
    double holdout_ratio = 0.8;
    int k_folds = 0;  // 0 = holdout split; >= 2 = stratified k-fold CV
    std::uint64_t seed = 42;
    // train_f1: per-model threshold maximizing F1 on the training side
    // (candidates include 0, which recovers the always-positive baseline);
    // fixed: use fixed_threshold everywhere.
    std::string threshold_policy = "train_f1";
    double fixed_threshold = 0.5;
    int workers = 0;  // 0 = hardware concurrency

    static BenchmarkConfig defaults();  // the full 16-model roster
    void validate() const;

    nlohmann::json to_json() const;
    static BenchmarkConfig from_json(const nlohmann::json& doc);
    std::string config_hash() const;
};

// ---------------------------------------------------------------------------
// Fitted pipeline: optional train-time scaler + model + decision threshold.
// ---------------------------------------------------------------------------
struct FittedPipeline {
    std::optional<ScalerStats> scaler;
    std::unique_ptr<TrainedModel> model;
    double threshold = 0.5;

    std::vector<double> score(const Dataset& ds) const;

    nlohmann::json to_json() const;
    static FittedPipeline from_json(const nlohmann::json& doc);
};

// True for families trained on standardized features (knn, svm, neural nets).
bool needs_standardization(const std::string& model_name);

// Fits one roster model by name. `dataset_path` is recorded in KNN artifacts.
FittedPipeline fit_named_model(const std::string& name, const nlohmann::json& hyper, const Dataset& train,
                               std::uint64_t seed, const std::string& dataset_path = "");

// F1-maximizing threshold over candidate cutpoints of the given scores
// (candidates include 0; ties resolve to the smaller threshold).
double choose_threshold_max_f1(std::span<const int> y_true, std::span<const double> scores);

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------
struct EvalReport {
    std::string model_name;
    std::string family;
    std::string status = "ok";  // "ok" | "failed"
    std::string error;
    MetricSet metrics;
    ConfusionMatrix cm;
    CalibrationCurve calibration;
    double threshold = 0.5;
    std::uint64_t seed = 0;
    std::string config_hash;
    double train_seconds = 0.0;

    nlohmann::json to_json() const;
    static EvalReport from_json(const nlohmann::json& doc);
};

struct Leaderboard {
    struct Row {
        std::string model;
        std::string family;
        MetricSet metrics;
        double threshold = 0.5;
        std::string status = "ok";
        double train_seconds = 0.0;
    };
    std::vector<Row> rows;  // sorted by (f1 desc, recall desc, name asc)

    std::string to_csv() const;       // deterministic content (no timings)
    std::string timings_csv() const;  // wall-clock column lives here
    static Leaderboard from_csv(const std::string& text);
};

struct BenchmarkResult {
    Leaderboard leaderboard;
    std::vector<EvalReport> reports;  // roster order
};

// Trains and evaluates the whole roster. Per-model failures become rows
// flagged "failed" without aborting the run. When out_dir is non-empty the
// full artifact bundle (config, leaderboard, per-model reports, summaries,
// report.md) is written there.
BenchmarkResult run_benchmark(const BenchmarkConfig& cfg, const Dataset& ds, const std::string& out_dir = "");

struct FamilySummaryRow {
    std::string family;
    std::string metric;
    double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
};

// Quartiles (linear interpolation) of accuracy/precision/recall/f1 per
// family, over non-failed rows.
std::vector<FamilySummaryRow> family_summary(const Leaderboard& lb);
std::string family_summary_csv(const std::vector<FamilySummaryRow>& rows);

// Scatter-ready agreement/trade-off table: per model (kappa, mcc, |k-m|) and
// (precision, recall).
std::string agreement_table_csv(const Leaderboard& lb);

// Rebuilds report.md from the artifacts in run_dir. Throws MissingArtifacts
// when a required file is absent. Returns the markdown.
std::string emit_report(const std::string& run_dir);

}  // namespace nutriscreen
