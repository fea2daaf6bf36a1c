#pragma once

#include <span>
#include <string>
#include <vector>

#include "nutriscreen/data_model.hpp"
#include "json.hpp"

namespace nutriscreen {

struct LengthMismatch : ValidationError {
    using ValidationError::ValidationError;
};
struct NonBinaryValue : ValidationError {
    using ValidationError::ValidationError;
};
struct EmptyEvaluation : ValidationError {
    using ValidationError::ValidationError;
};
struct SingleClassEvaluation : ValidationError {
    using ValidationError::ValidationError;
};
struct NoPositives : ValidationError {
    using ValidationError::ValidationError;
};
struct ProbabilityOutOfRange : ValidationError {
    using ValidationError::ValidationError;
};
struct ConvergenceFailure : Error {
    using Error::Error;
};

struct ConfusionMatrix {
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
    std::size_t total() const { return tp + tn + fp + fn; }
};

ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred);

// Zero-denominator metrics come back as 0 with the metric name recorded in
// `undefined`, so leaderboards always sort.
struct MetricSet {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double roc_auc = 0.0;
    double average_precision = 0.0;
    double balanced_accuracy = 0.0;
    double cohens_kappa = 0.0;
    double mcc = 0.0;
    double brier = 0.0;
    std::vector<std::string> undefined;

    nlohmann::json to_json() const;
    static MetricSet from_json(const nlohmann::json& doc);
    static const std::vector<std::string>& names();  // canonical column order
    double by_name(const std::string& name) const;
};

// Confusion-derived metrics only (roc_auc / average_precision / brier stay 0).
MetricSet threshold_metrics(const ConfusionMatrix& cm);

// Mann-Whitney AUC via average ranks; ties count one half.
double roc_auc(std::span<const int> y_true, std::span<const double> scores);

// AP = sum_n (R_n - R_{n-1}) P_n over descending unique-score thresholds.
double average_precision(std::span<const int> y_true, std::span<const double> scores);

double brier(std::span<const int> y_true, std::span<const double> probs);

struct CalibrationBin {
    double low = 0.0, high = 0.0;
    double mean_pred = 0.0;
    double frac_pos = 0.0;
    std::size_t count = 0;
    bool undefined = false;  // empty bin
};

struct CalibrationCurve {
    int n_bins = 10;
    std::vector<CalibrationBin> bins;

    std::string to_csv() const;  // bin_low,bin_high,mean_pred,frac_pos,count
    nlohmann::json to_json() const;
};

// Equal-width bins [0,0.1),...,[0.9,1.0]; empty bins emitted with count 0.
CalibrationCurve calibration_curve(std::span<const int> y_true, std::span<const double> probs, int n_bins = 10);

// Full evaluation of probabilistic scores at a decision threshold (>= wins).
MetricSet evaluate_scores(std::span<const int> y_true, std::span<const double> scores, double threshold = 0.5);

// ---------------------------------------------------------------------------
// Consensus feature importance: mutual information, gradient-boosting split
// gain, random-forest impurity importance and L1-logistic |coefficients|,
// each min-max normalized to [0,1], averaged and ranked (ties by index).
// ---------------------------------------------------------------------------
struct ConsensusEntry {
    std::string feature;
    double mutual_info = 0.0;  // normalized per-source scores
    double gbdt_gain = 0.0;
    double rf_importance = 0.0;
    double l1_coef = 0.0;
    double consensus = 0.0;
    int rank = 0;  // 1 = most important
};

std::vector<ConsensusEntry> consensus_importance(const Dataset& ds, std::uint64_t seed);

// ---------------------------------------------------------------------------
// PCA by power iteration with deflation (tolerance 1e-9, max 1000 iters).
// ---------------------------------------------------------------------------
struct PcaResult {
    Matrix scores;                                // n x k projected coordinates
    std::vector<double> explained_variance_ratio;  // non-increasing, sums <= 1
    Matrix components;                             // k x p row-wise eigenvectors
};

PcaResult pca_project(const Dataset& ds, int k = 2);

}  // namespace nutriscreen
