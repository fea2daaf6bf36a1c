#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "nutriscreen/data_model.hpp"
#include "json.hpp"

namespace nutriscreen {

struct NegativeValueForChiSquare : ValidationError {
    using ValidationError::ValidationError;
};
struct ConstantLabel : ValidationError {
    using ValidationError::ValidationError;
};
struct FeatureListMismatch : ValidationError {
    using ValidationError::ValidationError;
};
struct BaseModelTrainingFailure : Error {
    using Error::Error;
};

// Per-method scores and ranks. Higher score is better for every method;
// ranks are a permutation of 1..n_features with ties broken by feature index.
struct MethodScore {
    std::string method;
    std::vector<std::string> feature_names;
    std::vector<double> scores;
    std::vector<int> ranks;

    nlohmann::json to_json() const;
};

// Ranks from scores: 1 = best (highest score), ties by lower feature index.
std::vector<int> ranks_from_scores(const std::vector<double>& scores);

enum class FilterMethod { mutual_info, chi_square, anova_f, pearson, variance };

// mutual_info: plug-in empirical MI (nats) on discretized features;
// chi_square: Pearson chi^2 on the feature x label contingency table
// (non-negative values required); anova_f: between/within variance ratio;
// pearson: point-biserial |r|; variance: sample variance.
MethodScore filter_scores(const Dataset& ds, FilterMethod method);

enum class RfeBase { logreg, gbdt };

// Recursive feature elimination: refit, drop the lowest-importance feature
// (|coefficient| on standardized features for logreg; total split gain for
// gbdt), record elimination order as rank.
MethodScore rfe(const Dataset& ds, RfeBase base, int n_keep, std::uint64_t seed);

// Greedy sequential forward selection maximizing CV-mean F1 of the default
// logistic model; stops when no addition improves F1 by > 1e-4.
MethodScore sequential_forward(const Dataset& ds, const FoldPlan& folds, std::uint64_t seed);

enum class EmbeddedBase { rf, gbdt, l1_logreg };

// rf/gbdt: normalized impurity decrease / split gain. l1_logreg: |coefficient|
// at a regularization strength chosen by 5-fold CV over a fixed log grid.
MethodScore embedded_importance(const Dataset& ds, EmbeddedBase base, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Boruta
// ---------------------------------------------------------------------------
enum class BorutaStatus { confirmed, rejected, tentative };

struct BorutaDecision {
    std::vector<std::string> feature_names;
    std::vector<BorutaStatus> statuses;
    std::vector<int> hit_counts;
    int iterations = 0;
    double alpha = 0.05;

    nlohmann::json to_json() const;
};

// Exact Binomial(n, 1/2) tails.
double binom_upper_tail(int n, int h);  // P(X >= h)
double binom_lower_tail(int n, int h);  // P(X <= h)

// Smallest hit count that confirms under the decision rule: two-sided
// binomial test (doubled tail), Bonferroni over features, alpha split across
// the confirm/reject directions.
int boruta_min_hits_to_confirm(int iterations, double alpha, int n_features);

// Shadow-feature Boruta with a random-forest importance backend. Each
// iteration appends a row-permuted copy of every feature; a real feature
// scores a hit when its importance exceeds the maximum shadow importance.
BorutaDecision boruta(const Dataset& ds, int iterations = 100, double alpha = 0.05, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Rank aggregation
// ---------------------------------------------------------------------------
struct ConsensusRanking {
    std::vector<std::string> feature_names;
    std::vector<double> average_rank;
    std::vector<BorutaStatus> boruta_status;
    std::vector<bool> selected;

    nlohmann::json to_json() const;
};

// selected = Boruta-confirmed OR (average rank <= threshold AND in overrides).
// Overrides reproduce the study's retention of Boruta-rejected features with
// strong ensemble support.
ConsensusRanking aggregate(const std::vector<MethodScore>& method_scores, const BorutaDecision& boruta,
                           double rank_threshold, const std::set<std::string>& overrides);

// ---------------------------------------------------------------------------
// Pipeline used by the CLI: the default ten methods + Boruta + aggregation.
// ---------------------------------------------------------------------------
struct SelectOptions {
    int boruta_iterations = 100;
    double alpha = 0.05;
    double rank_threshold = 14.3;
    std::set<std::string> overrides;
    std::vector<std::string> methods = {"mutual_info", "chi_square", "anova_f", "pearson", "variance",
                                        "rfe_logreg",  "rfe_gb",     "sfs",     "emb_rf",  "emb_l1"};
    std::uint64_t seed = 42;
};

struct FeatureReport {
    std::vector<MethodScore> method_scores;
    BorutaDecision boruta;
    ConsensusRanking consensus;

    nlohmann::json to_json() const;
};

FeatureReport run_selection_ensemble(const Dataset& ds, const SelectOptions& options);

}  // namespace nutriscreen
