#pragma once

#include "nutriscreen/models.hpp"

namespace nutriscreen {

// ---------------------------------------------------------------------------
// AdaBoost with depth-1 stumps (two-class SAMME). Retained stumps always have
// weighted error in (0, 0.5), so alpha = 0.5*ln((1-eps)/eps) > 0; direction
// is captured by `polarity`.
// ---------------------------------------------------------------------------
struct Stump {
    int feature = 0;
    double threshold = 0.0;
    int polarity = 1;  // +1: predict class 1 when value >= threshold; -1: reversed
    double alpha = 0.0;

    int vote(std::span<const double> row) const {
        const int side = row[static_cast<std::size_t>(feature)] >= threshold ? 1 : -1;
        return side * polarity;
    }
};

class AdaboostModel : public TrainedModel {
public:
    std::vector<Stump> stumps;
    std::vector<double> round_errors;  // weighted error per kept round, for the bound check

    std::string family() const override { return "adaboost"; }
    double score_row(std::span<const double> row) const override;  // sigmoid of the signed vote sum
    nlohmann::json to_json() const override;
};

std::unique_ptr<AdaboostModel> fit_adaboost(const Dataset& ds, int n_rounds, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Histogram gradient-boosted trees. One engine; the boosting family in the
// benchmark is expressed as presets over growth strategy, objective order and
// tree shape.
// ---------------------------------------------------------------------------
struct GbdtConfig {
    enum class Growth { level_wise, leaf_wise };

    int n_rounds = 200;
    double learning_rate = 0.1;
    Growth growth = Growth::level_wise;
    bool symmetric = false;  // same (feature, bin) split across a whole level
    int max_depth = 6;       // level_wise
    int max_leaves = 31;     // leaf_wise
    int n_bins = 64;
    double l2_leaf = 1.0;
    bool second_order = true;  // Newton gain/leaf values; else variance reduction on gradients
    int min_leaf = 1;

    void validate() const;

    static GbdtConfig xgb_like();     // level-wise, second order, l2
    static GbdtConfig lgbm_like();    // leaf-wise, second order
    static GbdtConfig histgb_like();  // level-wise, first order
    static GbdtConfig cat_like();     // level-wise symmetric trees
};

struct GbdtNode {
    int feature = -1;   // -1 marks a leaf
    int split_bin = 0;  // bins <= split_bin go left
    int left = -1;
    int right = -1;
    double leaf_value = 0.0;  // raw log-odds increment (learning rate applied on accumulation)
};

struct GbdtTree {
    std::vector<GbdtNode> nodes;
};

class GbdtModel : public TrainedModel {
public:
    GbdtConfig config;
    double base_score = 0.0;  // prior log-odds
    std::vector<GbdtTree> trees;
    std::vector<std::vector<double>> bin_edges;  // per feature; values beyond range clamp to end bins
    std::vector<double> feature_gain;            // total split gain per feature
    std::vector<double> train_loss;              // mean logistic loss after each round (not serialized)

    int bin_of(std::size_t feature, double value) const;
    double logit(std::span<const double> row) const;
    std::string family() const override { return "gbdt"; }
    double score_row(std::span<const double> row) const override;
    nlohmann::json to_json() const override;
};

std::unique_ptr<GbdtModel> fit_gbdt(const Dataset& ds, const GbdtConfig& cfg, std::uint64_t seed = 0);

}  // namespace nutriscreen
