#pragma once

#include <optional>

#include "nutriscreen/models.hpp"

namespace nutriscreen {

// ---------------------------------------------------------------------------
// Logistic regression: L2-penalized maximum likelihood by full-batch gradient
// ascent with backtracking line search. Intercept is not penalized.
// ---------------------------------------------------------------------------
struct LogregConfig {
    double l2 = 1.0;
    int max_iter = 300;
    double tol = 1e-6;  // on the infinity norm of the mean gradient
};

class LogregModel : public TrainedModel {
public:
    std::vector<double> weights;
    double intercept = 0.0;
    bool converged = false;
    double final_grad_norm = 0.0;

    std::string family() const override { return "logreg"; }
    double score_row(std::span<const double> row) const override;
    nlohmann::json to_json() const override;
};

std::unique_ptr<LogregModel> fit_logreg(const Dataset& ds, const LogregConfig& cfg = {}, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Linear discriminant analysis with a ridge jitter on the pooled covariance.
// ---------------------------------------------------------------------------
class LdaModel : public TrainedModel {
public:
    std::vector<double> weights;  // Sigma^-1 (mu1 - mu0)
    double intercept = 0.0;       // includes the log prior ratio

    std::string family() const override { return "lda"; }
    double score_row(std::span<const double> row) const override;
    nlohmann::json to_json() const override;
};

std::unique_ptr<LdaModel> fit_lda(const Dataset& ds);

// ---------------------------------------------------------------------------
// K-nearest neighbours (lazy). Distance ties break to the lower row index.
// ---------------------------------------------------------------------------
class KnnModel : public TrainedModel {
public:
    Matrix train_features;
    std::vector<int> train_labels;
    int k = 5;
    std::string dataset_path;  // serialization stores a reference + fingerprint
    std::uint64_t dataset_fingerprint = 0;

    std::string family() const override { return "knn"; }
    double score_row(std::span<const double> row) const override;
    nlohmann::json to_json() const override;
};

std::unique_ptr<KnnModel> fit_knn(const Dataset& ds, int k = 5, const std::string& dataset_path = "");

// ---------------------------------------------------------------------------
// CART decision tree (Gini). Thresholds are midpoints of consecutive distinct
// sorted values; random_splits draws one uniform threshold per candidate
// feature (extra-trees mode). Left children take rows with value < threshold.
// ---------------------------------------------------------------------------
struct TreeConfig {
    int max_depth = 8;
    int min_leaf = 1;
    double feature_subsample = 0.0;  // fraction per split; 0 = all features
    bool random_splits = false;
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double leaf_prob = 0.0;  // class-1 empirical proportion
    std::size_t n_samples = 0;
};

class TreeModel : public TrainedModel {
public:
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    std::string family() const override { return "tree"; }
    double score_row(std::span<const double> row) const override;
    nlohmann::json to_json() const override;
};

std::unique_ptr<TreeModel> fit_tree(const Dataset& ds, const TreeConfig& cfg = {}, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Random forest / extra trees. Score is the exact mean of tree leaf
// proportions. In-bag masks are kept in memory for out-of-bag analysis.
// ---------------------------------------------------------------------------
struct ForestConfig {
    int n_trees = 200;
    int max_depth = 12;
    int min_leaf = 2;
    int mtry = 0;  // 0 = ceil(sqrt(p))
    bool bootstrap = true;
    bool random_splits = false;
};

class ForestModel : public TrainedModel {
public:
    std::vector<TreeModel> trees;
    std::vector<std::vector<std::uint8_t>> inbag;  // per tree, per train row; not serialized
    ForestConfig config;

    std::string family() const override { return "forest"; }
    double score_row(std::span<const double> row) const override;
    nlohmann::json to_json() const override;
};

std::unique_ptr<ForestModel> fit_forest(const Dataset& ds, const ForestConfig& cfg, std::uint64_t seed);

// Normalized total impurity decrease per feature (sums to 1 when any split
// exists). Works for single trees and forests.
std::vector<double> impurity_importance(const TreeModel& tree, std::size_t n_features);
std::vector<double> impurity_importance(const ForestModel& forest, std::size_t n_features);

// ---------------------------------------------------------------------------
// Linear SVM by averaged Pegasos on the primal hinge loss; RBF approximated
// with random Fourier features. Probabilities via a Platt sigmoid fitted on
// held-out margins from a single seeded inner split.
// ---------------------------------------------------------------------------
struct SvmConfig {
    enum class Kernel { linear, rbf_rff };
    Kernel kernel = Kernel::rbf_rff;
    int rff_dim = 256;
    double gamma = 0.0;  // 0 = 1 / n_features
    double C = 1.0;
    int epochs = 10;
};

class SvmModel : public TrainedModel {
public:
    SvmConfig config;
    std::vector<double> weights;  // over input features (linear) or the RFF map
    double bias = 0.0;
    double platt_a = -1.0;
    double platt_b = 0.0;
    Matrix rff_directions;  // rff_dim x p
    std::vector<double> rff_phases;

    double margin(std::span<const double> row) const;
    std::string family() const override { return "svm"; }
    double score_row(std::span<const double> row) const override;
    nlohmann::json to_json() const override;
};

std::unique_ptr<SvmModel> fit_svm(const Dataset& ds, const SvmConfig& cfg, std::uint64_t seed);

}  // namespace nutriscreen
