#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nutriscreen/common.hpp"

namespace nutriscreen {

struct SingleClassDataset : ValidationError {
    using ValidationError::ValidationError;
};
struct RatioOutOfRange : ValidationError {
    using ValidationError::ValidationError;
};
struct TooFewPerClass : ValidationError {
    using ValidationError::ValidationError;
};

// ---------------------------------------------------------------------------
// Column typing
// ---------------------------------------------------------------------------
enum class ColumnTag {
    ordinal,       // integer levels, natural order preserved
    binary,        // {0, 1}
    ternary,       // {1, 0, -1} = yes / no / not asked
    onehot_group,  // one indicator column of a one-hot expanded nominal
    zscore,        // anthropometric z-score, label input only
    identifier,    // carried through, never encoded
};

struct ColumnKind {
    ColumnTag tag = ColumnTag::binary;
    int levels = 2;              // ordinal only; >= 2
    std::string group_name;      // onehot_group only: name of the raw column
    int category_index = 0;      // onehot_group only: order within the group

    static ColumnKind make_ordinal(int levels);
    static ColumnKind make_binary() { return {ColumnTag::binary, 2, "", 0}; }
    static ColumnKind make_ternary() { return {ColumnTag::ternary, 3, "", 0}; }
    static ColumnKind make_onehot(std::string group, int index);
    static ColumnKind make_zscore() { return {ColumnTag::zscore, 0, "", 0}; }
    static ColumnKind make_identifier() { return {ColumnTag::identifier, 0, "", 0}; }
};

enum class MissingPolicy { mode_impute, not_asked_recode, reject };

struct SchemaColumn {
    std::string name;
    ColumnKind kind;
    MissingPolicy missing_policy = MissingPolicy::reject;
};

// Ordered column typing plus the target. target_name refers either to an
// existing binary column or to the composite label derived from the three
// z-score columns (in which case it does not appear in `columns`).
struct Schema {
    std::vector<SchemaColumn> columns;
    std::string target_name;

    void validate() const;  // unique names, per-kind invariants
    int column_index(const std::string& name) const;

    std::string to_json() const;
    static Schema from_json(const std::string& text);
};

// ---------------------------------------------------------------------------
// Encoded dataset: the unit every selector and model consumes.
// ---------------------------------------------------------------------------
struct Dataset {
    Matrix features;                         // rows = children, cols = encoded features
    std::vector<int> labels;                 // 0 = nourished, 1 = malnourished
    std::vector<std::string> feature_names;  // length == features.cols
    std::string label_name = "malnutrition";

    std::size_t n_rows() const { return features.rows; }
    std::size_t n_cols() const { return features.cols; }

    void validate() const;  // finite entries, binary labels, name/shape agreement
    std::size_t positives() const;

    Dataset subset(const std::vector<std::size_t>& row_indices) const;
    Dataset select_columns(const std::vector<std::size_t>& col_indices) const;

    // Header + numeric CSV; sidecar JSON carries feature names + label name.
    void save(const std::string& csv_path, const std::string& sidecar_json_path) const;
    static Dataset load(const std::string& csv_path, const std::string& sidecar_json_path);

    std::uint64_t fingerprint() const;  // FNV-1a over shape, names and bytes
};

// ---------------------------------------------------------------------------
// Split / fold plans
// ---------------------------------------------------------------------------
struct SplitPlan {
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;
    std::uint64_t seed = 0;
    double ratio = 0.8;
};

struct FoldPlan {
    int k = 2;
    std::vector<int> fold_assignments;  // per row, in [0, k)
    std::uint64_t seed = 0;

    std::vector<std::size_t> fold_rows(int fold) const;
    std::vector<std::size_t> complement_rows(int fold) const;
};

// Stratified holdout split. Per-class train counts follow the largest
// remainder rule against the total target round(ratio * n), so the class
// proportion on both sides is within 1/min(|train|,|test|) of global.
// Row order inside each side is shuffled (seeded).
SplitPlan split_stratified(const Dataset& dataset, double ratio, std::uint64_t seed);

// Stratified k folds: shuffled positives dealt round-robin, negatives
// continuing at the next fold, giving fold sizes within 1 and per-fold
// positive counts within 1 of even.
FoldPlan kfold_stratified(const Dataset& dataset, int k, std::uint64_t seed);

}  // namespace nutriscreen
