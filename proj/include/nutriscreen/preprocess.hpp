#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nutriscreen/csv.hpp"
#include "nutriscreen/data_model.hpp"

namespace nutriscreen {

struct ImplausibleZScore : ValidationError {
    using ValidationError::ValidationError;
};
struct AllMissingColumn : ValidationError {
    using ValidationError::ValidationError;
};
struct UnknownCategory : ValidationError {
    using ValidationError::ValidationError;
};
struct SchemaMismatch : ValidationError {
    using ValidationError::ValidationError;
};
struct StatsDimensionMismatch : ValidationError {
    using ValidationError::ValidationError;
};

inline constexpr const char* kNotAsked = "not asked";

// WHO-standardized anthropometric z-scores, SD units.
struct AnthroRecord {
    double waz = 0.0;
    double haz = 0.0;
    double whz = 0.0;

    // Throws ImplausibleZScore outside [-10, 10]; returns true when all three
    // fall inside the WHO flagging window [-6, 6] (false = keep, but warn).
    bool validate() const;
};

struct MalnutritionLabel {
    bool underweight = false;
    bool stunted = false;
    bool wasted = false;
    bool malnourished = false;
};

// Strict "below -2 SD" on any index; exactly -2.0 counts as nourished.
MalnutritionLabel derive_label(const AnthroRecord& rec);

// ---------------------------------------------------------------------------
// Encoding rules
// ---------------------------------------------------------------------------
enum class RuleTag {
    ordinal_passthrough,      // integer levels kept as-is (optionally with -1 sentinel)
    ternary_yes_no_notasked,  // yes/no/not asked -> 1/0/-1
    binary_01,
    mode_impute_then_binary,  // same encoding as binary_01; mode_impute policy expected
    onehot_member,            // one indicator of a one-hot expanded nominal
    collapse_safe_unsafe,     // multi-category practice collapsed to safe(1)/unsafe(0)/not asked(-1)
};

struct EncodingRule {
    RuleTag tag = RuleTag::binary_01;
    int ordinal_min = 0;
    int ordinal_max = 1;
    std::string zero_label = "no";
    std::string one_label = "yes";
    std::string group;  // onehot_member: key into EncodingSpec::groups
    std::vector<std::string> safe_set;
    std::vector<std::string> unsafe_set;
};

// One-hot group description. `categories` excludes the reference and is
// ordered by category_index, so the expansion emits |categories| columns and
// the reference row encodes as all zeros.
struct OneHotGroup {
    std::string raw_column;
    std::vector<std::string> categories;
    std::string reference;
};

struct EncodingSpec {
    std::map<std::string, EncodingRule> rules;  // keyed by schema column name
    std::map<std::string, OneHotGroup> groups;
};

// Schema + encoding spec travel together in one JSON document (the schema
// part matches the documented `{"columns":..., "target":...}` shape).
struct SchemaBundle {
    Schema schema;
    EncodingSpec encoding;

    std::string to_json() const;
    static SchemaBundle from_json(const std::string& text);
    static SchemaBundle load(const std::string& path);
};

// The paper's 16 selected features plus the three z-score label inputs.
SchemaBundle default_schema_bundle();

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// Missing-value handling for one raw column. mode_impute replaces missing
// cells with the most frequent non-missing value (ties -> smallest encoded
// value under `encoded_value`); not_asked_recode maps missing cells and the
// "don't know"/"no response"/"missing/dk" spellings to the "not asked"
// sentinel category.
std::vector<std::string> recode_missing(const std::vector<std::string>& column, MissingPolicy policy,
                                        const std::function<double(const std::string&)>& encoded_value);

// Value a raw category encodes to under `rule`. Throws UnknownCategory for
// values outside the rule's domain.
double encode_value(const std::string& value, const SchemaColumn& col, const EncodingRule& rule,
                    const EncodingSpec& spec);

struct EncodeResult {
    Dataset dataset;
    std::vector<AnthroRecord> anthro;  // per row, when the label was derived
    int plausibility_warnings = 0;     // z-scores outside [-6, 6]
};

EncodeResult encode(const RawTable& raw, const Schema& schema, const EncodingSpec& spec);

// Inverse of encode for one dataset row; collapse rules are lossy by design
// (safe/unsafe recovers a canonical member of the set).
std::vector<std::pair<std::string, std::string>> decode_row(const Dataset& ds, std::size_t row,
                                                            const Schema& schema, const EncodingSpec& spec);

struct ScalerStats {
    std::vector<double> mean;
    std::vector<double> sd;  // population SD; 0 marks a constant column (passthrough)
};

// Train-time: compute per-column mean/SD and return the transformed copy plus
// stats. Test-time: apply supplied stats only (no leakage). Zero-SD columns
// pass through unscaled.
Dataset standardize(const Dataset& ds, std::optional<ScalerStats>& stats);

void apply_scaler(std::vector<double>& row, const ScalerStats& stats);

}  // namespace nutriscreen
