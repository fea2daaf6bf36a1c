#include "doctest.h"
#include "nutriscreen/preprocess.hpp"
#include "nutriscreen/synth.hpp"

#include <cmath>
#include <map>

using namespace nutriscreen;

TEST_CASE("derive_label: cutoff rule is strict below -2") {
    const MalnutritionLabel a = derive_label({-2.5, -1.0, -1.0});
    CHECK(a.underweight);
    CHECK_FALSE(a.stunted);
    CHECK_FALSE(a.wasted);
    CHECK(a.malnourished);

    const MalnutritionLabel origin = derive_label({0.0, 0.0, 0.0});
    CHECK_FALSE(origin.malnourished);

    const MalnutritionLabel boundary = derive_label({-2.0, -2.0, -2.0});
    CHECK_FALSE(boundary.underweight);
    CHECK_FALSE(boundary.stunted);
    CHECK_FALSE(boundary.wasted);
    CHECK_FALSE(boundary.malnourished);
}

TEST_CASE("derive_label: plausibility window") {
    CHECK_THROWS_AS(derive_label({-10.5, 0.0, 0.0}), ImplausibleZScore);
    CHECK_THROWS_AS(derive_label({0.0, 11.0, 0.0}), ImplausibleZScore);
    AnthroRecord warn{-7.0, 0.0, 0.0};
    CHECK_FALSE(warn.validate());  // kept, but flagged
    AnthroRecord fine{-5.9, 1.0, 0.0};
    CHECK(fine.validate());
}

namespace {
double encode_helper(const std::string& v) {
    return v == "1" ? 1.0 : (v == "0" ? 0.0 : 2.0);
}
}  // namespace

TEST_CASE("recode_missing: mode imputation") {
    const std::vector<std::string> column = {"1", "1", "0", ""};
    const auto out = recode_missing(column, MissingPolicy::mode_impute, encode_helper);
    CHECK(out == std::vector<std::string>{"1", "1", "0", "1"});
}

TEST_CASE("recode_missing: mode tie breaks to the smallest encoded value") {
    const std::vector<std::string> column = {"1", "0", "NA"};
    const auto out = recode_missing(column, MissingPolicy::mode_impute, encode_helper);
    CHECK(out == std::vector<std::string>{"1", "0", "0"});
}

TEST_CASE("recode_missing: not-asked spellings unify") {
    const std::vector<std::string> column = {"yes", "no", "don't know", "", "no response", "missing/dk"};
    const auto out = recode_missing(column, MissingPolicy::not_asked_recode, encode_helper);
    CHECK(out[0] == "yes");
    CHECK(out[1] == "no");
    for (std::size_t i = 2; i < out.size(); ++i) CHECK(out[i] == kNotAsked);
}

TEST_CASE("recode_missing: all-missing column has no mode") {
    const std::vector<std::string> column = {"", "NA", ""};
    CHECK_THROWS_AS(recode_missing(column, MissingPolicy::mode_impute, encode_helper), AllMissingColumn);
}

namespace {

RawTable one_row_default(const std::map<std::string, std::string>& overrides) {
    const MarginalSpec spec = builtin_marginals();
    RawTable table = generate(spec, std::nullopt, 1, 9);
    for (const auto& [column, value] : overrides) {
        const int ci = table.column_index(column);
        REQUIRE(ci >= 0);
        table.rows[0][static_cast<std::size_t>(ci)] = value;
    }
    return table;
}

std::size_t col_index(const Dataset& ds, const std::string& name) {
    for (std::size_t j = 0; j < ds.feature_names.size(); ++j)
        if (ds.feature_names[j] == name) return j;
    REQUIRE_MESSAGE(false, "column not found: " << name);
    return 0;
}

}  // namespace

TEST_CASE("encode: province one-hot with bagmati reference") {
    const SchemaBundle bundle = default_schema_bundle();

    const RawTable gandaki = one_row_default({{"province", "gandaki"}});
    const Dataset ds = encode(gandaki, bundle.schema, bundle.encoding).dataset;
    CHECK(ds.features.at(0, col_index(ds, "gandaki")) == 1.0);
    CHECK(ds.features.at(0, col_index(ds, "koshi")) == 0.0);
    CHECK(ds.features.at(0, col_index(ds, "karnali")) == 0.0);
    CHECK(ds.features.at(0, col_index(ds, "sudoorpaschim")) == 0.0);

    const RawTable bagmati = one_row_default({{"province", "bagmati"}});
    const Dataset ref = encode(bagmati, bundle.schema, bundle.encoding).dataset;
    for (const auto* name : {"koshi", "gandaki", "karnali", "sudoorpaschim"})
        CHECK(ref.features.at(0, col_index(ref, name)) == 0.0);
}

TEST_CASE("encode: ternary not-asked sentinel and ordinal ranges") {
    const SchemaBundle bundle = default_schema_bundle();
    const RawTable raw = one_row_default({{"away_privileges", "don't know"},
                                          {"meal_frequency", "not asked"},
                                          {"wealth_index", "5"},
                                          {"mother_education", "0"}});
    const Dataset ds = encode(raw, bundle.schema, bundle.encoding).dataset;
    CHECK(ds.features.at(0, col_index(ds, "away_privileges")) == -1.0);
    CHECK(ds.features.at(0, col_index(ds, "meal_frequency")) == -1.0);
    CHECK(ds.features.at(0, col_index(ds, "wealth_index")) == 5.0);
    CHECK(ds.features.at(0, col_index(ds, "mother_education")) == 0.0);
}

TEST_CASE("encode: stool disposal collapses to safe/unsafe/not-asked") {
    const SchemaBundle bundle = default_schema_bundle();
    const auto value_of = [&](const std::string& raw_value) {
        const RawTable raw = one_row_default({{"safe_stool_disposal", raw_value}});
        const Dataset ds = encode(raw, bundle.schema, bundle.encoding).dataset;
        return ds.features.at(0, col_index(ds, "safe_stool_disposal"));
    };
    CHECK(value_of("buried") == 1.0);
    CHECK(value_of("put in toilet") == 1.0);
    CHECK(value_of("left in open") == 0.0);
    CHECK(value_of("not asked") == -1.0);
}

TEST_CASE("encode: unknown category and schema mismatch errors") {
    const SchemaBundle bundle = default_schema_bundle();
    const RawTable bad = one_row_default({{"province", "atlantis"}});
    CHECK_THROWS_AS(encode(bad, bundle.schema, bundle.encoding), UnknownCategory);

    RawTable missing_col = one_row_default({});
    missing_col.column_names[0] = "renamed";
    CHECK_THROWS_AS(encode(missing_col, bundle.schema, bundle.encoding), SchemaMismatch);
}

TEST_CASE("encode: output column order matches schema with one-hot expansion") {
    const SchemaBundle bundle = default_schema_bundle();
    const RawTable raw = one_row_default({});
    const Dataset ds = encode(raw, bundle.schema, bundle.encoding).dataset;
    const std::vector<std::string> expected = {
        "away_privileges", "left_alone", "vaccination_card", "meal_frequency", "recent_diarrhoea",
        "recent_cough",    "child_age",  "mother_education", "wealth_index",   "health_insurance",
        "residence_type",  "koshi",      "gandaki",          "karnali",        "sudoorpaschim",
        "safe_stool_disposal"};
    CHECK(ds.feature_names == expected);
    CHECK(ds.n_cols() == 16);
}

TEST_CASE("encode/decode round-trip recovers raw categories for non-collapsed columns") {
    // The bundled selected-feature schema keeps only four province
    // indicators, which makes the dropped provinces indistinguishable from
    // the reference. The round-trip contract is about encoding, so test it
    // on the full one-hot expansion.
    SchemaBundle bundle = default_schema_bundle();
    for (const auto& [name, index] : {std::pair<const char*, int>{"madhesh", 1}, {"lumbini", 3}}) {
        bundle.schema.columns.insert(bundle.schema.columns.end() - 3,
                                     {name, ColumnKind::make_onehot("province", index), MissingPolicy::reject});
        EncodingRule rule;
        rule.tag = RuleTag::onehot_member;
        rule.group = "province";
        bundle.encoding.rules[name] = rule;
    }
    bundle.schema.validate();

    const MarginalSpec spec = builtin_marginals();
    const RawTable raw = generate(spec, std::nullopt, 60, 21);
    const EncodeResult result = encode(raw, bundle.schema, bundle.encoding);
    CHECK(result.dataset.n_cols() == 18);

    for (std::size_t r = 0; r < raw.n_rows(); ++r) {
        const auto decoded = decode_row(result.dataset, r, bundle.schema, bundle.encoding);
        for (const auto& [column, value] : decoded) {
            if (column == "safe_stool_disposal") continue;  // collapse is lossy by design
            const int ci = raw.column_index(column);
            REQUIRE(ci >= 0);
            const std::string& original = raw.rows[r][static_cast<std::size_t>(ci)];
            // Mode-imputed and recoded cells legitimately differ from the raw text.
            if (is_missing_cell(original) || original == "don't know" || original == "no response") continue;
            CHECK_MESSAGE(value == original, "column " << column);
        }
    }
}

TEST_CASE("encode: per-column injectivity of category encodings") {
    const SchemaBundle bundle = default_schema_bundle();
    const auto& rule = bundle.encoding.rules.at("vaccination_card");
    const auto& col =
        bundle.schema.columns[static_cast<std::size_t>(bundle.schema.column_index("vaccination_card"))];
    const double yes = encode_value("yes", col, rule, bundle.encoding);
    const double no = encode_value("no", col, rule, bundle.encoding);
    const double na = encode_value(kNotAsked, col, rule, bundle.encoding);
    CHECK(yes != no);
    CHECK(no != na);
    CHECK(yes != na);
}

TEST_CASE("standardize: population SD and zero-variance passthrough") {
    Dataset ds;
    ds.features = Matrix(3, 2);
    ds.labels = {0, 1, 0};
    ds.feature_names = {"a", "b"};
    ds.features.at(0, 0) = 1.0;
    ds.features.at(1, 0) = 2.0;
    ds.features.at(2, 0) = 3.0;
    for (std::size_t r = 0; r < 3; ++r) ds.features.at(r, 1) = 5.0;

    std::optional<ScalerStats> stats;
    const Dataset out = standardize(ds, stats);
    CHECK(out.features.at(0, 0) == doctest::Approx(-1.224744871).epsilon(1e-9));
    CHECK(out.features.at(1, 0) == doctest::Approx(0.0));
    CHECK(out.features.at(2, 0) == doctest::Approx(1.224744871).epsilon(1e-9));
    for (std::size_t r = 0; r < 3; ++r) CHECK(out.features.at(r, 1) == 5.0);  // constant column untouched

    // Test-time application uses the supplied stats only.
    Dataset test;
    test.features = Matrix(1, 2);
    test.labels = {0};
    test.feature_names = {"a", "b"};
    test.features.at(0, 0) = 4.0;
    test.features.at(0, 1) = 7.0;
    std::optional<ScalerStats> reuse = stats;
    const Dataset test_out = standardize(test, reuse);
    CHECK(test_out.features.at(0, 0) == doctest::Approx((4.0 - 2.0) / stats->sd[0]));
    CHECK(test_out.features.at(0, 1) == 7.0);

    Dataset wrong;
    wrong.features = Matrix(1, 3);
    wrong.labels = {0};
    wrong.feature_names = {"a", "b", "c"};
    std::optional<ScalerStats> bad = stats;
    CHECK_THROWS_AS(standardize(wrong, bad), StatsDimensionMismatch);
}

TEST_CASE("schema bundle JSON round-trip") {
    const SchemaBundle bundle = default_schema_bundle();
    const SchemaBundle back = SchemaBundle::from_json(bundle.to_json());
    CHECK(back.schema.columns.size() == bundle.schema.columns.size());
    CHECK(back.encoding.rules.size() == bundle.encoding.rules.size());
    CHECK(back.encoding.groups.at("province").reference == "bagmati");
    CHECK(back.to_json() == bundle.to_json());
}
