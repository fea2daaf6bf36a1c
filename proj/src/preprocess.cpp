#include "nutriscreen/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <set>

#include "json.hpp"

namespace nutriscreen {

using nlohmann::json;

bool AnthroRecord::validate() const {
    const double zs[3] = {waz, haz, whz};
    bool in_flagging_window = true;
    for (double z : zs) {
        if (!std::isfinite(z) || z < -10.0 || z > 10.0)
            throw ImplausibleZScore("z-score outside [-10, 10]: " + format_double(z));
        if (z < -6.0 || z > 6.0) in_flagging_window = false;
    }
    return in_flagging_window;
}

MalnutritionLabel derive_label(const AnthroRecord& rec) {
    rec.validate();
    MalnutritionLabel label;
    label.underweight = rec.waz < -2.0;
    label.stunted = rec.haz < -2.0;
    label.wasted = rec.whz < -2.0;
    label.malnourished = label.underweight || label.stunted || label.wasted;
    return label;
}

// ---------------------------------------------------------------------------

namespace {

bool is_not_asked_spelling(const std::string& v) {
    return is_missing_cell(v) || v == "don't know" || v == "no response" || v == "missing/dk" || v == kNotAsked;
}

}  // namespace

std::vector<std::string> recode_missing(const std::vector<std::string>& column, MissingPolicy policy,
                                        const std::function<double(const std::string&)>& encoded_value) {
    std::vector<std::string> out = column;
    switch (policy) {
        case MissingPolicy::reject:
            for (const auto& v : column)
                if (is_missing_cell(v)) throw ValidationError("missing value in reject-policy column");
            return out;
        case MissingPolicy::not_asked_recode:
            for (auto& v : out)
                if (is_not_asked_spelling(v)) v = kNotAsked;
            return out;
        case MissingPolicy::mode_impute: {
            std::map<std::string, std::size_t> counts;
            for (const auto& v : column)
                if (!is_not_asked_spelling(v)) ++counts[v];
            if (counts.empty()) throw AllMissingColumn("mode undefined: column entirely missing");
            std::string mode;
            std::size_t best = 0;
            double best_encoded = 0.0;
            for (const auto& [value, count] : counts) {
                const double enc = encoded_value(value);
                if (count > best || (count == best && enc < best_encoded)) {
                    best = count;
                    mode = value;
                    best_encoded = enc;
                }
            }
            for (auto& v : out)
                if (is_not_asked_spelling(v)) v = mode;
            return out;
        }
    }
    throw ValidationError("unreachable missing policy");
}

// ---------------------------------------------------------------------------
// Encoding spec serialization
// ---------------------------------------------------------------------------

namespace {

const char* rule_name(RuleTag t) {
    switch (t) {
        case RuleTag::ordinal_passthrough: return "ordinal_passthrough";
        case RuleTag::ternary_yes_no_notasked: return "ternary_yes_no_notasked";
        case RuleTag::binary_01: return "binary_01";
        case RuleTag::mode_impute_then_binary: return "mode_impute_then_binary";
        case RuleTag::onehot_member: return "onehot_member";
        case RuleTag::collapse_safe_unsafe: return "collapse_safe_unsafe";
    }
    return "?";
}

RuleTag rule_from_name(const std::string& s) {
    if (s == "ordinal_passthrough") return RuleTag::ordinal_passthrough;
    if (s == "ternary_yes_no_notasked") return RuleTag::ternary_yes_no_notasked;
    if (s == "binary_01") return RuleTag::binary_01;
    if (s == "mode_impute_then_binary") return RuleTag::mode_impute_then_binary;
    if (s == "onehot_member") return RuleTag::onehot_member;
    if (s == "collapse_safe_unsafe") return RuleTag::collapse_safe_unsafe;
    throw ValidationError("unknown encoding rule: " + s);
}

}  // namespace

std::string SchemaBundle::to_json() const {
    json doc = json::parse(schema.to_json());
    json rules = json::object();
    for (const auto& [name, rule] : encoding.rules) {
        json r = {{"rule", rule_name(rule.tag)}};
        switch (rule.tag) {
            case RuleTag::ordinal_passthrough:
                r["min"] = rule.ordinal_min;
                r["max"] = rule.ordinal_max;
                break;
            case RuleTag::binary_01:
            case RuleTag::mode_impute_then_binary:
                r["zero"] = rule.zero_label;
                r["one"] = rule.one_label;
                break;
            case RuleTag::onehot_member:
                r["group"] = rule.group;
                break;
            case RuleTag::collapse_safe_unsafe:
                r["safe_set"] = rule.safe_set;
                r["unsafe_set"] = rule.unsafe_set;
                break;
            default:
                break;
        }
        rules[name] = r;
    }
    json groups = json::object();
    for (const auto& [name, group] : encoding.groups) {
        groups[name] = {{"raw_column", group.raw_column},
                        {"categories", group.categories},
                        {"reference", group.reference}};
    }
    doc["encoding"] = {{"rules", rules}, {"groups", groups}};
    return doc.dump(2) + "\n";
}

SchemaBundle SchemaBundle::from_json(const std::string& text) {
    SchemaBundle bundle;
    bundle.schema = Schema::from_json(text);
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("schema bundle parse error: ") + e.what());
    }
    if (!doc.contains("encoding")) return bundle;
    const auto& enc = doc["encoding"];
    for (const auto& [name, r] : enc.at("rules").items()) {
        EncodingRule rule;
        rule.tag = rule_from_name(r.at("rule").get<std::string>());
        switch (rule.tag) {
            case RuleTag::ordinal_passthrough:
                rule.ordinal_min = r.at("min").get<int>();
                rule.ordinal_max = r.at("max").get<int>();
                break;
            case RuleTag::binary_01:
            case RuleTag::mode_impute_then_binary:
                rule.zero_label = r.at("zero").get<std::string>();
                rule.one_label = r.at("one").get<std::string>();
                break;
            case RuleTag::onehot_member:
                rule.group = r.at("group").get<std::string>();
                break;
            case RuleTag::collapse_safe_unsafe:
                rule.safe_set = r.at("safe_set").get<std::vector<std::string>>();
                rule.unsafe_set = r.at("unsafe_set").get<std::vector<std::string>>();
                break;
            default:
                break;
        }
        bundle.encoding.rules[name] = rule;
    }
    for (const auto& [name, g] : enc.at("groups").items()) {
        OneHotGroup group;
        group.raw_column = g.at("raw_column").get<std::string>();
        group.categories = g.at("categories").get<std::vector<std::string>>();
        group.reference = g.at("reference").get<std::string>();
        bundle.encoding.groups[name] = group;
    }
    return bundle;
}

SchemaBundle SchemaBundle::load(const std::string& path) { return from_json(read_text_file(path)); }

// ---------------------------------------------------------------------------
// Default bundle: the paper's 16 selected features + z-score label inputs.
// ---------------------------------------------------------------------------

SchemaBundle default_schema_bundle() {
    SchemaBundle b;
    auto& schema = b.schema;
    auto& enc = b.encoding;

    auto ternary = [&](const std::string& name) {
        schema.columns.push_back({name, ColumnKind::make_ternary(), MissingPolicy::not_asked_recode});
        EncodingRule rule;
        rule.tag = RuleTag::ternary_yes_no_notasked;
        enc.rules[name] = rule;
    };
    auto ordinal = [&](const std::string& name, int min, int max, MissingPolicy policy) {
        schema.columns.push_back({name, ColumnKind::make_ordinal(max - min + 1), policy});
        EncodingRule rule;
        rule.tag = RuleTag::ordinal_passthrough;
        rule.ordinal_min = min;
        rule.ordinal_max = max;
        enc.rules[name] = rule;
    };
    auto binary = [&](const std::string& name, const std::string& zero, const std::string& one,
                      MissingPolicy policy) {
        schema.columns.push_back({name, ColumnKind::make_binary(), policy});
        EncodingRule rule;
        rule.tag = policy == MissingPolicy::mode_impute ? RuleTag::mode_impute_then_binary : RuleTag::binary_01;
        rule.zero_label = zero;
        rule.one_label = one;
        enc.rules[name] = rule;
    };

    ternary("away_privileges");
    ordinal("left_alone", 0, 7, MissingPolicy::not_asked_recode);
    ternary("vaccination_card");
    ordinal("meal_frequency", 0, 7, MissingPolicy::not_asked_recode);
    binary("recent_diarrhoea", "no", "yes", MissingPolicy::mode_impute);
    binary("recent_cough", "no", "yes", MissingPolicy::mode_impute);
    ordinal("child_age", 0, 4, MissingPolicy::reject);
    ordinal("mother_education", 0, 3, MissingPolicy::reject);
    ordinal("wealth_index", 1, 5, MissingPolicy::reject);
    binary("health_insurance", "no", "yes", MissingPolicy::mode_impute);
    binary("residence_type", "rural", "urban", MissingPolicy::reject);

    // Province one-hot, Bagmati reference. Only the four indicators retained
    // by the selection study appear as schema columns.
    OneHotGroup province;
    province.raw_column = "province";
    province.categories = {"koshi", "madhesh", "gandaki", "lumbini", "karnali", "sudoorpaschim"};
    province.reference = "bagmati";
    enc.groups["province"] = province;
    auto province_member = [&](const std::string& name, int index) {
        schema.columns.push_back({name, ColumnKind::make_onehot("province", index), MissingPolicy::reject});
        EncodingRule rule;
        rule.tag = RuleTag::onehot_member;
        rule.group = "province";
        enc.rules[name] = rule;
    };
    province_member("koshi", 0);
    province_member("gandaki", 2);
    province_member("karnali", 4);
    province_member("sudoorpaschim", 5);

    {
        schema.columns.push_back({"safe_stool_disposal", ColumnKind::make_ternary(), MissingPolicy::not_asked_recode});
        EncodingRule rule;
        rule.tag = RuleTag::collapse_safe_unsafe;
        rule.safe_set = {"put in toilet", "buried"};
        rule.unsafe_set = {"thrown in garbage", "put in drain", "left in open"};
        enc.rules["safe_stool_disposal"] = rule;
    }

    schema.columns.push_back({"waz", ColumnKind::make_zscore(), MissingPolicy::reject});
    schema.columns.push_back({"haz", ColumnKind::make_zscore(), MissingPolicy::reject});
    schema.columns.push_back({"whz", ColumnKind::make_zscore(), MissingPolicy::reject});
    schema.target_name = "malnutrition";
    schema.validate();
    return b;
}

// ---------------------------------------------------------------------------
// encode
// ---------------------------------------------------------------------------

double encode_value(const std::string& value, const SchemaColumn& col, const EncodingRule& rule,
                    const EncodingSpec& spec) {
    switch (rule.tag) {
        case RuleTag::ordinal_passthrough: {
            if (value == kNotAsked) {
                if (col.missing_policy != MissingPolicy::not_asked_recode)
                    throw UnknownCategory("'not asked' in ordinal column " + col.name + " without sentinel policy");
                return -1.0;
            }
            char* end = nullptr;
            const long v = std::strtol(value.c_str(), &end, 10);
            if (end == value.c_str() || *end != '\0')
                throw UnknownCategory("non-integer ordinal value '" + value + "' in " + col.name);
            if (v < rule.ordinal_min || v > rule.ordinal_max)
                throw UnknownCategory("ordinal value " + value + " outside [" + std::to_string(rule.ordinal_min) +
                                      "," + std::to_string(rule.ordinal_max) + "] in " + col.name);
            return static_cast<double>(v);
        }
        case RuleTag::ternary_yes_no_notasked:
            if (value == "yes") return 1.0;
            if (value == "no") return 0.0;
            if (value == kNotAsked) return -1.0;
            throw UnknownCategory("ternary column " + col.name + " got '" + value + "'");
        case RuleTag::binary_01:
        case RuleTag::mode_impute_then_binary:
            if (value == rule.one_label) return 1.0;
            if (value == rule.zero_label) return 0.0;
            throw UnknownCategory("binary column " + col.name + " got '" + value + "'");
        case RuleTag::onehot_member: {
            const auto git = spec.groups.find(rule.group);
            if (git == spec.groups.end()) throw SchemaMismatch("one-hot group not defined: " + rule.group);
            const auto& group = git->second;
            if (value != group.reference &&
                std::find(group.categories.begin(), group.categories.end(), value) == group.categories.end())
                throw UnknownCategory("value '" + value + "' not in one-hot group " + rule.group);
            return value == col.name ? 1.0 : 0.0;
        }
        case RuleTag::collapse_safe_unsafe: {
            if (value == kNotAsked) return -1.0;
            if (std::find(rule.safe_set.begin(), rule.safe_set.end(), value) != rule.safe_set.end()) return 1.0;
            if (std::find(rule.unsafe_set.begin(), rule.unsafe_set.end(), value) != rule.unsafe_set.end()) return 0.0;
            throw UnknownCategory("stool disposal category '" + value + "' not in safe/unsafe sets");
        }
    }
    throw ValidationError("unreachable rule tag");
}

EncodeResult encode(const RawTable& raw, const Schema& schema, const EncodingSpec& spec) {
    schema.validate();

    // Output order: schema order, with one-hot groups expanded contiguously in
    // category-index order at the group's first appearance.
    std::vector<std::size_t> output_cols;
    {
        std::set<std::string> groups_done;
        for (std::size_t i = 0; i < schema.columns.size(); ++i) {
            const auto& col = schema.columns[i];
            if (col.kind.tag == ColumnTag::zscore || col.kind.tag == ColumnTag::identifier) continue;
            if (col.name == schema.target_name) continue;
            if (col.kind.tag == ColumnTag::onehot_group) {
                if (!groups_done.insert(col.kind.group_name).second) continue;
                std::vector<std::size_t> members;
                for (std::size_t j = 0; j < schema.columns.size(); ++j)
                    if (schema.columns[j].kind.tag == ColumnTag::onehot_group &&
                        schema.columns[j].kind.group_name == col.kind.group_name)
                        members.push_back(j);
                std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
                    return schema.columns[a].kind.category_index < schema.columns[b].kind.category_index;
                });
                output_cols.insert(output_cols.end(), members.begin(), members.end());
            } else {
                output_cols.push_back(i);
            }
        }
    }

    // Resolve the raw column backing each output column, then apply the
    // missing policy once per raw column.
    std::map<std::string, std::vector<std::string>> recoded;
    auto raw_column_name = [&](const SchemaColumn& col) -> std::string {
        if (col.kind.tag == ColumnTag::onehot_group) {
            const auto rit = spec.rules.find(col.name);
            if (rit == spec.rules.end()) throw SchemaMismatch("no encoding rule for column " + col.name);
            const auto git = spec.groups.find(rit->second.group);
            if (git == spec.groups.end()) throw SchemaMismatch("one-hot group not defined: " + rit->second.group);
            return git->second.raw_column;
        }
        return col.name;
    };

    for (std::size_t i : output_cols) {
        const auto& col = schema.columns[i];
        const auto rit = spec.rules.find(col.name);
        if (rit == spec.rules.end()) throw SchemaMismatch("no encoding rule for column " + col.name);
        const std::string raw_name = raw_column_name(col);
        if (recoded.count(raw_name)) continue;
        const int ci = raw.column_index(raw_name);
        if (ci < 0) throw SchemaMismatch("raw table missing column " + raw_name);
        std::vector<std::string> values;
        values.reserve(raw.n_rows());
        for (const auto& row : raw.rows) values.push_back(row[static_cast<std::size_t>(ci)]);
        auto encoded_value = [&](const std::string& v) { return encode_value(v, col, rit->second, spec); };
        recoded[raw_name] = recode_missing(values, col.missing_policy, encoded_value);
    }

    EncodeResult result;
    Dataset& ds = result.dataset;
    ds.features = Matrix(raw.n_rows(), output_cols.size());
    ds.labels.resize(raw.n_rows());
    ds.label_name = schema.target_name;
    for (std::size_t i : output_cols) ds.feature_names.push_back(schema.columns[i].name);

    for (std::size_t out_j = 0; out_j < output_cols.size(); ++out_j) {
        const auto& col = schema.columns[output_cols[out_j]];
        const auto& rule = spec.rules.at(col.name);
        const auto& values = recoded.at(raw_column_name(col));
        for (std::size_t r = 0; r < raw.n_rows(); ++r)
            ds.features.at(r, out_j) = encode_value(values[r], col, rule, spec);
    }

    // Label: existing binary target column, or the composite derived from the
    // three z-score columns.
    const int target_idx = schema.column_index(schema.target_name);
    if (target_idx >= 0) {
        const int ci = raw.column_index(schema.target_name);
        if (ci < 0) throw SchemaMismatch("raw table missing target column " + schema.target_name);
        for (std::size_t r = 0; r < raw.n_rows(); ++r) {
            const std::string& v = raw.rows[r][static_cast<std::size_t>(ci)];
            if (v == "1") ds.labels[r] = 1;
            else if (v == "0") ds.labels[r] = 0;
            else throw UnknownCategory("target column cell must be 0/1, got '" + v + "'");
        }
    } else {
        int zi[3] = {-1, -1, -1};
        const char* names[3] = {"waz", "haz", "whz"};
        for (int z = 0; z < 3; ++z) {
            zi[z] = raw.column_index(names[z]);
            if (zi[z] < 0) throw SchemaMismatch(std::string("raw table missing z-score column ") + names[z]);
        }
        result.anthro.resize(raw.n_rows());
        for (std::size_t r = 0; r < raw.n_rows(); ++r) {
            AnthroRecord rec;
            double* slots[3] = {&rec.waz, &rec.haz, &rec.whz};
            for (int z = 0; z < 3; ++z) {
                const std::string& cell = raw.rows[r][static_cast<std::size_t>(zi[z])];
                char* end = nullptr;
                *slots[z] = std::strtod(cell.c_str(), &end);
                if (end == cell.c_str()) throw ValidationError("non-numeric z-score cell '" + cell + "'");
            }
            if (!rec.validate()) ++result.plausibility_warnings;
            ds.labels[r] = derive_label(rec).malnourished ? 1 : 0;
            result.anthro[r] = rec;
        }
    }

    ds.validate();
    return result;
}

std::vector<std::pair<std::string, std::string>> decode_row(const Dataset& ds, std::size_t row,
                                                            const Schema& schema, const EncodingSpec& spec) {
    std::vector<std::pair<std::string, std::string>> out;
    std::set<std::string> groups_done;
    for (std::size_t j = 0; j < ds.feature_names.size(); ++j) {
        const std::string& name = ds.feature_names[j];
        const int si = schema.column_index(name);
        if (si < 0) throw SchemaMismatch("dataset column " + name + " not in schema");
        const auto& col = schema.columns[static_cast<std::size_t>(si)];
        const auto& rule = spec.rules.at(name);
        const double v = ds.features.at(row, j);
        switch (rule.tag) {
            case RuleTag::ordinal_passthrough:
                out.emplace_back(name, v == -1.0 && rule.ordinal_min != -1
                                           ? std::string(kNotAsked)
                                           : std::to_string(static_cast<long>(v)));
                break;
            case RuleTag::ternary_yes_no_notasked:
                out.emplace_back(name, v == 1.0 ? "yes" : (v == 0.0 ? "no" : kNotAsked));
                break;
            case RuleTag::binary_01:
            case RuleTag::mode_impute_then_binary:
                out.emplace_back(name, v == 1.0 ? rule.one_label : rule.zero_label);
                break;
            case RuleTag::collapse_safe_unsafe:
                // Lossy: recovers the first member of the matched set.
                out.emplace_back(name, v == 1.0 ? rule.safe_set.front()
                                                : (v == 0.0 ? rule.unsafe_set.front() : kNotAsked));
                break;
            case RuleTag::onehot_member: {
                const auto& group = spec.groups.at(rule.group);
                if (!groups_done.insert(rule.group).second) break;
                std::string value = group.reference;
                for (std::size_t m = 0; m < ds.feature_names.size(); ++m) {
                    const int mi = schema.column_index(ds.feature_names[m]);
                    if (mi < 0) continue;
                    const auto& mcol = schema.columns[static_cast<std::size_t>(mi)];
                    if (mcol.kind.tag == ColumnTag::onehot_group && mcol.kind.group_name == col.kind.group_name &&
                        ds.features.at(row, m) == 1.0)
                        value = mcol.name;
                }
                out.emplace_back(group.raw_column, value);
                break;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

Dataset standardize(const Dataset& ds, std::optional<ScalerStats>& stats) {
    Dataset out = ds;
    if (!stats.has_value()) {
        ScalerStats fit;
        fit.mean.resize(ds.n_cols());
        fit.sd.resize(ds.n_cols());
        const double n = static_cast<double>(ds.n_rows());
        for (std::size_t j = 0; j < ds.n_cols(); ++j) {
            double sum = 0.0;
            for (std::size_t r = 0; r < ds.n_rows(); ++r) sum += ds.features.at(r, j);
            const double mean = sum / n;
            double ss = 0.0;
            for (std::size_t r = 0; r < ds.n_rows(); ++r) {
                const double d = ds.features.at(r, j) - mean;
                ss += d * d;
            }
            fit.mean[j] = mean;
            fit.sd[j] = std::sqrt(ss / n);
        }
        stats = std::move(fit);
    } else if (stats->mean.size() != ds.n_cols()) {
        throw StatsDimensionMismatch("scaler has " + std::to_string(stats->mean.size()) + " columns, dataset has " +
                                     std::to_string(ds.n_cols()));
    }
    for (std::size_t j = 0; j < ds.n_cols(); ++j) {
        if (stats->sd[j] == 0.0) continue;
        for (std::size_t r = 0; r < ds.n_rows(); ++r)
            out.features.at(r, j) = (ds.features.at(r, j) - stats->mean[j]) / stats->sd[j];
    }
    return out;
}

void apply_scaler(std::vector<double>& row, const ScalerStats& stats) {
    if (row.size() != stats.mean.size()) throw StatsDimensionMismatch("row width does not match scaler");
    for (std::size_t j = 0; j < row.size(); ++j)
        if (stats.sd[j] != 0.0) row[j] = (row[j] - stats.mean[j]) / stats.sd[j];
}

}  // namespace nutriscreen
