#include "nutriscreen/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "nutriscreen/csv.hpp"
#include "json.hpp"

namespace nutriscreen {

using nlohmann::json;

ColumnKind ColumnKind::make_ordinal(int levels) {
    if (levels < 2) throw ValidationError("ordinal column needs >= 2 levels");
    return {ColumnTag::ordinal, levels, "", 0};
}

ColumnKind ColumnKind::make_onehot(std::string group, int index) {
    if (index < 0) throw ValidationError("onehot category_index must be >= 0");
    return {ColumnTag::onehot_group, 0, std::move(group), index};
}

namespace {

const char* tag_name(ColumnTag t) {
    switch (t) {
        case ColumnTag::ordinal: return "ordinal";
        case ColumnTag::binary: return "binary";
        case ColumnTag::ternary: return "ternary";
        case ColumnTag::onehot_group: return "onehot_group";
        case ColumnTag::zscore: return "zscore";
        case ColumnTag::identifier: return "identifier";
    }
    return "?";
}

ColumnTag tag_from_name(const std::string& s) {
    if (s == "ordinal") return ColumnTag::ordinal;
    if (s == "binary") return ColumnTag::binary;
    if (s == "ternary") return ColumnTag::ternary;
    if (s == "onehot_group") return ColumnTag::onehot_group;
    if (s == "zscore") return ColumnTag::zscore;
    if (s == "identifier") return ColumnTag::identifier;
    throw ValidationError("unknown column kind: " + s);
}

const char* policy_name(MissingPolicy p) {
    switch (p) {
        case MissingPolicy::mode_impute: return "mode_impute";
        case MissingPolicy::not_asked_recode: return "not_asked_recode";
        case MissingPolicy::reject: return "reject";
    }
    return "?";
}

MissingPolicy policy_from_name(const std::string& s) {
    if (s == "mode_impute") return MissingPolicy::mode_impute;
    if (s == "not_asked_recode") return MissingPolicy::not_asked_recode;
    if (s == "reject") return MissingPolicy::reject;
    throw ValidationError("unknown missing policy: " + s);
}

}  // namespace

void Schema::validate() const {
    std::set<std::string> names;
    std::set<std::pair<std::string, int>> group_slots;
    int n_zscore = 0;
    for (const auto& col : columns) {
        if (!names.insert(col.name).second) throw ValidationError("duplicate column name: " + col.name);
        switch (col.kind.tag) {
            case ColumnTag::ordinal:
                if (col.kind.levels < 2) throw ValidationError("ordinal column " + col.name + " needs >= 2 levels");
                break;
            case ColumnTag::onehot_group: {
                if (col.kind.group_name.empty())
                    throw ValidationError("onehot column " + col.name + " missing group name");
                auto slot = std::make_pair(col.kind.group_name, col.kind.category_index);
                if (!group_slots.insert(slot).second)
                    throw ValidationError("duplicate category_index in onehot group " + col.kind.group_name);
                break;
            }
            case ColumnTag::zscore:
                ++n_zscore;
                break;
            default:
                break;
        }
    }
    if (target_name.empty()) throw ValidationError("schema has no target");
    const int ti = column_index(target_name);
    if (ti >= 0) {
        if (columns[ti].kind.tag != ColumnTag::binary)
            throw ValidationError("target column " + target_name + " must be binary");
    } else if (n_zscore != 3) {
        throw ValidationError("derived target needs the three z-score columns (waz/haz/whz)");
    }
}

int Schema::column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i].name == name) return static_cast<int>(i);
    return -1;
}

std::string Schema::to_json() const {
    json cols = json::array();
    for (const auto& col : columns) {
        json kind = {{"tag", tag_name(col.kind.tag)}};
        if (col.kind.tag == ColumnTag::ordinal) kind["levels"] = col.kind.levels;
        if (col.kind.tag == ColumnTag::onehot_group) {
            kind["group"] = col.kind.group_name;
            kind["category_index"] = col.kind.category_index;
        }
        cols.push_back({{"name", col.name}, {"kind", kind}, {"missing_policy", policy_name(col.missing_policy)}});
    }
    json doc = {{"columns", cols}, {"target", target_name}};
    return doc.dump(2) + "\n";
}

Schema Schema::from_json(const std::string& text) {
    Schema schema;
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("schema JSON parse error: ") + e.what());
    }
    for (const auto& col : doc.at("columns")) {
        SchemaColumn sc;
        sc.name = col.at("name").get<std::string>();
        const auto& kind = col.at("kind");
        sc.kind.tag = tag_from_name(kind.at("tag").get<std::string>());
        if (sc.kind.tag == ColumnTag::ordinal) sc.kind.levels = kind.at("levels").get<int>();
        if (sc.kind.tag == ColumnTag::onehot_group) {
            sc.kind.group_name = kind.at("group").get<std::string>();
            sc.kind.category_index = kind.at("category_index").get<int>();
        }
        sc.missing_policy = policy_from_name(col.at("missing_policy").get<std::string>());
        schema.columns.push_back(std::move(sc));
    }
    schema.target_name = doc.at("target").get<std::string>();
    schema.validate();
    return schema;
}

// ---------------------------------------------------------------------------

void Dataset::validate() const {
    if (features.rows != labels.size()) throw ValidationError("labels length != row count");
    if (features.cols != feature_names.size()) throw ValidationError("feature_names length != column count");
    for (double v : features.data)
        if (!std::isfinite(v)) throw ValidationError("dataset contains non-finite feature value");
    for (int y : labels)
        if (y != 0 && y != 1) throw ValidationError("label values must be 0 or 1");
}

std::size_t Dataset::positives() const {
    std::size_t n = 0;
    for (int y : labels) n += static_cast<std::size_t>(y);
    return n;
}

Dataset Dataset::subset(const std::vector<std::size_t>& row_indices) const {
    Dataset out;
    out.features = Matrix(row_indices.size(), features.cols);
    out.labels.resize(row_indices.size());
    out.feature_names = feature_names;
    out.label_name = label_name;
    for (std::size_t i = 0; i < row_indices.size(); ++i) {
        const std::size_t r = row_indices[i];
        std::copy_n(features.data.begin() + static_cast<std::ptrdiff_t>(r * features.cols), features.cols,
                    out.features.data.begin() + static_cast<std::ptrdiff_t>(i * features.cols));
        out.labels[i] = labels[r];
    }
    return out;
}

Dataset Dataset::select_columns(const std::vector<std::size_t>& col_indices) const {
    Dataset out;
    out.features = Matrix(features.rows, col_indices.size());
    out.labels = labels;
    out.label_name = label_name;
    for (std::size_t j : col_indices) out.feature_names.push_back(feature_names[j]);
    for (std::size_t r = 0; r < features.rows; ++r)
        for (std::size_t j = 0; j < col_indices.size(); ++j)
            out.features.at(r, j) = features.at(r, col_indices[j]);
    return out;
}

void Dataset::save(const std::string& csv_path, const std::string& sidecar_json_path) const {
    validate();
    std::ostringstream out;
    for (std::size_t j = 0; j < feature_names.size(); ++j) out << csv_escape(feature_names[j]) << ',';
    out << csv_escape(label_name) << '\n';
    for (std::size_t r = 0; r < n_rows(); ++r) {
        for (std::size_t j = 0; j < n_cols(); ++j) out << format_double(features.at(r, j)) << ',';
        out << labels[r] << '\n';
    }
    write_text_file(csv_path, out.str());

    json sidecar = {{"feature_names", feature_names}, {"label", label_name}, {"n_rows", n_rows()}};
    write_text_file(sidecar_json_path, sidecar.dump(2) + "\n");
}

Dataset Dataset::load(const std::string& csv_path, const std::string& sidecar_json_path) {
    Dataset ds;
    const RawTable table = read_csv(csv_path);
    if (table.n_cols() < 2) throw ValidationError("dataset CSV needs at least one feature and the label column");

    std::string label_name = table.column_names.back();
    if (!sidecar_json_path.empty()) {
        json sidecar;
        try {
            sidecar = json::parse(read_text_file(sidecar_json_path));
        } catch (const json::exception& e) {
            throw ValidationError(std::string("dataset sidecar parse error: ") + e.what());
        }
        label_name = sidecar.at("label").get<std::string>();
        const auto names = sidecar.at("feature_names").get<std::vector<std::string>>();
        if (names.size() + 1 != table.n_cols()) throw ValidationError("sidecar feature list does not match CSV width");
        for (std::size_t j = 0; j < names.size(); ++j)
            if (names[j] != table.column_names[j]) throw ValidationError("sidecar/CSV column mismatch at " + names[j]);
    }

    ds.label_name = label_name;
    ds.feature_names.assign(table.column_names.begin(), table.column_names.end() - 1);
    ds.features = Matrix(table.n_rows(), ds.feature_names.size());
    ds.labels.resize(table.n_rows());
    for (std::size_t r = 0; r < table.n_rows(); ++r) {
        for (std::size_t j = 0; j < ds.feature_names.size(); ++j) {
            char* end = nullptr;
            const std::string& cell = table.rows[r][j];
            ds.features.at(r, j) = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str()) throw ValidationError("non-numeric cell in dataset CSV: '" + cell + "'");
        }
        const std::string& lab = table.rows[r].back();
        if (lab == "0") ds.labels[r] = 0;
        else if (lab == "1") ds.labels[r] = 1;
        else throw ValidationError("label cell must be 0 or 1, got '" + lab + "'");
    }
    ds.validate();
    return ds;
}

std::uint64_t Dataset::fingerprint() const {
    std::uint64_t h = fnv1a(label_name);
    for (const auto& name : feature_names) h = fnv1a(name.data(), name.size(), h);
    h = fnv1a(features.data.data(), features.data.size() * sizeof(double), h);
    h = fnv1a(labels.data(), labels.size() * sizeof(int), h);
    return h;
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> FoldPlan::fold_rows(int fold) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < fold_assignments.size(); ++i)
        if (fold_assignments[i] == fold) rows.push_back(i);
    return rows;
}

std::vector<std::size_t> FoldPlan::complement_rows(int fold) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < fold_assignments.size(); ++i)
        if (fold_assignments[i] != fold) rows.push_back(i);
    return rows;
}

namespace {

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> class_rows(const Dataset& ds) {
    std::vector<std::size_t> neg, pos;
    for (std::size_t i = 0; i < ds.labels.size(); ++i) (ds.labels[i] ? pos : neg).push_back(i);
    return {std::move(neg), std::move(pos)};
}

}  // namespace

SplitPlan split_stratified(const Dataset& dataset, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw RatioOutOfRange("split ratio must lie in (0,1)");
    auto [neg, pos] = class_rows(dataset);
    if (neg.empty() || pos.empty()) throw SingleClassDataset("split requires both classes present");

    Rng rng(seed);
    Rng neg_rng = rng.fork(1);
    Rng pos_rng = rng.fork(2);
    neg_rng.shuffle(neg);
    pos_rng.shuffle(pos);

    const std::size_t n = dataset.n_rows();
    std::size_t train_target = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
    train_target = std::min(std::max<std::size_t>(train_target, 1), n - 1);

    // Largest remainder allocation of the train target across the classes.
    const std::vector<std::size_t>* groups[2] = {&neg, &pos};
    double quota[2] = {ratio * static_cast<double>(neg.size()), ratio * static_cast<double>(pos.size())};
    std::size_t take[2] = {static_cast<std::size_t>(quota[0]), static_cast<std::size_t>(quota[1])};
    take[0] = std::min(take[0], neg.size());
    take[1] = std::min(take[1], pos.size());
    while (take[0] + take[1] < train_target) {
        const double rem0 = take[0] < neg.size() ? quota[0] - static_cast<double>(take[0]) : -1.0;
        const double rem1 = take[1] < pos.size() ? quota[1] - static_cast<double>(take[1]) : -1.0;
        if (rem0 >= rem1) ++take[0];
        else ++take[1];
    }
    while (take[0] + take[1] > train_target) {
        const double rem0 = take[0] > 0 ? quota[0] - static_cast<double>(take[0]) : 1.0;
        const double rem1 = take[1] > 0 ? quota[1] - static_cast<double>(take[1]) : 1.0;
        if (rem0 <= rem1) --take[0];
        else --take[1];
    }

    SplitPlan plan;
    plan.seed = seed;
    plan.ratio = ratio;
    for (int c = 0; c < 2; ++c) {
        const auto& g = *groups[c];
        plan.train_indices.insert(plan.train_indices.end(), g.begin(), g.begin() + static_cast<std::ptrdiff_t>(take[c]));
        plan.test_indices.insert(plan.test_indices.end(), g.begin() + static_cast<std::ptrdiff_t>(take[c]), g.end());
    }
    Rng train_rng = rng.fork(3);
    Rng test_rng = rng.fork(4);
    train_rng.shuffle(plan.train_indices);
    test_rng.shuffle(plan.test_indices);
    return plan;
}

FoldPlan kfold_stratified(const Dataset& dataset, int k, std::uint64_t seed) {
    if (k < 2) throw ValidationError("k must be >= 2");
    auto [neg, pos] = class_rows(dataset);
    // k == n is the leave-one-out boundary; folds of size one satisfy the
    // proportion invariant trivially.
    if (static_cast<std::size_t>(k) != dataset.n_rows() &&
        (neg.size() < static_cast<std::size_t>(k) || pos.size() < static_cast<std::size_t>(k)))
        throw TooFewPerClass("each class needs at least k members for stratified " + std::to_string(k) + "-fold");

    Rng rng(seed);
    Rng pos_rng = rng.fork(1);
    Rng neg_rng = rng.fork(2);
    pos_rng.shuffle(pos);
    neg_rng.shuffle(neg);

    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.fold_assignments.assign(dataset.n_rows(), 0);
    std::size_t pointer = 0;
    for (std::size_t i : pos) plan.fold_assignments[i] = static_cast<int>(pointer++ % static_cast<std::size_t>(k));
    for (std::size_t i : neg) plan.fold_assignments[i] = static_cast<int>(pointer++ % static_cast<std::size_t>(k));
    return plan;
}

}  // namespace nutriscreen
