#include "nutriscreen/synth.hpp"

#include <algorithm>
#include <cmath>

namespace nutriscreen {

void MarginalSpec::validate() const {
    for (const auto& f : features) {
        double sum = 0.0;
        for (const auto& c : f.categories) {
            if (c.probability < 0.0) throw ValidationError("negative category share in " + f.column);
            if (c.malnutrition_rate < 0.0 || c.malnutrition_rate > 1.0)
                throw ValidationError("conditional rate outside [0,1] in " + f.column);
            sum += c.probability;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw ValidationError("category shares of " + f.column + " sum to " + format_double(sum));
    }
}

const MarginalFeature& MarginalSpec::feature(const std::string& column) const {
    for (const auto& f : features)
        if (f.column == column) return f;
    throw ValidationError("no marginal for column " + column);
}

double MarginalSpec::rate(const std::string& column, const std::string& category) const {
    for (const auto& c : feature(column).categories)
        if (c.label == category || c.value == category) return c.malnutrition_rate;
    throw ValidationError("no category " + category + " in " + column);
}

double MarginalSpec::share(const std::string& column, const std::string& category) const {
    for (const auto& c : feature(column).categories)
        if (c.label == category || c.value == category) return c.probability;
    throw ValidationError("no category " + category + " in " + column);
}

double MarginalSpec::implied_prevalence(const std::string& stratifier) const {
    double p = 0.0;
    for (const auto& c : feature(stratifier).categories) p += c.probability * c.malnutrition_rate;
    return p;
}

namespace {

constexpr double kTotal = 6416.0;

MarginalFeature counts_feature(std::string column,
                               std::vector<std::tuple<const char*, const char*, double, double>> rows) {
    MarginalFeature f;
    f.column = std::move(column);
    for (auto& [value, label, count, rate] : rows)
        f.categories.push_back({value, label, count / kTotal, rate});
    return f;
}

}  // namespace

MarginalSpec builtin_marginals() {
    MarginalSpec spec;
    spec.features.push_back(counts_feature("mother_education",
                                           {{"0", "none", 1571, 0.533},
                                            {"1", "primary", 2028, 0.457},
                                            {"2", "secondary", 2337, 0.362},
                                            {"3", "higher", 480, 0.281}}));
    spec.features.push_back(counts_feature("wealth_index",
                                           {{"1", "poorest", 1832, 0.541},
                                            {"2", "poorer", 1317, 0.432},
                                            {"3", "middle", 1275, 0.413},
                                            {"4", "richer", 1170, 0.378},
                                            {"5", "richest", 822, 0.263}}));
    spec.features.push_back(counts_feature("vaccination_card",
                                           {{"no", "no", 1012, 0.482},
                                            {"yes", "yes", 2557, 0.385},
                                            {kNotAsked, kNotAsked, 2847, 0.447}}));
    spec.features.push_back(counts_feature("health_insurance",
                                           {{"no", "no", 6126, 0.434}, {"yes", "yes", 290, 0.290}}));
    spec.features.push_back(counts_feature("residence_type",
                                           {{"urban", "urban", 2855, 0.474}, {"rural", "rural", 3561, 0.391}}));
    spec.features.push_back(counts_feature("left_alone",
                                           {{"0", "never", 5020, 0.413},
                                            {"1", "one day", 155, 0.477},
                                            {"2", "two days", 253, 0.443},
                                            {"3", "three days", 136, 0.478},
                                            {"4", "four days", 116, 0.414},
                                            {"5", "five days", 111, 0.586},
                                            {"6", "six days", 57, 0.421},
                                            {"7", "seven days", 526, 0.492},
                                            {kNotAsked, kNotAsked, 42, 0.548}}));
    spec.features.push_back(counts_feature("away_privileges",
                                           {{"no", "no", 3292, 0.437},
                                            {"yes", "yes", 2071, 0.471},
                                            {kNotAsked, kNotAsked, 1053, 0.315}}));
    spec.features.push_back(counts_feature("child_age",
                                           {{"0", "<1 year", 1044, 0.313},
                                            {"1", "one year", 1270, 0.454},
                                            {"2", "two years", 1259, 0.454},
                                            {"3", "three years", 1478, 0.465},
                                            {"4", "four years", 1365, 0.427}}));
    spec.features.push_back(counts_feature("recent_diarrhoea",
                                           {{"no", "no", 5761, 0.421}, {"yes", "yes", 655, 0.487}}));
    spec.features.push_back(counts_feature("recent_cough",
                                           {{"no", "no", 5028, 0.431}, {"yes", "yes", 1388, 0.418}}));
    spec.features.push_back(counts_feature("meal_frequency",
                                           {{"0", "no meals", 529, 0.321},
                                            {"1", "one meal", 93, 0.430},
                                            {"2", "two meals", 410, 0.376},
                                            {"3", "three meals", 527, 0.446},
                                            {"4", "four meals", 411, 0.416},
                                            {"5", "five meals", 200, 0.445},
                                            {"6", "six meals", 97, 0.320},
                                            {"7", "seven meals", 32, 0.281},
                                            {kNotAsked, kNotAsked, 4117, 0.448}}));
    // Stool disposal: the table reports the collapsed safe/unsafe/not-asked
    // shares; raw method categories split those shares with fixed fractions.
    spec.features.push_back(counts_feature("safe_stool_disposal",
                                           {{"put in toilet", "safe: toilet", 2644 * 0.7, 0.389},
                                            {"buried", "safe: buried", 2644 * 0.3, 0.389},
                                            {"thrown in garbage", "unsafe: garbage", 926 * 0.5, 0.482},
                                            {"put in drain", "unsafe: drain", 926 * 0.3, 0.482},
                                            {"left in open", "unsafe: open", 926 * 0.2, 0.482},
                                            {kNotAsked, kNotAsked, 2846, 0.446}}));
    // Three provinces have no published row; they share the pooled
    // complement count and rate (see README).
    spec.features.push_back(counts_feature("province",
                                           {{"koshi", "koshi", 947, 0.364},
                                            {"madhesh", "madhesh", 1064, 0.4106},
                                            {"bagmati", "bagmati", 1065, 0.4106},
                                            {"gandaki", "gandaki", 711, 0.322},
                                            {"lumbini", "lumbini", 1064, 0.4106},
                                            {"karnali", "karnali", 743, 0.583},
                                            {"sudoorpaschim", "sudoorpaschim", 822, 0.519}}));
    spec.validate();
    return spec;
}

SignalSpec SignalSpec::builtin_strong() {
    SignalSpec s;
    s.coefficients = {{"wealth_index", -1.6}, {"child_age", 1.2},      {"mother_education", -1.4},
                      {"karnali", 2.5},       {"vaccination_card", -1.5}, {"meal_frequency", 0.4}};
    return s;
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

namespace {

struct GeneratorContext {
    const MarginalSpec& spec;
    SchemaBundle bundle;
    std::vector<std::string> columns;     // output column order
    std::vector<const MarginalFeature*> marginals;  // parallel to columns (z-scores -> nullptr)
};

std::size_t draw_category(const MarginalFeature& f, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t c = 0; c < f.categories.size(); ++c) {
        acc += f.categories[c].probability;
        if (u < acc) return c;
    }
    return f.categories.size() - 1;
}

double truncated_normal(Rng& rng, double mean, double sd, double lo, double hi) {
    for (int tries = 0; tries < 1000; ++tries) {
        const double z = rng.normal(mean, sd);
        if (z >= lo && z < hi) return z;
    }
    return 0.5 * (lo + hi);  // degenerate window; unreachable for our parameters
}

// Conditional per-condition probabilities for malnourished children, solved
// so the observed prevalences survive the at-least-one-condition rejection.
struct ConditionProbs {
    double underweight, stunted, wasted;
};

ConditionProbs solve_condition_probs() {
    const double target_u = 0.2337 / 0.4279;
    const double target_s = 0.3237 / 0.4279;
    const double target_w = 0.1189 / 0.4279;
    double accept = 1.0;
    for (int it = 0; it < 100; ++it)
        accept = 1.0 - (1.0 - target_u * accept) * (1.0 - target_s * accept) * (1.0 - target_w * accept);
    return {target_u * accept, target_s * accept, target_w * accept};
}

// Encoded value of the category drawn for `column`, as the planted signal
// sees it. One-hot member names (e.g. a province) resolve to indicators.
double encoded_for_signal(const GeneratorContext& ctx, const std::string& coef_name,
                          const std::vector<std::size_t>& drawn, bool& matched) {
    const auto& schema = ctx.bundle.schema;
    const int si = schema.column_index(coef_name);
    if (si < 0) {
        matched = false;
        return 0.0;
    }
    matched = true;
    const auto& col = schema.columns[static_cast<std::size_t>(si)];
    const auto& rule = ctx.bundle.encoding.rules.at(coef_name);
    std::string raw_name = coef_name;
    if (col.kind.tag == ColumnTag::onehot_group) raw_name = ctx.bundle.encoding.groups.at(rule.group).raw_column;
    for (std::size_t j = 0; j < ctx.columns.size(); ++j) {
        if (ctx.columns[j] != raw_name || ctx.marginals[j] == nullptr) continue;
        const std::string& value = ctx.marginals[j]->categories[drawn[j]].value;
        return encode_value(value, col, rule, ctx.bundle.encoding);
    }
    throw ValidationError("signal coefficient refers to ungenerated column " + coef_name);
}

double signal_log_odds(const GeneratorContext& ctx, const SignalSpec& signal,
                       const std::vector<std::size_t>& drawn) {
    double lp = signal.intercept.value_or(0.0);
    for (const auto& [name, coef] : signal.coefficients) {
        bool matched = false;
        const double v = encoded_for_signal(ctx, name, drawn, matched);
        if (!matched) throw ValidationError("signal coefficient for unknown feature " + name);
        lp += coef * v;
    }
    return lp;
}

std::vector<std::size_t> draw_features(const GeneratorContext& ctx, Rng& rng) {
    std::vector<std::size_t> drawn(ctx.columns.size(), 0);
    for (std::size_t j = 0; j < ctx.columns.size(); ++j)
        if (ctx.marginals[j]) drawn[j] = draw_category(*ctx.marginals[j], rng);
    return drawn;
}

double calibrate_intercept(const GeneratorContext& ctx, SignalSpec& signal, std::uint64_t seed) {
    const std::size_t m = 20000;
    std::vector<double> raw_lp(m);
    Rng base(seed);
    for (std::size_t i = 0; i < m; ++i) {
        Rng rng = base.fork(1000000 + i);
        SignalSpec no_intercept = signal;
        no_intercept.intercept = 0.0;
        raw_lp[i] = signal_log_odds(ctx, no_intercept, draw_features(ctx, rng));
    }
    auto mean_prevalence = [&](double b) {
        double s = 0.0;
        for (double lp : raw_lp) s += sigmoid(lp + b);
        return s / static_cast<double>(m);
    };
    double lo = -30.0, hi = 30.0;
    for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        (mean_prevalence(mid) < signal.target_prevalence ? lo : hi) = mid;
    }
    const double b = 0.5 * (lo + hi);
    const double achieved = mean_prevalence(b);
    if (std::abs(achieved - signal.target_prevalence) > 0.02)
        throw ValidationError("planted signal calibration missed target prevalence: " + format_double(achieved));
    return b;
}

}  // namespace

RawTable generate(const MarginalSpec& spec, std::optional<SignalSpec> signal, std::size_t n, std::uint64_t seed) {
    if (n < 1) throw ValidationError("generate needs n >= 1");
    spec.validate();

    GeneratorContext ctx{spec, default_schema_bundle(), {}, {}};
    for (const auto& f : spec.features) {
        ctx.columns.push_back(f.column);
        ctx.marginals.push_back(&spec.feature(f.column));
    }
    for (const char* z : {"waz", "haz", "whz"}) {
        ctx.columns.push_back(z);
        ctx.marginals.push_back(nullptr);
    }

    if (signal && !signal->intercept) signal->intercept = calibrate_intercept(ctx, *signal, seed ^ 0xCA11B8A7E);

    const ConditionProbs cond = solve_condition_probs();
    const int strat_col = [&] {
        for (std::size_t j = 0; j < ctx.columns.size(); ++j)
            if (ctx.columns[j] == spec.default_stratifier) return static_cast<int>(j);
        throw ValidationError("stratifier column " + spec.default_stratifier + " not generated");
    }();

    RawTable table;
    table.column_names = ctx.columns;
    table.rows.resize(n);

    Rng base(seed);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng = base.fork(i);
        const auto drawn = draw_features(ctx, rng);

        bool malnourished;
        if (signal) {
            malnourished = rng.bernoulli(sigmoid(signal_log_odds(ctx, *signal, drawn)));
        } else {
            malnourished = rng.bernoulli(ctx.marginals[strat_col]->categories[drawn[strat_col]].malnutrition_rate);
        }

        // z-scores consistent with the drawn label under the strict < -2 rule.
        double z[3];
        if (malnourished) {
            bool flags[3] = {false, false, false};
            do {
                flags[0] = rng.bernoulli(cond.underweight);
                flags[1] = rng.bernoulli(cond.stunted);
                flags[2] = rng.bernoulli(cond.wasted);
            } while (!flags[0] && !flags[1] && !flags[2]);
            for (int c = 0; c < 3; ++c)
                z[c] = flags[c] ? truncated_normal(rng, -2.9, 0.6, -5.9, -2.0)
                                : truncated_normal(rng, -0.4, 1.1, -2.0, 5.9);
        } else {
            for (int c = 0; c < 3; ++c) z[c] = truncated_normal(rng, -0.4, 1.1, -2.0, 5.9);
        }

        auto& row = table.rows[i];
        row.reserve(ctx.columns.size());
        for (std::size_t j = 0; j < ctx.columns.size() - 3; ++j)
            row.push_back(ctx.marginals[j]->categories[drawn[j]].value);
        for (int c = 0; c < 3; ++c) row.push_back(format_double(std::round(z[c] * 100.0) / 100.0));

        // Sparse missingness on the mode-imputed columns, mirroring the
        // survey's <1% missing on illness/insurance items.
        for (const char* name : {"recent_diarrhoea", "recent_cough", "health_insurance"}) {
            const int ci = table.column_index(name);
            const double u = rng.uniform();
            if (u < 0.004) row[static_cast<std::size_t>(ci)] = "";
            else if (u < 0.006) row[static_cast<std::size_t>(ci)] = "don't know";
        }
    }
    return table;
}

}  // namespace nutriscreen
