#include "nutriscreen/feature_select.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <thread>

#include "nutriscreen/metrics.hpp"
#include "nutriscreen/models_boosting.hpp"
#include "nutriscreen/models_classic.hpp"
#include "nutriscreen/preprocess.hpp"

namespace nutriscreen {

using nlohmann::json;

std::vector<int> ranks_from_scores(const std::vector<double>& scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<int> ranks(scores.size());
    for (std::size_t r = 0; r < order.size(); ++r) ranks[order[r]] = static_cast<int>(r) + 1;
    return ranks;
}

json MethodScore::to_json() const {
    return json{{"method", method}, {"features", feature_names}, {"scores", scores}, {"ranks", ranks}};
}

namespace {

void check_binary_labels(const Dataset& ds) {
    const std::size_t pos = ds.positives();
    if (pos == 0 || pos == ds.n_rows()) throw ConstantLabel("feature scoring needs both classes");
}

// Discretization for mutual information: small integer-like columns keep
// their values; anything with many distinct values goes into 10 equal-width
// bins.
std::vector<int> discretize(const Dataset& ds, std::size_t col) {
    std::vector<double> distinct;
    for (std::size_t r = 0; r < ds.n_rows(); ++r) distinct.push_back(ds.features.at(r, col));
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

    std::vector<int> out(ds.n_rows());
    if (distinct.size() <= 32) {
        for (std::size_t r = 0; r < ds.n_rows(); ++r) {
            const double v = ds.features.at(r, col);
            out[r] = static_cast<int>(std::lower_bound(distinct.begin(), distinct.end(), v) - distinct.begin());
        }
        return out;
    }
    const double lo = distinct.front(), hi = distinct.back();
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
        int b = static_cast<int>((ds.features.at(r, col) - lo) / (hi - lo) * 10.0);
        out[r] = std::min(std::max(b, 0), 9);
    }
    return out;
}

double mutual_info_score(const Dataset& ds, std::size_t col) {
    const auto x = discretize(ds, col);
    const int n_values = *std::max_element(x.begin(), x.end()) + 1;
    std::vector<double> joint(static_cast<std::size_t>(n_values) * 2, 0.0);
    std::vector<double> px(static_cast<std::size_t>(n_values), 0.0);
    double py[2] = {0.0, 0.0};
    const double inv_n = 1.0 / static_cast<double>(ds.n_rows());
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
        joint[static_cast<std::size_t>(x[r]) * 2 + static_cast<std::size_t>(ds.labels[r])] += inv_n;
        px[static_cast<std::size_t>(x[r])] += inv_n;
        py[ds.labels[r]] += inv_n;
    }
    double mi = 0.0;
    for (int v = 0; v < n_values; ++v)
        for (int y = 0; y < 2; ++y) {
            const double pxy = joint[static_cast<std::size_t>(v) * 2 + static_cast<std::size_t>(y)];
            if (pxy > 0.0) mi += pxy * std::log(pxy / (px[static_cast<std::size_t>(v)] * py[y]));
        }
    return std::max(mi, 0.0);
}

double chi_square_score(const Dataset& ds, std::size_t col) {
    std::map<double, std::array<double, 2>> table;
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
        const double v = ds.features.at(r, col);
        if (v < 0.0) throw NegativeValueForChiSquare("chi-square needs non-negative categories, got " +
                                                     format_double(v) + " in column " + ds.feature_names[col]);
        table[v][static_cast<std::size_t>(ds.labels[r])] += 1.0;
    }
    const double n = static_cast<double>(ds.n_rows());
    double col_total[2] = {0.0, 0.0};
    for (const auto& [v, counts] : table) {
        col_total[0] += counts[0];
        col_total[1] += counts[1];
    }
    double chi2 = 0.0;
    for (const auto& [v, counts] : table) {
        const double row_total = counts[0] + counts[1];
        for (int y = 0; y < 2; ++y) {
            const double expected = row_total * col_total[y] / n;
            if (expected > 0.0) {
                const double d = counts[static_cast<std::size_t>(y)] - expected;
                chi2 += d * d / expected;
            }
        }
    }
    return chi2;
}

double anova_f_score(const Dataset& ds, std::size_t col) {
    double sum[2] = {0.0, 0.0};
    double count[2] = {0.0, 0.0};
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
        sum[ds.labels[r]] += ds.features.at(r, col);
        count[ds.labels[r]] += 1.0;
    }
    const double n = count[0] + count[1];
    const double grand_mean = (sum[0] + sum[1]) / n;
    const double mean0 = sum[0] / count[0], mean1 = sum[1] / count[1];
    double ssw = 0.0;
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
        const double d = ds.features.at(r, col) - (ds.labels[r] ? mean1 : mean0);
        ssw += d * d;
    }
    const double ssb = count[0] * (mean0 - grand_mean) * (mean0 - grand_mean) +
                       count[1] * (mean1 - grand_mean) * (mean1 - grand_mean);
    if (ssb == 0.0) return 0.0;
    return (ssb / 1.0) / (std::max(ssw, 1e-30) / (n - 2.0));
}

double pearson_score(const Dataset& ds, std::size_t col) {
    const double n = static_cast<double>(ds.n_rows());
    double sx = 0.0, sy = 0.0;
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
        sx += ds.features.at(r, col);
        sy += static_cast<double>(ds.labels[r]);
    }
    const double mx = sx / n, my = sy / n;
    double cov = 0.0, vx = 0.0, vy = 0.0;
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
        const double dx = ds.features.at(r, col) - mx;
        const double dy = static_cast<double>(ds.labels[r]) - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if (vx == 0.0 || vy == 0.0) return 0.0;
    return std::abs(cov / std::sqrt(vx * vy));
}

double variance_score(const Dataset& ds, std::size_t col) {
    const double n = static_cast<double>(ds.n_rows());
    if (ds.n_rows() < 2) return 0.0;
    double sum = 0.0;
    for (std::size_t r = 0; r < ds.n_rows(); ++r) sum += ds.features.at(r, col);
    const double mean = sum / n;
    double ss = 0.0;
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
        const double d = ds.features.at(r, col) - mean;
        ss += d * d;
    }
    return ss / (n - 1.0);
}

const char* filter_name(FilterMethod m) {
    switch (m) {
        case FilterMethod::mutual_info: return "mutual_info";
        case FilterMethod::chi_square: return "chi_square";
        case FilterMethod::anova_f: return "anova_f";
        case FilterMethod::pearson: return "pearson";
        case FilterMethod::variance: return "variance";
    }
    return "?";
}

}  // namespace

MethodScore filter_scores(const Dataset& ds, FilterMethod method) {
    check_binary_labels(ds);
    MethodScore out;
    out.method = filter_name(method);
    out.feature_names = ds.feature_names;
    out.scores.resize(ds.n_cols());
    for (std::size_t j = 0; j < ds.n_cols(); ++j) {
        switch (method) {
            case FilterMethod::mutual_info: out.scores[j] = mutual_info_score(ds, j); break;
            case FilterMethod::chi_square: out.scores[j] = chi_square_score(ds, j); break;
            case FilterMethod::anova_f: out.scores[j] = anova_f_score(ds, j); break;
            case FilterMethod::pearson: out.scores[j] = pearson_score(ds, j); break;
            case FilterMethod::variance: out.scores[j] = variance_score(ds, j); break;
        }
    }
    out.ranks = ranks_from_scores(out.scores);
    return out;
}

// ---------------------------------------------------------------------------
// RFE
// ---------------------------------------------------------------------------

namespace {

std::vector<double> base_importance(const Dataset& ds, RfeBase base, std::uint64_t seed) {
    if (base == RfeBase::logreg) {
        std::optional<ScalerStats> stats;
        const Dataset scaled = standardize(ds, stats);
        LogregConfig cfg;
        cfg.max_iter = 200;
        cfg.tol = 1e-5;
        const auto model = fit_logreg(scaled, cfg, seed);
        std::vector<double> imp(model->weights.size());
        for (std::size_t j = 0; j < imp.size(); ++j) imp[j] = std::abs(model->weights[j]);
        return imp;
    }
    GbdtConfig cfg;
    cfg.n_rounds = 50;
    cfg.max_depth = 3;
    const auto model = fit_gbdt(ds, cfg, seed);
    return model->feature_gain;
}

}  // namespace

MethodScore rfe(const Dataset& ds, RfeBase base, int n_keep, std::uint64_t seed) {
    const std::size_t p = ds.n_cols();
    if (n_keep < 1 || static_cast<std::size_t>(n_keep) >= p)
        throw ValidationError("rfe needs 1 <= n_keep < n_features");
    check_binary_labels(ds);

    MethodScore out;
    out.method = base == RfeBase::logreg ? "rfe_logreg" : "rfe_gb";
    out.feature_names = ds.feature_names;
    out.ranks.assign(p, 0);
    out.scores.assign(p, 0.0);

    std::vector<std::size_t> remaining(p);
    std::iota(remaining.begin(), remaining.end(), 0);
    int next_worst_rank = static_cast<int>(p);

    while (remaining.size() > static_cast<std::size_t>(n_keep)) {
        Dataset sub = ds.select_columns(remaining);
        std::vector<double> imp;
        try {
            imp = base_importance(sub, base, seed);
        } catch (const Error& e) {
            throw BaseModelTrainingFailure(std::string("rfe base model failed: ") + e.what());
        }
        // Lowest importance goes; ties drop the later feature.
        std::size_t drop = 0;
        for (std::size_t j = 1; j < imp.size(); ++j)
            if (imp[j] <= imp[drop]) drop = j;
        out.ranks[remaining[drop]] = next_worst_rank--;
        out.scores[remaining[drop]] = -static_cast<double>(next_worst_rank + 1);
        remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(drop));
    }

    // Survivors ranked by final importance, ties by index.
    Dataset sub = ds.select_columns(remaining);
    std::vector<double> imp = base_importance(sub, base, seed);
    std::vector<std::size_t> order(remaining.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return imp[a] > imp[b]; });
    for (std::size_t r = 0; r < order.size(); ++r) {
        out.ranks[remaining[order[r]]] = static_cast<int>(r) + 1;
        out.scores[remaining[order[r]]] = imp[order[r]];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sequential forward selection
// ---------------------------------------------------------------------------

namespace {

double cv_f1(const Dataset& ds, const std::vector<std::size_t>& cols, const FoldPlan& folds, std::uint64_t seed) {
    const Dataset sub = ds.select_columns(cols);
    double f1_sum = 0.0;
    for (int fold = 0; fold < folds.k; ++fold) {
        const Dataset train = sub.subset(folds.complement_rows(fold));
        const Dataset test = sub.subset(folds.fold_rows(fold));
        LogregConfig cfg;
        cfg.max_iter = 100;
        cfg.tol = 1e-4;
        const auto model = fit_logreg(train, cfg, seed);
        const auto scores = model->score_matrix(test.features);
        std::vector<int> preds(scores.size());
        for (std::size_t i = 0; i < scores.size(); ++i) preds[i] = scores[i] >= 0.5 ? 1 : 0;
        f1_sum += threshold_metrics(confusion(test.labels, preds)).f1;
    }
    return f1_sum / static_cast<double>(folds.k);
}

}  // namespace

MethodScore sequential_forward(const Dataset& ds, const FoldPlan& folds, std::uint64_t seed) {
    check_binary_labels(ds);
    const std::size_t p = ds.n_cols();
    if (folds.fold_assignments.size() != ds.n_rows()) throw ValidationError("fold plan does not match dataset");

    MethodScore out;
    out.method = "sfs";
    out.feature_names = ds.feature_names;
    out.ranks.assign(p, 0);
    out.scores.assign(p, 0.0);

    std::vector<std::size_t> selected;
    std::vector<bool> in_set(p, false);
    std::vector<double> best_marginal(p, -1.0);
    double current_f1 = 0.0;

    for (;;) {
        int best_feature = -1;
        double best_f1 = current_f1;
        for (std::size_t j = 0; j < p; ++j) {
            if (in_set[j]) continue;
            auto cols = selected;
            cols.push_back(j);
            const double f1 = cv_f1(ds, cols, folds, seed);
            best_marginal[j] = std::max(best_marginal[j], f1);
            if (f1 > best_f1 + 1e-4) {  // strict improvement tolerance
                best_f1 = f1;
                best_feature = static_cast<int>(j);
            }
        }
        if (best_feature < 0) break;
        selected.push_back(static_cast<std::size_t>(best_feature));
        in_set[static_cast<std::size_t>(best_feature)] = true;
        out.ranks[static_cast<std::size_t>(best_feature)] = static_cast<int>(selected.size());
        out.scores[static_cast<std::size_t>(best_feature)] = best_f1;
        current_f1 = best_f1;
        if (selected.size() == p) break;
    }

    // Unadded features rank after the added ones, by best marginal F1.
    std::vector<std::size_t> rest;
    for (std::size_t j = 0; j < p; ++j)
        if (!in_set[j]) rest.push_back(j);
    std::stable_sort(rest.begin(), rest.end(),
                     [&](std::size_t a, std::size_t b) { return best_marginal[a] > best_marginal[b]; });
    int rank = static_cast<int>(selected.size());
    for (std::size_t j : rest) {
        out.ranks[j] = ++rank;
        out.scores[j] = best_marginal[j] - 1.0;  // keep below any selected score
    }
    return out;
}

// ---------------------------------------------------------------------------
// Embedded importances
// ---------------------------------------------------------------------------

namespace {

// L1-penalized logistic regression by proximal gradient (ISTA) with a fixed
// step from the Lipschitz bound; intercept unpenalized.
std::vector<double> l1_logreg_path(const Dataset& ds, double lambda, int max_iter) {
    const std::size_t n = ds.n_rows(), p = ds.n_cols();
    std::vector<double> beta(p, 0.0), grad(p);
    double b = 0.0;
    // Lipschitz constant of the mean logistic gradient: ||X||^2 / (4n).
    double sq = 0.0;
    for (double v : ds.features.data) sq += v * v;
    const double step = 1.0 / std::max(sq / (4.0 * static_cast<double>(n)) + 0.25, 1e-12);

    for (int iter = 0; iter < max_iter; ++iter) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double grad_b = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            double z = b;
            const auto row = ds.features.row(r);
            for (std::size_t j = 0; j < p; ++j) z += beta[j] * row[j];
            const double resid = sigmoid(z) - static_cast<double>(ds.labels[r]);
            for (std::size_t j = 0; j < p; ++j) grad[j] += resid * row[j];
            grad_b += resid;
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        double delta = 0.0;
        for (std::size_t j = 0; j < p; ++j) {
            const double raw = beta[j] - step * grad[j] * inv_n;
            const double shrunk = std::abs(raw) <= step * lambda ? 0.0 : raw - std::copysign(step * lambda, raw);
            delta = std::max(delta, std::abs(shrunk - beta[j]));
            beta[j] = shrunk;
        }
        b -= step * grad_b * inv_n;
        if (delta < 1e-7) break;
    }
    return beta;
}

std::vector<double> l1_importance(const Dataset& ds, std::uint64_t seed) {
    // 5-fold CV over a fixed log grid; pick lambda with the best mean
    // held-out log-likelihood.
    const std::vector<double> grid = {0.3, 0.1, 0.03, 0.01, 0.003, 0.001};
    const FoldPlan folds = kfold_stratified(ds, 5, seed);
    double best_ll = -1e300;
    double best_lambda = grid.front();
    for (double lambda : grid) {
        double ll = 0.0;
        for (int fold = 0; fold < folds.k; ++fold) {
            const Dataset train = ds.subset(folds.complement_rows(fold));
            const Dataset test = ds.subset(folds.fold_rows(fold));
            const auto beta = l1_logreg_path(train, lambda, 200);
            // Refit intercept is inside the path; recompute holdout LL.
            double b = 0.0;
            {
                const double prev = std::min(std::max(static_cast<double>(train.positives()) /
                                                          static_cast<double>(train.n_rows()),
                                                      1e-9),
                                             1.0 - 1e-9);
                b = std::log(prev / (1.0 - prev));
            }
            for (std::size_t r = 0; r < test.n_rows(); ++r) {
                double z = b;
                const auto row = test.features.row(r);
                for (std::size_t j = 0; j < beta.size(); ++j) z += beta[j] * row[j];
                ll += test.labels[r] ? -std::log1p(std::exp(-std::abs(z))) - std::max(-z, 0.0)
                                     : -std::log1p(std::exp(-std::abs(z))) - std::max(z, 0.0);
            }
        }
        if (ll > best_ll) {
            best_ll = ll;
            best_lambda = lambda;
        }
    }
    const auto beta = l1_logreg_path(ds, best_lambda, 500);
    std::vector<double> imp(beta.size());
    for (std::size_t j = 0; j < beta.size(); ++j) imp[j] = std::abs(beta[j]);
    return imp;
}

}  // namespace

MethodScore embedded_importance(const Dataset& ds, EmbeddedBase base, std::uint64_t seed) {
    check_binary_labels(ds);
    MethodScore out;
    out.feature_names = ds.feature_names;
    switch (base) {
        case EmbeddedBase::rf: {
            out.method = "emb_rf";
            ForestConfig cfg;
            cfg.n_trees = 100;
            const auto model = fit_forest(ds, cfg, seed);
            out.scores = impurity_importance(*model, ds.n_cols());
            break;
        }
        case EmbeddedBase::gbdt: {
            out.method = "emb_gb";
            GbdtConfig cfg;
            cfg.n_rounds = 100;
            const auto model = fit_gbdt(ds, cfg, seed);
            out.scores = model->feature_gain;
            double total = 0.0;
            for (double v : out.scores) total += v;
            if (total > 0.0)
                for (double& v : out.scores) v /= total;
            break;
        }
        case EmbeddedBase::l1_logreg: {
            out.method = "emb_l1";
            std::optional<ScalerStats> stats;
            const Dataset scaled = standardize(ds, stats);
            out.scores = l1_importance(scaled, seed);
            break;
        }
    }
    out.ranks = ranks_from_scores(out.scores);
    return out;
}

// ---------------------------------------------------------------------------
// Boruta
// ---------------------------------------------------------------------------

double binom_upper_tail(int n, int h) {
    if (h <= 0) return 1.0;
    if (h > n) return 0.0;
    const double log_half = std::log(0.5);
    double sum = 0.0;
    for (int k = h; k <= n; ++k) {
        const double log_term = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
                                static_cast<double>(n) * log_half;
        sum += std::exp(log_term);
    }
    return std::min(sum, 1.0);
}

double binom_lower_tail(int n, int h) {
    if (h < 0) return 0.0;
    if (h >= n) return 1.0;
    return std::min(1.0 - binom_upper_tail(n, h + 1), 1.0);
}

int boruta_min_hits_to_confirm(int iterations, double alpha, int n_features) {
    const double cutoff = alpha / (4.0 * static_cast<double>(n_features));
    for (int h = 0; h <= iterations; ++h)
        if (binom_upper_tail(iterations, h) <= cutoff) return h;
    return iterations + 1;
}

json BorutaDecision::to_json() const {
    json statuses_json = json::array();
    for (auto s : statuses)
        statuses_json.push_back(s == BorutaStatus::confirmed ? "confirmed"
                                                             : (s == BorutaStatus::rejected ? "rejected" : "tentative"));
    return json{{"features", feature_names},
                {"statuses", statuses_json},
                {"hit_counts", hit_counts},
                {"iterations", iterations},
                {"alpha", alpha}};
}

BorutaDecision boruta(const Dataset& ds, int iterations, double alpha, std::uint64_t seed) {
    if (iterations < 20) throw ValidationError("boruta needs at least 20 iterations");
    check_binary_labels(ds);
    const std::size_t n = ds.n_rows(), p = ds.n_cols();

    BorutaDecision decision;
    decision.feature_names = ds.feature_names;
    decision.iterations = iterations;
    decision.alpha = alpha;
    decision.hit_counts.assign(p, 0);

    ForestConfig forest_cfg;
    forest_cfg.n_trees = 48;
    forest_cfg.max_depth = 8;
    forest_cfg.min_leaf = 5;
    forest_cfg.mtry = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(2 * p))));

    std::vector<std::vector<int>> hits_per_iter(static_cast<std::size_t>(iterations));
    Rng base(seed);
    parallel_for(static_cast<std::size_t>(iterations), std::thread::hardware_concurrency(), [&](std::size_t it) {
        Rng rng = base.fork(it);

        // Augmented dataset: every feature plus an independently row-permuted
        // shadow copy.
        Dataset aug;
        aug.features = Matrix(n, 2 * p);
        aug.labels = ds.labels;
        aug.feature_names.resize(2 * p);
        for (std::size_t j = 0; j < p; ++j) {
            aug.feature_names[j] = ds.feature_names[j];
            aug.feature_names[p + j] = "shadow_" + ds.feature_names[j];
        }
        std::vector<std::size_t> perm(n);
        for (std::size_t r = 0; r < n; ++r) {
            const auto row = ds.features.row(r);
            for (std::size_t j = 0; j < p; ++j) aug.features.at(r, j) = row[j];
        }
        for (std::size_t j = 0; j < p; ++j) {
            std::iota(perm.begin(), perm.end(), 0);
            rng.shuffle(perm);
            for (std::size_t r = 0; r < n; ++r) aug.features.at(r, p + j) = ds.features.at(perm[r], j);
        }

        ForestConfig cfg = forest_cfg;
        const auto forest = fit_forest(aug, cfg, rng.fork(0xB0).seed());
        const auto imp = impurity_importance(*forest, 2 * p);
        double max_shadow = 0.0;
        for (std::size_t j = 0; j < p; ++j) max_shadow = std::max(max_shadow, imp[p + j]);

        std::vector<int> hits(p, 0);
        for (std::size_t j = 0; j < p; ++j) hits[j] = imp[j] > max_shadow ? 1 : 0;
        hits_per_iter[it] = std::move(hits);
    });

    for (const auto& hits : hits_per_iter)
        for (std::size_t j = 0; j < p; ++j) decision.hit_counts[j] += hits[j];

    const double cutoff = alpha / (4.0 * static_cast<double>(p));
    decision.statuses.resize(p);
    for (std::size_t j = 0; j < p; ++j) {
        if (binom_upper_tail(iterations, decision.hit_counts[j]) <= cutoff)
            decision.statuses[j] = BorutaStatus::confirmed;
        else if (binom_lower_tail(iterations, decision.hit_counts[j]) <= cutoff)
            decision.statuses[j] = BorutaStatus::rejected;
        else
            decision.statuses[j] = BorutaStatus::tentative;
    }
    return decision;
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

json ConsensusRanking::to_json() const {
    json rows = json::array();
    for (std::size_t j = 0; j < feature_names.size(); ++j) {
        rows.push_back(
            {{"feature", feature_names[j]},
             {"average_rank", average_rank[j]},
             {"boruta",
              boruta_status[j] == BorutaStatus::confirmed
                  ? "confirmed"
                  : (boruta_status[j] == BorutaStatus::rejected ? "rejected" : "tentative")},
             {"selected", static_cast<bool>(selected[j])}});
    }
    return rows;
}

ConsensusRanking aggregate(const std::vector<MethodScore>& method_scores, const BorutaDecision& boruta,
                           double rank_threshold, const std::set<std::string>& overrides) {
    if (method_scores.empty()) throw ValidationError("aggregate needs at least one method score");
    const auto& names = method_scores.front().feature_names;
    for (const auto& ms : method_scores)
        if (ms.feature_names != names) throw FeatureListMismatch("method " + ms.method + " covers different features");
    if (boruta.feature_names != names) throw FeatureListMismatch("boruta decision covers different features");

    ConsensusRanking out;
    out.feature_names = names;
    out.average_rank.assign(names.size(), 0.0);
    out.boruta_status = boruta.statuses;
    out.selected.assign(names.size(), false);
    for (const auto& ms : method_scores)
        for (std::size_t j = 0; j < names.size(); ++j) out.average_rank[j] += static_cast<double>(ms.ranks[j]);
    for (std::size_t j = 0; j < names.size(); ++j) {
        out.average_rank[j] /= static_cast<double>(method_scores.size());
        const bool confirmed = boruta.statuses[j] == BorutaStatus::confirmed;
        const bool overridden = out.average_rank[j] <= rank_threshold && overrides.count(names[j]) > 0;
        out.selected[j] = confirmed || overridden;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

json FeatureReport::to_json() const {
    json methods = json::array();
    for (const auto& ms : method_scores) methods.push_back(ms.to_json());
    return json{{"methods", methods}, {"boruta", boruta.to_json()}, {"consensus", consensus.to_json()}};
}

FeatureReport run_selection_ensemble(const Dataset& ds, const SelectOptions& options) {
    FeatureReport report;
    Rng rng(options.seed);

    // Contingency chi-square is invariant to category relabeling, so columns
    // shift to non-negative for that method only (ternary encodings carry -1).
    Dataset shifted = ds;
    for (std::size_t j = 0; j < ds.n_cols(); ++j) {
        double lo = 0.0;
        for (std::size_t r = 0; r < ds.n_rows(); ++r) lo = std::min(lo, ds.features.at(r, j));
        if (lo < 0.0)
            for (std::size_t r = 0; r < ds.n_rows(); ++r) shifted.features.at(r, j) -= lo;
    }

    for (const auto& name : options.methods) {
        if (name == "mutual_info") report.method_scores.push_back(filter_scores(ds, FilterMethod::mutual_info));
        else if (name == "chi_square") report.method_scores.push_back(filter_scores(shifted, FilterMethod::chi_square));
        else if (name == "anova_f") report.method_scores.push_back(filter_scores(ds, FilterMethod::anova_f));
        else if (name == "pearson") report.method_scores.push_back(filter_scores(ds, FilterMethod::pearson));
        else if (name == "variance") report.method_scores.push_back(filter_scores(ds, FilterMethod::variance));
        else if (name == "rfe_logreg") report.method_scores.push_back(rfe(ds, RfeBase::logreg, 1, rng.fork(1).seed()));
        else if (name == "rfe_gb") report.method_scores.push_back(rfe(ds, RfeBase::gbdt, 1, rng.fork(2).seed()));
        else if (name == "sfs")
            report.method_scores.push_back(
                sequential_forward(ds, kfold_stratified(ds, 5, rng.fork(3).seed()), rng.fork(4).seed()));
        else if (name == "emb_rf") report.method_scores.push_back(embedded_importance(ds, EmbeddedBase::rf, rng.fork(5).seed()));
        else if (name == "emb_gb") report.method_scores.push_back(embedded_importance(ds, EmbeddedBase::gbdt, rng.fork(6).seed()));
        else if (name == "emb_l1") report.method_scores.push_back(embedded_importance(ds, EmbeddedBase::l1_logreg, rng.fork(7).seed()));
        else throw ValidationError("unknown selection method: " + name);
    }

    report.boruta = boruta(ds, options.boruta_iterations, options.alpha, rng.fork(8).seed());
    report.consensus = aggregate(report.method_scores, report.boruta, options.rank_threshold, options.overrides);
    return report;
}

}  // namespace nutriscreen
