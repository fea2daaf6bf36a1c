#include "nutriscreen/models_classic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

namespace nutriscreen {

using nlohmann::json;

namespace {

json matrix_to_json(const Matrix& m) {
    return json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

Matrix matrix_from_json(const json& j) {
    Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    m.data = j.at("data").get<std::vector<double>>();
    if (m.data.size() != m.rows * m.cols) throw ValidationError("matrix JSON shape mismatch");
    return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Logistic regression
// ---------------------------------------------------------------------------

double LogregModel::score_row(std::span<const double> row) const {
    if (row.size() != weights.size()) throw DimensionMismatch("logreg row width mismatch");
    return sigmoid(dot(row, weights) + intercept);
}

json LogregModel::to_json() const {
    return json{{"family", family()},
                {"weights", weights},
                {"intercept", intercept},
                {"converged", converged}};
}

std::unique_ptr<LogregModel> fit_logreg(const Dataset& ds, const LogregConfig& cfg, std::uint64_t /*seed*/) {
    const std::size_t n = ds.n_rows(), p = ds.n_cols();
    if (n == 0) throw ValidationError("cannot fit logistic regression on empty dataset");
    auto model = std::make_unique<LogregModel>();
    model->weights.assign(p, 0.0);

    std::vector<double> beta(p, 0.0), grad(p, 0.0), beta_try(p, 0.0);
    double b = 0.0, grad_b = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);

    // Mean penalized log-likelihood; the stationary point matches the
    // sum-form objective with penalty l2/2 * ||beta||^2.
    auto objective = [&](const std::vector<double>& w, double b0) {
        double ll = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            const double z = dot(ds.features.row(r), w) + b0;
            // log sigmoid(z) if y=1 else log sigmoid(-z), stably
            ll += ds.labels[r] ? -std::log1p(std::exp(-std::abs(z))) - std::max(-z, 0.0)
                               : -std::log1p(std::exp(-std::abs(z))) - std::max(z, 0.0);
        }
        double pen = 0.0;
        for (double w_j : w) pen += w_j * w_j;
        return ll * inv_n - 0.5 * cfg.l2 * inv_n * pen;
    };

    double step = 1.0;
    double obj = objective(beta, b);
    for (int iter = 0; iter < cfg.max_iter; ++iter) {
        std::fill(grad.begin(), grad.end(), 0.0);
        grad_b = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            const double resid = static_cast<double>(ds.labels[r]) - sigmoid(dot(ds.features.row(r), beta) + b);
            const auto row = ds.features.row(r);
            for (std::size_t j = 0; j < p; ++j) grad[j] += resid * row[j];
            grad_b += resid;
        }
        for (std::size_t j = 0; j < p; ++j) grad[j] = (grad[j] - cfg.l2 * beta[j]) * inv_n;
        grad_b *= inv_n;

        double gnorm = std::abs(grad_b);
        double gsq = grad_b * grad_b;
        for (double g : grad) {
            gnorm = std::max(gnorm, std::abs(g));
            gsq += g * g;
        }
        model->final_grad_norm = gnorm;
        if (gnorm < cfg.tol) {
            model->converged = true;
            break;
        }

        // Backtracking (Armijo) on the ascent direction, with the accepted
        // step carried over and re-grown for the next iteration.
        step *= 2.0;
        double obj_try = -1e300, b_try = b;
        for (int halvings = 0; halvings < 60; ++halvings) {
            for (std::size_t j = 0; j < p; ++j) beta_try[j] = beta[j] + step * grad[j];
            b_try = b + step * grad_b;
            obj_try = objective(beta_try, b_try);
            if (obj_try >= obj + 1e-4 * step * gsq) break;
            step *= 0.5;
        }
        if (obj_try <= obj && step < 1e-150) break;  // no progress possible
        beta.swap(beta_try);
        b = b_try;
        obj = obj_try;
    }

    model->weights = beta;
    model->intercept = b;
    return model;
}

// ---------------------------------------------------------------------------
// LDA
// ---------------------------------------------------------------------------

double LdaModel::score_row(std::span<const double> row) const {
    if (row.size() != weights.size()) throw DimensionMismatch("lda row width mismatch");
    return sigmoid(dot(row, weights) + intercept);
}

json LdaModel::to_json() const {
    return json{{"family", family()}, {"weights", weights}, {"intercept", intercept}};
}

namespace {

// Cholesky solve of A x = rhs; returns false if a pivot goes non-positive.
bool cholesky_solve(Matrix A, std::vector<double> rhs, std::vector<double>& x) {
    const std::size_t p = A.rows;
    for (std::size_t j = 0; j < p; ++j) {
        double d = A.at(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= A.at(j, k) * A.at(j, k);
        if (d <= 0.0 || !std::isfinite(d)) return false;
        A.at(j, j) = std::sqrt(d);
        for (std::size_t i = j + 1; i < p; ++i) {
            double s = A.at(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= A.at(i, k) * A.at(j, k);
            A.at(i, j) = s / A.at(j, j);
        }
    }
    for (std::size_t i = 0; i < p; ++i) {
        double s = rhs[i];
        for (std::size_t k = 0; k < i; ++k) s -= A.at(i, k) * rhs[k];
        rhs[i] = s / A.at(i, i);
    }
    x.assign(p, 0.0);
    for (std::size_t ii = p; ii-- > 0;) {
        double s = rhs[ii];
        for (std::size_t k = ii + 1; k < p; ++k) s -= A.at(k, ii) * x[k];
        x[ii] = s / A.at(ii, ii);
    }
    return true;
}

}  // namespace

std::unique_ptr<LdaModel> fit_lda(const Dataset& ds) {
    const std::size_t n = ds.n_rows(), p = ds.n_cols();
    const std::size_t n1 = ds.positives(), n0 = n - n1;
    if (n0 == 0 || n1 == 0) throw SingleClassDataset("LDA needs both classes");

    std::vector<double> mu0(p, 0.0), mu1(p, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        auto& mu = ds.labels[r] ? mu1 : mu0;
        const auto row = ds.features.row(r);
        for (std::size_t j = 0; j < p; ++j) mu[j] += row[j];
    }
    for (std::size_t j = 0; j < p; ++j) {
        mu0[j] /= static_cast<double>(n0);
        mu1[j] /= static_cast<double>(n1);
    }

    Matrix cov(p, p);
    std::vector<double> centered(p);
    for (std::size_t r = 0; r < n; ++r) {
        const auto& mu = ds.labels[r] ? mu1 : mu0;
        const auto row = ds.features.row(r);
        for (std::size_t j = 0; j < p; ++j) centered[j] = row[j] - mu[j];
        for (std::size_t j = 0; j < p; ++j)
            for (std::size_t k = 0; k <= j; ++k) cov.at(j, k) += centered[j] * centered[k];
    }
    const double denom = static_cast<double>(n >= p + 2 ? n - 2 : n);
    double mean_diag = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
        for (std::size_t k = 0; k <= j; ++k) {
            cov.at(j, k) /= denom;
            cov.at(k, j) = cov.at(j, k);
        }
        mean_diag += cov.at(j, j);
    }
    mean_diag /= static_cast<double>(p);
    const double jitter = 1e-6 * (mean_diag > 0.0 ? mean_diag : 1.0);
    for (std::size_t j = 0; j < p; ++j) cov.at(j, j) += jitter;

    std::vector<double> diff(p);
    for (std::size_t j = 0; j < p; ++j) diff[j] = mu1[j] - mu0[j];

    auto model = std::make_unique<LdaModel>();
    if (!cholesky_solve(cov, diff, model->weights))
        throw SingularCovariance("pooled covariance singular after ridge jitter");

    double quad = 0.0;
    for (std::size_t j = 0; j < p; ++j) quad += model->weights[j] * (mu1[j] + mu0[j]);
    model->intercept = -0.5 * quad + std::log(static_cast<double>(n1) / static_cast<double>(n0));
    return model;
}

// ---------------------------------------------------------------------------
// KNN
// ---------------------------------------------------------------------------

double KnnModel::score_row(std::span<const double> row) const {
    if (row.size() != train_features.cols) throw DimensionMismatch("knn row width mismatch");
    const std::size_t n = train_features.rows;
    std::vector<std::pair<double, std::size_t>> dist(n);
    for (std::size_t r = 0; r < n; ++r) {
        const auto t = train_features.row(r);
        double d = 0.0;
        for (std::size_t j = 0; j < row.size(); ++j) {
            const double diff = row[j] - t[j];
            d += diff * diff;
        }
        dist[r] = {d, r};
    }
    const std::size_t kk = static_cast<std::size_t>(k);
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk), dist.end());
    std::size_t votes = 0;
    for (std::size_t i = 0; i < kk; ++i) votes += static_cast<std::size_t>(train_labels[dist[i].second]);
    return static_cast<double>(votes) / static_cast<double>(kk);
}

json KnnModel::to_json() const {
    return json{{"family", family()},
                {"k", k},
                {"dataset_path", dataset_path},
                {"dataset_fingerprint", hex64(dataset_fingerprint)}};
}

std::unique_ptr<KnnModel> fit_knn(const Dataset& ds, int k, const std::string& dataset_path) {
    if (k < 1) throw ValidationError("knn needs k >= 1");
    if (static_cast<std::size_t>(k) > ds.n_rows())
        throw KLargerThanTrainingSet("k=" + std::to_string(k) + " exceeds " + std::to_string(ds.n_rows()) + " rows");
    auto model = std::make_unique<KnnModel>();
    model->train_features = ds.features;
    model->train_labels = ds.labels;
    model->k = k;
    model->dataset_path = dataset_path;
    model->dataset_fingerprint = ds.fingerprint();
    return model;
}

// ---------------------------------------------------------------------------
// CART / forest
// ---------------------------------------------------------------------------

double TreeModel::score_row(std::span<const double> row) const {
    int idx = 0;
    while (nodes[static_cast<std::size_t>(idx)].feature >= 0) {
        const auto& node = nodes[static_cast<std::size_t>(idx)];
        if (static_cast<std::size_t>(node.feature) >= row.size()) throw DimensionMismatch("tree row width mismatch");
        idx = row[static_cast<std::size_t>(node.feature)] < node.threshold ? node.left : node.right;
    }
    return nodes[static_cast<std::size_t>(idx)].leaf_prob;
}

json TreeModel::to_json() const {
    json nodes_json = json::array();
    for (const auto& node : nodes) {
        nodes_json.push_back({{"feature", node.feature},
                              {"threshold", node.threshold},
                              {"left", node.left},
                              {"right", node.right},
                              {"leaf_prob", node.leaf_prob},
                              {"n", node.n_samples}});
    }
    return json{{"family", family()}, {"nodes", nodes_json}};
}

namespace {

TreeModel tree_nodes_from_json(const json& doc) {
    TreeModel t;
    for (const auto& nj : doc.at("nodes")) {
        TreeNode node;
        node.feature = nj.at("feature").get<int>();
        node.threshold = nj.at("threshold").get<double>();
        node.left = nj.at("left").get<int>();
        node.right = nj.at("right").get<int>();
        node.leaf_prob = nj.at("leaf_prob").get<double>();
        node.n_samples = nj.at("n").get<std::size_t>();
        t.nodes.push_back(node);
    }
    return t;
}

struct SplitChoice {
    double gain = 0.0;
    int feature = -1;
    double threshold = 0.0;
};

double gini(std::size_t pos, std::size_t n) {
    if (n == 0) return 0.0;
    const double p = static_cast<double>(pos) / static_cast<double>(n);
    return 2.0 * p * (1.0 - p);
}

class CartBuilder {
public:
    CartBuilder(const Dataset& ds, const TreeConfig& cfg, Rng rng)
        : ds_(ds), cfg_(cfg), rng_(rng) {}

    TreeModel build(std::vector<std::size_t> rows) {
        TreeModel tree;
        grow(tree, std::move(rows), 0);
        return tree;
    }

private:
    int grow(TreeModel& tree, std::vector<std::size_t> rows, int depth) {
        const std::size_t n = rows.size();
        std::size_t pos = 0;
        for (std::size_t r : rows) pos += static_cast<std::size_t>(ds_.labels[r]);

        const int self = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes.back().n_samples = n;
        tree.nodes.back().leaf_prob = n ? static_cast<double>(pos) / static_cast<double>(n) : 0.0;

        const bool pure = pos == 0 || pos == n;
        if (depth >= cfg_.max_depth || n < 2 * static_cast<std::size_t>(cfg_.min_leaf) || pure) return self;

        const SplitChoice split = best_split(rows, pos);
        if (split.feature < 0) return self;

        std::vector<std::size_t> left, right;
        left.reserve(n);
        right.reserve(n);
        for (std::size_t r : rows)
            (ds_.features.at(r, static_cast<std::size_t>(split.feature)) < split.threshold ? left : right).push_back(r);
        rows.clear();
        rows.shrink_to_fit();

        tree.nodes[static_cast<std::size_t>(self)].feature = split.feature;
        tree.nodes[static_cast<std::size_t>(self)].threshold = split.threshold;
        const int l = grow(tree, std::move(left), depth + 1);
        const int r = grow(tree, std::move(right), depth + 1);
        tree.nodes[static_cast<std::size_t>(self)].left = l;
        tree.nodes[static_cast<std::size_t>(self)].right = r;
        return self;
    }

    std::vector<std::size_t> candidate_features() {
        const std::size_t p = ds_.n_cols();
        std::size_t m = p;
        if (cfg_.feature_subsample > 0.0 && cfg_.feature_subsample < 1.0)
            m = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(cfg_.feature_subsample * static_cast<double>(p))));
        std::vector<std::size_t> feats(p);
        std::iota(feats.begin(), feats.end(), 0);
        if (m == p) return feats;
        // Partial Fisher-Yates for deterministic sampling without replacement,
        // then re-sorted so tie-breaking stays index-ordered.
        for (std::size_t i = 0; i < m; ++i) std::swap(feats[i], feats[i + rng_.index(p - i)]);
        feats.resize(m);
        std::sort(feats.begin(), feats.end());
        return feats;
    }

    SplitChoice best_split(const std::vector<std::size_t>& rows, std::size_t pos_total) {
        const std::size_t n = rows.size();
        const double parent = gini(pos_total, n);
        SplitChoice best;

        std::vector<std::pair<double, int>> values(n);
        for (std::size_t f : candidate_features()) {
            for (std::size_t i = 0; i < n; ++i)
                values[i] = {ds_.features.at(rows[i], f), ds_.labels[rows[i]]};
            std::sort(values.begin(), values.end());
            if (values.front().first == values.back().first) continue;

            if (cfg_.random_splits) {
                const double lo = values.front().first, hi = values.back().first;
                const double threshold = rng_.uniform(lo, hi);
                consider(best, values, parent, n, static_cast<int>(f), threshold);
            } else {
                // Prefix positives; thresholds at midpoints of distinct values.
                std::size_t pos_left = 0;
                for (std::size_t i = 0; i + 1 < n; ++i) {
                    pos_left += static_cast<std::size_t>(values[i].second);
                    if (values[i].first == values[i + 1].first) continue;
                    const std::size_t n_left = i + 1;
                    if (n_left < static_cast<std::size_t>(cfg_.min_leaf) ||
                        n - n_left < static_cast<std::size_t>(cfg_.min_leaf))
                        continue;
                    const double threshold = 0.5 * (values[i].first + values[i + 1].first);
                    const double gain = parent -
                                        (static_cast<double>(n_left) * gini(pos_left, n_left) +
                                         static_cast<double>(n - n_left) * gini(pos_total - pos_left, n - n_left)) /
                                            static_cast<double>(n);
                    // Features and thresholds are visited in ascending order,
                    // so requiring strict improvement keeps the tie-break at
                    // (lower feature index, lower threshold).
                    if (gain > best.gain + 1e-15 && gain > 1e-12) best = {gain, static_cast<int>(f), threshold};
                }
            }
        }
        return best;
    }

    void consider(SplitChoice& best, const std::vector<std::pair<double, int>>& values, double parent,
                  std::size_t n, int feature, double threshold) {
        std::size_t n_left = 0, pos_left = 0, pos_total = 0;
        for (const auto& [v, y] : values) {
            pos_total += static_cast<std::size_t>(y);
            if (v < threshold) {
                ++n_left;
                pos_left += static_cast<std::size_t>(y);
            }
        }
        if (n_left < static_cast<std::size_t>(cfg_.min_leaf) || n - n_left < static_cast<std::size_t>(cfg_.min_leaf))
            return;
        const double gain = parent - (static_cast<double>(n_left) * gini(pos_left, n_left) +
                                      static_cast<double>(n - n_left) * gini(pos_total - pos_left, n - n_left)) /
                                         static_cast<double>(n);
        if (gain > best.gain + 1e-15 && gain > 1e-12) best = {gain, feature, threshold};
    }

    const Dataset& ds_;
    const TreeConfig& cfg_;
    Rng rng_;
};

}  // namespace

std::unique_ptr<TreeModel> fit_tree(const Dataset& ds, const TreeConfig& cfg, std::uint64_t seed) {
    if (cfg.max_depth < 1) throw ValidationError("max_depth must be >= 1");
    if (cfg.min_leaf < 1) throw ValidationError("min_leaf must be >= 1");
    std::vector<std::size_t> rows(ds.n_rows());
    std::iota(rows.begin(), rows.end(), 0);
    CartBuilder builder(ds, cfg, Rng(seed));
    return std::make_unique<TreeModel>(builder.build(std::move(rows)));
}

double ForestModel::score_row(std::span<const double> row) const {
    double sum = 0.0;
    for (const auto& tree : trees) sum += tree.score_row(row);
    return sum / static_cast<double>(trees.size());
}

json ForestModel::to_json() const {
    json trees_json = json::array();
    for (const auto& tree : trees) trees_json.push_back(tree.to_json());
    return json{{"family", family()},
                {"trees", trees_json},
                {"config",
                 {{"n_trees", config.n_trees},
                  {"max_depth", config.max_depth},
                  {"min_leaf", config.min_leaf},
                  {"mtry", config.mtry},
                  {"bootstrap", config.bootstrap},
                  {"random_splits", config.random_splits}}}};
}

std::unique_ptr<ForestModel> fit_forest(const Dataset& ds, const ForestConfig& cfg, std::uint64_t seed) {
    if (cfg.n_trees < 1) throw ValidationError("forest needs n_trees >= 1");
    const std::size_t p = ds.n_cols();
    std::size_t mtry = cfg.mtry > 0 ? static_cast<std::size_t>(cfg.mtry)
                                    : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(p))));
    mtry = std::min(mtry, p);

    TreeConfig tree_cfg;
    tree_cfg.max_depth = cfg.max_depth;
    tree_cfg.min_leaf = cfg.min_leaf;
    tree_cfg.random_splits = cfg.random_splits;
    tree_cfg.feature_subsample = mtry == p ? 0.0 : static_cast<double>(mtry) / static_cast<double>(p);

    auto model = std::make_unique<ForestModel>();
    model->config = cfg;
    model->trees.resize(static_cast<std::size_t>(cfg.n_trees));
    model->inbag.assign(static_cast<std::size_t>(cfg.n_trees), std::vector<std::uint8_t>(ds.n_rows(), 1));

    Rng base(seed);
    parallel_for(static_cast<std::size_t>(cfg.n_trees), std::thread::hardware_concurrency(), [&](std::size_t t) {
        Rng rng = base.fork(t);
        std::vector<std::size_t> rows;
        rows.reserve(ds.n_rows());
        if (cfg.bootstrap) {
            std::fill(model->inbag[t].begin(), model->inbag[t].end(), 0);
            for (std::size_t i = 0; i < ds.n_rows(); ++i) {
                const std::size_t r = rng.index(ds.n_rows());
                rows.push_back(r);
                model->inbag[t][r] = 1;
            }
        } else {
            rows.resize(ds.n_rows());
            std::iota(rows.begin(), rows.end(), 0);
        }
        CartBuilder builder(ds, tree_cfg, rng.fork(0x7EEE));
        model->trees[t] = builder.build(std::move(rows));
    });
    return model;
}

std::vector<double> impurity_importance(const TreeModel& tree, std::size_t n_features) {
    std::vector<double> imp(n_features, 0.0);
    if (tree.nodes.empty()) return imp;
    const double n_root = static_cast<double>(tree.nodes[0].n_samples);
    for (const auto& node : tree.nodes) {
        if (node.feature < 0) continue;
        const auto& l = tree.nodes[static_cast<std::size_t>(node.left)];
        const auto& r = tree.nodes[static_cast<std::size_t>(node.right)];
        const auto g = [](const TreeNode& x) {
            return 2.0 * x.leaf_prob * (1.0 - x.leaf_prob) * static_cast<double>(x.n_samples);
        };
        const double decrease = g(node) - g(l) - g(r);
        imp[static_cast<std::size_t>(node.feature)] += decrease / n_root;
    }
    return imp;
}

namespace {

void normalize_importance(std::vector<double>& imp) {
    double total = 0.0;
    for (double v : imp) total += v;
    if (total > 0.0)
        for (double& v : imp) v /= total;
}

}  // namespace

std::vector<double> impurity_importance(const ForestModel& forest, std::size_t n_features) {
    std::vector<double> imp(n_features, 0.0);
    for (const auto& tree : forest.trees) {
        const auto t = impurity_importance(tree, n_features);
        for (std::size_t j = 0; j < n_features; ++j) imp[j] += t[j];
    }
    normalize_importance(imp);
    return imp;
}

// ---------------------------------------------------------------------------
// SVM
// ---------------------------------------------------------------------------

double SvmModel::margin(std::span<const double> row) const {
    if (config.kernel == SvmConfig::Kernel::linear) {
        if (row.size() != weights.size()) throw DimensionMismatch("svm row width mismatch");
        return dot(row, weights) + bias;
    }
    if (row.size() != rff_directions.cols) throw DimensionMismatch("svm row width mismatch");
    const double scale = std::sqrt(2.0 / static_cast<double>(rff_directions.rows));
    double m = bias;
    for (std::size_t d = 0; d < rff_directions.rows; ++d)
        m += weights[d] * scale * std::cos(dot(row, rff_directions.row(d)) + rff_phases[d]);
    return m;
}

double SvmModel::score_row(std::span<const double> row) const {
    return sigmoid(platt_a * margin(row) + platt_b);
}

json SvmModel::to_json() const {
    return json{{"family", family()},
                {"kernel", config.kernel == SvmConfig::Kernel::linear ? "linear" : "rbf_rff"},
                {"C", config.C},
                {"gamma", config.gamma},
                {"weights", weights},
                {"bias", bias},
                {"platt_a", platt_a},
                {"platt_b", platt_b},
                {"rff_directions", matrix_to_json(rff_directions)},
                {"rff_phases", rff_phases}};
}

namespace {

// Random Fourier map z(x) = sqrt(2/D) cos(Wx + b) with W ~ N(0, 2*gamma*I),
// approximating exp(-gamma ||x - y||^2).
void init_rff(SvmModel& model, std::size_t p, double gamma, int dim, Rng& rng) {
    model.rff_directions = Matrix(static_cast<std::size_t>(dim), p);
    model.rff_phases.resize(static_cast<std::size_t>(dim));
    const double sd = std::sqrt(2.0 * gamma);
    for (auto& w : model.rff_directions.data) w = sd * rng.normal();
    for (auto& ph : model.rff_phases) ph = rng.uniform(0.0, 6.283185307179586476925286766559);
}

// Averaged Pegasos on rows of X with labels in {-1, +1}.
void pegasos(const Matrix& X, const std::vector<int>& y01, double lambda, int epochs, Rng& rng,
             std::vector<double>& w_avg, double& b_avg) {
    const std::size_t n = X.rows, p = X.cols;
    std::vector<double> w(p, 0.0), w_sum(p, 0.0);
    double b = 0.0, b_sum = 0.0;
    std::size_t t = 0;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        for (std::size_t s = 0; s < n; ++s) {
            ++t;
            const double eta = 1.0 / (lambda * static_cast<double>(t));
            const std::size_t i = rng.index(n);
            const double yi = y01[i] ? 1.0 : -1.0;
            const auto row = X.row(i);
            const double margin = yi * (dot(row, w) + b);
            const double shrink = 1.0 - eta * lambda;
            for (std::size_t j = 0; j < p; ++j) w[j] *= shrink;
            if (margin < 1.0) {
                for (std::size_t j = 0; j < p; ++j) w[j] += eta * yi * row[j];
                b += eta * yi;
            }
            for (std::size_t j = 0; j < p; ++j) w_sum[j] += w[j];
            b_sum += b;
        }
    }
    const double inv_t = 1.0 / static_cast<double>(t);
    w_avg.resize(p);
    for (std::size_t j = 0; j < p; ++j) w_avg[j] = w_sum[j] * inv_t;
    b_avg = b_sum * inv_t;
}

// Platt sigmoid on margins: p = sigmoid(a*m + c) fitted by damped Newton with
// the usual smoothed targets.
void fit_platt(const std::vector<double>& margins, const std::vector<int>& y, double& a, double& c) {
    std::size_t n1 = 0;
    for (int v : y) n1 += static_cast<std::size_t>(v);
    const std::size_t n0 = y.size() - n1;
    const double t_pos = (static_cast<double>(n1) + 1.0) / (static_cast<double>(n1) + 2.0);
    const double t_neg = 1.0 / (static_cast<double>(n0) + 2.0);

    a = 1.0;
    c = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
        double g_a = 0.0, g_c = 0.0, h_aa = 0.0, h_ac = 0.0, h_cc = 0.0;
        for (std::size_t i = 0; i < margins.size(); ++i) {
            const double t = y[i] ? t_pos : t_neg;
            const double p = sigmoid(a * margins[i] + c);
            const double d = p - t;
            const double w = std::max(p * (1.0 - p), 1e-12);
            g_a += d * margins[i];
            g_c += d;
            h_aa += w * margins[i] * margins[i];
            h_ac += w * margins[i];
            h_cc += w;
        }
        h_aa += 1e-12;
        h_cc += 1e-12;
        const double det = h_aa * h_cc - h_ac * h_ac;
        if (std::abs(det) < 1e-300) break;
        const double da = (h_cc * g_a - h_ac * g_c) / det;
        const double dc = (h_aa * g_c - h_ac * g_a) / det;
        a -= da;
        c -= dc;
        if (std::abs(da) + std::abs(dc) < 1e-10) break;
    }
}

}  // namespace

std::unique_ptr<SvmModel> fit_svm(const Dataset& ds, const SvmConfig& cfg, std::uint64_t seed) {
    const std::size_t p = ds.n_cols();
    auto model = std::make_unique<SvmModel>();
    model->config = cfg;
    if (model->config.gamma <= 0.0) model->config.gamma = 1.0 / static_cast<double>(std::max<std::size_t>(p, 1));

    Rng rng(seed);
    const bool rff = cfg.kernel == SvmConfig::Kernel::rbf_rff;
    if (rff) init_rff(*model, p, model->config.gamma, cfg.rff_dim, rng);

    auto mapped = [&](const Dataset& d) {
        if (!rff) return d.features;
        Matrix Z(d.n_rows(), static_cast<std::size_t>(cfg.rff_dim));
        const double scale = std::sqrt(2.0 / static_cast<double>(cfg.rff_dim));
        for (std::size_t r = 0; r < d.n_rows(); ++r) {
            const auto row = d.features.row(r);
            for (std::size_t k = 0; k < Z.cols; ++k)
                Z.at(r, k) = scale * std::cos(dot(row, model->rff_directions.row(k)) + model->rff_phases[k]);
        }
        return Z;
    };

    const double lambda = 1.0 / std::max(cfg.C, 1e-12);

    // Inner split: margins for Platt calibration come from a model that never
    // saw the calibration rows; the final weights are refit on everything.
    SplitPlan inner;
    bool calibrated = false;
    try {
        inner = split_stratified(ds, 0.8, rng.fork(11).seed());
        const Dataset fit_part = ds.subset(inner.train_indices);
        const Dataset cal_part = ds.subset(inner.test_indices);
        Matrix Zfit = mapped(fit_part);
        std::vector<double> w;
        double b = 0.0;
        Rng peg_rng = rng.fork(12);
        pegasos(Zfit, fit_part.labels, lambda, cfg.epochs, peg_rng, w, b);
        SvmModel probe = *model;
        probe.weights = w;
        probe.bias = b;
        std::vector<double> margins(cal_part.n_rows());
        double max_margin = 0.0;
        for (std::size_t i = 0; i < cal_part.n_rows(); ++i) {
            margins[i] = probe.margin(cal_part.features.row(i));
            max_margin = std::max(max_margin, std::abs(margins[i]));
        }
        if (max_margin < 1e-2) {
            // Over-regularized to numerical silence: score the training prior
            // instead of letting the sigmoid amplify noise-scale margins.
            const double prev = std::min(std::max(static_cast<double>(ds.positives()) /
                                                      static_cast<double>(ds.n_rows()),
                                                  1e-9),
                                         1.0 - 1e-9);
            model->platt_a = 0.0;
            model->platt_b = std::log(prev / (1.0 - prev));
        } else {
            fit_platt(margins, cal_part.labels, model->platt_a, model->platt_b);
        }
        calibrated = true;
    } catch (const SingleClassDataset&) {
        // Too small / one-class inner split: fall back to an uncalibrated
        // sigmoid on the margin.
    }

    Matrix Z = mapped(ds);
    Rng peg_rng = rng.fork(13);
    pegasos(Z, ds.labels, lambda, cfg.epochs, peg_rng, model->weights, model->bias);
    if (!calibrated) {
        model->platt_a = 1.0;
        model->platt_b = 0.0;
    }
    return model;
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

std::unique_ptr<TrainedModel> classic_model_from_json(const json& doc) {
    const std::string family = doc.at("family").get<std::string>();
    if (family == "logreg") {
        auto m = std::make_unique<LogregModel>();
        m->weights = doc.at("weights").get<std::vector<double>>();
        m->intercept = doc.at("intercept").get<double>();
        m->converged = doc.at("converged").get<bool>();
        return m;
    }
    if (family == "lda") {
        auto m = std::make_unique<LdaModel>();
        m->weights = doc.at("weights").get<std::vector<double>>();
        m->intercept = doc.at("intercept").get<double>();
        return m;
    }
    if (family == "knn") {
        auto m = std::make_unique<KnnModel>();
        m->k = doc.at("k").get<int>();
        m->dataset_path = doc.at("dataset_path").get<std::string>();
        if (m->dataset_path.empty())
            throw ValidationError("knn model JSON has no dataset reference to reload");
        const Dataset ds = Dataset::load(m->dataset_path, "");
        if (hex64(ds.fingerprint()) != doc.at("dataset_fingerprint").get<std::string>())
            throw ValidationError("knn dataset fingerprint mismatch: " + m->dataset_path);
        m->train_features = ds.features;
        m->train_labels = ds.labels;
        m->dataset_fingerprint = ds.fingerprint();
        return m;
    }
    if (family == "tree") {
        return std::make_unique<TreeModel>(tree_nodes_from_json(doc));
    }
    if (family == "forest") {
        auto m = std::make_unique<ForestModel>();
        for (const auto& tj : doc.at("trees")) m->trees.push_back(tree_nodes_from_json(tj));
        const auto& c = doc.at("config");
        m->config.n_trees = c.at("n_trees").get<int>();
        m->config.max_depth = c.at("max_depth").get<int>();
        m->config.min_leaf = c.at("min_leaf").get<int>();
        m->config.mtry = c.at("mtry").get<int>();
        m->config.bootstrap = c.at("bootstrap").get<bool>();
        m->config.random_splits = c.at("random_splits").get<bool>();
        return m;
    }
    if (family == "svm") {
        auto m = std::make_unique<SvmModel>();
        m->config.kernel = doc.at("kernel").get<std::string>() == "linear" ? SvmConfig::Kernel::linear
                                                                           : SvmConfig::Kernel::rbf_rff;
        m->config.C = doc.at("C").get<double>();
        m->config.gamma = doc.at("gamma").get<double>();
        m->weights = doc.at("weights").get<std::vector<double>>();
        m->bias = doc.at("bias").get<double>();
        m->platt_a = doc.at("platt_a").get<double>();
        m->platt_b = doc.at("platt_b").get<double>();
        m->rff_directions = matrix_from_json(doc.at("rff_directions"));
        m->rff_phases = doc.at("rff_phases").get<std::vector<double>>();
        m->config.rff_dim = static_cast<int>(m->rff_directions.rows);
        return m;
    }
    return nullptr;
}

}  // namespace nutriscreen
