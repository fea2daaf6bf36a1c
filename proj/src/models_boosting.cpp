#include "nutriscreen/models_boosting.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace nutriscreen {

using nlohmann::json;

// ---------------------------------------------------------------------------
// AdaBoost
// ---------------------------------------------------------------------------

double AdaboostModel::score_row(std::span<const double> row) const {
    double vote = 0.0;
    for (const auto& s : stumps) vote += s.alpha * static_cast<double>(s.vote(row));
    return sigmoid(vote);
}

json AdaboostModel::to_json() const {
    json stumps_json = json::array();
    for (const auto& s : stumps)
        stumps_json.push_back({{"feature", s.feature}, {"threshold", s.threshold},
                               {"polarity", s.polarity}, {"alpha", s.alpha}});
    return json{{"family", family()}, {"stumps", stumps_json}};
}

namespace {

struct WeightedStump {
    Stump stump;
    double error = 1.0;
};

// Best weighted-error stump over (feature, midpoint threshold, polarity).
WeightedStump fit_stump(const Dataset& ds, const std::vector<double>& w) {
    const std::size_t n = ds.n_rows(), p = ds.n_cols();
    WeightedStump best;
    double w_pos = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (ds.labels[i]) w_pos += w[i];

    std::vector<std::pair<double, std::size_t>> order(n);
    for (std::size_t f = 0; f < p; ++f) {
        for (std::size_t i = 0; i < n; ++i) order[i] = {ds.features.at(i, f), i};
        std::sort(order.begin(), order.end());
        if (order.front().first == order.back().first) continue;

        // Scan thresholds between distinct values. For "value >= theta ->
        // class 1": error(theta) = w_pos_below + w_neg_at_or_above.
        double w_pos_below = 0.0, w_below = 0.0;
        const double w_neg = 1.0 - w_pos;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            const auto [v, idx] = order[i];
            w_below += w[idx];
            if (ds.labels[idx]) w_pos_below += w[idx];
            if (v == order[i + 1].first) continue;
            const double threshold = 0.5 * (v + order[i + 1].first);
            const double err_plus = w_pos_below + (w_neg - (w_below - w_pos_below));
            const double err_minus = 1.0 - err_plus;
            if (err_plus < best.error - 1e-15)
                best = {{static_cast<int>(f), threshold, 1, 0.0}, err_plus};
            if (err_minus < best.error - 1e-15)
                best = {{static_cast<int>(f), threshold, -1, 0.0}, err_minus};
        }
    }
    return best;
}

}  // namespace

std::unique_ptr<AdaboostModel> fit_adaboost(const Dataset& ds, int n_rounds, std::uint64_t /*seed*/) {
    if (n_rounds < 1) throw ValidationError("adaboost needs n_rounds >= 1");
    const std::size_t n = ds.n_rows();
    if (n == 0) throw ValidationError("cannot boost an empty dataset");

    auto model = std::make_unique<AdaboostModel>();
    std::vector<double> w(n, 1.0 / static_cast<double>(n));

    for (int round = 0; round < n_rounds; ++round) {
        WeightedStump ws = fit_stump(ds, w);
        if (ws.stump.feature < 0 || ws.error >= 0.5) break;  // nothing better than chance: discard and halt

        const double eps = std::max(ws.error, 1e-12);
        ws.stump.alpha = 0.5 * std::log((1.0 - eps) / eps);
        model->stumps.push_back(ws.stump);
        model->round_errors.push_back(ws.error);
        if (ws.error <= 0.0) break;  // perfect stump: keep and halt

        // Symmetric exponential reweighting; the stump just fitted has
        // weighted error exactly 0.5 on the new weights.
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double yi = ds.labels[i] ? 1.0 : -1.0;
            const double hi = static_cast<double>(ws.stump.vote(ds.features.row(i)));
            w[i] *= std::exp(-ws.stump.alpha * yi * hi);
            total += w[i];
        }
        for (double& wi : w) wi /= total;
    }
    return model;
}

// ---------------------------------------------------------------------------
// Histogram GBDT
// ---------------------------------------------------------------------------

void GbdtConfig::validate() const {
    if (n_bins < 2) throw ValidationError("gbdt needs n_bins >= 2");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw ValidationError("learning_rate must be in (0,1]");
    if (n_rounds < 0) throw ValidationError("n_rounds must be >= 0");
    if (growth == Growth::level_wise && max_depth < 1) throw ValidationError("level_wise needs max_depth >= 1");
    if (growth == Growth::leaf_wise && max_leaves < 2) throw ValidationError("leaf_wise needs max_leaves >= 2");
    if (symmetric && growth != Growth::level_wise) throw ValidationError("symmetric trees grow level-wise");
    if (min_leaf < 1) throw ValidationError("min_leaf must be >= 1");
}

GbdtConfig GbdtConfig::xgb_like() {
    GbdtConfig cfg;
    cfg.growth = Growth::level_wise;
    cfg.second_order = true;
    cfg.l2_leaf = 1.0;
    return cfg;
}

GbdtConfig GbdtConfig::lgbm_like() {
    GbdtConfig cfg;
    cfg.growth = Growth::leaf_wise;
    cfg.second_order = true;
    return cfg;
}

GbdtConfig GbdtConfig::histgb_like() {
    GbdtConfig cfg;
    cfg.growth = Growth::level_wise;
    cfg.second_order = false;
    return cfg;
}

GbdtConfig GbdtConfig::cat_like() {
    GbdtConfig cfg;
    cfg.growth = Growth::level_wise;
    cfg.symmetric = true;
    cfg.max_depth = 6;
    return cfg;
}

int GbdtModel::bin_of(std::size_t feature, double value) const {
    const auto& edges = bin_edges[feature];
    return static_cast<int>(std::upper_bound(edges.begin(), edges.end(), value) - edges.begin());
}

double GbdtModel::logit(std::span<const double> row) const {
    if (!bin_edges.empty() && row.size() != bin_edges.size()) throw DimensionMismatch("gbdt row width mismatch");
    double acc = base_score;
    for (const auto& tree : trees) {
        int idx = 0;
        while (tree.nodes[static_cast<std::size_t>(idx)].feature >= 0) {
            const auto& node = tree.nodes[static_cast<std::size_t>(idx)];
            const int bin = bin_of(static_cast<std::size_t>(node.feature), row[static_cast<std::size_t>(node.feature)]);
            idx = bin <= node.split_bin ? node.left : node.right;
        }
        acc += config.learning_rate * tree.nodes[static_cast<std::size_t>(idx)].leaf_value;
    }
    return acc;
}

double GbdtModel::score_row(std::span<const double> row) const { return sigmoid(logit(row)); }

json GbdtModel::to_json() const {
    json trees_json = json::array();
    for (const auto& tree : trees) {
        json nodes = json::array();
        for (const auto& node : tree.nodes)
            nodes.push_back({{"feature", node.feature}, {"split_bin", node.split_bin}, {"left", node.left},
                             {"right", node.right}, {"leaf_value", node.leaf_value}});
        trees_json.push_back(nodes);
    }
    return json{{"family", family()},
                {"base_score", base_score},
                {"learning_rate", config.learning_rate},
                {"bin_edges", bin_edges},
                {"feature_gain", feature_gain},
                {"trees", trees_json}};
}

namespace {

std::vector<double> equal_frequency_edges(std::vector<double> column, int n_bins) {
    std::sort(column.begin(), column.end());
    std::vector<double> distinct;
    for (double v : column)
        if (distinct.empty() || v != distinct.back()) distinct.push_back(v);

    std::vector<double> edges;
    if (distinct.size() <= static_cast<std::size_t>(n_bins)) {
        for (std::size_t i = 0; i + 1 < distinct.size(); ++i) edges.push_back(0.5 * (distinct[i] + distinct[i + 1]));
        return edges;
    }
    const std::size_t n = column.size();
    for (int k = 1; k < n_bins; ++k) {
        const std::size_t pos = k * n / static_cast<std::size_t>(n_bins);
        if (pos == 0 || pos >= n) continue;
        if (column[pos - 1] == column[pos]) continue;
        const double edge = 0.5 * (column[pos - 1] + column[pos]);
        if (edges.empty() || edge > edges.back()) edges.push_back(edge);
    }
    return edges;
}

struct NodeStats {
    double g = 0.0;
    double h = 0.0;
    std::size_t count = 0;
};

struct SplitResult {
    double gain = 0.0;
    int feature = -1;
    int bin = 0;
    NodeStats left, right;
};

struct TreeBuildContext {
    const std::vector<std::vector<int>>& bins;  // per feature, per row
    const std::vector<int>& n_bins_per_feature;
    const std::vector<double>& g;
    const std::vector<double>& h;  // filled with 1s in first-order mode
    const GbdtConfig& cfg;

    double leaf_value(const NodeStats& s) const {
        if (cfg.second_order) return -s.g / (s.h + cfg.l2_leaf);
        return s.count ? -s.g / static_cast<double>(s.count) : 0.0;  // mean residual step
    }

    double score_part(const NodeStats& s) const {
        if (cfg.second_order) return s.g * s.g / (s.h + cfg.l2_leaf);
        return s.count ? s.g * s.g / static_cast<double>(s.count) : 0.0;
    }

    double split_gain(const NodeStats& parent, const NodeStats& left, const NodeStats& right) const {
        const double raw = score_part(left) + score_part(right) - score_part(parent);
        return cfg.second_order ? 0.5 * raw : raw;
    }
};

// Histogram over one feature for the rows of a node.
std::vector<NodeStats> build_histogram(const TreeBuildContext& ctx, const std::vector<std::size_t>& rows,
                                       std::size_t feature) {
    std::vector<NodeStats> hist(static_cast<std::size_t>(ctx.n_bins_per_feature[feature]));
    const auto& fbins = ctx.bins[feature];
    for (std::size_t r : rows) {
        auto& cell = hist[static_cast<std::size_t>(fbins[r])];
        cell.g += ctx.g[r];
        cell.h += ctx.h[r];
        ++cell.count;
    }
    return hist;
}

SplitResult best_split(const TreeBuildContext& ctx, const std::vector<std::size_t>& rows, const NodeStats& parent) {
    SplitResult best;
    for (std::size_t f = 0; f < ctx.bins.size(); ++f) {
        if (ctx.n_bins_per_feature[f] < 2) continue;
        const auto hist = build_histogram(ctx, rows, f);
        NodeStats left;
        for (std::size_t b = 0; b + 1 < hist.size(); ++b) {
            left.g += hist[b].g;
            left.h += hist[b].h;
            left.count += hist[b].count;
            if (left.count < static_cast<std::size_t>(ctx.cfg.min_leaf)) continue;
            if (parent.count - left.count < static_cast<std::size_t>(ctx.cfg.min_leaf)) break;
            NodeStats right{parent.g - left.g, parent.h - left.h, parent.count - left.count};
            const double gain = ctx.split_gain(parent, left, right);
            if (gain > best.gain + 1e-15 && gain > 1e-12) {
                best.gain = gain;
                best.feature = static_cast<int>(f);
                best.bin = static_cast<int>(b);
                best.left = left;
                best.right = right;
            }
        }
    }
    return best;
}

struct OpenLeaf {
    int node = 0;
    std::vector<std::size_t> rows;
    NodeStats stats;
    SplitResult split;
    int depth = 0;
};

void apply_split(GbdtTree& tree, OpenLeaf& leaf, const TreeBuildContext& ctx, std::vector<OpenLeaf>& out_children) {
    const auto& split = leaf.split;
    OpenLeaf left, right;
    left.depth = right.depth = leaf.depth + 1;
    left.stats = split.left;
    right.stats = split.right;
    const auto& fbins = ctx.bins[static_cast<std::size_t>(split.feature)];
    for (std::size_t r : leaf.rows) (fbins[r] <= split.bin ? left.rows : right.rows).push_back(r);

    left.node = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({-1, 0, -1, -1, ctx.leaf_value(left.stats)});
    right.node = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({-1, 0, -1, -1, ctx.leaf_value(right.stats)});

    // Re-index after the pushes: they may have reallocated the node storage.
    auto& node = tree.nodes[static_cast<std::size_t>(leaf.node)];
    node.feature = split.feature;
    node.split_bin = split.bin;
    node.left = left.node;
    node.right = right.node;

    out_children.push_back(std::move(left));
    out_children.push_back(std::move(right));
}

GbdtTree grow_tree(const TreeBuildContext& ctx, const std::vector<std::size_t>& all_rows, const NodeStats& root_stats,
                   std::vector<double>& feature_gain) {
    GbdtTree tree;
    tree.nodes.push_back({-1, 0, -1, -1, ctx.leaf_value(root_stats)});

    OpenLeaf root;
    root.node = 0;
    root.rows = all_rows;
    root.stats = root_stats;

    if (ctx.cfg.growth == GbdtConfig::Growth::leaf_wise) {
        std::vector<OpenLeaf> open;
        root.split = best_split(ctx, root.rows, root.stats);
        open.push_back(std::move(root));
        int leaves = 1;
        while (leaves < ctx.cfg.max_leaves) {
            int pick = -1;
            for (std::size_t i = 0; i < open.size(); ++i)
                if (open[i].split.feature >= 0 && (pick < 0 || open[i].split.gain > open[static_cast<std::size_t>(pick)].split.gain + 1e-15))
                    pick = static_cast<int>(i);
            if (pick < 0) break;
            OpenLeaf leaf = std::move(open[static_cast<std::size_t>(pick)]);
            open.erase(open.begin() + pick);
            feature_gain[static_cast<std::size_t>(leaf.split.feature)] += leaf.split.gain;

            std::vector<OpenLeaf> children;
            apply_split(tree, leaf, ctx, children);
            ++leaves;
            for (auto& child : children) {
                child.split = best_split(ctx, child.rows, child.stats);
                open.push_back(std::move(child));
            }
        }
        return tree;
    }

    // Level-wise (optionally symmetric).
    std::vector<OpenLeaf> level;
    level.push_back(std::move(root));
    for (int depth = 0; depth < ctx.cfg.max_depth && !level.empty(); ++depth) {
        std::vector<OpenLeaf> next;
        if (ctx.cfg.symmetric) {
            // One (feature, bin) shared by the whole level: maximize the
            // summed gain of per-leaf partitions at that split.
            double best_gain = 0.0;
            int best_feature = -1, best_bin = 0;
            for (std::size_t f = 0; f < ctx.bins.size(); ++f) {
                if (ctx.n_bins_per_feature[f] < 2) continue;
                std::vector<std::vector<NodeStats>> hists;
                hists.reserve(level.size());
                for (const auto& leaf : level) hists.push_back(build_histogram(ctx, leaf.rows, f));
                const std::size_t nb = static_cast<std::size_t>(ctx.n_bins_per_feature[f]);
                std::vector<NodeStats> lefts(level.size());
                for (std::size_t b = 0; b + 1 < nb; ++b) {
                    double gain = 0.0;
                    for (std::size_t li = 0; li < level.size(); ++li) {
                        auto& left = lefts[li];
                        left.g += hists[li][b].g;
                        left.h += hists[li][b].h;
                        left.count += hists[li][b].count;
                        if (left.count == 0 || left.count == level[li].stats.count) continue;
                        NodeStats right{level[li].stats.g - left.g, level[li].stats.h - left.h,
                                        level[li].stats.count - left.count};
                        gain += ctx.split_gain(level[li].stats, left, right);
                    }
                    if (gain > best_gain + 1e-15 && gain > 1e-12) {
                        best_gain = gain;
                        best_feature = static_cast<int>(f);
                        best_bin = static_cast<int>(b);
                    }
                }
            }
            if (best_feature < 0) break;
            feature_gain[static_cast<std::size_t>(best_feature)] += best_gain;
            for (auto& leaf : level) {
                const auto& fbins = ctx.bins[static_cast<std::size_t>(best_feature)];
                NodeStats left;
                for (std::size_t r : leaf.rows)
                    if (fbins[r] <= best_bin) {
                        left.g += ctx.g[r];
                        left.h += ctx.h[r];
                        ++left.count;
                    }
                leaf.split.feature = best_feature;
                leaf.split.bin = best_bin;
                leaf.split.left = left;
                leaf.split.right = {leaf.stats.g - left.g, leaf.stats.h - left.h, leaf.stats.count - left.count};
                apply_split(tree, leaf, ctx, next);
            }
        } else {
            for (auto& leaf : level) {
                leaf.split = best_split(ctx, leaf.rows, leaf.stats);
                if (leaf.split.feature < 0) continue;
                feature_gain[static_cast<std::size_t>(leaf.split.feature)] += leaf.split.gain;
                apply_split(tree, leaf, ctx, next);
            }
        }
        level = std::move(next);
    }
    return tree;
}

}  // namespace

std::unique_ptr<GbdtModel> fit_gbdt(const Dataset& ds, const GbdtConfig& cfg, std::uint64_t /*seed*/) {
    cfg.validate();
    const std::size_t n = ds.n_rows(), p = ds.n_cols();
    if (n == 0) throw ValidationError("cannot boost an empty dataset");

    auto model = std::make_unique<GbdtModel>();
    model->config = cfg;
    model->feature_gain.assign(p, 0.0);

    const std::size_t n_pos = ds.positives();
    const double prevalence = std::min(std::max(static_cast<double>(n_pos) / static_cast<double>(n), 1e-12), 1.0 - 1e-12);
    model->base_score = std::log(prevalence / (1.0 - prevalence));

    model->bin_edges.resize(p);
    std::vector<std::vector<int>> bins(p, std::vector<int>(n));
    std::vector<int> n_bins_per_feature(p);
    std::vector<double> column(n);
    for (std::size_t f = 0; f < p; ++f) {
        for (std::size_t r = 0; r < n; ++r) column[r] = ds.features.at(r, f);
        model->bin_edges[f] = equal_frequency_edges(column, cfg.n_bins);
        n_bins_per_feature[f] = static_cast<int>(model->bin_edges[f].size()) + 1;
        for (std::size_t r = 0; r < n; ++r) bins[f][r] = model->bin_of(f, column[r]);
    }

    std::vector<double> logits(n, model->base_score), g(n), h(n, 1.0);
    std::vector<std::size_t> all_rows(n);
    std::iota(all_rows.begin(), all_rows.end(), 0);

    auto mean_loss = [&] {
        double loss = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            const double z = logits[r];
            loss += ds.labels[r] ? std::log1p(std::exp(-std::abs(z))) + std::max(-z, 0.0)
                                 : std::log1p(std::exp(-std::abs(z))) + std::max(z, 0.0);
        }
        return loss / static_cast<double>(n);
    };
    model->train_loss.push_back(mean_loss());

    TreeBuildContext ctx{bins, n_bins_per_feature, g, h, cfg};
    for (int round = 0; round < cfg.n_rounds; ++round) {
        NodeStats root;
        for (std::size_t r = 0; r < n; ++r) {
            const double pr = sigmoid(logits[r]);
            g[r] = pr - static_cast<double>(ds.labels[r]);
            h[r] = cfg.second_order ? std::max(pr * (1.0 - pr), 1e-16) : 1.0;
            root.g += g[r];
            root.h += h[r];
        }
        root.count = n;

        GbdtTree tree = grow_tree(ctx, all_rows, root, model->feature_gain);
        for (std::size_t r = 0; r < n; ++r) {
            int idx = 0;
            while (tree.nodes[static_cast<std::size_t>(idx)].feature >= 0) {
                const auto& node = tree.nodes[static_cast<std::size_t>(idx)];
                idx = bins[static_cast<std::size_t>(node.feature)][r] <= node.split_bin ? node.left : node.right;
            }
            logits[r] += cfg.learning_rate * tree.nodes[static_cast<std::size_t>(idx)].leaf_value;
        }
        model->trees.push_back(std::move(tree));
        model->train_loss.push_back(mean_loss());
    }
    return model;
}

// ---------------------------------------------------------------------------

std::unique_ptr<TrainedModel> boosting_model_from_json(const json& doc) {
    const std::string family = doc.at("family").get<std::string>();
    if (family == "adaboost") {
        auto m = std::make_unique<AdaboostModel>();
        for (const auto& sj : doc.at("stumps")) {
            Stump s;
            s.feature = sj.at("feature").get<int>();
            s.threshold = sj.at("threshold").get<double>();
            s.polarity = sj.at("polarity").get<int>();
            s.alpha = sj.at("alpha").get<double>();
            m->stumps.push_back(s);
        }
        return m;
    }
    if (family == "gbdt") {
        auto m = std::make_unique<GbdtModel>();
        m->base_score = doc.at("base_score").get<double>();
        m->config.learning_rate = doc.at("learning_rate").get<double>();
        m->bin_edges = doc.at("bin_edges").get<std::vector<std::vector<double>>>();
        m->feature_gain = doc.at("feature_gain").get<std::vector<double>>();
        for (const auto& tj : doc.at("trees")) {
            GbdtTree tree;
            for (const auto& nj : tj) {
                GbdtNode node;
                node.feature = nj.at("feature").get<int>();
                node.split_bin = nj.at("split_bin").get<int>();
                node.left = nj.at("left").get<int>();
                node.right = nj.at("right").get<int>();
                node.leaf_value = nj.at("leaf_value").get<double>();
                tree.nodes.push_back(node);
            }
            m->trees.push_back(std::move(tree));
        }
        return m;
    }
    return nullptr;
}

}  // namespace nutriscreen
