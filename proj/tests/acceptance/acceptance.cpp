// Acceptance suite: runs every acceptance criterion end to end and prints one
// pass/fail line each. Exit code 0 only if every non-skipped criterion holds.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "nutriscreen/autodiff.hpp"
#include "nutriscreen/feature_select.hpp"
#include "nutriscreen/harness.hpp"
#include "nutriscreen/models_boosting.hpp"
#include "nutriscreen/models_classic.hpp"
#include "nutriscreen/nn.hpp"
#include "nutriscreen/synth.hpp"

using namespace nutriscreen;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, const char* name, bool pass, const std::string& detail, double seconds) {
    std::printf("%s  criterion %d (%s): %s  [%.1fs]\n", pass ? "PASS" : "FAIL", criterion, name, detail.c_str(),
                seconds);
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

void report_skip(int criterion, const char* name, const std::string& detail) {
    std::printf("SKIP  criterion %d (%s): %s\n", criterion, name, detail.c_str());
    std::fflush(stdout);
}

double elapsed(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// 1. Metric oracle equivalence
// ---------------------------------------------------------------------------

double auc_pair_counting(const std::vector<int>& y, const std::vector<double>& s) {
    double wins = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!y[i]) continue;
        for (std::size_t j = 0; j < y.size(); ++j) {
            if (y[j]) continue;
            pairs += 1.0;
            if (s[i] > s[j]) wins += 1.0;
            else if (s[i] == s[j]) wins += 0.5;
        }
    }
    return wins / pairs;
}

void criterion_1() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(1001);
    double max_auc_err = 0.0, max_formula_err = 0.0;
    int vectors = 0;
    while (vectors < 1000) {
        const std::size_t n = 200;
        std::vector<int> y(n);
        std::vector<double> s(n);
        std::size_t pos = 0;
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = rng.bernoulli(0.35) ? 1 : 0;
            pos += static_cast<std::size_t>(y[i]);
            // Quantize a third of the vectors to force ties.
            s[i] = vectors % 3 == 0 ? std::round(rng.uniform() * 25.0) / 25.0 : rng.uniform();
        }
        if (pos == 0 || pos == n) continue;
        ++vectors;

        max_auc_err = std::max(max_auc_err, std::abs(roc_auc(y, s) - auc_pair_counting(y, s)));

        // Closed-form threshold metrics vs direct formula evaluation.
        std::vector<int> preds(n);
        for (std::size_t i = 0; i < n; ++i) preds[i] = s[i] >= 0.5 ? 1 : 0;
        const ConfusionMatrix cm = confusion(y, preds);
        const MetricSet m = threshold_metrics(cm);
        const double tp = static_cast<double>(cm.tp), tn = static_cast<double>(cm.tn);
        const double fp = static_cast<double>(cm.fp), fn = static_cast<double>(cm.fn);
        const double nn = tp + tn + fp + fn;
        auto track = [&](double got, double want) {
            max_formula_err = std::max(max_formula_err, std::abs(got - want));
        };
        track(m.accuracy, (tp + tn) / nn);
        if (tp + fp > 0) track(m.precision, tp / (tp + fp));
        if (tp + fn > 0) track(m.recall, tp / (tp + fn));
        if (2 * tp + fp + fn > 0) track(m.f1, 2 * tp / (2 * tp + fp + fn));
        if (tn + fp > 0 && tp + fn > 0) track(m.balanced_accuracy, 0.5 * (tp / (tp + fn) + tn / (tn + fp)));
        const double pe = ((tp + fp) * (tp + fn) + (fn + tn) * (fp + tn)) / (nn * nn);
        if (pe != 1.0) track(m.cohens_kappa, ((tp + tn) / nn - pe) / (1.0 - pe));
        const double mcc_den = std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn));
        if (mcc_den > 0) track(m.mcc, (tp * tn - fp * fn) / mcc_den);

        double brier_direct = 0.0;
        for (std::size_t i = 0; i < n; ++i) brier_direct += (s[i] - y[i]) * (s[i] - y[i]);
        track(brier(y, s), brier_direct / static_cast<double>(n));
    }
    const double secs = elapsed(t0);
    const bool pass = max_auc_err <= 1e-12 && max_formula_err <= 1e-12 && secs < 30.0;
    report(1, "metric oracle equivalence", pass,
           "max AUC err " + format_double(max_auc_err) + ", max formula err " + format_double(max_formula_err) +
               " over 1000 vectors",
           secs);
}

// ---------------------------------------------------------------------------
// 2. Label rule fidelity
// ---------------------------------------------------------------------------

void criterion_2() {
    const auto t0 = std::chrono::steady_clock::now();
    std::size_t mismatches = 0, checked = 0;
    // 100^3 grid over [-4, 2], passing exactly through -2.0.
    const int steps = 100;
    std::vector<double> grid(steps);
    for (int i = 0; i < steps; ++i) grid[static_cast<std::size_t>(i)] = -4.0 + 6.0 * i / (steps - 1.0);
    grid[33] = -2.0;  // force the exact boundary into the grid
    for (double waz : grid)
        for (double haz : grid)
            for (double whz : grid) {
                const MalnutritionLabel label = derive_label({waz, haz, whz});
                const bool expected = waz < -2.0 || haz < -2.0 || whz < -2.0;
                mismatches += label.malnourished != expected ? 1 : 0;
                ++checked;
            }
    const MalnutritionLabel boundary = derive_label({-2.0, -2.0, -2.0});
    const bool pass = mismatches == 0 && checked == 1000000 && !boundary.malnourished;
    report(2, "label rule fidelity", pass,
           std::to_string(mismatches) + " mismatches over " + std::to_string(checked) + " grid points", elapsed(t0));
}

// ---------------------------------------------------------------------------
// 3. Gradient correctness
// ---------------------------------------------------------------------------

struct GradCheckStats {
    double max_rel_err = 0.0;
    int checks = 0;
};

void grad_check_op(GradCheckStats& stats, const std::function<int(Graph&, int)>& op, std::size_t rows,
                   std::size_t cols, std::uint64_t seed, double lo = -1.5, double hi = 1.5) {
    Rng rng(seed);
    Matrix x0(rows, cols);
    for (double& v : x0.data) v = rng.uniform(lo, hi);

    Graph g(4242);
    const int xn = g.input(x0);
    const int out = g.mean_all(op(g, xn));
    g.backward(out);
    const Matrix analytic = g.grad(xn);

    auto eval = [&](const Matrix& x) {
        Graph h(4242);
        return h.value(h.mean_all(op(h, h.input(x)))).at(0, 0);
    };
    for (int probe = 0; probe < 20; ++probe) {
        const std::size_t idx = Rng(seed ^ (probe + 77)).index(x0.data.size());
        Matrix hi_x = x0, lo_x = x0;
        hi_x.data[idx] += 1e-5;
        lo_x.data[idx] -= 1e-5;
        const double numeric = (eval(hi_x) - eval(lo_x)) / 2e-5;
        const double denom = std::max({std::abs(numeric), std::abs(analytic.data[idx]), 1e-3});
        stats.max_rel_err = std::max(stats.max_rel_err, std::abs(numeric - analytic.data[idx]) / denom);
        ++stats.checks;
    }
}

void criterion_3() {
    const auto t0 = std::chrono::steady_clock::now();
    GradCheckStats stats;

    Rng aux(3003);
    Matrix w(4, 3), row3(1, 3), gamma(1, 3), beta(1, 3);
    for (double& v : w.data) v = aux.uniform(-1.0, 1.0);
    for (double& v : row3.data) v = aux.uniform(-1.0, 1.0);
    for (double& v : gamma.data) v = aux.uniform(0.5, 1.5);
    for (double& v : beta.data) v = aux.uniform(-0.5, 0.5);
    const std::vector<int> targets6 = {1, 0, 1, 1, 0, 0};

    grad_check_op(stats, [&](Graph& g, int x) { return g.matmul(x, g.input(w)); }, 5, 4, 1);
    grad_check_op(stats, [&](Graph& g, int x) { return g.add(x, g.input(row3)); }, 5, 3, 2);
    grad_check_op(stats, [&](Graph& g, int x) { return g.mul(x, g.mul(x, g.input(row3))); }, 4, 3, 3);
    grad_check_op(stats, [&](Graph& g, int x) { return g.scale(g.sub_from_scalar(1.3, x), -0.7); }, 3, 4, 4);
    grad_check_op(stats, [&](Graph& g, int x) { return g.leaky_relu(x, 0.01); }, 4, 3, 5, 0.1, 1.5);
    grad_check_op(stats, [&](Graph& g, int x) { return g.sigmoid_op(x); }, 4, 3, 6);
    grad_check_op(stats, [&](Graph& g, int x) { return g.log_op(x, 1e-10); }, 4, 3, 7, 0.2, 2.0);
    grad_check_op(stats, [&](Graph& g, int x) { return g.concat_cols(g.mul(x, x), x); }, 3, 3, 8);
    grad_check_op(stats, [&](Graph& g, int x) { return g.mul(g.sparsemax_op(x), g.input(row3)); }, 5, 3, 9);
    grad_check_op(stats,
                  [&](Graph& g, int x) {
                      std::vector<double> m(3, 0.0), v(3, 1.0);
                      return g.batch_norm(x, g.input(gamma), g.input(beta), m, v, true);
                  },
                  6, 3, 10);
    grad_check_op(stats,
                  [&](Graph& g, int x) {
                      std::vector<double> m = {0.1, -0.2, 0.3}, v = {1.1, 0.9, 1.3};
                      return g.batch_norm(x, g.input(gamma), g.input(beta), m, v, false);
                  },
                  6, 3, 11);
    grad_check_op(stats, [&](Graph& g, int x) { return g.dropout(x, 0.4, true); }, 6, 3, 12);
    grad_check_op(stats, [&](Graph& g, int x) { return g.bce_loss(g.sigmoid_op(x), targets6); }, 6, 1, 13);

    // Full architectures: 20 random parameter coordinates each.
    Rng data_rng(3333);
    Dataset batch;
    batch.features = Matrix(7, 3);
    batch.labels = {1, 0, 1, 1, 0, 0, 1};
    batch.feature_names = {"a", "b", "c"};
    for (double& v : batch.features.data) v = data_rng.uniform(-1.0, 1.0);

    NnSpec spec;
    spec.hidden = {5, 4};
    spec.residual_width = 5;
    spec.residual_depth = 2;
    spec.feature_dim = 4;
    spec.n_steps = 2;
    spec.dropout = 0.3;

    for (auto arch : {NnArch::dnn, NnArch::resnet_mlp, NnArch::wide_deep, NnArch::tabnet_lite}) {
        NnTrainConfig warm;
        warm.epochs = 2;
        warm.batch_size = 4;
        warm.lr = 0.01;
        const auto model = fit_nn(batch, arch, spec, warm, 11);
        auto loss_value = [&] {
            Graph g(9001);
            std::vector<std::pair<int, std::size_t>> bindings;
            return g.value(model->build_loss(g, batch.features, batch.labels, true, bindings).second).at(0, 0);
        };
        Graph g(9001);
        std::vector<std::pair<int, std::size_t>> bindings;
        const auto [probs, loss] = model->build_loss(g, batch.features, batch.labels, true, bindings);
        (void)probs;
        g.backward(loss);

        Rng pick(static_cast<std::uint64_t>(arch) + 500);
        for (int probe = 0; probe < 20; ++probe) {
            const auto& [node, index] = bindings[pick.index(bindings.size())];
            auto& param = model->params[index];
            const std::size_t flat = pick.index(param.value.data.size());
            const double analytic = g.grad(node).data[flat];
            const double saved = param.value.data[flat];
            param.value.data[flat] = saved + 1e-5;
            const double up = loss_value();
            param.value.data[flat] = saved - 1e-5;
            const double down = loss_value();
            param.value.data[flat] = saved;
            const double numeric = (up - down) / 2e-5;
            const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-3});
            stats.max_rel_err = std::max(stats.max_rel_err, std::abs(numeric - analytic) / denom);
            ++stats.checks;
        }
    }

    // Sparsemax simplex property over 10^4 random vectors.
    Rng srng(3004);
    bool simplex_ok = true;
    for (int trial = 0; trial < 10000; ++trial) {
        const std::size_t p = 2 + srng.index(7);
        std::vector<double> z(p);
        for (double& v : z) v = srng.uniform(-5.0, 5.0);
        const auto out = sparsemax(z);
        double sum = 0.0;
        for (double v : out) {
            if (v < 0.0) simplex_ok = false;
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-9) simplex_ok = false;
    }

    const bool pass = stats.max_rel_err < 1e-4 && simplex_ok;
    report(3, "gradient correctness", pass,
           "max relative error " + format_double(stats.max_rel_err) + " over " + std::to_string(stats.checks) +
               " checks; sparsemax simplex " + (simplex_ok ? "ok" : "VIOLATED"),
           elapsed(t0));
}

// ---------------------------------------------------------------------------
// 4. GBDT exactness + loss monotonicity
// ---------------------------------------------------------------------------

struct OracleSplit {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
    double left_value = 0.0, right_value = 0.0;
};

OracleSplit exact_greedy_split(const Dataset& ds, const std::vector<double>& g, const std::vector<double>& h,
                               double lambda) {
    OracleSplit best;
    const std::size_t n = ds.n_rows();
    double G = 0.0, H = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        G += g[i];
        H += h[i];
    }
    const double parent = G * G / (H + lambda);
    for (std::size_t f = 0; f < ds.n_cols(); ++f) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return ds.features.at(a, f) < ds.features.at(b, f); });
        double GL = 0.0, HL = 0.0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            GL += g[order[i]];
            HL += h[order[i]];
            if (ds.features.at(order[i], f) == ds.features.at(order[i + 1], f)) continue;
            const double gain = 0.5 * (GL * GL / (HL + lambda) + (G - GL) * (G - GL) / (H - HL + lambda) - parent);
            if (gain > best.gain + 1e-15 && gain > 1e-12) {
                best = {static_cast<int>(f), 0.5 * (ds.features.at(order[i], f) + ds.features.at(order[i + 1], f)),
                        gain, -GL / (HL + lambda), -(G - GL) / (H - HL + lambda)};
            }
        }
    }
    return best;
}

void criterion_4() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(4004);
    int exact_matches = 0, trials = 0;
    std::string fail_detail;
    while (trials < 20) {
        const std::size_t n = 10 + rng.index(41);
        const std::size_t p = 2 + rng.index(3);
        Dataset ds;
        ds.features = Matrix(n, p);
        ds.labels.resize(n);
        for (std::size_t j = 0; j < p; ++j) ds.feature_names.push_back("f" + std::to_string(j));
        for (std::size_t r = 0; r < n; ++r) {
            ds.labels[r] = rng.bernoulli(0.5) ? 1 : 0;
            for (std::size_t j = 0; j < p; ++j) ds.features.at(r, j) = std::round(rng.uniform(-4.0, 4.0) * 8.0) / 8.0;
        }
        const std::size_t pos = ds.positives();
        if (pos == 0 || pos == n) continue;
        ++trials;

        GbdtConfig cfg;
        cfg.n_rounds = 1;
        cfg.max_depth = 1;
        cfg.n_bins = static_cast<int>(n) + 5;
        const auto model = fit_gbdt(ds, cfg, 0);

        const double prevalence = static_cast<double>(pos) / static_cast<double>(n);
        const double base = std::log(prevalence / (1.0 - prevalence));
        std::vector<double> g(n), h(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double pr = sigmoid(base);
            g[i] = pr - static_cast<double>(ds.labels[i]);
            h[i] = std::max(pr * (1.0 - pr), 1e-16);
        }
        const OracleSplit oracle = exact_greedy_split(ds, g, h, cfg.l2_leaf);
        const auto& tree = model->trees[0];
        bool match = true;
        if (oracle.feature < 0) {
            match = tree.nodes.size() == 1;
        } else if (tree.nodes.size() != 3 || tree.nodes[0].feature != oracle.feature) {
            match = false;
        } else {
            const auto& root = tree.nodes[0];
            const double edge =
                model->bin_edges[static_cast<std::size_t>(root.feature)][static_cast<std::size_t>(root.split_bin)];
            match = std::abs(edge - oracle.threshold) < 1e-12 &&
                    std::abs(tree.nodes[static_cast<std::size_t>(root.left)].leaf_value - oracle.left_value) < 1e-9 &&
                    std::abs(tree.nodes[static_cast<std::size_t>(root.right)].leaf_value - oracle.right_value) < 1e-9;
        }
        if (match) ++exact_matches;
        else fail_detail = " (first failure at trial " + std::to_string(trials) + ")";
    }

    bool monotone = true;
    for (std::uint64_t seed = 0; seed < 5 && monotone; ++seed) {
        Rng drng(4100 + seed);
        Dataset ds;
        const std::size_t n = 400, p = 4;
        ds.features = Matrix(n, p);
        ds.labels.resize(n);
        for (std::size_t j = 0; j < p; ++j) ds.feature_names.push_back("f" + std::to_string(j));
        for (std::size_t r = 0; r < n; ++r) {
            ds.labels[r] = drng.bernoulli(0.5) ? 1 : 0;
            for (std::size_t j = 0; j < p; ++j)
                ds.features.at(r, j) = drng.normal() + (ds.labels[r] && j < 2 ? 0.6 : 0.0);
        }
        GbdtConfig cfg;
        cfg.n_rounds = 200;
        cfg.learning_rate = 0.1;
        const auto model = fit_gbdt(ds, cfg, seed);
        for (std::size_t round = 1; round < model->train_loss.size(); ++round)
            if (model->train_loss[round] > model->train_loss[round - 1] + 1e-12) monotone = false;
    }

    const bool pass = exact_matches == 20 && monotone;
    report(4, "gbdt exactness", pass,
           std::to_string(exact_matches) + "/20 oracle matches" + fail_detail + "; 200-round loss " +
               (monotone ? "non-increasing on 5 seeds" : "INCREASED"),
           elapsed(t0));
}

// ---------------------------------------------------------------------------
// 5. Boruta power
// ---------------------------------------------------------------------------

void criterion_5() {
    const auto t0 = std::chrono::steady_clock::now();
    double confirmed_sum = 0.0, rejected_sum = 0.0;
    const std::vector<double> coefs = {2.0, -1.8, 1.6, -1.4, 1.2};
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(5000 + seed);
        const std::size_t n = 2000, p = 16;
        Dataset ds;
        ds.features = Matrix(n, p);
        ds.labels.resize(n);
        for (std::size_t j = 0; j < p; ++j)
            ds.feature_names.push_back((j < 5 ? "sig" : "noise") + std::to_string(j));
        for (std::size_t r = 0; r < n; ++r) {
            double lp = -0.1;
            for (std::size_t j = 0; j < p; ++j) {
                const double v = rng.bernoulli(0.5) ? 1.0 : 0.0;
                ds.features.at(r, j) = v;
                if (j < 5) lp += coefs[j] * (v - 0.5);
            }
            ds.labels[r] = rng.bernoulli(sigmoid(lp)) ? 1 : 0;
        }
        const BorutaDecision decision = boruta(ds, 100, 0.05, seed);
        int confirmed = 0, rejected = 0;
        for (std::size_t j = 0; j < 5; ++j)
            if (decision.statuses[j] == BorutaStatus::confirmed) ++confirmed;
        for (std::size_t j = 5; j < p; ++j)
            if (decision.statuses[j] == BorutaStatus::rejected) ++rejected;
        confirmed_sum += confirmed;
        rejected_sum += rejected;
    }
    const double mean_confirmed = confirmed_sum / 10.0;
    const double mean_rejected = rejected_sum / 10.0;
    const double secs = elapsed(t0);
    const bool pass = mean_confirmed >= 4.0 && mean_rejected >= 9.0 && secs < 300.0;
    report(5, "boruta power", pass,
           "mean confirmed " + format_double(mean_confirmed) + "/5 informative, mean rejected " +
               format_double(mean_rejected) + "/11 noise",
           secs);
}

// ---------------------------------------------------------------------------
// 6. End-to-end benchmark
// ---------------------------------------------------------------------------

void criterion_6() {
    const auto t0 = std::chrono::steady_clock::now();
    const SchemaBundle bundle = default_schema_bundle();
    const MarginalSpec marginals = builtin_marginals();

    const RawTable raw = generate(marginals, std::nullopt, 6416, 7);
    const Dataset ds = encode(raw, bundle.schema, bundle.encoding).dataset;

    BenchmarkConfig cfg = BenchmarkConfig::defaults();
    cfg.seed = 42;
    const std::string run_dir = "/tmp/nutriscreen_acceptance_run";
    fs::remove_all(run_dir);
    const BenchmarkResult result = run_benchmark(cfg, ds, run_dir);

    bool sixteen_rows = result.leaderboard.rows.size() == 16;
    bool all_ok = true, all_metrics = true;
    for (const auto& row : result.leaderboard.rows) {
        if (row.status != "ok") all_ok = false;
        // All ten metrics emitted: every metric is finite and brier/auc in range.
        for (const auto& name : MetricSet::names())
            if (!std::isfinite(row.metrics.by_name(name))) all_metrics = false;
    }

    // Always-positive baseline on the same held-out split.
    const SplitPlan split = split_stratified(ds, cfg.holdout_ratio, cfg.seed);
    const Dataset test = ds.subset(split.test_indices);
    std::vector<int> all_pos(test.n_rows(), 1);
    const double baseline_f1 = threshold_metrics(confusion(test.labels, all_pos)).f1;
    bool f1_floor = true;
    std::string floor_detail;
    for (const auto& row : result.leaderboard.rows)
        if (row.metrics.f1 < baseline_f1 - 0.02) {
            f1_floor = false;
            floor_detail += " " + row.model + "=" + format_double(row.metrics.f1);
        }

    // Strongly separable planted variant: TabNet-lite and the GBDT engine
    // reach AUC >= 0.95.
    const RawTable planted_raw = generate(marginals, SignalSpec::builtin_strong(), 6416, 7);
    const Dataset planted = encode(planted_raw, bundle.schema, bundle.encoding).dataset;
    const SplitPlan psplit = split_stratified(planted, 0.8, 42);
    const Dataset ptrain = planted.subset(psplit.train_indices);
    const Dataset ptest = planted.subset(psplit.test_indices);

    const FittedPipeline tabnet = fit_named_model("tabnet", nlohmann::json::object(), ptrain, 1);
    const double tabnet_auc = roc_auc(ptest.labels, tabnet.score(ptest));
    const FittedPipeline gbdt = fit_named_model("lightgbm", nlohmann::json::object(), ptrain, 2);
    const double gbdt_auc = roc_auc(ptest.labels, gbdt.score(ptest));

    const double secs = elapsed(t0);
    const bool pass = sixteen_rows && all_ok && all_metrics && f1_floor && tabnet_auc >= 0.95 && gbdt_auc >= 0.95 &&
                      secs < 900.0;
    report(6, "end-to-end benchmark", pass,
           std::string("16 rows ") + (sixteen_rows && all_ok ? "ok" : "INCOMPLETE") + "; baseline F1 " +
               format_double(baseline_f1) + (f1_floor ? ", floor held" : ", floor BROKEN:" + floor_detail) +
               "; planted AUC tabnet " + format_double(tabnet_auc) + " gbdt " + format_double(gbdt_auc),
           secs);
}

// ---------------------------------------------------------------------------
// 7. Calibration of a well-specified model
// ---------------------------------------------------------------------------

void criterion_7() {
    const auto t0 = std::chrono::steady_clock::now();
    const SchemaBundle bundle = default_schema_bundle();
    SignalSpec signal;  // moderate coefficients keep probabilities in (0.1, 0.9)
    signal.coefficients = {{"wealth_index", -0.45}, {"child_age", 0.4}, {"mother_education", -0.5},
                           {"karnali", 0.9},        {"meal_frequency", 0.12}};
    const RawTable train_raw = generate(builtin_marginals(), signal, 8000, 71);
    const RawTable eval_raw = generate(builtin_marginals(), signal, 20000, 72);
    const Dataset train = encode(train_raw, bundle.schema, bundle.encoding).dataset;
    const Dataset eval_ds = encode(eval_raw, bundle.schema, bundle.encoding).dataset;

    LogregConfig lcfg;
    lcfg.l2 = 1e-3;
    lcfg.max_iter = 500;
    const auto model = fit_logreg(train, lcfg, 0);
    const auto probs = model->score_matrix(eval_ds.features);
    const CalibrationCurve curve = calibration_curve(eval_ds.labels, probs, 10);

    std::size_t total = 0;
    double max_gap = 0.0;
    for (const auto& bin : curve.bins) {
        total += bin.count;
        if (bin.count >= 50) max_gap = std::max(max_gap, std::abs(bin.mean_pred - bin.frac_pos));
    }
    const bool pass = max_gap <= 0.05 && total == eval_ds.n_rows();
    report(7, "calibration", pass,
           "max reliability gap " + format_double(max_gap) + " over bins with >= 50 samples; counts sum " +
               std::to_string(total) + "/" + std::to_string(eval_ds.n_rows()),
           elapsed(t0));
}

// ---------------------------------------------------------------------------
// 8. Determinism
// ---------------------------------------------------------------------------

void criterion_8() {
    const auto t0 = std::chrono::steady_clock::now();
    const SchemaBundle bundle = default_schema_bundle();
    const RawTable raw = generate(builtin_marginals(), SignalSpec::builtin_strong(), 1200, 9);
    const Dataset ds = encode(raw, bundle.schema, bundle.encoding).dataset;

    BenchmarkConfig cfg;
    cfg.roster = {{"logistic_regression", "traditional", nlohmann::json::object()},
                  {"knn", "traditional", nlohmann::json::object()},
                  {"decision_tree", "traditional", nlohmann::json::object()},
                  {"adaboost", "gradient_boosting", nlohmann::json{{"n_rounds", 60}}},
                  {"xgboost", "gradient_boosting", nlohmann::json{{"n_rounds", 60}}},
                  {"dnn", "deep_learning", nlohmann::json{{"epochs", 20}}}};
    cfg.seed = 31;

    const std::string dir_a = "/tmp/nutriscreen_det_a";
    const std::string dir_b = "/tmp/nutriscreen_det_b";
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
    run_benchmark(cfg, ds, dir_a);
    run_benchmark(cfg, ds, dir_b);

    auto strip_timestamp = [](std::string text) {
        const auto start = text.find("timestamp:");
        if (start == std::string::npos) return text;
        const auto end = text.find('\n', start);
        return text.substr(0, start) + text.substr(end);
    };

    bool identical = true;
    std::string first_diff;
    for (const char* name : {"leaderboard.csv", "timings.csv", "family_summary.csv", "agreement.csv",
                             "consensus_importance.csv", "report.md"}) {
        std::string a = read_text_file(dir_a + "/" + name);
        std::string b = read_text_file(dir_b + "/" + name);
        if (std::string(name) == "report.md") {
            a = strip_timestamp(a);
            b = strip_timestamp(b);
        }
        if (std::string(name) == "timings.csv") continue;  // wall-clock column, excluded like timestamps
        if (a != b && first_diff.empty()) {
            identical = false;
            first_diff = name;
        }
    }
    report(8, "determinism", identical,
           identical ? "all artifact bytes identical across reruns (timestamps excluded)"
                     : "first differing artifact: " + first_diff,
           elapsed(t0));
}

// ---------------------------------------------------------------------------
// 9. Conditional real-data check
// ---------------------------------------------------------------------------

void criterion_9() {
    const char* path = std::getenv("NUTRISCREEN_NMICS_CSV");
    if (path == nullptr || !fs::exists(path)) {
        report_skip(9, "NMICS 2019 reproduction",
                    "conditional on a user-supplied extract; set NUTRISCREEN_NMICS_CSV to run");
        return;
    }
    const auto t0 = std::chrono::steady_clock::now();
    const SchemaBundle bundle = default_schema_bundle();
    const RawTable raw = read_csv(path);
    const EncodeResult encoded = encode(raw, bundle.schema, bundle.encoding);
    const Dataset& ds = encoded.dataset;

    const std::size_t malnourished = ds.positives();
    const std::size_t nourished = ds.n_rows() - malnourished;
    std::size_t underweight = 0, stunted = 0, wasted = 0;
    for (const auto& rec : encoded.anthro) {
        const MalnutritionLabel label = derive_label(rec);
        underweight += label.underweight ? 1 : 0;
        stunted += label.stunted ? 1 : 0;
        wasted += label.wasted ? 1 : 0;
    }
    const double n = static_cast<double>(ds.n_rows());
    const bool counts_ok = ds.n_rows() == 6416 && nourished == 3671 && malnourished == 2745;
    const bool prevalences_ok = std::abs(100.0 * underweight / n - 23.37) <= 0.01 &&
                                std::abs(100.0 * stunted / n - 32.37) <= 0.01 &&
                                std::abs(100.0 * wasted / n - 11.89) <= 0.01;

    // Family-best F1 within +-0.03 of the published values under the default
    // protocol (deep 0.62, boosting 0.61, traditional 0.61).
    BenchmarkConfig cfg = BenchmarkConfig::defaults();
    const BenchmarkResult result = run_benchmark(cfg, ds);
    std::map<std::string, double> best_f1;
    for (const auto& row : result.leaderboard.rows)
        if (row.status == "ok")
            best_f1[row.family] = std::max(best_f1[row.family], row.metrics.f1);
    const bool f1_ok = std::abs(best_f1["deep_learning"] - 0.62) <= 0.03 &&
                       std::abs(best_f1["gradient_boosting"] - 0.61) <= 0.03 &&
                       std::abs(best_f1["traditional"] - 0.61) <= 0.03;

    report(9, "NMICS 2019 reproduction", counts_ok && prevalences_ok && f1_ok,
           "rows " + std::to_string(ds.n_rows()) + ", nourished " + std::to_string(nourished) + ", malnourished " +
               std::to_string(malnourished) + "; best F1 deep " + format_double(best_f1["deep_learning"]) +
               " boost " + format_double(best_f1["gradient_boosting"]) + " trad " +
               format_double(best_f1["traditional"]),
           elapsed(t0));
}

}  // namespace

int main() {
    std::printf("nutriscreen acceptance suite\n");
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();
    if (g_failures == 0) {
        std::printf("all acceptance criteria passed\n");
        return 0;
    }
    std::printf("%d acceptance criteria FAILED\n", g_failures);
    return 1;
}
