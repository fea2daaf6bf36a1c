#include "doctest.h"
#include "nutriscreen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace nutriscreen;

namespace {

// Independent O(n^2) AUC oracle: fraction of correctly ordered
// positive-negative pairs, ties counting one half.
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

}  // namespace

TEST_CASE("confusion: hand counts and degenerate predictions") {
    const std::vector<int> y = {1, 1, 0, 0};
    const std::vector<int> pred = {1, 0, 0, 0};
    const ConfusionMatrix cm = confusion(y, pred);
    CHECK(cm.tp == 1);
    CHECK(cm.fn == 1);
    CHECK(cm.fp == 0);
    CHECK(cm.tn == 2);

    const ConfusionMatrix perfect = confusion(y, y);
    CHECK(perfect.fp == 0);
    CHECK(perfect.fn == 0);

    std::vector<int> inverted(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) inverted[i] = 1 - y[i];
    const ConfusionMatrix inv = confusion(y, inverted);
    CHECK(inv.tp == 0);
    CHECK(inv.tn == 0);

    CHECK_THROWS_AS(confusion(y, std::vector<int>{1, 0}), LengthMismatch);
    CHECK_THROWS_AS(confusion(std::vector<int>{2, 0}, std::vector<int>{1, 0}), NonBinaryValue);
}

TEST_CASE("threshold_metrics: worked example") {
    const MetricSet m = threshold_metrics({1, 2, 0, 1});  // tp tn fp fn
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 0.5);
    CHECK(m.f1 == doctest::Approx(2.0 / 3.0));
    CHECK(m.accuracy == 0.75);
    CHECK(m.cohens_kappa == doctest::Approx(0.5));
    CHECK(m.mcc == doctest::Approx(2.0 / std::sqrt(12.0)));
    CHECK(m.balanced_accuracy == doctest::Approx(0.75));
    CHECK(m.undefined.empty());
}

TEST_CASE("threshold_metrics: all correct and constant-positive cases") {
    const MetricSet perfect = threshold_metrics({5, 5, 0, 0});
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.f1 == 1.0);
    CHECK(perfect.cohens_kappa == 1.0);
    CHECK(perfect.mcc == 1.0);

    // Constant-positive classifier on balanced data.
    const MetricSet constant = threshold_metrics({5, 0, 5, 0});
    CHECK(constant.recall == 1.0);
    CHECK(constant.precision == 0.5);
    CHECK(constant.cohens_kappa == 0.0);
    CHECK(constant.mcc == 0.0);
    CHECK(std::find(constant.undefined.begin(), constant.undefined.end(), "mcc") != constant.undefined.end());
}

TEST_CASE("threshold_metrics: zero-denominator flags") {
    const MetricSet m = threshold_metrics({0, 3, 0, 2});  // no positive predictions
    CHECK(m.precision == 0.0);
    CHECK(std::find(m.undefined.begin(), m.undefined.end(), "precision") != m.undefined.end());
    CHECK_THROWS_AS(threshold_metrics({0, 0, 0, 0}), EmptyEvaluation);
}

TEST_CASE("roc_auc: examples") {
    CHECK(roc_auc(std::vector<int>{1, 0}, std::vector<double>{0.9, 0.1}) == 1.0);
    CHECK(roc_auc(std::vector<int>{1, 0, 1, 0}, std::vector<double>{0.5, 0.5, 0.5, 0.5}) == 0.5);
    CHECK(roc_auc(std::vector<int>{1, 0, 1, 0}, std::vector<double>{0.8, 0.7, 0.6, 0.5}) == 0.75);
    CHECK_THROWS_AS(roc_auc(std::vector<int>{1, 1}, std::vector<double>{0.1, 0.2}), SingleClassEvaluation);
}

TEST_CASE("roc_auc: matches the pair-counting oracle on random vectors") {
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 30 + rng.index(100);
        std::vector<int> y(n);
        std::vector<double> s(n);
        bool any[2] = {false, false};
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = rng.bernoulli(0.4) ? 1 : 0;
            any[y[i]] = true;
            s[i] = std::round(rng.uniform() * 20.0) / 20.0;  // force ties
        }
        if (!any[0] || !any[1]) continue;
        CHECK(roc_auc(y, s) == doctest::Approx(auc_pair_counting(y, s)).epsilon(1e-12));
    }
}

TEST_CASE("roc_auc: complement and monotone-transform invariances") {
    Rng rng(9);
    const std::size_t n = 80;
    std::vector<int> y(n);
    std::vector<double> s(n), neg(n), warped(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = i % 3 == 0 ? 1 : 0;
        s[i] = rng.uniform();  // continuous: ties almost surely absent
        neg[i] = -s[i];
        warped[i] = std::exp(3.0 * s[i]) + 5.0;
    }
    CHECK(roc_auc(y, s) + roc_auc(y, neg) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(roc_auc(y, warped) == doctest::Approx(roc_auc(y, s)).epsilon(1e-12));
    CHECK(average_precision(y, warped) == doctest::Approx(average_precision(y, s)).epsilon(1e-12));
}

TEST_CASE("average_precision: examples") {
    CHECK(average_precision(std::vector<int>{1, 0, 1}, std::vector<double>{0.9, 0.8, 0.7}) ==
          doctest::Approx(0.5 + 0.5 * (2.0 / 3.0)));
    CHECK(average_precision(std::vector<int>{1, 1, 0}, std::vector<double>{0.9, 0.8, 0.7}) == 1.0);
    CHECK(average_precision(std::vector<int>{1}, std::vector<double>{0.3}) == 1.0);
    CHECK_THROWS_AS(average_precision(std::vector<int>{0, 0}, std::vector<double>{0.1, 0.2}), NoPositives);
}

TEST_CASE("brier: examples") {
    CHECK(brier(std::vector<int>{1, 0}, std::vector<double>{1.0, 0.0}) == 0.0);
    CHECK(brier(std::vector<int>{1, 0}, std::vector<double>{0.5, 0.5}) == 0.25);
    CHECK(brier(std::vector<int>{1, 0, 1}, std::vector<double>{0.8, 0.4, 0.6}) == doctest::Approx(0.12));
    CHECK_THROWS_AS(brier(std::vector<int>{1}, std::vector<double>{1.2}), ProbabilityOutOfRange);
}

TEST_CASE("brier of the constant base-rate predictor equals p(1-p)") {
    Rng rng(10);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = 50 + rng.index(100);
        std::vector<int> y(n);
        std::size_t pos = 0;
        for (auto& v : y) {
            v = rng.bernoulli(0.3) ? 1 : 0;
            pos += static_cast<std::size_t>(v);
        }
        const double p = static_cast<double>(pos) / static_cast<double>(n);
        const std::vector<double> constant(n, p);
        CHECK(brier(y, constant) == doctest::Approx(p * (1.0 - p)).epsilon(1e-12));
    }
}

TEST_CASE("f1 identity and kappa == mcc on symmetric confusion matrices") {
    Rng rng(11);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t tp = rng.index(40), tn = rng.index(40), fp = rng.index(40), fn = rng.index(40);
        if (tp + tn + fp + fn == 0) continue;
        const MetricSet m = threshold_metrics({tp, tn, fp, fn});
        if (m.precision + m.recall > 0.0)
            CHECK(m.f1 == doctest::Approx(2.0 * m.precision * m.recall / (m.precision + m.recall)).epsilon(1e-12));

        const MetricSet sym = threshold_metrics({tp + 1, tp + 1, fp + 1, fp + 1});  // tp=tn, fp=fn
        CHECK(sym.cohens_kappa == doctest::Approx(sym.mcc).epsilon(1e-12));
    }
}

TEST_CASE("calibration_curve: examples and the bin-count invariant") {
    {
        std::vector<int> y(100);
        std::vector<double> p(100, 0.55);
        for (std::size_t i = 0; i < 55; ++i) y[i] = 1;
        const CalibrationCurve curve = calibration_curve(y, p, 10);
        int occupied = 0;
        for (const auto& bin : curve.bins)
            if (bin.count > 0) {
                ++occupied;
                CHECK(bin.mean_pred == doctest::Approx(0.55));
                CHECK(bin.frac_pos == doctest::Approx(0.55));
            }
        CHECK(occupied == 1);
    }
    {
        const std::vector<int> y = {1, 1, 0, 0};
        const std::vector<double> p = {1.0, 1.0, 0.0, 0.0};
        const CalibrationCurve curve = calibration_curve(y, p, 10);
        CHECK(curve.bins.front().count == 2);
        CHECK(curve.bins.front().frac_pos == 0.0);
        CHECK(curve.bins.back().count == 2);  // p == 1.0 joins the closed top bin
        CHECK(curve.bins.back().frac_pos == 1.0);
    }
    {
        Rng rng(12);
        const std::size_t n = 10000;
        std::vector<int> y(n);
        std::vector<double> p(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = rng.bernoulli(0.5) ? 1 : 0;
            p[i] = rng.uniform();
        }
        const CalibrationCurve curve = calibration_curve(y, p, 10);
        std::size_t total = 0;
        for (const auto& bin : curve.bins) total += bin.count;
        CHECK(total == n);
        CHECK(curve.to_csv().rfind("bin_low,bin_high,mean_pred,frac_pos,count\n", 0) == 0);
    }
}

TEST_CASE("consensus_importance: a label copy ranks first") {
    // 9/10 seeds must put the label-copy feature at rank 1.
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(100 + seed);
        const std::size_t n = 300;
        Dataset ds;
        ds.features = Matrix(n, 4);
        ds.labels.resize(n);
        ds.feature_names = {"noise0", "copy", "noise1", "noise2"};
        for (std::size_t r = 0; r < n; ++r) {
            ds.labels[r] = rng.bernoulli(0.45) ? 1 : 0;
            ds.features.at(r, 0) = rng.uniform();
            ds.features.at(r, 1) = static_cast<double>(ds.labels[r]);
            ds.features.at(r, 2) = rng.uniform();
            ds.features.at(r, 3) = rng.normal();
        }
        const auto entries = consensus_importance(ds, seed);
        for (const auto& e : entries) {
            if (e.feature == "copy" && e.rank == 1) ++wins;
            if (e.feature == "copy") {
                CHECK(e.consensus >= 0.0);
                CHECK(e.consensus <= 1.0);
            }
        }
    }
    CHECK(wins >= 9);
}

TEST_CASE("consensus_importance: normalized sources stay in [0,1] with max 1") {
    Rng rng(55);
    const std::size_t n = 200;
    Dataset ds;
    ds.features = Matrix(n, 3);
    ds.labels.resize(n);
    ds.feature_names = {"a", "b", "c"};
    for (std::size_t r = 0; r < n; ++r) {
        const double signal = rng.normal();
        ds.labels[r] = signal > 0.0 ? 1 : 0;
        ds.features.at(r, 0) = signal + 0.5 * rng.normal();
        ds.features.at(r, 1) = rng.normal();
        ds.features.at(r, 2) = rng.normal();
    }
    const auto entries = consensus_importance(ds, 1);
    double max_mi = 0.0;
    for (const auto& e : entries) {
        for (double v : {e.mutual_info, e.gbdt_gain, e.rf_importance, e.l1_coef}) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        max_mi = std::max(max_mi, e.mutual_info);
    }
    CHECK(max_mi == doctest::Approx(1.0));
}

TEST_CASE("pca_project: collinear data explained by one component") {
    Dataset ds;
    const std::size_t n = 40;
    ds.features = Matrix(n, 2);
    ds.labels.assign(n, 0);
    ds.labels[0] = 1;
    ds.feature_names = {"x", "y"};
    Rng rng(13);
    for (std::size_t r = 0; r < n; ++r) {
        const double t = rng.uniform(-3.0, 3.0);
        ds.features.at(r, 0) = 2.0 * t + 1.0;
        ds.features.at(r, 1) = -3.0 * t + 0.5;
    }
    const PcaResult result = pca_project(ds, 2);
    CHECK(result.explained_variance_ratio[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(result.explained_variance_ratio[1] == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("pca_project: ratios non-increasing and summing at most one") {
    Rng rng(14);
    Dataset ds;
    const std::size_t n = 60, p = 5;
    ds.features = Matrix(n, p);
    ds.labels.assign(n, 0);
    ds.labels[0] = 1;
    for (std::size_t j = 0; j < p; ++j) ds.feature_names.push_back("f" + std::to_string(j));
    for (double& v : ds.features.data) v = rng.normal();
    const PcaResult result = pca_project(ds, 5);
    double total = 0.0;
    for (std::size_t k = 0; k < 5; ++k) {
        if (k) CHECK(result.explained_variance_ratio[k] <= result.explained_variance_ratio[k - 1] + 1e-12);
        total += result.explained_variance_ratio[k];
    }
    CHECK(total <= 1.0 + 1e-9);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));  // full spectrum requested
}

namespace {

// Jacobi eigensolver oracle for symmetric matrices.
std::vector<double> jacobi_eigenvalues(Matrix a) {
    const std::size_t p = a.rows;
    for (int sweep = 0; sweep < 200; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = i + 1; j < p; ++j) off += a.at(i, j) * a.at(i, j);
        if (off < 1e-24) break;
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = i + 1; j < p; ++j) {
                if (std::abs(a.at(i, j)) < 1e-18) continue;
                const double theta = 0.5 * std::atan2(2.0 * a.at(i, j), a.at(j, j) - a.at(i, i));
                const double c = std::cos(theta), s = std::sin(theta);
                for (std::size_t k = 0; k < p; ++k) {
                    const double aik = a.at(i, k), ajk = a.at(j, k);
                    a.at(i, k) = c * aik - s * ajk;
                    a.at(j, k) = s * aik + c * ajk;
                }
                for (std::size_t k = 0; k < p; ++k) {
                    const double aki = a.at(k, i), akj = a.at(k, j);
                    a.at(k, i) = c * aki - s * akj;
                    a.at(k, j) = s * aki + c * akj;
                }
            }
    }
    std::vector<double> eig(p);
    for (std::size_t i = 0; i < p; ++i) eig[i] = a.at(i, i);
    std::sort(eig.begin(), eig.end(), std::greater<>());
    return eig;
}

}  // namespace

TEST_CASE("pca_project: matches a dense eigensolver oracle on random 10x5 matrices") {
    Rng rng(15);
    for (int trial = 0; trial < 5; ++trial) {
        Dataset ds;
        const std::size_t n = 10, p = 5;
        ds.features = Matrix(n, p);
        ds.labels.assign(n, 0);
        ds.labels[0] = 1;
        for (std::size_t j = 0; j < p; ++j) ds.feature_names.push_back("f" + std::to_string(j));
        for (double& v : ds.features.data) v = rng.uniform(-1.0, 1.0);

        // Covariance for the oracle.
        std::vector<double> mean(p, 0.0);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < p; ++j) mean[j] += ds.features.at(r, j) / static_cast<double>(n);
        Matrix cov(p, p);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < p; ++j)
                for (std::size_t l = 0; l < p; ++l)
                    cov.at(j, l) +=
                        (ds.features.at(r, j) - mean[j]) * (ds.features.at(r, l) - mean[l]) / static_cast<double>(n);

        const auto eig = jacobi_eigenvalues(cov);
        double trace = 0.0;
        for (std::size_t j = 0; j < p; ++j) trace += cov.at(j, j);

        const PcaResult result = pca_project(ds, 2);
        CHECK(result.explained_variance_ratio[0] == doctest::Approx(eig[0] / trace).epsilon(1e-6));
        CHECK(result.explained_variance_ratio[1] == doctest::Approx(eig[1] / trace).epsilon(1e-6));

        // Scores match sign-agnostically: compare |score| column norms.
        for (int comp = 0; comp < 2; ++comp) {
            double var = 0.0;
            for (std::size_t r = 0; r < n; ++r) {
                const double v = result.scores.at(r, static_cast<std::size_t>(comp));
                var += v * v / static_cast<double>(n);
            }
            CHECK(var == doctest::Approx(eig[static_cast<std::size_t>(comp)]).epsilon(1e-6));
        }
    }
}

TEST_CASE("evaluate_scores composes the full metric set") {
    const std::vector<int> y = {1, 1, 0, 0};
    const std::vector<double> s = {0.9, 0.4, 0.3, 0.2};
    const MetricSet m = evaluate_scores(y, s, 0.5);
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 0.5);
    CHECK(m.roc_auc == 1.0);
    CHECK(m.average_precision == 1.0);
    CHECK(m.brier == doctest::Approx((0.01 + 0.36 + 0.09 + 0.04) / 4.0));
}
