#include "doctest.h"
#include "nutriscreen/autodiff.hpp"
#include "nutriscreen/metrics.hpp"
#include "nutriscreen/models_classic.hpp"
#include "nutriscreen/nn.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

using namespace nutriscreen;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = rng.uniform(lo, hi);
    return m;
}

// Central finite differences on one graph-building function of a single
// input matrix. rebuild(x) must construct the graph from scratch and return
// the scalar output node value.
double finite_difference(const std::function<double(const Matrix&)>& eval, Matrix x, std::size_t flat_index,
                         double step = 1e-5) {
    Matrix hi = x, lo = x;
    hi.data[flat_index] += step;
    lo.data[flat_index] -= step;
    return (eval(hi) - eval(lo)) / (2.0 * step);
}

void check_gradients(const std::function<int(Graph&, int)>& op, std::size_t rows, std::size_t cols,
                     std::uint64_t seed, double range_lo = -1.5, double range_hi = 1.5) {
    Rng rng(seed);
    const Matrix x0 = random_matrix(rows, cols, rng, range_lo, range_hi);

    // Analytic gradients: one forward + backward.
    Graph g(900);
    const int x_node = g.input(x0);
    const int out = g.mean_all(op(g, x_node));
    g.backward(out);
    const Matrix analytic = g.grad(x_node);

    auto eval = [&](const Matrix& x) {
        Graph h(900);  // identical dropout stream on every rebuild
        const int xn = h.input(x);
        return h.value(h.mean_all(op(h, xn))).at(0, 0);
    };

    for (int probe = 0; probe < 20; ++probe) {
        const std::size_t idx = Rng(seed ^ (probe + 1)).index(x0.data.size());
        const double numeric = finite_difference(eval, x0, idx);
        const double denom = std::max({std::abs(numeric), std::abs(analytic.data[idx]), 1e-3});
        CHECK_MESSAGE(std::abs(numeric - analytic.data[idx]) / denom < 1e-4,
                      "flat index " << idx << ": numeric " << numeric << " vs analytic " << analytic.data[idx]);
    }
}

}  // namespace

TEST_CASE("backward: d(x^2)/dx = 2x at x = 3") {
    Graph g;
    Matrix x(1, 1);
    x.at(0, 0) = 3.0;
    const int xn = g.input(x);
    const int sq = g.mul(xn, xn);
    g.backward(sq);
    CHECK(g.grad(xn).at(0, 0) == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("backward: rejects non-scalar outputs") {
    Graph g;
    const int xn = g.input(Matrix(2, 2, 1.0));
    CHECK_THROWS_AS(g.backward(xn), NonScalarOutput);
}

TEST_CASE("gradient checks: every primitive against central differences") {
    Rng wrng(50);
    const Matrix w4x3 = random_matrix(4, 3, wrng);
    const Matrix row3 = random_matrix(1, 3, wrng);

    SUBCASE("matmul") {
        check_gradients([&](Graph& g, int x) { return g.matmul(x, g.input(w4x3)); }, 5, 4, 1);
    }
    SUBCASE("add broadcast") {
        check_gradients([&](Graph& g, int x) { return g.add(x, g.input(row3)); }, 5, 3, 2);
    }
    SUBCASE("mul elementwise") {
        check_gradients([&](Graph& g, int x) { return g.mul(x, g.mul(x, g.input(row3))); }, 4, 3, 3);
    }
    SUBCASE("sub_from_scalar and scale") {
        check_gradients([&](Graph& g, int x) { return g.scale(g.sub_from_scalar(1.3, x), -0.7); }, 3, 4, 4);
    }
    SUBCASE("leaky_relu away from the kink") {
        check_gradients(
            [&](Graph& g, int x) { return g.leaky_relu(g.add(x, g.input(Matrix(1, 3, 0.35))), 0.01); }, 4, 3, 5,
            0.1, 1.5);
    }
    SUBCASE("sigmoid") {
        check_gradients([&](Graph& g, int x) { return g.sigmoid_op(x); }, 4, 3, 6);
    }
    SUBCASE("log") {
        check_gradients([&](Graph& g, int x) { return g.log_op(x, 1e-10); }, 4, 3, 7, 0.2, 2.0);
    }
    SUBCASE("concat") {
        check_gradients([&](Graph& g, int x) { return g.concat_cols(g.mul(x, x), x); }, 3, 3, 8);
    }
    SUBCASE("sparsemax away from ties") {
        check_gradients([&](Graph& g, int x) { return g.mul(g.sparsemax_op(x), g.input(row3)); }, 5, 3, 9);
    }
    SUBCASE("batch_norm training mode") {
        std::vector<double> mean(3, 0.0), var(3, 1.0);
        const Matrix gamma = random_matrix(1, 3, wrng, 0.5, 1.5);
        const Matrix beta = random_matrix(1, 3, wrng);
        check_gradients(
            [&](Graph& g, int x) {
                std::vector<double> m = mean, v = var;  // running stats untouched by the check
                return g.batch_norm(x, g.input(gamma), g.input(beta), m, v, true);
            },
            6, 3, 10);
    }
    SUBCASE("batch_norm inference mode") {
        std::vector<double> mean = {0.1, -0.2, 0.3}, var = {1.1, 0.9, 1.3};
        const Matrix gamma = random_matrix(1, 3, wrng, 0.5, 1.5);
        const Matrix beta = random_matrix(1, 3, wrng);
        check_gradients(
            [&](Graph& g, int x) {
                std::vector<double> m = mean, v = var;
                return g.batch_norm(x, g.input(gamma), g.input(beta), m, v, false);
            },
            6, 3, 11);
    }
    SUBCASE("dropout with a fixed mask seed") {
        check_gradients([&](Graph& g, int x) { return g.dropout(x, 0.4, true); }, 6, 3, 12);
    }
    SUBCASE("bce") {
        const std::vector<int> targets = {1, 0, 1, 1, 0, 0};
        check_gradients(
            [&](Graph& g, int x) { return g.bce_loss(g.sigmoid_op(x), targets); }, 6, 1, 13);
    }
}

TEST_CASE("sigmoid-BCE gradient vanishes at p = y") {
    Graph g;
    Matrix z(1, 1);
    const double target = 0.73;
    z.at(0, 0) = std::log(target / (1.0 - target));
    const int zn = g.input(z);
    const int p = g.sigmoid_op(zn);
    // Soft-target BCE via the formula -[y log p + (1-y) log(1-p)] with y=0.73:
    // use weighted sum of two bce losses to assemble it from the 0/1 op.
    const int loss_pos = g.bce_loss(p, std::vector<int>{1});
    const int loss_neg = g.bce_loss(p, std::vector<int>{0});
    const int loss = g.add(g.scale(loss_pos, target), g.scale(loss_neg, 1.0 - target));
    g.backward(loss);
    CHECK(g.grad(zn).at(0, 0) == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("sparsemax: worked examples and simplex property") {
    CHECK(sparsemax({2.0, 0.0}) == std::vector<double>{1.0, 0.0});
    const auto mid = sparsemax({0.5, 0.5});
    CHECK(mid[0] == doctest::Approx(0.5));
    CHECK(mid[1] == doctest::Approx(0.5));

    Rng rng(60);
    for (int trial = 0; trial < 10000; ++trial) {
        const std::size_t p = 2 + rng.index(6);
        std::vector<double> z(p);
        for (double& v : z) v = rng.uniform(-4.0, 4.0);
        const auto out = sparsemax(z);
        double sum = 0.0;
        for (double v : out) {
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("dropout is the identity at inference") {
    Rng rng(61);
    const Matrix x = random_matrix(5, 4, rng);
    Graph g;
    const int xn = g.input(x);
    const int out = g.dropout(xn, 0.5, false);
    for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(g.value(out).data[i] == x.data[i]);
}

// ---------------------------------------------------------------------------
// Architectures
// ---------------------------------------------------------------------------

namespace {

Dataset separable_2d(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Dataset ds;
    ds.features = Matrix(n, 2);
    ds.labels.resize(n);
    ds.feature_names = {"x0", "x1"};
    for (std::size_t r = 0; r < n; ++r) {
        ds.labels[r] = r % 2 == 0 ? 1 : 0;
        const double cx = ds.labels[r] ? 1.0 : -1.0;
        ds.features.at(r, 0) = cx + 0.25 * rng.normal();
        ds.features.at(r, 1) = -cx + 0.25 * rng.normal();
    }
    return ds;
}

double training_accuracy(const NnModel& model, const Dataset& ds) {
    const auto scores = model.score_matrix(ds.features);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < ds.n_rows(); ++r)
        correct += (scores[r] >= 0.5 ? 1 : 0) == ds.labels[r] ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(ds.n_rows());
}

}  // namespace

TEST_CASE("fit_nn: every architecture nails linearly separable data on most seeds") {
    const NnTrainConfig train{60, 32, 0.05};
    NnSpec spec;
    spec.hidden = {16, 8};
    spec.residual_width = 16;
    spec.feature_dim = 8;
    for (auto arch : {NnArch::dnn, NnArch::resnet_mlp, NnArch::wide_deep, NnArch::tabnet_lite}) {
        int wins = 0;
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const Dataset ds = separable_2d(200, 300 + seed);
            const auto model = fit_nn(ds, arch, spec, train, seed);
            if (training_accuracy(*model, ds) >= 0.99) ++wins;
        }
        CHECK_MESSAGE(wins >= 9, "architecture " << nn_arch_name(arch) << " won " << wins << "/10");
    }
}

TEST_CASE("fit_nn: wide&deep with a frozen deep path tracks logistic regression") {
    Rng rng(70);
    Dataset ds;
    const std::size_t n = 400;
    ds.features = Matrix(n, 3);
    ds.labels.resize(n);
    ds.feature_names = {"a", "b", "c"};
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < 3; ++j) ds.features.at(r, j) = rng.normal();
        const double lp = 1.4 * ds.features.at(r, 0) - 1.0 * ds.features.at(r, 1);
        ds.labels[r] = rng.bernoulli(sigmoid(lp)) ? 1 : 0;
    }

    NnSpec spec;
    spec.freeze_deep = true;
    const auto wide = fit_nn(ds, NnArch::wide_deep, spec, {120, 64, 0.1}, 4);
    const auto wide_scores = wide->score_matrix(ds.features);

    const auto logreg_scores = [&] {
        // Plain logistic fit for comparison.
        LogregConfig cfg;
        auto model = fit_logreg(ds, cfg, 0);
        return model->score_matrix(ds.features);
    }();

    const double auc_wide = roc_auc(ds.labels, wide_scores);
    const double auc_logreg = roc_auc(ds.labels, logreg_scores);
    CHECK(std::abs(auc_wide - auc_logreg) < 0.02);
}

TEST_CASE("fit_nn: tabnet masks concentrate on the informative feature") {
    int wins = 0;
    NnSpec spec;
    spec.feature_dim = 8;
    spec.n_steps = 3;
    spec.sparsity_weight = 0.1;
    spec.gamma_relax = 2.0;  // allow every step to reuse the signal feature
    NnTrainConfig train;
    train.epochs = 300;
    train.batch_size = 64;
    train.lr = 0.05;
    train.weight_decay = 1e-3;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(800 + seed);
        Dataset ds;
        const std::size_t n = 600, p = 10;
        ds.features = Matrix(n, p);
        ds.labels.resize(n);
        for (std::size_t j = 0; j < p; ++j) ds.feature_names.push_back("f" + std::to_string(j));
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t j = 0; j < p; ++j) ds.features.at(r, j) = rng.normal();
            ds.labels[r] = rng.bernoulli(sigmoid(3.0 * ds.features.at(r, 1))) ? 1 : 0;
        }
        const auto model = fit_nn(ds, NnArch::tabnet_lite, spec, train, seed);
        const TabnetMasks masks = tabnet_masks(*model, ds);
        if (masks.global_importance[1] > 0.5) ++wins;
    }
    CHECK(wins >= 8);
}

TEST_CASE("tabnet_masks: per-row masks on the simplex, importance sums to one") {
    const Dataset ds = separable_2d(60, 5);
    NnSpec spec;
    spec.feature_dim = 4;
    spec.n_steps = 3;
    const auto model = fit_nn(ds, NnArch::tabnet_lite, spec, {10, 32, 0.05}, 2);
    const TabnetMasks masks = tabnet_masks(*model, ds);
    REQUIRE(masks.step_masks.size() == 3);
    for (const auto& mask : masks.step_masks)
        for (std::size_t r = 0; r < mask.rows; ++r) {
            double sum = 0.0;
            for (std::size_t j = 0; j < mask.cols; ++j) {
                CHECK(mask.at(r, j) >= 0.0);
                sum += mask.at(r, j);
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        }
    double total = 0.0;
    for (double v : masks.global_importance) total += v;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));

    const auto not_tabnet = fit_nn(ds, NnArch::dnn, spec, {5, 32, 0.05}, 1);
    CHECK_THROWS_AS(tabnet_masks(*not_tabnet, ds), WrongArchitecture);
}

TEST_CASE("tabnet prior relaxation: gamma=1 zeroes the prior of a fully used feature") {
    // One sparsemax-saturated step with gamma 1: prior becomes 0 for that
    // feature, so the next step's mask there is 0.
    Graph g;
    Matrix logits(1, 3);
    logits.at(0, 0) = 5.0;  // saturates the first feature
    logits.at(0, 1) = 0.0;
    logits.at(0, 2) = 0.0;
    const int prior0 = g.input(Matrix(1, 3, 1.0));
    const int mask0 = g.sparsemax_op(g.mul(g.input(logits), prior0));
    CHECK(g.value(mask0).at(0, 0) == doctest::Approx(1.0));
    const int prior1 = g.mul(prior0, g.sub_from_scalar(1.0, mask0));
    CHECK(g.value(prior1).at(0, 0) == doctest::Approx(0.0));
    // Any logits now sparsemax to zero mass on the used feature.
    Matrix next_logits(1, 3);
    next_logits.at(0, 0) = 9.0;
    next_logits.at(0, 1) = 1.0;
    next_logits.at(0, 2) = 0.5;
    const int mask1 = g.sparsemax_op(g.mul(g.input(next_logits), prior1));
    CHECK(g.value(mask1).at(0, 0) == doctest::Approx(0.0));
}

TEST_CASE("fit_nn: bit-reproducible for a fixed seed; batch norm inference row-order independent") {
    const Dataset ds = separable_2d(120, 8);
    NnSpec spec;
    spec.hidden = {8};
    const auto a = fit_nn(ds, NnArch::dnn, spec, {15, 32, 0.05}, 3);
    const auto b = fit_nn(ds, NnArch::dnn, spec, {15, 32, 0.05}, 3);
    const auto sa = a->score_matrix(ds.features);
    const auto sb = b->score_matrix(ds.features);
    for (std::size_t r = 0; r < ds.n_rows(); ++r) CHECK(sa[r] == sb[r]);

    // Row-order independence of inference.
    std::vector<std::size_t> perm(ds.n_rows());
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(4);
    rng.shuffle(perm);
    const Dataset shuffled = ds.subset(perm);
    const auto shuffled_scores = a->score_matrix(shuffled.features);
    for (std::size_t i = 0; i < perm.size(); ++i) CHECK(shuffled_scores[i] == doctest::Approx(sa[perm[i]]).epsilon(1e-12));
}

TEST_CASE("fit_nn: JSON round-trip preserves scores") {
    const Dataset ds = separable_2d(80, 12);
    NnSpec spec;
    spec.feature_dim = 4;
    const auto model = fit_nn(ds, NnArch::tabnet_lite, spec, {10, 32, 0.05}, 6);
    const auto clone = model_from_json(model->to_json());
    const auto original = model->score_matrix(ds.features);
    for (std::size_t r = 0; r < 10; ++r)
        CHECK(clone->score_row(ds.features.row(r)) == doctest::Approx(original[r]).epsilon(1e-12));
}

TEST_CASE("fit_nn: full-architecture gradient checks") {
    // Tiny instances of each architecture: perturb 20 random parameter
    // coordinates and compare the loss gradient against central differences.
    Rng data_rng(90);
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
        // Fit briefly so batch-norm statistics and parameters are non-trivial.
        const auto model = fit_nn(batch, arch, spec, {2, 4, 0.01}, 11);

        auto loss_value = [&]() {
            Graph g(1234);
            std::vector<std::pair<int, std::size_t>> bindings;
            const auto [probs, loss] = model->build_loss(g, batch.features, batch.labels, true, bindings);
            (void)probs;
            return g.value(loss).at(0, 0);
        };

        Graph g(1234);
        std::vector<std::pair<int, std::size_t>> bindings;
        const auto [probs, loss] = model->build_loss(g, batch.features, batch.labels, true, bindings);
        (void)probs;
        g.backward(loss);

        Rng pick(arch == NnArch::dnn ? 1u : (arch == NnArch::resnet_mlp ? 2u : (arch == NnArch::wide_deep ? 3u : 4u)));
        int checked = 0;
        while (checked < 20) {
            const auto& [node, index] = bindings[pick.index(bindings.size())];
            auto& param = model->params[index];
            const std::size_t flat = pick.index(param.value.data.size());
            const double analytic = g.grad(node).data[flat];

            const double step = 1e-5;
            const double saved = param.value.data[flat];
            param.value.data[flat] = saved + step;
            const double hi = loss_value();
            param.value.data[flat] = saved - step;
            const double lo = loss_value();
            param.value.data[flat] = saved;
            const double numeric = (hi - lo) / (2.0 * step);

            const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-3});
            CHECK_MESSAGE(std::abs(numeric - analytic) / denom < 1e-4,
                          nn_arch_name(arch) << " param " << param.name << "[" << flat << "]: numeric " << numeric
                                             << " vs analytic " << analytic);
            ++checked;
        }
    }
}
