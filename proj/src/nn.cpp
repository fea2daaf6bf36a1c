#include "nutriscreen/nn.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace nutriscreen {

using nlohmann::json;

std::string nn_arch_name(NnArch arch) {
    switch (arch) {
        case NnArch::dnn: return "dnn";
        case NnArch::resnet_mlp: return "resnet_mlp";
        case NnArch::wide_deep: return "wide_deep";
        case NnArch::tabnet_lite: return "tabnet_lite";
    }
    return "?";
}

NnArch nn_arch_from_name(const std::string& name) {
    if (name == "dnn") return NnArch::dnn;
    if (name == "resnet_mlp") return NnArch::resnet_mlp;
    if (name == "wide_deep") return NnArch::wide_deep;
    if (name == "tabnet_lite") return NnArch::tabnet_lite;
    throw WrongArchitecture("unknown architecture: " + name);
}

std::size_t NnModel::param_index(const std::string& name) const {
    for (std::size_t i = 0; i < params.size(); ++i)
        if (params[i].name == name) return i;
    throw ValidationError("nn parameter not found: " + name);
}

std::size_t NnModel::bn_index(const std::string& name) const {
    for (std::size_t i = 0; i < bn_names.size(); ++i)
        if (bn_names[i] == name) return i;
    throw ValidationError("nn batch-norm slot not found: " + name);
}

namespace {

// Per-build binding of model parameters to graph nodes. Shared parameters
// (e.g. the tabnet feature block) bind once so gradients accumulate in one
// node.
struct Binder {
    NnModel& model;
    Graph& g;
    std::vector<std::pair<int, std::size_t>>& param_nodes;
    std::map<std::string, int> cache;

    int operator()(const std::string& name) {
        const auto it = cache.find(name);
        if (it != cache.end()) return it->second;
        const std::size_t index = model.param_index(name);
        const int node = g.input(model.params[index].value);
        param_nodes.emplace_back(node, index);
        cache[name] = node;
        return node;
    }
};

int dense(Graph& g, Binder& bind, int x, const std::string& prefix) {
    return g.add(g.matmul(x, bind(prefix + ".W")), bind(prefix + ".b"));
}

}  // namespace

int NnModel::build_probabilities(Graph& g, int x_node, bool training,
                                 std::vector<std::pair<int, std::size_t>>& param_nodes, TabnetTrace* trace) {
    Binder bind{*this, g, param_nodes, {}};
    const double slope = spec.leaky_slope;

    auto bn_layer = [&](int h, const std::string& name) {
        const std::size_t slot = bn_index(name);
        return g.batch_norm(h, bind(name + ".gamma"), bind(name + ".beta"), bn_means[slot], bn_vars[slot], training);
    };

    auto dnn_path = [&](int x, const std::string& prefix) {
        int h = x;
        for (std::size_t layer = 0; layer < spec.hidden.size(); ++layer) {
            const std::string tag = prefix + "dense" + std::to_string(layer);
            h = dense(g, bind, h, tag);
            h = bn_layer(h, prefix + "bn" + std::to_string(layer));
            h = g.leaky_relu(h, slope);
            h = g.dropout(h, spec.dropout, training);
        }
        return dense(g, bind, h, prefix + "head");
    };

    int logits = -1;
    switch (arch) {
        case NnArch::dnn:
            logits = dnn_path(x_node, "");
            break;
        case NnArch::resnet_mlp: {
            int h = g.leaky_relu(dense(g, bind, x_node, "in"), slope);
            for (int blk = 0; blk < spec.residual_depth; ++blk) {
                const std::string tag = "blk" + std::to_string(blk);
                int t = dense(g, bind, h, tag);
                t = bn_layer(t, "bn" + std::to_string(blk));
                t = g.leaky_relu(t, slope);
                t = g.dropout(t, spec.dropout, training);
                h = g.residual_add(h, t);
            }
            logits = dense(g, bind, h, "head");
            break;
        }
        case NnArch::wide_deep: {
            const int wide = dense(g, bind, x_node, "wide");
            logits = spec.freeze_deep ? wide : g.add(wide, dnn_path(x_node, "deep."));
            break;
        }
        case NnArch::tabnet_lite: {
            auto shared_block = [&](int z) {
                int h = dense(g, bind, z, "feat");
                h = bn_layer(h, "featbn");
                return g.leaky_relu(h, slope);
            };
            // Copy the shape out: growing the tape invalidates node references.
            const std::size_t batch_rows = g.value(x_node).rows;
            const std::size_t batch_cols = g.value(x_node).cols;
            int attention_repr = shared_block(x_node);
            int prior = g.input(Matrix(batch_rows, batch_cols, 1.0));
            int aggregate = -1;
            int entropy_sum = -1;
            for (int step = 0; step < spec.n_steps; ++step) {
                const std::string tag = "att" + std::to_string(step);
                // FC -> BN -> prior product -> sparsemax; the normalization
                // keeps logits centered so mask support stays fluid.
                const int att = bn_layer(dense(g, bind, attention_repr, tag), "attbn" + std::to_string(step));
                const int mask = g.sparsemax_op(g.scale(g.mul(att, prior), attention_temperature));
                if (trace) trace->step_masks.push_back(g.value(mask));
                const int masked = g.mul(x_node, mask);
                const int h = shared_block(masked);
                const int d = g.leaky_relu(dense(g, bind, h, "trans"), slope);
                if (trace) trace->step_outputs.push_back(g.value(d));
                aggregate = step == 0 ? d : g.add(aggregate, d);
                attention_repr = h;
                prior = g.mul(prior, g.sub_from_scalar(spec.gamma_relax, mask));

                const int ent = g.mean_all(g.mul(mask, g.log_op(mask)));
                entropy_sum = step == 0 ? ent : g.add(entropy_sum, ent);
            }
            tabnet_entropy_node_ = entropy_sum;
            logits = dense(g, bind, aggregate, "head");
            break;
        }
    }
    return g.sigmoid_op(logits);
}

std::pair<int, int> NnModel::build_loss(Graph& g, const Matrix& X, const std::vector<int>& y, bool training,
                                        std::vector<std::pair<int, std::size_t>>& param_nodes) {
    const int x_node = g.input(X);
    const int probs = build_probabilities(g, x_node, training, param_nodes);
    int loss = g.bce_loss(probs, y, spec.pos_weight);
    if (arch == NnArch::tabnet_lite && spec.sparsity_weight > 0.0 && tabnet_entropy_node_ >= 0) {
        // mean_all averages over rows*features; scaling by n_features turns it
        // into the per-row mask entropy (negated).
        const double scale = -spec.sparsity_weight * static_cast<double>(n_features) /
                             static_cast<double>(spec.n_steps);
        loss = g.add(loss, g.scale(tabnet_entropy_node_, scale));
    }
    return {probs, loss};
}

std::vector<double> NnModel::score_matrix(const Matrix& X) const {
    auto* self = const_cast<NnModel*>(this);  // inference leaves bn stats untouched
    std::vector<double> out;
    out.reserve(X.rows);
    const std::size_t chunk = 2048;
    for (std::size_t start = 0; start < X.rows; start += chunk) {
        const std::size_t stop = std::min(X.rows, start + chunk);
        Matrix part(stop - start, X.cols);
        std::copy(X.data.begin() + static_cast<std::ptrdiff_t>(start * X.cols),
                  X.data.begin() + static_cast<std::ptrdiff_t>(stop * X.cols), part.data.begin());
        Graph g;
        std::vector<std::pair<int, std::size_t>> bindings;
        const int probs = self->build_probabilities(g, g.input(std::move(part)), false, bindings);
        const Matrix& P = g.value(probs);
        out.insert(out.end(), P.data.begin(), P.data.end());
    }
    return out;
}

double NnModel::score_row(std::span<const double> row) const {
    if (row.size() != n_features) throw DimensionMismatch("nn row width mismatch");
    Matrix X(1, n_features);
    std::copy(row.begin(), row.end(), X.data.begin());
    return score_matrix(X)[0];
}

json NnModel::to_json() const {
    json params_json = json::array();
    for (const auto& param : params)
        params_json.push_back({{"name", param.name},
                               {"rows", param.value.rows},
                               {"cols", param.value.cols},
                               {"data", param.value.data}});
    return json{{"family", family()},
                {"arch", nn_arch_name(arch)},
                {"n_features", n_features},
                {"spec",
                 {{"hidden", spec.hidden},
                  {"residual_width", spec.residual_width},
                  {"residual_depth", spec.residual_depth},
                  {"dropout", spec.dropout},
                  {"leaky_slope", spec.leaky_slope},
                  {"feature_dim", spec.feature_dim},
                  {"n_steps", spec.n_steps},
                  {"gamma_relax", spec.gamma_relax},
                  {"sparsity_weight", spec.sparsity_weight},
                  {"freeze_deep", spec.freeze_deep},
                  {"pos_weight", spec.pos_weight}}},
                {"params", params_json},
                {"bn_names", bn_names},
                {"bn_means", bn_means},
                {"bn_vars", bn_vars}};
}

std::unique_ptr<TrainedModel> nn_model_from_json(const json& doc) {
    if (doc.at("family").get<std::string>() != "nn") return nullptr;
    auto m = std::make_unique<NnModel>();
    m->arch = nn_arch_from_name(doc.at("arch").get<std::string>());
    m->n_features = doc.at("n_features").get<std::size_t>();
    const auto& s = doc.at("spec");
    m->spec.hidden = s.at("hidden").get<std::vector<int>>();
    m->spec.residual_width = s.at("residual_width").get<int>();
    m->spec.residual_depth = s.at("residual_depth").get<int>();
    m->spec.dropout = s.at("dropout").get<double>();
    m->spec.leaky_slope = s.at("leaky_slope").get<double>();
    m->spec.feature_dim = s.at("feature_dim").get<int>();
    m->spec.n_steps = s.at("n_steps").get<int>();
    m->spec.gamma_relax = s.at("gamma_relax").get<double>();
    m->spec.sparsity_weight = s.at("sparsity_weight").get<double>();
    m->spec.freeze_deep = s.at("freeze_deep").get<bool>();
    m->spec.pos_weight = s.at("pos_weight").get<double>();
    for (const auto& pj : doc.at("params")) {
        NnModel::Param param;
        param.name = pj.at("name").get<std::string>();
        param.value = Matrix(pj.at("rows").get<std::size_t>(), pj.at("cols").get<std::size_t>());
        param.value.data = pj.at("data").get<std::vector<double>>();
        param.velocity = Matrix(param.value.rows, param.value.cols);
        m->params.push_back(std::move(param));
    }
    m->bn_names = doc.at("bn_names").get<std::vector<std::string>>();
    m->bn_means = doc.at("bn_means").get<std::vector<std::vector<double>>>();
    m->bn_vars = doc.at("bn_vars").get<std::vector<std::vector<double>>>();
    return m;
}

// ---------------------------------------------------------------------------
// Initialization + training
// ---------------------------------------------------------------------------

namespace {

void add_param(NnModel& model, const std::string& name, std::size_t rows, std::size_t cols, Rng& rng,
               bool glorot = true, double fill = 0.0) {
    NnModel::Param param;
    param.name = name;
    param.value = Matrix(rows, cols, fill);
    param.velocity = Matrix(rows, cols);
    if (glorot) {
        const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
        for (double& v : param.value.data) v = rng.uniform(-limit, limit);
    }
    model.params.push_back(std::move(param));
}

void add_bn(NnModel& model, const std::string& name, std::size_t width, Rng& rng) {
    add_param(model, name + ".gamma", 1, width, rng, false, 1.0);
    add_param(model, name + ".beta", 1, width, rng, false, 0.0);
    model.bn_names.push_back(name);
    model.bn_means.emplace_back(width, 0.0);
    model.bn_vars.emplace_back(width, 1.0);
}

void init_params(NnModel& model, std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t p = model.n_features;
    const auto& spec = model.spec;

    auto dnn_params = [&](const std::string& prefix) {
        std::size_t in = p;
        for (std::size_t layer = 0; layer < spec.hidden.size(); ++layer) {
            const std::size_t out = static_cast<std::size_t>(spec.hidden[layer]);
            add_param(model, prefix + "dense" + std::to_string(layer) + ".W", in, out, rng);
            add_param(model, prefix + "dense" + std::to_string(layer) + ".b", 1, out, rng, false);
            add_bn(model, prefix + "bn" + std::to_string(layer), out, rng);
            in = out;
        }
        add_param(model, prefix + "head.W", in, 1, rng);
        add_param(model, prefix + "head.b", 1, 1, rng, false);
    };

    switch (model.arch) {
        case NnArch::dnn:
            dnn_params("");
            break;
        case NnArch::resnet_mlp: {
            const std::size_t w = static_cast<std::size_t>(spec.residual_width);
            add_param(model, "in.W", p, w, rng);
            add_param(model, "in.b", 1, w, rng, false);
            for (int blk = 0; blk < spec.residual_depth; ++blk) {
                add_param(model, "blk" + std::to_string(blk) + ".W", w, w, rng);
                add_param(model, "blk" + std::to_string(blk) + ".b", 1, w, rng, false);
                add_bn(model, "bn" + std::to_string(blk), w, rng);
            }
            add_param(model, "head.W", w, 1, rng);
            add_param(model, "head.b", 1, 1, rng, false);
            break;
        }
        case NnArch::wide_deep:
            add_param(model, "wide.W", p, 1, rng);
            add_param(model, "wide.b", 1, 1, rng, false);
            dnn_params("deep.");
            break;
        case NnArch::tabnet_lite: {
            const std::size_t fd = static_cast<std::size_t>(spec.feature_dim);
            add_param(model, "feat.W", p, fd, rng);
            add_param(model, "feat.b", 1, fd, rng, false);
            add_bn(model, "featbn", fd, rng);
            for (int step = 0; step < spec.n_steps; ++step) {
                // Small attention init keeps early sparsemax masks wide;
                // saturated masks have zero gradient off-support and lock in.
                add_param(model, "att" + std::to_string(step) + ".W", fd, p, rng);
                for (double& v : model.params.back().value.data) v *= 0.1;
                add_param(model, "att" + std::to_string(step) + ".b", 1, p, rng, false);
                add_bn(model, "attbn" + std::to_string(step), p, rng);
                // Mild attention-norm gain so initial masks stay wide.
                for (double& v : model.params[model.params.size() - 2].value.data) v = 0.05;
            }
            add_param(model, "trans.W", fd, fd, rng);
            add_param(model, "trans.b", 1, fd, rng, false);
            add_param(model, "head.W", fd, 1, rng);
            add_param(model, "head.b", 1, 1, rng, false);
            break;
        }
    }
}

}  // namespace

std::unique_ptr<NnModel> fit_nn(const Dataset& ds, NnArch arch, const NnSpec& spec, const NnTrainConfig& train,
                                std::uint64_t seed) {
    if (ds.n_rows() == 0) throw ValidationError("cannot train on an empty dataset");
    auto model = std::make_unique<NnModel>();
    model->arch = arch;
    model->spec = spec;
    model->n_features = ds.n_cols();
    init_params(*model, seed);

    Rng rng(seed ^ 0x5EEDF00D);
    std::vector<std::size_t> order(ds.n_rows());
    std::iota(order.begin(), order.end(), 0);

    const int quarter = std::max(1, train.epochs / 4);
    const double sparsity_target = model->spec.sparsity_weight;
    for (int epoch = 0; epoch < train.epochs; ++epoch) {
        const double lr = train.lr * std::pow(0.5, epoch / quarter);
        // Continuation schedule: the attention temperature ramps over the
        // first third of training (wide-support masks while the signal is
        // found), then the mask entropy penalty ramps over the second third.
        const double third = std::max(1.0, train.epochs / 3.0);
        model->attention_temperature = std::min(1.0, static_cast<double>(epoch + 1) / third);
        model->spec.sparsity_weight =
            sparsity_target * std::min(1.0, std::max(0.0, (static_cast<double>(epoch + 1) - third) / third));
        Rng epoch_rng = rng.fork(static_cast<std::uint64_t>(epoch));
        epoch_rng.shuffle(order);

        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(train.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(train.batch_size));
            Matrix X(stop - start, ds.n_cols());
            std::vector<int> y(stop - start);
            for (std::size_t i = start; i < stop; ++i) {
                const std::size_t r = order[i];
                std::copy_n(ds.features.data.begin() + static_cast<std::ptrdiff_t>(r * ds.n_cols()), ds.n_cols(),
                            X.data.begin() + static_cast<std::ptrdiff_t>((i - start) * ds.n_cols()));
                y[i - start] = ds.labels[r];
            }

            Graph g(epoch_rng.fork(start).seed());
            std::vector<std::pair<int, std::size_t>> bindings;
            const auto [probs, loss] = model->build_loss(g, X, y, true, bindings);
            (void)probs;
            const double loss_value = g.value(loss).at(0, 0);
            if (!std::isfinite(loss_value))
                throw DivergenceDetected("nn training loss is not finite at epoch " + std::to_string(epoch));
            g.backward(loss);

            for (const auto& [node, index] : bindings) {
                auto& param = model->params[index];
                const Matrix& grad = g.grad(node);
                const bool decay = train.weight_decay > 0.0 && param.name.find(".W") != std::string::npos;
                for (std::size_t i = 0; i < param.value.data.size(); ++i) {
                    param.velocity.data[i] = 0.9 * param.velocity.data[i] - lr * grad.data[i];
                    param.value.data[i] += param.velocity.data[i];
                    if (decay) param.value.data[i] *= 1.0 - lr * train.weight_decay;
                }
            }
        }
    }
    model->spec.sparsity_weight = sparsity_target;
    model->attention_temperature = 1.0;
    return model;
}

TabnetMasks tabnet_masks(const NnModel& model, const Dataset& ds) {
    if (model.arch != NnArch::tabnet_lite) throw WrongArchitecture("tabnet_masks needs a tabnet_lite model");
    auto* self = const_cast<NnModel*>(&model);
    Graph g;
    std::vector<std::pair<int, std::size_t>> bindings;
    TabnetTrace trace;
    self->build_probabilities(g, g.input(ds.features), false, bindings, &trace);

    TabnetMasks out;
    out.step_masks = std::move(trace.step_masks);
    out.global_importance.assign(ds.n_cols(), 0.0);
    // Each row/step mask is weighted by that step's decision contribution
    // (sum of its positive outputs), so steps the head ignores do not dilute
    // the importance profile.
    for (std::size_t t = 0; t < out.step_masks.size(); ++t) {
        const Matrix& mask = out.step_masks[t];
        const Matrix& d = trace.step_outputs[t];
        for (std::size_t r = 0; r < mask.rows; ++r) {
            double eta = 0.0;
            for (std::size_t c = 0; c < d.cols; ++c) eta += std::max(d.at(r, c), 0.0);
            for (std::size_t j = 0; j < mask.cols; ++j) out.global_importance[j] += eta * mask.at(r, j);
        }
    }
    double total = 0.0;
    for (double v : out.global_importance) total += v;
    if (total > 0.0)
        for (double& v : out.global_importance) v /= total;
    return out;
}

}  // namespace nutriscreen
