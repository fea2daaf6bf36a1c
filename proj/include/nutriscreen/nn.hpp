#pragma once

#include "nutriscreen/autodiff.hpp"
#include "nutriscreen/models.hpp"

namespace nutriscreen {

enum class NnArch { dnn, resnet_mlp, wide_deep, tabnet_lite };

std::string nn_arch_name(NnArch arch);
NnArch nn_arch_from_name(const std::string& name);

struct NnSpec {
    std::vector<int> hidden = {64, 32};  // dnn widths / wide_deep deep path
    int residual_width = 64;
    int residual_depth = 2;
    double dropout = 0.1;
    double leaky_slope = 0.01;
    // tabnet_lite
    int feature_dim = 16;
    int n_steps = 3;
    double gamma_relax = 1.3;       // prior decay; 1.0 = a fully used feature is never reused
    double sparsity_weight = 1e-3;  // mask entropy penalty
    // diagnostics / loss shaping
    bool freeze_deep = false;  // wide_deep with the deep path pinned to zero
    double pos_weight = 0.0;   // 0 = plain BCE
};

struct NnTrainConfig {
    int epochs = 80;
    int batch_size = 256;
    double lr = 0.05;          // SGD + momentum 0.9, halved every quarter of the run
    double weight_decay = 1e-4;  // breaks the mask/weight scale degeneracy in tabnet
};

struct TabnetTrace {
    std::vector<Matrix> step_masks;    // per step, rows x features
    std::vector<Matrix> step_outputs;  // per step, rows x feature_dim (decision contributions)
};

class NnModel : public TrainedModel {
public:
    NnArch arch = NnArch::dnn;
    NnSpec spec;
    std::size_t n_features = 0;

    struct Param {
        std::string name;
        Matrix value;
        Matrix velocity;
    };
    std::vector<Param> params;
    std::vector<std::vector<double>> bn_means;  // per batch-norm layer
    std::vector<std::vector<double>> bn_vars;

    std::string family() const override { return "nn"; }
    double score_row(std::span<const double> row) const override;
    std::vector<double> score_matrix(const Matrix& X) const override;
    nlohmann::json to_json() const override;

    // Builds the forward pass on `g` and returns the probability node.
    // Training mode enables dropout/batch statistics; param_nodes pairs each
    // created graph node with its index into `params` for gradient readout.
    // The tabnet trace, when requested, records the per-step mask nodes.
    int build_probabilities(Graph& g, int x_node, bool training, std::vector<std::pair<int, std::size_t>>& param_nodes,
                            TabnetTrace* trace = nullptr);

    // Probability node plus the training loss node (BCE + sparsity penalty).
    std::pair<int, int> build_loss(Graph& g, const Matrix& X, const std::vector<int>& y, bool training,
                                   std::vector<std::pair<int, std::size_t>>& param_nodes);

    std::vector<std::string> bn_names;  // batch-norm slots, parallel to bn_means/bn_vars

    std::size_t param_index(const std::string& name) const;
    std::size_t bn_index(const std::string& name) const;

    // Continuation knob used during training: sparsemax input is scaled by
    // this temperature, ramping 0 -> 1 so early masks keep full support
    // (saturated masks have zero gradient off-support). 1 at inference.
    double attention_temperature = 1.0;

private:
    int tabnet_entropy_node_ = -1;  // set by the last build_probabilities call
};

std::unique_ptr<NnModel> fit_nn(const Dataset& ds, NnArch arch, const NnSpec& spec, const NnTrainConfig& train,
                                std::uint64_t seed);

struct TabnetMasks {
    std::vector<Matrix> step_masks;          // per step: n_rows x n_features, each row on the simplex
    std::vector<double> global_importance;   // per feature, sums to 1
};

TabnetMasks tabnet_masks(const NnModel& model, const Dataset& ds);

std::unique_ptr<TrainedModel> nn_model_from_json(const nlohmann::json& doc);

}  // namespace nutriscreen
