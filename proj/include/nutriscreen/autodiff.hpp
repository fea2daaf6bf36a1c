#pragma once

#include <functional>
#include <vector>

#include "nutriscreen/common.hpp"

namespace nutriscreen {

struct NonScalarOutput : ValidationError {
    using ValidationError::ValidationError;
};

// ---------------------------------------------------------------------------
// Minimal dense-tensor reverse-mode autodiff. A Graph is a tape of nodes,
// each a (rows x cols) value matrix plus a gradient of the same shape and a
// backward closure. Graphs are rebuilt per batch; parameters bind by copying
// values in and reading gradients out after backward().
// ---------------------------------------------------------------------------
class Graph {
public:
    explicit Graph(std::uint64_t dropout_seed = 0) : drop_rng_(dropout_seed) {}

    int input(Matrix values);

    const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    const Matrix& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

    // --- ops -----------------------------------------------------------
    int matmul(int a, int b);
    int add(int a, int b);  // same shape, or b broadcast as a 1 x cols row
    int mul(int a, int b);  // elementwise, same broadcast rule as add
    int sub_from_scalar(double c, int a);
    int scale(int a, double c);
    int leaky_relu(int a, double slope);
    int relu(int a) { return leaky_relu(a, 0.0); }
    int sigmoid_op(int a);
    int log_op(int a, double eps = 1e-10);
    int concat_cols(int a, int b);
    int residual_add(int a, int b) { return add(a, b); }
    int sparsemax_op(int a);  // row-wise Euclidean projection onto the simplex

    // Batch norm over columns. Training mode normalizes with batch statistics
    // and updates the running estimates in place; inference mode uses the
    // running estimates (deterministic, row-order independent).
    int batch_norm(int x, int gamma, int beta, std::vector<double>& running_mean, std::vector<double>& running_var,
                   bool training, double momentum = 0.9, double eps = 1e-5);

    // Inverted dropout with a graph-seeded mask; identity at inference.
    int dropout(int x, double rate, bool training);

    // Mean binary cross-entropy of probabilities against 0/1 targets, with an
    // optional positive-class weight (<= 0 means unweighted).
    int bce_loss(int probs, const std::vector<int>& targets, double pos_weight = 0.0);

    int mean_all(int a);
    int sum_all(int a);

    void backward(int output);  // output must be 1x1
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        std::function<void()> back;  // empty for leaves
    };

    int push(Matrix value, std::function<void()> back = {});
    Node& at(int id) { return nodes_[static_cast<std::size_t>(id)]; }

    std::vector<Node> nodes_;
    Rng drop_rng_;
};

// Standalone sparsemax (sorted-threshold algorithm) for one vector.
std::vector<double> sparsemax(const std::vector<double>& z);

}  // namespace nutriscreen
