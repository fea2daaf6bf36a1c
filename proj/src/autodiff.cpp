#include "nutriscreen/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

namespace nutriscreen {

int Graph::push(Matrix value, std::function<void()> back) {
    Node node;
    node.grad = Matrix(value.rows, value.cols);
    node.value = std::move(value);
    node.back = std::move(back);
    nodes_.push_back(std::move(node));
    return static_cast<int>(nodes_.size()) - 1;
}

int Graph::input(Matrix values) { return push(std::move(values)); }

int Graph::matmul(int a, int b) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    if (A.cols != B.rows) throw ValidationError("autodiff: matmul inner dimensions differ");
    Matrix out(A.rows, B.cols);
    for (std::size_t i = 0; i < A.rows; ++i)
        for (std::size_t k = 0; k < A.cols; ++k) {
            const double aik = A.at(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < B.cols; ++j) out.at(i, j) += aik * B.at(k, j);
        }
    const int id = push(std::move(out), {});
    at(id).back = [this, id, a, b] {
        const Matrix& G = grad(id);
        const Matrix& A2 = value(a);
        const Matrix& B2 = value(b);
        Matrix& ga = at(a).grad;
        Matrix& gb = at(b).grad;
        for (std::size_t i = 0; i < A2.rows; ++i)
            for (std::size_t j = 0; j < B2.cols; ++j) {
                const double g = G.at(i, j);
                if (g == 0.0) continue;
                for (std::size_t k = 0; k < A2.cols; ++k) {
                    ga.at(i, k) += g * B2.at(k, j);
                    gb.at(k, j) += g * A2.at(i, k);
                }
            }
    };
    return id;
}

namespace {

bool broadcastable(const Matrix& a, const Matrix& b) { return b.rows == 1 && b.cols == a.cols; }

[[noreturn]] void shape_error() { throw ValidationError("autodiff: incompatible shapes"); }

}  // namespace

int Graph::add(int a, int b) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    const bool bcast = !(A.rows == B.rows && A.cols == B.cols);
    if (bcast && !broadcastable(A, B)) shape_error();
    Matrix out = A;
    for (std::size_t i = 0; i < A.rows; ++i)
        for (std::size_t j = 0; j < A.cols; ++j) out.at(i, j) += bcast ? B.at(0, j) : B.at(i, j);
    const int id = push(std::move(out), {});
    at(id).back = [this, id, a, b, bcast] {
        const Matrix& G = grad(id);
        Matrix& ga = at(a).grad;
        Matrix& gb = at(b).grad;
        for (std::size_t i = 0; i < G.rows; ++i)
            for (std::size_t j = 0; j < G.cols; ++j) {
                ga.at(i, j) += G.at(i, j);
                if (bcast) gb.at(0, j) += G.at(i, j);
                else gb.at(i, j) += G.at(i, j);
            }
    };
    return id;
}

int Graph::mul(int a, int b) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    const bool bcast = !(A.rows == B.rows && A.cols == B.cols);
    if (bcast && !broadcastable(A, B)) shape_error();
    Matrix out = A;
    for (std::size_t i = 0; i < A.rows; ++i)
        for (std::size_t j = 0; j < A.cols; ++j) out.at(i, j) *= bcast ? B.at(0, j) : B.at(i, j);
    const int id = push(std::move(out), {});
    at(id).back = [this, id, a, b, bcast] {
        const Matrix& G = grad(id);
        const Matrix& A2 = value(a);
        const Matrix& B2 = value(b);
        Matrix& ga = at(a).grad;
        Matrix& gb = at(b).grad;
        for (std::size_t i = 0; i < G.rows; ++i)
            for (std::size_t j = 0; j < G.cols; ++j) {
                const double g = G.at(i, j);
                const double bv = bcast ? B2.at(0, j) : B2.at(i, j);
                ga.at(i, j) += g * bv;
                if (bcast) gb.at(0, j) += g * A2.at(i, j);
                else gb.at(i, j) += g * A2.at(i, j);
            }
    };
    return id;
}

int Graph::sub_from_scalar(double c, int a) {
    Matrix out = value(a);
    for (double& v : out.data) v = c - v;
    const int id = push(std::move(out), {});
    at(id).back = [this, id, a] {
        const Matrix& G = grad(id);
        Matrix& ga = at(a).grad;
        for (std::size_t i = 0; i < G.data.size(); ++i) ga.data[i] -= G.data[i];
    };
    return id;
}

int Graph::scale(int a, double c) {
    Matrix out = value(a);
    for (double& v : out.data) v *= c;
    const int id = push(std::move(out), {});
    at(id).back = [this, id, a, c] {
        const Matrix& G = grad(id);
        Matrix& ga = at(a).grad;
        for (std::size_t i = 0; i < G.data.size(); ++i) ga.data[i] += c * G.data[i];
    };
    return id;
}

int Graph::leaky_relu(int a, double slope) {
    Matrix out = value(a);
    for (double& v : out.data) v = v > 0.0 ? v : slope * v;
    const int id = push(std::move(out), {});
    at(id).back = [this, id, a, slope] {
        const Matrix& G = grad(id);
        const Matrix& A = value(a);
        Matrix& ga = at(a).grad;
        for (std::size_t i = 0; i < G.data.size(); ++i)
            ga.data[i] += G.data[i] * (A.data[i] > 0.0 ? 1.0 : slope);
    };
    return id;
}

int Graph::sigmoid_op(int a) {
    Matrix out = value(a);
    for (double& v : out.data) v = sigmoid(v);
    const int id = push(std::move(out), {});
    at(id).back = [this, id, a] {
        const Matrix& G = grad(id);
        const Matrix& S = value(id);
        Matrix& ga = at(a).grad;
        for (std::size_t i = 0; i < G.data.size(); ++i)
            ga.data[i] += G.data[i] * S.data[i] * (1.0 - S.data[i]);
    };
    return id;
}

int Graph::log_op(int a, double eps) {
    Matrix out = value(a);
    for (double& v : out.data) v = std::log(v + eps);
    const int id = push(std::move(out), {});
    at(id).back = [this, id, a, eps] {
        const Matrix& G = grad(id);
        const Matrix& A = value(a);
        Matrix& ga = at(a).grad;
        for (std::size_t i = 0; i < G.data.size(); ++i) ga.data[i] += G.data[i] / (A.data[i] + eps);
    };
    return id;
}

int Graph::concat_cols(int a, int b) {
    const Matrix& A = value(a);
    const Matrix& B = value(b);
    if (A.rows != B.rows) shape_error();
    Matrix out(A.rows, A.cols + B.cols);
    for (std::size_t i = 0; i < A.rows; ++i) {
        for (std::size_t j = 0; j < A.cols; ++j) out.at(i, j) = A.at(i, j);
        for (std::size_t j = 0; j < B.cols; ++j) out.at(i, A.cols + j) = B.at(i, j);
    }
    const int id = push(std::move(out), {});
    at(id).back = [this, id, a, b] {
        const Matrix& G = grad(id);
        Matrix& ga = at(a).grad;
        Matrix& gb = at(b).grad;
        for (std::size_t i = 0; i < ga.rows; ++i) {
            for (std::size_t j = 0; j < ga.cols; ++j) ga.at(i, j) += G.at(i, j);
            for (std::size_t j = 0; j < gb.cols; ++j) gb.at(i, j) += G.at(i, ga.cols + j);
        }
    };
    return id;
}

std::vector<double> sparsemax(const std::vector<double>& z) {
    const std::size_t p = z.size();
    std::vector<double> sorted = z;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    // The set {k : 1 + k*z_(k) > sum_{j<=k} z_(j)} is a prefix; tau comes from
    // its largest member.
    double cumsum = 0.0, tau = 0.0;
    for (std::size_t k = 0; k < p; ++k) {
        cumsum += sorted[k];
        const double kk = static_cast<double>(k + 1);
        if (1.0 + kk * sorted[k] > cumsum) tau = (cumsum - 1.0) / kk;
    }
    std::vector<double> out(p);
    for (std::size_t j = 0; j < p; ++j) out[j] = std::max(z[j] - tau, 0.0);
    return out;
}

int Graph::sparsemax_op(int a) {
    const Matrix& A = value(a);
    Matrix out(A.rows, A.cols);
    for (std::size_t i = 0; i < A.rows; ++i) {
        std::vector<double> row(A.row(i).begin(), A.row(i).end());
        const auto proj = sparsemax(row);
        for (std::size_t j = 0; j < A.cols; ++j) out.at(i, j) = proj[j];
    }
    const int id = push(std::move(out), {});
    at(id).back = [this, id, a] {
        // Jacobian on the support S: dz = g - mean_S(g); zero off-support.
        const Matrix& G = grad(id);
        const Matrix& P = value(id);
        Matrix& ga = at(a).grad;
        for (std::size_t i = 0; i < P.rows; ++i) {
            double g_sum = 0.0;
            std::size_t support = 0;
            for (std::size_t j = 0; j < P.cols; ++j)
                if (P.at(i, j) > 0.0) {
                    g_sum += G.at(i, j);
                    ++support;
                }
            if (support == 0) continue;
            const double g_mean = g_sum / static_cast<double>(support);
            for (std::size_t j = 0; j < P.cols; ++j)
                if (P.at(i, j) > 0.0) ga.at(i, j) += G.at(i, j) - g_mean;
        }
    };
    return id;
}

int Graph::batch_norm(int x, int gamma, int beta, std::vector<double>& running_mean, std::vector<double>& running_var,
                      bool training, double momentum, double eps) {
    const Matrix& X = value(x);
    const std::size_t n = X.rows, c = X.cols;
    if (running_mean.size() != c || running_var.size() != c)
        throw ValidationError("batch_norm running statistics width mismatch");

    auto mean = std::make_shared<std::vector<double>>(c, 0.0);
    auto var = std::make_shared<std::vector<double>>(c, 0.0);
    if (training) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j) (*mean)[j] += X.at(i, j);
        for (std::size_t j = 0; j < c; ++j) (*mean)[j] /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j) {
                const double d = X.at(i, j) - (*mean)[j];
                (*var)[j] += d * d;
            }
        for (std::size_t j = 0; j < c; ++j) (*var)[j] /= static_cast<double>(n);
        for (std::size_t j = 0; j < c; ++j) {
            running_mean[j] = momentum * running_mean[j] + (1.0 - momentum) * (*mean)[j];
            running_var[j] = momentum * running_var[j] + (1.0 - momentum) * (*var)[j];
        }
    } else {
        *mean = running_mean;
        *var = running_var;
    }

    const Matrix& Gm = value(gamma);
    const Matrix& Bt = value(beta);
    auto xhat = std::make_shared<Matrix>(n, c);
    Matrix out(n, c);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            const double inv_sd = 1.0 / std::sqrt((*var)[j] + eps);
            xhat->at(i, j) = (X.at(i, j) - (*mean)[j]) * inv_sd;
            out.at(i, j) = Gm.at(0, j) * xhat->at(i, j) + Bt.at(0, j);
        }

    const int id = push(std::move(out), {});
    at(id).back = [this, id, x, gamma, beta, xhat, var, training, eps] {
        const Matrix& G = grad(id);
        const Matrix& Gm2 = value(gamma);
        Matrix& gx = at(x).grad;
        Matrix& gg = at(gamma).grad;
        Matrix& gb = at(beta).grad;
        const std::size_t n2 = G.rows, c2 = G.cols;
        for (std::size_t j = 0; j < c2; ++j) {
            const double inv_sd = 1.0 / std::sqrt((*var)[j] + eps);
            double sum_g = 0.0, sum_gx = 0.0;
            for (std::size_t i = 0; i < n2; ++i) {
                sum_g += G.at(i, j);
                sum_gx += G.at(i, j) * xhat->at(i, j);
            }
            gg.at(0, j) += sum_gx;
            gb.at(0, j) += sum_g;
            if (training) {
                const double inv_n = 1.0 / static_cast<double>(n2);
                for (std::size_t i = 0; i < n2; ++i)
                    gx.at(i, j) += Gm2.at(0, j) * inv_sd *
                                   (G.at(i, j) - sum_g * inv_n - xhat->at(i, j) * sum_gx * inv_n);
            } else {
                for (std::size_t i = 0; i < n2; ++i) gx.at(i, j) += Gm2.at(0, j) * inv_sd * G.at(i, j);
            }
        }
    };
    return id;
}

int Graph::dropout(int x, double rate, bool training) {
    if (rate < 0.0 || rate >= 1.0) throw ValidationError("dropout rate must be in [0,1)");
    if (!training || rate == 0.0) {
        // Identity at inference.
        Matrix out = value(x);
        const int id = push(std::move(out), {});
        at(id).back = [this, id, x] {
            const Matrix& G = grad(id);
            Matrix& gx = at(x).grad;
            for (std::size_t i = 0; i < G.data.size(); ++i) gx.data[i] += G.data[i];
        };
        return id;
    }
    const Matrix& X = value(x);
    auto mask = std::make_shared<std::vector<double>>(X.data.size());
    const double keep = 1.0 - rate;
    for (auto& m : *mask) m = drop_rng_.uniform() < keep ? 1.0 / keep : 0.0;
    Matrix out = X;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= (*mask)[i];
    const int id = push(std::move(out), {});
    at(id).back = [this, id, x, mask] {
        const Matrix& G = grad(id);
        Matrix& gx = at(x).grad;
        for (std::size_t i = 0; i < G.data.size(); ++i) gx.data[i] += G.data[i] * (*mask)[i];
    };
    return id;
}

int Graph::bce_loss(int probs, const std::vector<int>& targets, double pos_weight) {
    const Matrix& P = value(probs);
    if (P.data.size() != targets.size()) throw ValidationError("bce: target length mismatch");
    const double eps = 1e-12;
    const double wp = pos_weight > 0.0 ? pos_weight : 1.0;
    double loss = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const double p = std::min(std::max(P.data[i], eps), 1.0 - eps);
        loss -= targets[i] ? wp * std::log(p) : std::log(1.0 - p);
    }
    Matrix out(1, 1);
    out.at(0, 0) = loss / static_cast<double>(targets.size());
    const int id = push(std::move(out), {});
    at(id).back = [this, id, probs, targets, wp] {
        const double g = grad(id).at(0, 0) / static_cast<double>(targets.size());
        const Matrix& P2 = value(probs);
        Matrix& gp = at(probs).grad;
        const double eps2 = 1e-12;
        for (std::size_t i = 0; i < targets.size(); ++i) {
            const double p = std::min(std::max(P2.data[i], eps2), 1.0 - eps2);
            gp.data[i] += g * (targets[i] ? -wp / p : 1.0 / (1.0 - p));
        }
    };
    return id;
}

int Graph::sum_all(int a) {
    const Matrix& A = value(a);
    Matrix out(1, 1);
    for (double v : A.data) out.at(0, 0) += v;
    const int id = push(std::move(out), {});
    at(id).back = [this, id, a] {
        const double g = grad(id).at(0, 0);
        Matrix& ga = at(a).grad;
        for (double& v : ga.data) v += g;
    };
    return id;
}

int Graph::mean_all(int a) {
    const double n = static_cast<double>(value(a).data.size());
    return scale(sum_all(a), 1.0 / n);
}

void Graph::backward(int output) {
    auto& out = at(output);
    if (out.value.rows != 1 || out.value.cols != 1)
        throw NonScalarOutput("backward requires a scalar output node");
    out.grad.at(0, 0) = 1.0;
    // The tape is already topologically ordered (every op's parents precede it).
    for (int id = output; id >= 0; --id) {
        auto& node = at(id);
        if (node.back) node.back();
    }
}

}  // namespace nutriscreen
