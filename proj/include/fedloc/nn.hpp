#pragma once

// Minimal dense-network engine: fully connected, batch-normalization, ReLU
// and dropout layers with cached reverse-mode gradients, the two losses used
// by the localization heads, and the Adam / SGD optimizers.
//
// Everything is templated on the scalar type: models train in float, the
// gradient checks run the same code in double.

#include "fedloc/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace fedloc::nn {

enum class Mode { train, eval };

// ---------------------------------------------------------------------------
// Stateless forward kernels
// ---------------------------------------------------------------------------

template <typename T>
struct DenseParams {
    Tensor2<T> weight;  // out x in
    Tensor2<T> bias;    // 1 x out

    [[nodiscard]] Eigen::Index in_features() const { return weight.cols(); }
    [[nodiscard]] Eigen::Index out_features() const { return weight.rows(); }
};

/// input * W^T + b, bias broadcast over rows.
template <typename T>
Tensor2<T> dense_forward(const Tensor2<T>& input, const DenseParams<T>& layer) {
    if (input.cols() != layer.weight.cols()) {
        throw ShapeError("dense input has " + std::to_string(input.cols()) + " columns, layer expects " +
                         std::to_string(layer.weight.cols()));
    }
    Tensor2<T> out(input.rows(), layer.weight.rows());
    out.noalias() = input * layer.weight.transpose();
    out.rowwise() += layer.bias.row(0);
    require_finite(out, "dense_forward");
    return out;
}

template <typename T>
struct BatchNormParams {
    Tensor2<T> gamma;         // 1 x n, trainable
    Tensor2<T> beta;          // 1 x n, trainable
    Tensor2<T> running_mean;  // 1 x n
    Tensor2<T> running_var;   // 1 x n, > 0
    T momentum = T(0.99);     // fraction of the running statistic retained per batch
    T epsilon = T(1e-3);

    static BatchNormParams identity(Eigen::Index width) {
        BatchNormParams p;
        p.gamma = Tensor2<T>::Ones(1, width);
        p.beta = Tensor2<T>::Zero(1, width);
        p.running_mean = Tensor2<T>::Zero(1, width);
        p.running_var = Tensor2<T>::Ones(1, width);
        return p;
    }
};

template <typename T>
struct BatchNormCache {
    Tensor2<T> x_hat;
    Tensor2<T> inv_std;  // 1 x n
};

/// Train mode normalizes with (biased) batch statistics and folds them into
/// the running statistics; eval mode uses the running statistics.
template <typename T>
Tensor2<T> batchnorm_forward(const Tensor2<T>& input, BatchNormParams<T>& layer, Mode mode,
                             BatchNormCache<T>* cache = nullptr) {
    const Eigen::Index n = input.cols();
    require_shape(layer.gamma, 1, n, "batchnorm gamma");
    Tensor2<T> mean(1, n);
    Tensor2<T> var(1, n);
    if (mode == Mode::train) {
        if (input.rows() < 2) {
            throw ShapeError("batch normalization in train mode needs a batch of at least 2 rows");
        }
        mean = input.colwise().mean();
        var = (input.rowwise() - mean.row(0)).array().square().colwise().mean();
        layer.running_mean = layer.momentum * layer.running_mean + (T(1) - layer.momentum) * mean;
        layer.running_var = layer.momentum * layer.running_var + (T(1) - layer.momentum) * var;
    } else {
        mean = layer.running_mean;
        var = layer.running_var;
    }
    Tensor2<T> inv_std = (var.array() + layer.epsilon).rsqrt().matrix();
    Tensor2<T> x_hat = ((input.rowwise() - mean.row(0)).array().rowwise() * inv_std.row(0).array()).matrix();
    Tensor2<T> out = ((x_hat.array().rowwise() * layer.gamma.row(0).array()).rowwise() + layer.beta.row(0).array())
                         .matrix();
    require_finite(out, "batchnorm_forward");
    if (cache) {
        cache->x_hat = std::move(x_hat);
        cache->inv_std = std::move(inv_std);
    }
    return out;
}

template <typename T>
struct DropoutResult {
    Tensor2<T> output;
    Tensor2<T> mask;  // 0 or 1/(1-rate) per entry
};

/// Inverted dropout.
template <typename T>
DropoutResult<T> dropout_forward(const Tensor2<T>& input, double rate, Mode mode, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw ConfigError("dropout rate must lie in [0, 1)");
    }
    DropoutResult<T> r;
    if (mode == Mode::eval || rate == 0.0) {
        r.output = input;
        r.mask = Tensor2<T>::Ones(input.rows(), input.cols());
        return r;
    }
    const T scale = T(1.0 / (1.0 - rate));
    r.mask.resize(input.rows(), input.cols());
    for (Eigen::Index i = 0; i < r.mask.size(); ++i) {
        r.mask.data()[i] = rng.uniform() < rate ? T(0) : scale;
    }
    r.output = input.cwiseProduct(r.mask);
    return r;
}

/// Row-wise numerically stabilized softmax.
template <typename T>
Tensor2<T> softmax(const Tensor2<T>& logits) {
    Tensor2<T> out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const T shift = logits.row(i).maxCoeff();
        out.row(i) = (logits.row(i).array() - shift).exp().matrix();
        out.row(i) /= out.row(i).sum();
    }
    return out;
}

/// Backward through a row-wise softmax given its output `probs`.
template <typename T>
Tensor2<T> softmax_backward(const Tensor2<T>& probs, const Tensor2<T>& grad_probs) {
    Tensor2<T> dot = grad_probs.cwiseProduct(probs).rowwise().sum();
    return probs.cwiseProduct(grad_probs - dot.replicate(1, probs.cols()));
}

template <typename T>
struct LossResult {
    double loss = 0.0;
    Tensor2<T> grad;
};

/// Mean cross-entropy of softmax(logits) against class indices.
template <typename T>
LossResult<T> softmax_xent(const Tensor2<T>& logits, std::span<const int> targets) {
    if (static_cast<Eigen::Index>(targets.size()) != logits.rows()) {
        throw ShapeError("softmax_xent: target count does not match batch size");
    }
    const Eigen::Index batch = logits.rows();
    LossResult<T> r;
    r.grad = softmax(logits);
    double total = 0.0;
    for (Eigen::Index i = 0; i < batch; ++i) {
        const int t = targets[static_cast<std::size_t>(i)];
        if (t < 0 || t >= logits.cols()) {
            throw ShapeError("softmax_xent: target " + std::to_string(t) + " outside [0, " +
                             std::to_string(logits.cols()) + ")");
        }
        // log-sum-exp in double for the loss value
        const double shift = static_cast<double>(logits.row(i).maxCoeff());
        double sum = 0.0;
        for (Eigen::Index k = 0; k < logits.cols(); ++k) {
            sum += std::exp(static_cast<double>(logits(i, k)) - shift);
        }
        total += std::log(sum) + shift - static_cast<double>(logits(i, t));
        r.grad(i, t) -= T(1);
    }
    r.loss = batch > 0 ? total / static_cast<double>(batch) : 0.0;
    if (batch > 0) {
        r.grad /= static_cast<T>(batch);
    }
    return r;
}

/// Mean squared error over all entries.
template <typename T>
LossResult<T> mse_loss(const Tensor2<T>& pred, const Tensor2<T>& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
        throw ShapeError("mse_loss: prediction and target shapes differ");
    }
    LossResult<T> r;
    const auto count = static_cast<double>(pred.size());
    r.grad = pred - target;
    double total = 0.0;
    for (Eigen::Index i = 0; i < r.grad.size(); ++i) {
        const auto d = static_cast<double>(r.grad.data()[i]);
        total += d * d;
    }
    r.loss = count > 0 ? total / count : 0.0;
    if (count > 0) {
        r.grad *= static_cast<T>(2.0 / count);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Layers with cached state
// ---------------------------------------------------------------------------

/// Callback signature for parameter traversal: (name, value, grad or nullptr
/// for non-trainable state).
template <typename T>
using TensorVisitor = std::function<void(const std::string&, Tensor2<T>&, Tensor2<T>*)>;

enum class InitScheme { he_uniform, glorot_uniform };

template <typename T>
class DenseLayer {
public:
    DenseLayer() = default;
    DenseLayer(Eigen::Index in, Eigen::Index out) {
        params.weight = Tensor2<T>::Zero(out, in);
        params.bias = Tensor2<T>::Zero(1, out);
        grad_weight = Tensor2<T>::Zero(out, in);
        grad_bias = Tensor2<T>::Zero(1, out);
    }

    void initialize(InitScheme scheme, Rng& rng) {
        const double fan_in = static_cast<double>(params.weight.cols());
        const double fan_out = static_cast<double>(params.weight.rows());
        const double limit =
            scheme == InitScheme::he_uniform ? std::sqrt(6.0 / fan_in) : std::sqrt(6.0 / (fan_in + fan_out));
        for (Eigen::Index i = 0; i < params.weight.size(); ++i) {
            params.weight.data()[i] = static_cast<T>(rng.uniform(-limit, limit));
        }
        params.bias.setZero();
    }

    Tensor2<T> forward(const Tensor2<T>& x) {
        input_ = x;
        cached_ = true;
        return dense_forward(x, params);
    }

    /// Stores parameter gradients and returns the input gradient.
    Tensor2<T> backward(const Tensor2<T>& dy) {
        if (!cached_ || dy.rows() != input_.rows()) {
            throw NumericError("stale cache: dense backward without a matching forward pass");
        }
        grad_weight.noalias() = dy.transpose() * input_;
        grad_bias = dy.colwise().sum();
        cached_ = false;
        Tensor2<T> dx(dy.rows(), params.weight.cols());
        dx.noalias() = dy * params.weight;
        return dx;
    }

    void visit(const std::string& prefix, const TensorVisitor<T>& f) {
        f(prefix + ".weight", params.weight, &grad_weight);
        f(prefix + ".bias", params.bias, &grad_bias);
    }

    [[nodiscard]] std::size_t trainable_count() const {
        return static_cast<std::size_t>(params.weight.size() + params.bias.size());
    }

    DenseParams<T> params;
    Tensor2<T> grad_weight;
    Tensor2<T> grad_bias;

private:
    Tensor2<T> input_;
    bool cached_ = false;
};

template <typename T>
class BatchNormLayer {
public:
    BatchNormLayer() = default;
    explicit BatchNormLayer(Eigen::Index width, T momentum = T(0.99), T epsilon = T(1e-3))
        : params(BatchNormParams<T>::identity(width)) {
        params.momentum = momentum;
        params.epsilon = epsilon;
        grad_gamma = Tensor2<T>::Zero(1, width);
        grad_beta = Tensor2<T>::Zero(1, width);
    }

    Tensor2<T> forward(const Tensor2<T>& x, Mode mode) {
        mode_ = mode;
        cached_ = true;
        return batchnorm_forward(x, params, mode, &cache_);
    }

    Tensor2<T> backward(const Tensor2<T>& dy) {
        if (!cached_ || dy.rows() != cache_.x_hat.rows()) {
            throw NumericError("stale cache: batchnorm backward without a matching forward pass");
        }
        cached_ = false;
        grad_gamma = dy.cwiseProduct(cache_.x_hat).colwise().sum();
        grad_beta = dy.colwise().sum();
        Tensor2<T> dx_hat = (dy.array().rowwise() * params.gamma.row(0).array()).matrix();
        if (mode_ == Mode::eval) {
            return (dx_hat.array().rowwise() * cache_.inv_std.row(0).array()).matrix();
        }
        const T n = static_cast<T>(dy.rows());
        Tensor2<T> sum_dx_hat = dx_hat.colwise().sum();
        Tensor2<T> sum_dx_hat_xhat = dx_hat.cwiseProduct(cache_.x_hat).colwise().sum();
        Tensor2<T> dx = (n * dx_hat).rowwise() - sum_dx_hat.row(0);
        dx -= (cache_.x_hat.array().rowwise() * sum_dx_hat_xhat.row(0).array()).matrix();
        dx = (dx.array().rowwise() * (cache_.inv_std.row(0).array() / n)).matrix();
        return dx;
    }

    void visit(const std::string& prefix, const TensorVisitor<T>& f) {
        f(prefix + ".gamma", params.gamma, &grad_gamma);
        f(prefix + ".beta", params.beta, &grad_beta);
        f(prefix + ".running_mean", params.running_mean, nullptr);
        f(prefix + ".running_var", params.running_var, nullptr);
    }

    [[nodiscard]] std::size_t trainable_count() const {
        return static_cast<std::size_t>(params.gamma.size() + params.beta.size());
    }

    BatchNormParams<T> params;
    Tensor2<T> grad_gamma;
    Tensor2<T> grad_beta;

private:
    BatchNormCache<T> cache_;
    Mode mode_ = Mode::train;
    bool cached_ = false;
};

/// dense -> batch-norm -> ReLU -> dropout
template <typename T>
class HiddenBlock {
public:
    HiddenBlock() = default;
    HiddenBlock(Eigen::Index in, Eigen::Index out, double dropout, T bn_momentum = T(0.99), T bn_epsilon = T(1e-3))
        : dense(in, out), norm(out, bn_momentum, bn_epsilon), dropout_rate(dropout) {}

    Tensor2<T> forward(const Tensor2<T>& x, Mode mode, Rng& rng) {
        Tensor2<T> h = norm.forward(dense.forward(x), mode);
        relu_mask_ = (h.array() > T(0)).template cast<T>().matrix();
        h = h.cwiseProduct(relu_mask_);
        auto dropped = dropout_forward(h, dropout_rate, mode, rng);
        dropout_mask_ = std::move(dropped.mask);
        return std::move(dropped.output);
    }

    Tensor2<T> backward(const Tensor2<T>& dy) {
        if (dy.rows() != relu_mask_.rows()) {
            throw NumericError("stale cache: block backward batch size differs from forward");
        }
        Tensor2<T> g = dy.cwiseProduct(dropout_mask_).cwiseProduct(relu_mask_);
        return dense.backward(norm.backward(g));
    }

    void visit(const std::string& prefix, const TensorVisitor<T>& f) {
        dense.visit(prefix + ".dense", f);
        norm.visit(prefix + ".bn", f);
    }

    [[nodiscard]] std::size_t trainable_count() const { return dense.trainable_count() + norm.trainable_count(); }

    /// 1 where the last forward pass had a positive pre-activation.
    [[nodiscard]] const Tensor2<T>& relu_mask() const { return relu_mask_; }

    DenseLayer<T> dense;
    BatchNormLayer<T> norm;
    double dropout_rate = 0.0;

private:
    Tensor2<T> relu_mask_;
    Tensor2<T> dropout_mask_;
};

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

struct AdamConfig {
    double lr = 5e-4;
    double beta1 = 0.1;
    double beta2 = 0.99;
    double epsilon = 1e-7;
};

template <typename T>
struct AdamState {
    std::vector<Tensor2<T>> m;
    std::vector<Tensor2<T>> v;
    std::int64_t step_count = 0;
    AdamConfig config;

    AdamState() = default;
    explicit AdamState(const AdamConfig& cfg) : config(cfg) {}
};

/// One Adam update with bias correction. Moment buffers are created lazily
/// on the first step and must keep their shapes afterwards.
template <typename T>
void adam_step(std::span<Tensor2<T>* const> params, std::span<const Tensor2<T>* const> grads, AdamState<T>& state) {
    if (params.size() != grads.size()) {
        throw ShapeError("adam_step: parameter and gradient counts differ");
    }
    if (state.m.empty()) {
        for (const auto* p : params) {
            state.m.push_back(Tensor2<T>::Zero(p->rows(), p->cols()));
            state.v.push_back(Tensor2<T>::Zero(p->rows(), p->cols()));
        }
    }
    if (state.m.size() != params.size()) {
        throw ShapeError("adam_step: optimizer state tracks a different parameter list");
    }
    ++state.step_count;
    const auto& c = state.config;
    const double t = static_cast<double>(state.step_count);
    const T b1 = static_cast<T>(c.beta1);
    const T b2 = static_cast<T>(c.beta2);
    const T correction1 = static_cast<T>(1.0 - std::pow(c.beta1, t));
    const T correction2 = static_cast<T>(1.0 - std::pow(c.beta2, t));
    const T lr = static_cast<T>(c.lr);
    const T eps = static_cast<T>(c.epsilon);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor2<T>& p = *params[i];
        const Tensor2<T>& g = *grads[i];
        if (g.rows() != p.rows() || g.cols() != p.cols() || state.m[i].rows() != p.rows() ||
            state.m[i].cols() != p.cols()) {
            throw ShapeError("adam_step: shape mismatch for parameter " + std::to_string(i));
        }
        auto m = state.m[i].array();
        auto v = state.v[i].array();
        m = b1 * m + (T(1) - b1) * g.array();
        v = b2 * v + (T(1) - b2) * g.array().square();
        p.array() -= lr * (m / correction1) / ((v / correction2).sqrt() + eps);
    }
}

/// Plain gradient step p <- p - lr * g.
template <typename T>
void sgd_step(std::span<Tensor2<T>* const> params, std::span<const Tensor2<T>* const> grads, double lr) {
    if (params.size() != grads.size()) {
        throw ShapeError("sgd_step: parameter and gradient counts differ");
    }
    const T step = static_cast<T>(lr);
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (grads[i]->rows() != params[i]->rows() || grads[i]->cols() != params[i]->cols()) {
            throw ShapeError("sgd_step: shape mismatch for parameter " + std::to_string(i));
        }
        *params[i] -= step * *grads[i];
    }
}

enum class OptimizerKind { adam, sgd };

/// Optimizer bound to one parameter list; state starts fresh on construction.
template <typename T>
class Optimizer {
public:
    Optimizer(OptimizerKind kind, const AdamConfig& cfg) : kind_(kind), adam_(cfg) {}

    void step(std::span<Tensor2<T>* const> params, std::span<const Tensor2<T>* const> grads) {
        if (kind_ == OptimizerKind::adam) {
            adam_step(params, grads, adam_);
        } else {
            sgd_step(params, grads, adam_.config.lr);
        }
    }

    [[nodiscard]] const AdamState<T>& adam_state() const { return adam_; }

private:
    OptimizerKind kind_;
    AdamState<T> adam_;
};

}  // namespace fedloc::nn
