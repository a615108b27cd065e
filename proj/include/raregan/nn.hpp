#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "raregan/matrix.hpp"

namespace raregan {

using Rng = std::mt19937_64;

enum class Activation { relu, tanh, sigmoid, identity, grouped_softmax };

std::string_view to_string(Activation act);
Activation activation_from_string(std::string_view name);

// One fully connected layer computing act(W x + b). `weight` is out x in.
// `groups` is only meaningful for grouped_softmax and lists the width of each
// softmax block; the widths sum to the layer's output width.
struct Layer {
    Matrix weight;
    std::vector<double> bias;
    Activation activation = Activation::identity;
    std::vector<std::size_t> groups;

    std::size_t in_dim() const { return weight.cols(); }
    std::size_t out_dim() const { return weight.rows(); }

    bool operator==(const Layer&) const = default;
};

struct LayerSpec {
    std::size_t out_dim;
    Activation activation;
    std::vector<std::size_t> groups = {};
};

class DenseNet {
public:
    DenseNet() = default;
    explicit DenseNet(std::vector<Layer> layers);

    // Glorot-uniform weights, zero biases.
    static DenseNet build(std::size_t in_dim, std::span<const LayerSpec> specs, Rng& rng);

    std::size_t in_dim() const;
    std::size_t out_dim() const;
    std::size_t parameter_count() const;

    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& mutable_layers() { return layers_; }

    // Hash of the layer shapes and every parameter bit pattern.
    std::uint64_t fingerprint() const;

    // Flattened parameters, layer by layer: weights row-major, then bias.
    std::vector<double> flatten() const;
    void assign(std::span<const double> flat);

    bool operator==(const DenseNet&) const = default;

private:
    void validate() const;

    std::vector<Layer> layers_;
};

// Activations kept by forward() for use by backward(). `inputs[l]` feeds
// layer l, `pre[l]` is its pre-activation and `outputs[l]` its activation.
struct ForwardCache {
    std::vector<Matrix> inputs;
    std::vector<Matrix> pre;
    std::vector<Matrix> outputs;
    std::uint64_t net_fingerprint = 0;

    const Matrix& output() const { return outputs.back(); }
};

struct NetGradients {
    std::vector<Matrix> weight;
    std::vector<std::vector<double>> bias;
    Matrix input;

    static NetGradients zeros_like(const DenseNet& net);
    std::vector<double> flatten() const;
    void accumulate(const NetGradients& other, double scale = 1.0);
};

ForwardCache forward(const DenseNet& net, const Matrix& input);

// Reverse-mode gradients for a loss whose gradient w.r.t. the network output
// is `output_grad`. Parameter gradients are summed over the batch.
NetGradients backward(const DenseNet& net, const ForwardCache& cache, const Matrix& output_grad);

// Clamps every weight and bias into [-c, c].
void clip_weights(DenseNet& net, double c);

// Concatenates two networks so that `second` consumes the output of `first`.
DenseNet compose(const DenseNet& first, const DenseNet& second);

struct PenaltyResult {
    double value = 0.0;
    NetGradients grads;
};

// Mean over the batch of lambda * (|grad_x f(x)| - 1)^2 for a scalar-output
// network f with elementwise activations, together with its exact parameter
// gradients (second-order reverse pass).
PenaltyResult gradient_penalty(const DenseNet& net, const Matrix& input, double lambda);

}  // namespace raregan
