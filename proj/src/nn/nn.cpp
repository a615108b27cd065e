#include "raregan/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/Dense>

#include "raregan/errors.hpp"

namespace raregan {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap view(const Matrix& m) { return {m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())}; }
MutMap view(Matrix& m) { return {m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())}; }

// out = in * W^T + b
Matrix affine(const Matrix& in, const Layer& layer) {
    Matrix out(in.rows(), layer.out_dim());
    if (in.rows() == 0) return out;
    view(out).noalias() = view(in) * view(layer.weight).transpose();
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += layer.bias[c];
    }
    return out;
}

void apply_softmax_groups(std::span<const double> z, std::span<double> a, const std::vector<std::size_t>& groups) {
    std::size_t off = 0;
    for (std::size_t width : groups) {
        const double mx = *std::max_element(z.begin() + static_cast<std::ptrdiff_t>(off), z.begin() + static_cast<std::ptrdiff_t>(off + width));
        double sum = 0.0;
        for (std::size_t j = off; j < off + width; ++j) {
            a[j] = std::exp(z[j] - mx);
            sum += a[j];
        }
        for (std::size_t j = off; j < off + width; ++j) a[j] /= sum;
        off += width;
    }
}

Matrix activate(const Matrix& z, const Layer& layer) {
    Matrix a(z.rows(), z.cols());
    auto zs = z.data();
    auto as = a.data();
    switch (layer.activation) {
        case Activation::relu:
            for (std::size_t i = 0; i < zs.size(); ++i) as[i] = zs[i] > 0.0 ? zs[i] : 0.0;
            break;
        case Activation::tanh:
            for (std::size_t i = 0; i < zs.size(); ++i) as[i] = std::tanh(zs[i]);
            break;
        case Activation::sigmoid:
            for (std::size_t i = 0; i < zs.size(); ++i) as[i] = 1.0 / (1.0 + std::exp(-zs[i]));
            break;
        case Activation::identity:
            std::copy(zs.begin(), zs.end(), as.begin());
            break;
        case Activation::grouped_softmax:
            for (std::size_t r = 0; r < z.rows(); ++r) apply_softmax_groups(z.row(r), a.row(r), layer.groups);
            break;
    }
    return a;
}

// First derivative of an elementwise activation, written in terms of the
// pre-activation z and activation a.
double first_derivative(Activation act, double z, double a) {
    switch (act) {
        case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
        case Activation::tanh: return 1.0 - a * a;
        case Activation::sigmoid: return a * (1.0 - a);
        case Activation::identity: return 1.0;
        case Activation::grouped_softmax: break;
    }
    throw InvalidArgument("first_derivative: grouped_softmax is not elementwise");
}

double second_derivative(Activation act, double a) {
    switch (act) {
        case Activation::relu: return 0.0;
        case Activation::tanh: return -2.0 * a * (1.0 - a * a);
        case Activation::sigmoid: return a * (1.0 - a) * (1.0 - 2.0 * a);
        case Activation::identity: return 0.0;
        case Activation::grouped_softmax: break;
    }
    throw InvalidArgument("second_derivative: grouped_softmax is not elementwise");
}

// Gradient w.r.t. pre-activation given gradient w.r.t. activation.
Matrix activation_backward(const Layer& layer, const Matrix& z, const Matrix& a, const Matrix& da) {
    Matrix dz(z.rows(), z.cols());
    if (layer.activation == Activation::grouped_softmax) {
        for (std::size_t r = 0; r < z.rows(); ++r) {
            auto ar = a.row(r);
            auto gr = da.row(r);
            auto out = dz.row(r);
            std::size_t off = 0;
            for (std::size_t width : layer.groups) {
                double dot = 0.0;
                for (std::size_t j = off; j < off + width; ++j) dot += ar[j] * gr[j];
                for (std::size_t j = off; j < off + width; ++j) out[j] = ar[j] * (gr[j] - dot);
                off += width;
            }
        }
        return dz;
    }
    auto zs = z.data();
    auto as = a.data();
    auto gs = da.data();
    auto out = dz.data();
    for (std::size_t i = 0; i < zs.size(); ++i) out[i] = gs[i] * first_derivative(layer.activation, zs[i], as[i]);
    return dz;
}

std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
    h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    return h;
}

}  // namespace

std::string_view to_string(Activation act) {
    switch (act) {
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::sigmoid: return "sigmoid";
        case Activation::identity: return "identity";
        case Activation::grouped_softmax: return "grouped_softmax";
    }
    return "unknown";
}

Activation activation_from_string(std::string_view name) {
    for (Activation a : {Activation::relu, Activation::tanh, Activation::sigmoid, Activation::identity, Activation::grouped_softmax}) {
        if (to_string(a) == name) return a;
    }
    throw FormatError("unknown activation '" + std::string(name) + "'");
}

DenseNet::DenseNet(std::vector<Layer> layers) : layers_(std::move(layers)) { validate(); }

void DenseNet::validate() const {
    if (layers_.empty()) throw InvalidArgument("DenseNet: at least one layer required");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const Layer& layer = layers_[l];
        if (layer.in_dim() == 0 || layer.out_dim() == 0) throw DimensionMismatch("DenseNet: empty layer");
        if (layer.bias.size() != layer.out_dim()) throw DimensionMismatch("DenseNet: bias width does not match layer output");
        if (l > 0 && layers_[l - 1].out_dim() != layer.in_dim())
            throw DimensionMismatch("DenseNet: layer " + std::to_string(l) + " input does not match previous output");
        if (layer.activation == Activation::grouped_softmax) {
            const std::size_t total = std::accumulate(layer.groups.begin(), layer.groups.end(), std::size_t{0});
            if (total != layer.out_dim() || std::find(layer.groups.begin(), layer.groups.end(), 0u) != layer.groups.end())
                throw DimensionMismatch("DenseNet: softmax groups must be non-empty and sum to the output width");
        }
    }
}

DenseNet DenseNet::build(std::size_t in_dim, std::span<const LayerSpec> specs, Rng& rng) {
    std::vector<Layer> layers;
    std::size_t fan_in = in_dim;
    for (const LayerSpec& spec : specs) {
        Layer layer;
        layer.weight = Matrix(spec.out_dim, fan_in);
        layer.bias.assign(spec.out_dim, 0.0);
        layer.activation = spec.activation;
        layer.groups = spec.groups;
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + spec.out_dim));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (double& w : layer.weight.data()) w = dist(rng);
        layers.push_back(std::move(layer));
        fan_in = spec.out_dim;
    }
    return DenseNet(std::move(layers));
}

std::size_t DenseNet::in_dim() const { return layers_.front().in_dim(); }
std::size_t DenseNet::out_dim() const { return layers_.back().out_dim(); }

std::size_t DenseNet::parameter_count() const {
    std::size_t n = 0;
    for (const Layer& layer : layers_) n += layer.weight.size() + layer.bias.size();
    return n;
}

std::uint64_t DenseNet::fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const Layer& layer : layers_) {
        h = mix(h, layer.in_dim());
        h = mix(h, layer.out_dim());
        h = mix(h, static_cast<std::uint64_t>(layer.activation));
        for (double w : layer.weight.data()) h = mix(h, std::bit_cast<std::uint64_t>(w));
        for (double b : layer.bias) h = mix(h, std::bit_cast<std::uint64_t>(b));
    }
    return h;
}

std::vector<double> DenseNet::flatten() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for (const Layer& layer : layers_) {
        flat.insert(flat.end(), layer.weight.data().begin(), layer.weight.data().end());
        flat.insert(flat.end(), layer.bias.begin(), layer.bias.end());
    }
    return flat;
}

void DenseNet::assign(std::span<const double> flat) {
    if (flat.size() != parameter_count()) throw DimensionMismatch("DenseNet::assign: parameter count mismatch");
    std::size_t off = 0;
    for (Layer& layer : layers_) {
        auto w = layer.weight.data();
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), w.size(), w.begin());
        off += w.size();
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), layer.bias.size(), layer.bias.begin());
        off += layer.bias.size();
    }
}

NetGradients NetGradients::zeros_like(const DenseNet& net) {
    NetGradients g;
    for (const Layer& layer : net.layers()) {
        g.weight.emplace_back(layer.out_dim(), layer.in_dim());
        g.bias.emplace_back(layer.out_dim(), 0.0);
    }
    return g;
}

std::vector<double> NetGradients::flatten() const {
    std::vector<double> flat;
    for (std::size_t l = 0; l < weight.size(); ++l) {
        flat.insert(flat.end(), weight[l].data().begin(), weight[l].data().end());
        flat.insert(flat.end(), bias[l].begin(), bias[l].end());
    }
    return flat;
}

void NetGradients::accumulate(const NetGradients& other, double scale) {
    if (other.weight.size() != weight.size()) throw DimensionMismatch("NetGradients::accumulate: layer count mismatch");
    for (std::size_t l = 0; l < weight.size(); ++l) {
        if (other.weight[l].size() != weight[l].size() || other.bias[l].size() != bias[l].size())
            throw DimensionMismatch("NetGradients::accumulate: shape mismatch");
        auto dst = weight[l].data();
        auto src = other.weight[l].data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
        for (std::size_t i = 0; i < bias[l].size(); ++i) bias[l][i] += scale * other.bias[l][i];
    }
}

ForwardCache forward(const DenseNet& net, const Matrix& input) {
    if (input.cols() != net.in_dim())
        throw DimensionMismatch("forward: input width " + std::to_string(input.cols()) + " != network input " + std::to_string(net.in_dim()));
    ForwardCache cache;
    cache.net_fingerprint = net.fingerprint();
    const Matrix* current = &input;
    for (const Layer& layer : net.layers()) {
        cache.inputs.push_back(*current);
        cache.pre.push_back(affine(*current, layer));
        cache.outputs.push_back(activate(cache.pre.back(), layer));
        current = &cache.outputs.back();
    }
    return cache;
}

NetGradients backward(const DenseNet& net, const ForwardCache& cache, const Matrix& output_grad) {
    const auto& layers = net.layers();
    if (cache.outputs.size() != layers.size() || cache.net_fingerprint != net.fingerprint())
        throw StaleCache("backward: cache does not belong to this network state");
    if (output_grad.rows() != cache.output().rows() || output_grad.cols() != cache.output().cols())
        throw DimensionMismatch("backward: output gradient shape does not match network output");

    NetGradients grads = NetGradients::zeros_like(net);
    Matrix upstream = output_grad;
    for (std::size_t l = layers.size(); l-- > 0;) {
        const Layer& layer = layers[l];
        const Matrix dz = activation_backward(layer, cache.pre[l], cache.outputs[l], upstream);
        if (dz.rows() > 0) {
            view(grads.weight[l]).noalias() = view(dz).transpose() * view(cache.inputs[l]);
            auto& db = grads.bias[l];
            for (std::size_t r = 0; r < dz.rows(); ++r) {
                const auto row = dz.row(r);
                for (std::size_t c = 0; c < row.size(); ++c) db[c] += row[c];
            }
        }
        Matrix next(dz.rows(), layer.in_dim());
        if (dz.rows() > 0) view(next).noalias() = view(dz) * view(layer.weight);
        upstream = std::move(next);
    }
    grads.input = std::move(upstream);
    return grads;
}

void clip_weights(DenseNet& net, double c) {
    if (!(c > 0.0)) throw InvalidArgument("clip_weights: c must be positive");
    for (Layer& layer : net.mutable_layers()) {
        for (double& w : layer.weight.data()) w = std::clamp(w, -c, c);
        for (double& b : layer.bias) b = std::clamp(b, -c, c);
    }
}

DenseNet compose(const DenseNet& first, const DenseNet& second) {
    std::vector<Layer> layers = first.layers();
    layers.insert(layers.end(), second.layers().begin(), second.layers().end());
    return DenseNet(std::move(layers));
}

PenaltyResult gradient_penalty(const DenseNet& net, const Matrix& input, double lambda) {
    if (net.out_dim() != 1) throw DimensionMismatch("gradient_penalty: network must have a scalar output");
    for (const Layer& layer : net.layers()) {
        if (layer.activation == Activation::grouped_softmax)
            throw InvalidArgument("gradient_penalty: grouped_softmax layers are not supported");
    }
    const auto& layers = net.layers();
    const std::size_t depth = layers.size();
    const std::size_t n = input.rows();
    const ForwardCache cache = forward(net, input);

    // Input-gradient pass: g[l] is d f / d a_l, delta[l] is d f / d z_l (1-based layers).
    std::vector<Matrix> g(depth + 1), delta(depth + 1), dprime(depth + 1);
    g[depth] = Matrix(n, 1, 1.0);
    for (std::size_t l = depth; l >= 1; --l) {
        const Layer& layer = layers[l - 1];
        const Matrix& z = cache.pre[l - 1];
        const Matrix& a = cache.outputs[l - 1];
        dprime[l] = Matrix(z.rows(), z.cols());
        for (std::size_t i = 0; i < z.size(); ++i) dprime[l].data()[i] = first_derivative(layer.activation, z.data()[i], a.data()[i]);
        delta[l] = Matrix(z.rows(), z.cols());
        for (std::size_t i = 0; i < z.size(); ++i) delta[l].data()[i] = g[l].data()[i] * dprime[l].data()[i];
        g[l - 1] = Matrix(n, layer.in_dim());
        if (n > 0) view(g[l - 1]).noalias() = view(delta[l]) * view(layer.weight);
    }

    PenaltyResult result;
    result.grads = NetGradients::zeros_like(net);
    if (n == 0) {
        result.grads.input = Matrix(0, net.in_dim());
        return result;
    }

    // Adjoint of the input gradient u = g[0].
    Matrix gbar(n, net.in_dim());
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        double norm2 = 0.0;
        for (double v : g[0].row(r)) norm2 += v * v;
        const double norm = std::sqrt(norm2);
        total += (norm - 1.0) * (norm - 1.0);
        if (norm > 0.0) {
            const double coef = 2.0 * lambda * (norm - 1.0) / (norm * static_cast<double>(n));
            for (std::size_t j = 0; j < net.in_dim(); ++j) gbar(r, j) = coef * g[0](r, j);
        }
    }
    result.value = lambda * total / static_cast<double>(n);

    // Reverse through the input-gradient pass, from the input side outward.
    std::vector<Matrix> zbar_direct(depth + 1);
    for (std::size_t l = 1; l <= depth; ++l) {
        const Layer& layer = layers[l - 1];
        view(result.grads.weight[l - 1]).noalias() += view(delta[l]).transpose() * view(gbar);
        Matrix delta_bar(n, layer.out_dim());
        view(delta_bar).noalias() = view(gbar) * view(layer.weight).transpose();
        const Matrix& a = cache.outputs[l - 1];
        zbar_direct[l] = Matrix(n, layer.out_dim());
        Matrix next_gbar(n, layer.out_dim());
        for (std::size_t i = 0; i < delta_bar.size(); ++i) {
            const double db = delta_bar.data()[i];
            next_gbar.data()[i] = db * dprime[l].data()[i];
            zbar_direct[l].data()[i] = db * g[l].data()[i] * second_derivative(layer.activation, a.data()[i]);
        }
        gbar = std::move(next_gbar);
    }

    // Ordinary backprop of the pre-activation adjoints through the forward pass.
    Matrix abar(n, layers.back().out_dim());
    for (std::size_t l = depth; l >= 1; --l) {
        const Layer& layer = layers[l - 1];
        Matrix zbar = zbar_direct[l];
        for (std::size_t i = 0; i < zbar.size(); ++i) zbar.data()[i] += abar.data()[i] * dprime[l].data()[i];
        view(result.grads.weight[l - 1]).noalias() += view(zbar).transpose() * view(cache.inputs[l - 1]);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < layer.out_dim(); ++j) result.grads.bias[l - 1][j] += zbar(r, j);
        Matrix prev(n, layer.in_dim());
        view(prev).noalias() = view(zbar) * view(layer.weight);
        abar = std::move(prev);
    }
    result.grads.input = std::move(abar);
    return result;
}

}  // namespace raregan
