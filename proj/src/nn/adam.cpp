#include "raregan/adam.hpp"

#include <cmath>

#include "raregan/errors.hpp"

namespace raregan {

AdamState AdamState::for_size(std::size_t n, AdamHyper hyper) {
    AdamState state;
    state.hyper = hyper;
    state.first_moment.assign(n, 0.0);
    state.second_moment.assign(n, 0.0);
    return state;
}

AdamState AdamState::for_net(const DenseNet& net, AdamHyper hyper) { return for_size(net.parameter_count(), hyper); }

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size() || params.size() != state.second_moment.size())
        throw DimensionMismatch("adam_step: parameter, gradient and moment sizes differ");
    const AdamHyper& h = state.hyper;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(h.beta1, t);
    const double correction2 = 1.0 - std::pow(h.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        double& m = state.first_moment[i];
        double& v = state.second_moment[i];
        m = h.beta1 * m + (1.0 - h.beta1) * grads[i];
        v = h.beta2 * v + (1.0 - h.beta2) * grads[i] * grads[i];
        const double m_hat = m / correction1;
        const double v_hat = v / correction2;
        params[i] -= h.learning_rate * m_hat / (std::sqrt(v_hat) + h.epsilon);
    }
}

void adam_step(AdamState& state, DenseNet& net, const NetGradients& grads) {
    const auto& layers = net.layers();
    if (grads.weight.size() != layers.size()) throw DimensionMismatch("adam_step: gradient layer count mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (grads.weight[l].rows() != layers[l].out_dim() || grads.weight[l].cols() != layers[l].in_dim() ||
            grads.bias[l].size() != layers[l].out_dim())
            throw DimensionMismatch("adam_step: gradient shape mismatch at layer " + std::to_string(l));
    }
    std::vector<double> params = net.flatten();
    const std::vector<double> flat = grads.flatten();
    adam_step(state, params, flat);
    net.assign(params);
}

}  // namespace raregan
