#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "raregan/nn.hpp"

namespace raregan {

struct AdamHyper {
    double learning_rate = 1e-3;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    AdamHyper hyper;
    std::uint64_t step = 0;
    std::vector<double> first_moment;
    std::vector<double> second_moment;

    static AdamState for_size(std::size_t n, AdamHyper hyper = {});
    static AdamState for_net(const DenseNet& net, AdamHyper hyper = {});
};

// One bias-corrected Adam update of `params` in place.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

// Same update applied to every parameter of `net`, using the layout of
// DenseNet::flatten().
void adam_step(AdamState& state, DenseNet& net, const NetGradients& grads);

}  // namespace raregan
